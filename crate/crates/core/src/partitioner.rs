//! Grouping objects into containers.
//!
//! Objects are nodes of a graph weighted by pairwise ratings; a good
//! arrangement is a partition with a small cut. The cut is approximated by
//! spectral clustering on the normalized Laplacian, and the number of groups
//! comes from the largest gap in its spectrum.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::ObjectCatalog;
use crate::error::{Error, Result};
use crate::experts::{ExpertMixture, KnownRatings};
use crate::factorization::StoredModel;
use crate::kmeans::kmeans;
use crate::probing::{predict_for_user, Arrangement, NamedArrangement, ProbeSet, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// Degree used for isolated nodes when normalizing.
    pub epsilon: f64,
    /// Eigenvalues below this count as zero.
    pub zero_tolerance: f64,
    pub restarts: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { epsilon: 1e-12, zero_tolerance: 1e-8, restarts: 10 }
    }
}

/// Symmetric weights in `[0, 1]` with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceGraph {
    weights: DMatrix<f64>,
}

impl PreferenceGraph {
    /// Clamps every weight into `[0, 1]`. Rejects asymmetric or non-finite
    /// input.
    pub fn from_weights(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        let mut weights = DMatrix::zeros(n, n);
        for l in 0..n {
            for k in 0..n {
                let (w, back) = (rows[l][k], rows[k][l]);
                if !w.is_finite() {
                    return Err(Error::Dimension(format!("weight ({l}, {k}) is not finite")));
                }
                if w != back {
                    return Err(Error::Dimension(format!("weights ({l}, {k}) and ({k}, {l}) differ")));
                }
                if l != k {
                    weights[(l, k)] = w.clamp(0.0, 1.0);
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, l: usize, k: usize) -> f64 {
        self.weights[(l, k)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { weights: (&self.weights * factor).map(|w| w.clamp(0.0, 1.0)) }
    }

    /// `D^-1/2 (D - W) D^-1/2` with isolated nodes given degree `epsilon`,
    /// which leaves them a zero row and column.
    pub fn normalized_laplacian(&self, epsilon: f64) -> DMatrix<f64> {
        let n = self.len();
        let degree: Vec<f64> = (0..n).map(|i| self.weights.row(i).sum()).collect();
        let scale: Vec<f64> = degree.iter().map(|&d| 1.0 / d.max(epsilon).sqrt()).collect();
        DMatrix::from_fn(n, n, |l, k| {
            let d = if l == k { degree[l] } else { 0.0 };
            (d - self.weights[(l, k)]) * scale[l] * scale[k]
        })
    }

    /// Eigenvalues ascending, with matching eigenvectors as columns.
    pub fn spectrum(&self, epsilon: f64) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.len();
        let eig = SymmetricEigen::new(self.normalized_laplacian(epsilon));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Graphviz rendering, one edge per positive weight.
    pub fn to_dot(&self, labels: &[String]) -> String {
        let mut out = String::from("graph preferences {\n");
        for (i, label) in labels.iter().enumerate().take(self.len()) {
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", label.replace('"', "\\\""));
        }
        for l in 0..self.len() {
            for k in l + 1..self.len() {
                let w = self.weights[(l, k)];
                if w > 0.0 {
                    let _ = writeln!(out, "  n{l} -- n{k} [weight={w}, penwidth={:.2}];", 0.5 + 3.0 * w);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Fill a graph over `n` nodes from `rating(l, k)` for `l < k`. Fails on the
/// first pair without a rating.
pub fn build_graph<F>(n: usize, mut rating: F) -> Result<PreferenceGraph>
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let mut weights = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in l + 1..n {
            let r = rating(l, k).ok_or_else(|| Error::MissingRating(l.to_string(), k.to_string()))?;
            if !r.is_finite() {
                return Err(Error::Dimension(format!("rating for ({l}, {k}) is not finite")));
            }
            let w = r.clamp(0.0, 1.0);
            weights[(l, k)] = w;
            weights[(k, l)] = w;
        }
    }
    Ok(PreferenceGraph { weights })
}

/// Position of the largest gap between consecutive ascending eigenvalues,
/// searched over the whole spectrum and then capped at `max_clusters`.
/// Ties go to the smaller count. A graph without edges has no gap and
/// gets one group per node.
pub fn estimate_cluster_count(graph: &PreferenceGraph, max_clusters: usize, config: &SpectralConfig) -> Result<usize> {
    let n = graph.len();
    if n == 0 {
        return Err(Error::Config("cannot partition an empty graph".into()));
    }
    if max_clusters == 0 {
        return Err(Error::Config("need at least one container".into()));
    }
    if n == 1 {
        return Ok(1);
    }
    let (values, _) = graph.spectrum(config.epsilon);
    if values.iter().all(|v| v.abs() < config.zero_tolerance) {
        return Ok(n.min(max_clusters));
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..n {
        let gap = values[i] - values[i - 1];
        if gap > best.1 + 1e-12 {
            best = (i, gap);
        }
    }
    Ok(best.0.min(max_clusters))
}

/// Eigenvalues of the normalized Laplacian that are numerically zero; equals
/// the number of connected components (isolated nodes included).
pub fn zero_eigenvalue_count(graph: &PreferenceGraph, config: &SpectralConfig) -> usize {
    let (values, _) = graph.spectrum(config.epsilon);
    values.iter().filter(|v| v.abs() < config.zero_tolerance).count()
}

/// Cluster labels per node, renumbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub count: usize,
}

impl Partition {
    /// Canonical relabeling of arbitrary cluster ids.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = BTreeMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Self { assignment, count: remap.len() }
    }

    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

/// Embed each node as its row of the first `clusters` eigenvectors,
/// normalized to unit length, and run k-means++ with restarts.
pub fn spectral_partition(
    graph: &PreferenceGraph,
    clusters: usize,
    seed: u64,
    config: &SpectralConfig,
) -> Result<Partition> {
    let n = graph.len();
    if clusters == 0 || clusters > n {
        return Err(Error::Config(format!("cannot split {n} objects into {clusters} groups")));
    }
    if clusters == 1 {
        return Ok(Partition::from_labels(&vec![0; n]));
    }
    let (_, vectors) = graph.spectrum(config.epsilon);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let row: Vec<f64> = (0..clusters).map(|c| vectors[(r, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clustering = kmeans(&points, clusters, config.restarts, &mut rng);
    Ok(Partition::from_labels(&clustering.assignment))
}

/// Total weight of edges whose ends fall in different groups.
pub fn cut_value(graph: &PreferenceGraph, partition: &Partition) -> f64 {
    let n = graph.len();
    let mut cut = 0.0;
    for l in 0..n {
        for k in l + 1..n {
            if partition.assignment[l] != partition.assignment[k] {
                cut += graph.weights[(l, k)];
            }
        }
    }
    cut
}

/// Estimate the group count (at most `max_containers`) and partition.
pub fn partition_graph(
    graph: &PreferenceGraph,
    max_containers: usize,
    seed: u64,
    config: &SpectralConfig,
) -> Result<Partition> {
    let clusters = estimate_cluster_count(graph, max_containers, config)?;
    spectral_partition(graph, clusters, seed, config)
}

/// Greedy cover of the unrated pairs: repeatedly blame the node involved in
/// the most of them.
fn uncoverable_nodes(missing: &[(usize, usize)]) -> Vec<usize> {
    let mut left: Vec<(usize, usize)> = missing.to_vec();
    let mut blamed = Vec::new();
    while !left.is_empty() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in &left {
            *counts.entry(a).or_default() += 1;
            *counts.entry(b).or_default() += 1;
        }
        let worst =
            counts.iter().max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0))).map(|(&node, _)| node).expect("non-empty");
        blamed.push(worst);
        left.retain(|&(a, b)| a != worst && b != worst);
    }
    blamed.sort_unstable();
    blamed
}

/// Arrange `labels.len()` objects into at most `max_containers` groups from
/// pairwise ratings over node indices. Pairs without any rating are
/// reported as [`Error::Uncoverable`] naming the objects responsible.
pub fn arrange_nodes<F>(
    labels: &[String],
    mut rating: F,
    max_containers: usize,
    seed: u64,
    config: &SpectralConfig,
) -> Result<Vec<Vec<usize>>>
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let n = labels.len();
    if n == 0 {
        return Err(Error::Config("no objects to arrange".into()));
    }
    if max_containers == 0 {
        return Err(Error::Config("need at least one container".into()));
    }
    let mut rows = vec![vec![0.0; n]; n];
    let mut missing = Vec::new();
    for l in 0..n {
        for k in l + 1..n {
            match rating(l, k) {
                Some(r) if r.is_finite() => {
                    rows[l][k] = r;
                    rows[k][l] = r;
                }
                _ => missing.push((l, k)),
            }
        }
    }
    if !missing.is_empty() {
        let names = uncoverable_nodes(&missing).into_iter().map(|i| labels[i].clone()).collect();
        return Err(Error::Uncoverable(names));
    }
    let graph = PreferenceGraph::from_weights(&rows)?;
    let partition = partition_graph(&graph, max_containers, seed, config)?;
    Ok(partition.groups())
}

/// [`arrange_nodes`] over catalog ordinals, with `rating` taking ordinals.
pub fn arrange<F>(
    objects: &[usize],
    catalog: &ObjectCatalog,
    mut rating: F,
    max_containers: usize,
    seed: u64,
    config: &SpectralConfig,
) -> Result<Arrangement>
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let distinct: BTreeSet<usize> = objects.iter().copied().collect();
    if distinct.len() != objects.len() {
        return Err(Error::Arrangement("objects to arrange must be distinct".into()));
    }
    let labels = objects.iter().map(|&o| catalog.name(o).map(str::to_string)).collect::<Result<Vec<_>>>()?;
    let groups = arrange_nodes(&labels, |l, k| rating(objects[l], objects[k]), max_containers, seed, config)?;
    let arrangement =
        Arrangement { containers: groups.into_iter().map(|g| g.into_iter().map(|i| objects[i]).collect()).collect() };
    Ok(arrangement)
}

/// Everything known about one user: probe answers first, then the factor
/// model for modelled pairs, then the expert mixture for anything else.
#[derive(Debug, Clone)]
pub struct UserPreferences<'a> {
    pub stored: &'a StoredModel,
    pub profile: &'a UserProfile,
    pub probes: &'a ProbeSet,
    pub mixture: Option<&'a ExpertMixture>,
}

/// Where a pair rating came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingOrigin {
    Probe,
    Model,
    Experts,
}

impl<'a> UserPreferences<'a> {
    pub fn new(stored: &'a StoredModel, profile: &'a UserProfile, probes: &'a ProbeSet) -> Self {
        Self { stored, profile, probes, mixture: None }
    }

    pub fn with_experts(mut self, mixture: &'a ExpertMixture) -> Self {
        self.mixture = Some(mixture);
        self
    }

    fn modelled_pair(&self, a: &str, b: &str) -> Option<usize> {
        let catalog = &self.stored.catalog;
        self.stored.pairs.get(catalog.get(a)?, catalog.get(b)?)
    }

    fn model_rating(&self, pair: usize) -> Option<f64> {
        if let Some(r) = self.probes.get(pair) {
            return Some(r);
        }
        predict_for_user(&self.stored.model, self.profile, pair).ok()
    }

    /// Known ratings handed to the experts: probes plus model predictions
    /// for every modelled pair, clamped to `[0, 1]`.
    pub fn expert_view(&self) -> Result<KnownRatings> {
        let mut known = KnownRatings::new();
        for pair in 0..self.stored.pairs.len() {
            let (a, b) = self.stored.pairs.names(&self.stored.catalog, pair)?;
            if let Some(r) = self.model_rating(pair) {
                known.insert(a, b, r.clamp(0.0, 1.0))?;
            }
        }
        Ok(known)
    }

    /// Rating and origin for every pair among `names` (`l < k` node order).
    pub fn pair_ratings(&self, names: &[String]) -> Result<BTreeMap<(usize, usize), (f64, RatingOrigin)>> {
        let mut out = BTreeMap::new();
        let mut expert_state: Option<(KnownRatings, Vec<f64>)> = None;
        for l in 0..names.len() {
            for k in l + 1..names.len() {
                if let Some(pair) = self.modelled_pair(&names[l], &names[k]) {
                    let origin =
                        if self.probes.get(pair).is_some() { RatingOrigin::Probe } else { RatingOrigin::Model };
                    if let Some(r) = self.model_rating(pair) {
                        out.insert((l, k), (r, origin));
                    }
                    continue;
                }
                let Some(mixture) = self.mixture else { continue };
                if expert_state.is_none() {
                    let view = self.expert_view()?;
                    let weights = mixture.confidences(&view);
                    expert_state = Some((view, weights));
                }
                let (view, weights) = expert_state.as_ref().expect("initialized above");
                if let Some(r) = mixture.predict_with(weights, &names[l], &names[k], view) {
                    out.insert((l, k), (r, RatingOrigin::Experts));
                }
            }
        }
        Ok(out)
    }

    /// Arrange the named objects, which may include objects the model has
    /// never seen as long as the experts can rate them.
    pub fn arrange(
        &self,
        names: &[String],
        max_containers: usize,
        seed: u64,
        config: &SpectralConfig,
    ) -> Result<NamedArrangement> {
        let distinct: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        if distinct.len() != names.len() {
            return Err(Error::Arrangement("objects to arrange must be distinct".into()));
        }
        let ratings = self.pair_ratings(names)?;
        let groups = arrange_nodes(names, |l, k| ratings.get(&(l, k)).map(|x| x.0), max_containers, seed, config)?;
        Ok(NamedArrangement {
            containers: groups.into_iter().map(|g| g.into_iter().map(|i| names[i].clone()).collect()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(sizes: &[usize], intra: f64, inter: f64) -> PreferenceGraph {
        let n: usize = sizes.iter().sum();
        let mut label = Vec::new();
        for (b, &s) in sizes.iter().enumerate() {
            label.extend(std::iter::repeat_n(b, s));
        }
        build_graph(n, |l, k| Some(if label[l] == label[k] { intra } else { inter })).unwrap()
    }

    #[test]
    fn graph_from_three_ratings() {
        let r = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let g = build_graph(3, |l, k| Some(r[l][k])).unwrap();
        for l in 0..3 {
            for k in 0..3 {
                assert_eq!(g.weight(l, k), r[l][k]);
            }
        }
        let clamped = build_graph(2, |_, _| Some(1.3)).unwrap();
        assert_eq!(clamped.weight(0, 1), 1.0);
        assert!(matches!(build_graph(3, |l, _| (l == 0).then_some(1.0)), Err(Error::MissingRating(..))));
    }

    #[test]
    fn isolated_nodes_have_zero_eigenvalues() {
        let g = PreferenceGraph::from_weights(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let (values, _) = g.spectrum(1e-12);
        assert!(values.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(zero_eigenvalue_count(&g, &SpectralConfig::default()), 3);
    }

    #[test]
    fn eigen_gap_examples() {
        let config = SpectralConfig::default();
        assert_eq!(estimate_cluster_count(&blocks(&[3, 4], 1.0, 0.0), 6, &config).unwrap(), 2);
        assert_eq!(estimate_cluster_count(&blocks(&[6], 1.0, 0.0), 6, &config).unwrap(), 1);
        assert_eq!(estimate_cluster_count(&blocks(&[3, 4, 5, 5], 1.0, 0.0), 6, &config).unwrap(), 4);
        assert_eq!(estimate_cluster_count(&blocks(&[3, 4, 5, 5], 1.0, 0.0), 2, &config).unwrap(), 2);
        assert_eq!(estimate_cluster_count(&blocks(&[1], 1.0, 0.0), 3, &config).unwrap(), 1);
        assert!(estimate_cluster_count(&blocks(&[], 1.0, 0.0), 3, &config).is_err());
    }

    #[test]
    fn two_cliques_split_cleanly() {
        let g = blocks(&[4, 3], 1.0, 0.0);
        let p = spectral_partition(&g, 2, 5, &SpectralConfig::default()).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(cut_value(&g, &p), 0.0);
    }

    #[test]
    fn as_many_clusters_as_nodes() {
        let g = blocks(&[2, 3], 0.8, 0.1);
        let p = spectral_partition(&g, 5, 1, &SpectralConfig::default()).unwrap();
        assert_eq!(p.count, 5);
        assert!(spectral_partition(&g, 6, 1, &SpectralConfig::default()).is_err());
    }

    #[test]
    fn hand_cut() {
        // A B C D with AB = 1, CD = 1, AC = 0.2
        let mut w = vec![vec![0.0; 4]; 4];
        for (l, k, v) in [(0, 1, 1.0), (2, 3, 1.0), (0, 2, 0.2)] {
            w[l][k] = v;
            w[k][l] = v;
        }
        let g = PreferenceGraph::from_weights(&w).unwrap();
        assert!((cut_value(&g, &Partition::from_labels(&[0, 0, 1, 1])) - 0.2).abs() < 1e-12);
        assert_eq!(cut_value(&g, &Partition::from_labels(&[0, 0, 0, 0])), 0.0);
        assert_eq!(
            cut_value(&g, &Partition::from_labels(&[7, 7, 3, 3])),
            cut_value(&g, &Partition::from_labels(&[0, 0, 1, 1]))
        );
    }

    #[test]
    fn relabeling_is_canonical() {
        let p = Partition::from_labels(&[4, 4, 1, 9, 1]);
        assert_eq!(p.assignment, vec![0, 0, 1, 2, 1]);
        assert_eq!(p.count, 3);
        assert_eq!(p.groups(), vec![vec![0, 1], vec![2, 4], vec![3]]);
    }

    #[test]
    fn uncoverable_objects_are_named() {
        let labels: Vec<String> = ["a", "b", "flashlight"].iter().map(|s| s.to_string()).collect();
        let result = arrange_nodes(&labels, |_, k| (k != 2).then_some(1.0), 3, 0, &SpectralConfig::default());
        match result {
            Err(Error::Uncoverable(names)) => assert_eq!(names, vec!["flashlight".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_object_gets_one_container() {
        let labels = vec!["tea".to_string()];
        let groups = arrange_nodes(&labels, |_, _| None, 4, 0, &SpectralConfig::default()).unwrap();
        assert_eq!(groups, vec![vec![0]]);
    }

    #[test]
    fn dot_export_lists_edges() {
        let g = blocks(&[2, 1], 1.0, 0.0);
        let dot = g.to_dot(&["x".into(), "y".into(), "z".into()]);
        assert!(dot.contains("n0 -- n1"));
        assert!(!dot.contains("n0 -- n2"));
        assert!(dot.contains("label=\"z\""));
    }
}
