//! Ratings for objects nobody has rated, from category hierarchies.
//!
//! Each expert wraps one "is-a" hierarchy (as mined from an online store).
//! It scores a pair by the Wu-Palmer similarity of the two classes, then
//! corrects that baseline with how the user rated pairs involving similar
//! objects. Several experts are blended, weighted by how well each one
//! reproduces the user's own known ratings under leave-one-out.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::{Error, Result};
use crate::probing::ProbeSet;

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.6;
pub const DEFAULT_SIMILARITY_FLOOR: f64 = 0.4;

/// Guard against pathological DAGs with exponentially many root paths.
const MAX_PATHS_PER_NODE: usize = 256;

/// A rooted "is-a" DAG. Node depth counts the nodes on a root path, so the
/// root has depth 1.
#[derive(Debug, Clone)]
pub struct TaxonomyExpert {
    name: String,
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    root: usize,
    /// Every root-to-node path, root first.
    paths: Vec<Vec<Vec<usize>>>,
}

impl TaxonomyExpert {
    /// Build from `(parent, child)` edges.
    pub fn from_edges<I, S>(name: impl Into<String>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut nodes: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |label: &str| -> Result<usize> {
            let label = label.trim();
            if label.is_empty() {
                return Err(Error::Hierarchy("empty node name".into()));
            }
            if let Some(&i) = index.get(label) {
                return Ok(i);
            }
            nodes.push(label.to_string());
            index.insert(label.to_string(), nodes.len() - 1);
            Ok(nodes.len() - 1)
        };
        let mut edge_list = Vec::new();
        for (parent, child) in edges {
            let p = intern(parent.as_ref())?;
            let c = intern(child.as_ref())?;
            if p == c {
                return Err(Error::Hierarchy(format!("`{}` is its own parent", parent.as_ref().trim())));
            }
            edge_list.push((p, c));
        }
        edge_list.sort_unstable();
        edge_list.dedup();
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Hierarchy("hierarchy has no edges".into()));
        }
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for &(p, c) in &edge_list {
            children[p].push(c);
            parents[c].push(p);
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::Hierarchy("no root: every node has a parent".into())),
            many => {
                let names: Vec<&str> = many.iter().map(|&i| nodes[i].as_str()).collect();
                return Err(Error::Hierarchy(format!("several roots: {}", names.join(", "))));
            }
        };

        // Kahn's algorithm: the topological order doubles as the acyclicity check.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue = VecDeque::from([root]);
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Hierarchy("hierarchy contains a cycle".into()));
        }

        let mut paths: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
        paths[root] = vec![vec![root]];
        for &v in &order[1..] {
            let mut mine = Vec::new();
            for &p in &parents[v] {
                for path in &paths[p] {
                    if mine.len() == MAX_PATHS_PER_NODE {
                        break;
                    }
                    let mut extended = path.clone();
                    extended.push(v);
                    mine.push(extended);
                }
            }
            paths[v] = mine;
        }

        Ok(Self { name: name.into(), nodes, index, root, paths })
    }

    /// Parse `parent<TAB>child` lines. Blank lines and lines starting with
    /// `#` are skipped.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (parent, child) =
                line.split_once('\t').ok_or_else(|| Error::parse(i as u64 + 1, "expected `parent<TAB>child`"))?;
            if child.contains('\t') {
                return Err(Error::parse(i as u64 + 1, "more than two fields"));
            }
            edges.push((parent.to_string(), child.to_string()));
        }
        Self::from_edges(name, edges)
    }

    /// Load an edge-list file; the expert is named after the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "expert".into());
        Self::parse(name, &std::fs::read_to_string(path)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &str {
        &self.nodes[self.root]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn resolve(&self, class: &str) -> Option<usize> {
        self.index.get(class.trim()).copied()
    }

    pub fn contains(&self, class: &str) -> bool {
        self.resolve(class).is_some()
    }

    /// Depth along the shortest root path.
    pub fn depth(&self, class: &str) -> Option<usize> {
        let node = self.resolve(class)?;
        self.paths[node].iter().map(Vec::len).min()
    }

    /// Wu-Palmer similarity `2 depth(lca) / (depth(a) + depth(b))`, taking
    /// the pair of root paths that scores highest. `None` if either class is
    /// missing from the hierarchy.
    pub fn wup(&self, a: &str, b: &str) -> Option<f64> {
        let (a, b) = (self.resolve(a)?, self.resolve(b)?);
        Some(self.wup_nodes(a, b))
    }

    fn wup_nodes(&self, a: usize, b: usize) -> f64 {
        let mut best = 0.0f64;
        for pa in &self.paths[a] {
            for pb in &self.paths[b] {
                let common = pa.iter().zip(pb).take_while(|(x, y)| x == y).count();
                best = best.max(2.0 * common as f64 / (pa.len() + pb.len()) as f64);
            }
        }
        best
    }
}

/// One user's known pair ratings, keyed by object name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnownRatings {
    by_object: BTreeMap<String, BTreeMap<String, f64>>,
    len: usize,
}

impl KnownRatings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: &str, b: &str, rating: f64) -> Result<()> {
        if a == b {
            return Err(Error::SelfNamedPair(a.to_string()));
        }
        if !(0.0..=1.0).contains(&rating) {
            return Err(Error::RatingOutOfRange(rating));
        }
        let fresh = self.by_object.entry(a.to_string()).or_default().insert(b.to_string(), rating).is_none();
        self.by_object.entry(b.to_string()).or_default().insert(a.to_string(), rating);
        if fresh {
            self.len += 1;
        }
        Ok(())
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.by_object.get(a)?.get(b).copied()
    }

    /// Objects rated together with `object`, and those ratings.
    pub fn partners<'a>(&'a self, object: &str) -> impl Iterator<Item = (&'a str, f64)> + 'a {
        self.by_object.get(object).into_iter().flatten().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Every known rating once, with `a < b`.
    pub fn entries(&self) -> Vec<(&str, &str, f64)> {
        let mut out = Vec::with_capacity(self.len);
        for (a, row) in &self.by_object {
            for (b, &r) in row {
                if a < b {
                    out.push((a.as_str(), b.as_str(), r));
                }
            }
        }
        out
    }

    pub fn from_probes(probes: &ProbeSet, catalog: &ObjectCatalog, pairs: &PairIndex) -> Result<Self> {
        let mut out = Self::new();
        for (pair, rating) in probes.iter() {
            let (a, b) = pairs.names(catalog, pair)?;
            out.insert(a, b, rating)?;
        }
        Ok(out)
    }
}

/// Expert estimate for the pair `{a, b}`.
///
/// Starts from the similarity `wup(a, b)` and adds the similarity-weighted
/// mean residual `r(l, b) - wup(l, b)` over objects `l` the user has rated
/// with `b`, weighted by `wup(a, l)`; symmetrically for objects rated with
/// `a`. A novel object has no ratings of its own, so only its partner's side
/// contributes. Never reads `r(a, b)` itself, which is what makes
/// leave-one-out cheap. Abstains when `a` or `b` is not in the hierarchy or
/// no neighbour reaches `similarity_floor`. Clamped to `[0, 1]`.
pub fn expert_rating(
    expert: &TaxonomyExpert,
    a: &str,
    b: &str,
    ratings: &KnownRatings,
    similarity_floor: f64,
) -> Option<f64> {
    let (na, nb) = (expert.resolve(a)?, expert.resolve(b)?);
    let baseline = expert.wup_nodes(na, nb);
    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    let mut strongest = 0.0f64;
    for (target, partner, n_target, n_partner) in [(a, b, na, nb), (b, a, nb, na)] {
        for (l, rating) in ratings.partners(partner) {
            if l == target {
                continue;
            }
            let Some(nl) = expert.resolve(l) else { continue };
            let similarity = expert.wup_nodes(n_target, nl);
            weight_sum += similarity;
            weighted += similarity * (rating - expert.wup_nodes(nl, n_partner));
            strongest = strongest.max(similarity);
        }
    }
    if weight_sum <= 0.0 || strongest < similarity_floor {
        return None;
    }
    Some((baseline + weighted / weight_sum).clamp(0.0, 1.0))
}

/// `exp(-e)` where `e` is the mean absolute leave-one-out error of the
/// expert over the user's known ratings. Zero below `threshold`, with fewer
/// than two ratings, or when the expert abstains on all of them.
pub fn expert_confidence(
    expert: &TaxonomyExpert,
    ratings: &KnownRatings,
    threshold: f64,
    similarity_floor: f64,
) -> f64 {
    if ratings.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b, truth) in ratings.entries() {
        if let Some(pred) = expert_rating(expert, a, b, ratings, similarity_floor) {
            total += (pred - truth).abs();
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    confidence_from_error(total / count as f64, threshold)
}

pub fn confidence_from_error(mean_error: f64, threshold: f64) -> f64 {
    let w = (-mean_error).exp();
    if w < threshold {
        0.0
    } else {
        w
    }
}

/// Weighted mean of the non-abstaining estimates with positive weight.
pub fn blend(weighted: &[(f64, Option<f64>)]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(w, r) in weighted {
        if let Some(r) = r {
            if w > 0.0 {
                num += w * r;
                den += w;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Mixture config file: `{"hierarchies": [paths], "confidence_threshold",
/// "similarity_floor"}`. Relative paths are resolved against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub hierarchies: Vec<PathBuf>,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
    #[serde(default = "default_floor")]
    pub similarity_floor: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_CONFIDENCE_THRESHOLD
}

fn default_floor() -> f64 {
    DEFAULT_SIMILARITY_FLOOR
}

#[derive(Debug, Clone)]
pub struct ExpertMixture {
    pub experts: Vec<TaxonomyExpert>,
    pub confidence_threshold: f64,
    pub similarity_floor: f64,
}

impl ExpertMixture {
    pub fn new(experts: Vec<TaxonomyExpert>) -> Self {
        Self { experts, confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD, similarity_floor: DEFAULT_SIMILARITY_FLOOR }
    }

    pub fn with_thresholds(mut self, confidence_threshold: f64, similarity_floor: f64) -> Result<Self> {
        for (label, v) in [("confidence_threshold", confidence_threshold), ("similarity_floor", similarity_floor)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{label} must lie in [0, 1], got {v}")));
            }
        }
        self.confidence_threshold = confidence_threshold;
        self.similarity_floor = similarity_floor;
        Ok(self)
    }

    pub fn load_hierarchies<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let experts = paths.iter().map(TaxonomyExpert::load).collect::<Result<_>>()?;
        Ok(Self::new(experts))
    }

    pub fn from_config(config: &MixtureConfig, base_dir: &Path) -> Result<Self> {
        let paths: Vec<PathBuf> = config.hierarchies.iter().map(|p| base_dir.join(p)).collect();
        Self::load_hierarchies(&paths)?.with_thresholds(config.confidence_threshold, config.similarity_floor)
    }

    pub fn load_config(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let config: MixtureConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_config(&config, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    /// Whether any expert knows the class at all.
    pub fn resolves(&self, class: &str) -> bool {
        self.experts.iter().any(|e| e.contains(class))
    }

    pub fn confidences(&self, ratings: &KnownRatings) -> Vec<f64> {
        self.experts
            .iter()
            .map(|e| expert_confidence(e, ratings, self.confidence_threshold, self.similarity_floor))
            .collect()
    }

    pub fn expert_ratings(&self, a: &str, b: &str, ratings: &KnownRatings) -> Vec<Option<f64>> {
        self.experts.iter().map(|e| expert_rating(e, a, b, ratings, self.similarity_floor)).collect()
    }

    /// Blend with precomputed confidences; see [`Self::confidences`].
    pub fn predict_with(&self, confidences: &[f64], a: &str, b: &str, ratings: &KnownRatings) -> Option<f64> {
        let estimates = self.expert_ratings(a, b, ratings);
        let weighted: Vec<(f64, Option<f64>)> = confidences.iter().copied().zip(estimates).collect();
        blend(&weighted)
    }

    pub fn predict(&self, a: &str, b: &str, ratings: &KnownRatings) -> Option<f64> {
        self.predict_with(&self.confidences(ratings), a, b, ratings)
    }
}
