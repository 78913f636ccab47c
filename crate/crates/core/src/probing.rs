//! Eliciting a new user's preferences.
//!
//! Probes come from two places: an observed arrangement (objects sharing a
//! container rate 1, objects in different containers rate 0) or questions
//! chosen by clustering the pair factor vectors. With the pair side of a
//! trained model frozen, the user's bias and factor vector are the solution
//! of a small regularized least-squares problem.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::{Error, Result};
use crate::factorization::{FactorModel, TrainConfig};
use crate::kmeans::kmeans;
use crate::lbfgs::{self, LbfgsParams};

/// Objects (by catalog ordinal) grouped into containers. Containers may be
/// empty; no object appears twice.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Arrangement {
    pub containers: Vec<Vec<usize>>,
}

impl Arrangement {
    pub fn new(containers: Vec<Vec<usize>>) -> Result<Self> {
        let arrangement = Self { containers };
        arrangement.validate(None)?;
        Ok(arrangement)
    }

    pub fn validate(&self, n_objects: Option<usize>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &o in self.containers.iter().flatten() {
            if let Some(n) = n_objects {
                if o >= n {
                    return Err(Error::ObjectOutOfRange(o, n));
                }
            }
            if !seen.insert(o) {
                return Err(Error::Arrangement(format!("object {o} is placed more than once")));
            }
        }
        Ok(())
    }

    pub fn placed(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.containers.iter().flatten().copied().collect();
        out.sort_unstable();
        out
    }

    pub fn container_of(&self, object: usize) -> Option<usize> {
        self.containers.iter().position(|c| c.contains(&object))
    }

    pub fn non_empty_count(&self) -> usize {
        self.containers.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn to_named(&self, catalog: &ObjectCatalog) -> Result<NamedArrangement> {
        let containers = self
            .containers
            .iter()
            .map(|c| c.iter().map(|&o| catalog.name(o).map(str::to_string)).collect())
            .collect::<Result<_>>()?;
        Ok(NamedArrangement { containers })
    }
}

/// Arrangement by object name; this is the arrangement file format
/// `{"containers": [["tea", "coffee"], ["salt"]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NamedArrangement {
    pub containers: Vec<Vec<String>>,
}

impl NamedArrangement {
    pub fn to_ordinals(&self, catalog: &ObjectCatalog) -> Result<Arrangement> {
        let containers = self
            .containers
            .iter()
            .map(|c| c.iter().map(|name| catalog.ordinal(name)).collect())
            .collect::<Result<_>>()?;
        let arrangement = Arrangement { containers };
        arrangement.validate(Some(catalog.len()))?;
        Ok(arrangement)
    }

    pub fn objects(&self) -> Vec<&str> {
        self.containers.iter().flatten().map(String::as_str).collect()
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let arrangement: Self = serde_json::from_str(json)?;
        let mut seen = BTreeSet::new();
        for name in arrangement.containers.iter().flatten() {
            if !seen.insert(name.trim()) {
                return Err(Error::Arrangement(format!("`{name}` is placed more than once")));
            }
        }
        Ok(arrangement)
    }
}

/// Known ratings of one user, keyed by pair ordinal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSet {
    ratings: BTreeMap<usize, f64>,
}

impl ProbeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or overwrite.
    pub fn insert(&mut self, pair: usize, rating: f64) -> Result<Option<f64>> {
        if !(0.0..=1.0).contains(&rating) {
            return Err(Error::RatingOutOfRange(rating));
        }
        Ok(self.ratings.insert(pair, rating))
    }

    pub fn remove(&mut self, pair: usize) -> Option<f64> {
        self.ratings.remove(&pair)
    }

    pub fn get(&self, pair: usize) -> Option<f64> {
        self.ratings.get(&pair).copied()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Entries in pair order, whatever the insertion order was.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.ratings.iter().map(|(&p, &r)| (p, r))
    }

    pub fn pairs(&self) -> Vec<usize> {
        self.ratings.keys().copied().collect()
    }

    pub fn from_entries<I: IntoIterator<Item = (usize, f64)>>(entries: I) -> Result<Self> {
        let mut set = Self::new();
        for (pair, rating) in entries {
            set.insert(pair, rating)?;
        }
        Ok(set)
    }

    /// Read `pair_a,pair_b,rating` rows; later rows overwrite earlier ones.
    pub fn read_csv<R: Read>(reader: R, catalog: &ObjectCatalog, pairs: &PairIndex) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["pair_a", "pair_b", "rating"] {
            return Err(Error::parse(1, "expected header `pair_a,pair_b,rating`"));
        }
        let mut set = Self::new();
        for (row, record) in rdr.records().enumerate() {
            let line = row as u64 + 2;
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let a =
                catalog.get(field(0)).ok_or_else(|| Error::parse(line, format!("unknown object `{}`", field(0))))?;
            let b =
                catalog.get(field(1)).ok_or_else(|| Error::parse(line, format!("unknown object `{}`", field(1))))?;
            let pair = pairs
                .get(a, b)
                .ok_or_else(|| Error::parse(line, format!("pair {{{}, {}}} is not modelled", field(0), field(1))))?;
            let rating: f64 = field(2).parse().map_err(|_| Error::parse(line, format!("bad rating `{}`", field(2))))?;
            set.insert(pair, rating).map_err(|e| Error::parse(line, e.to_string()))?;
        }
        Ok(set)
    }

    pub fn write_csv<W: Write>(&self, writer: W, catalog: &ObjectCatalog, pairs: &PairIndex) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["pair_a", "pair_b", "rating"])?;
        for (pair, rating) in self.iter() {
            let (a, b) = pairs.names(catalog, pair)?;
            wtr.write_record([a, b, &format!("{rating}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Probe ratings implied by an arrangement: 1 for objects sharing a
/// container, 0 for objects in different containers. Pairs missing from
/// `pairs` are skipped.
pub fn probes_from_arrangement(arrangement: &Arrangement, pairs: &PairIndex) -> Result<ProbeSet> {
    arrangement.validate(None)?;
    let mut placed: Vec<(usize, usize)> =
        arrangement.containers.iter().enumerate().flat_map(|(c, objs)| objs.iter().map(move |&o| (o, c))).collect();
    placed.sort_unstable();
    let mut set = ProbeSet::new();
    for (a, &(l, cl)) in placed.iter().enumerate() {
        for &(k, ck) in &placed[a + 1..] {
            if let Some(pair) = pairs.get(l, k) {
                set.insert(pair, if cl == ck { 1.0 } else { 0.0 })?;
            }
        }
    }
    Ok(set)
}

fn cluster_representatives(model: &FactorModel, candidates: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = candidates.iter().map(|&i| model.pair_vector(i).to_vec()).collect();
    let clustering = kmeans(&points, count, 1, &mut rng);
    let mut picked = Vec::with_capacity(count);
    for members in clustering.members() {
        if !members.is_empty() {
            picked.push(candidates[members[rng.random_range(0..members.len())]]);
        }
    }
    if picked.len() < count {
        let chosen: BTreeSet<usize> = picked.iter().copied().collect();
        let mut rest: Vec<usize> = candidates.iter().copied().filter(|c| !chosen.contains(c)).collect();
        rest.shuffle(&mut rng);
        picked.extend(rest.into_iter().take(count - picked.len()));
    }
    picked
}

/// Choose `count` pairs to ask about: k-means over the pair factor vectors
/// with `count` clusters, one uniformly random member per cluster, topped
/// up with random unselected pairs when clusters come out empty.
pub fn select_probes(model: &FactorModel, count: usize, seed: u64) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..model.n_pairs()).collect();
    select_probes_among(model, &all, count, seed)
}

/// [`select_probes`] restricted to `candidates` (e.g. the pairs a survey
/// participant actually answered).
pub fn select_probes_among(model: &FactorModel, candidates: &[usize], count: usize, seed: u64) -> Result<Vec<usize>> {
    check_probe_request(model, candidates, count)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    Ok(cluster_representatives(model, candidates, count, seed))
}

/// `count` distinct pairs drawn uniformly from `candidates`.
pub fn random_probes(candidates: &[usize], count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > candidates.len() {
        return Err(Error::Config(format!("cannot pick {count} probes from {} pairs", candidates.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = candidates.to_vec();
    pool.shuffle(&mut rng);
    pool.truncate(count);
    Ok(pool)
}

fn check_probe_request(model: &FactorModel, candidates: &[usize], count: usize) -> Result<()> {
    if count > candidates.len() {
        return Err(Error::Config(format!("cannot pick {count} probes from {} pairs", candidates.len())));
    }
    let distinct: BTreeSet<usize> = candidates.iter().copied().collect();
    if distinct.len() != candidates.len() {
        return Err(Error::Config("candidate pairs must be distinct".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&c| c >= model.n_pairs()) {
        return Err(Error::PairOutOfRange(bad, model.n_pairs()));
    }
    Ok(())
}

/// A user's bias and factor vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_bias: f64,
    pub factors: Vec<f64>,
}

impl UserProfile {
    pub fn zeros(k: usize) -> Self {
        Self { user_bias: 0.0, factors: vec![0.0; k] }
    }

    /// Column `user` of a trained model.
    pub fn from_model(model: &FactorModel, user: usize) -> Result<Self> {
        if user >= model.n_users() {
            return Err(Error::UserOutOfRange(user, model.n_users()));
        }
        Ok(Self { user_bias: model.user_bias[user], factors: model.user_vector(user).to_vec() })
    }
}

/// Objective of the new-user problem and its gradient in `(b_j, t_j)`.
pub fn new_user_objective(model: &FactorModel, probes: &ProbeSet, lambda: f64, profile: &UserProfile) -> f64 {
    let mut theta = Vec::with_capacity(model.k + 1);
    theta.push(profile.user_bias);
    theta.extend_from_slice(&profile.factors);
    let mut grad = vec![0.0; theta.len()];
    user_objective(&theta, &mut grad, model, probes, lambda)
}

fn user_objective(theta: &[f64], grad: &mut [f64], model: &FactorModel, probes: &ProbeSet, lambda: f64) -> f64 {
    let bj = theta[0];
    let t = &theta[1..];
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for (pair, rating) in probes.iter() {
        let s = model.pair_vector(pair);
        let dot: f64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
        let e = rating - (model.mu + model.pair_bias[pair] + bj + dot);
        total += e * e;
        grad[0] -= 2.0 * e;
        for (g, sd) in grad[1..].iter_mut().zip(s) {
            *g -= 2.0 * e * sd;
        }
    }
    let norm: f64 = t.iter().map(|v| v * v).sum();
    total += 0.5 * lambda * (bj * bj + norm);
    grad[0] += lambda * bj;
    for (g, v) in grad[1..].iter_mut().zip(t) {
        *g += lambda * v;
    }
    total
}

/// Fit `(b_j, t_j)` to `probes` with the pair side of `model` frozen:
/// minimize `sum e_ij^2 + lambda/2 (b_j^2 + |t_j|^2)` over the probed pairs.
/// No probes gives the zero profile. The result depends only on the set of
/// probes, not the order they were collected in.
pub fn solve_new_user(model: &FactorModel, probes: &ProbeSet, config: &TrainConfig) -> Result<UserProfile> {
    if config.k != model.k {
        return Err(Error::Config(format!("config K = {} but model K = {}", config.k, model.k)));
    }
    if let Some(bad) = probes.pairs().into_iter().find(|&p| p >= model.n_pairs()) {
        return Err(Error::PairOutOfRange(bad, model.n_pairs()));
    }
    if probes.is_empty() {
        return Ok(UserProfile::zeros(model.k));
    }
    // Tiny problem: allow it to run to numerical convergence.
    let params = LbfgsParams {
        memory: config.memory,
        max_iterations: config.max_iterations.max(200),
        tolerance: config.tolerance.min(1e-12),
        gradient_tolerance: 1e-12,
        ..LbfgsParams::default()
    };
    let lambda = config.lambda;
    let min = lbfgs::minimize(
        |theta, grad| user_objective(theta, grad, model, probes, lambda),
        vec![0.0; model.k + 1],
        &params,
    )?;
    Ok(UserProfile { user_bias: min.x[0], factors: min.x[1..].to_vec() })
}

/// `mu + b_i + b_j + s_i . t_j` with the user side taken from `profile`.
pub fn predict_for_user(model: &FactorModel, profile: &UserProfile, pair: usize) -> Result<f64> {
    if pair >= model.n_pairs() {
        return Err(Error::PairOutOfRange(pair, model.n_pairs()));
    }
    if profile.factors.len() != model.k {
        return Err(Error::Dimension(format!("profile has {} factors, model K = {}", profile.factors.len(), model.k)));
    }
    let dot: f64 = model.pair_vector(pair).iter().zip(&profile.factors).map(|(s, t)| s * t).sum();
    Ok(model.mu + model.pair_bias[pair] + profile.user_bias + dot)
}
