//! Biased low-rank factorization of the ratings matrix.
//!
//! A rating is modelled as `mu + b_i + b_j + s_i . t_j`, with `mu` the mean of
//! the known ratings, `b_i`/`b_j` pair and user offsets and `s_i`/`t_j`
//! K-dimensional factor vectors. Training minimizes
//!
//! ```text
//! sum over known (i, j) of  e_ij^2 + lambda/2 * (b_i^2 + b_j^2 + |s_i|^2 + |t_j|^2)
//! ```
//!
//! with L-BFGS. The regularizer sits inside the sum, so a variable is
//! penalized once per rating it takes part in. `mu` is fixed, not trained.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsParams, Termination};
use crate::ratings::RatingsMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub lambda: f64,
    pub max_iterations: usize,
    /// Relative objective decrease below which training stops.
    pub tolerance: f64,
    pub seed: u64,
    /// Variables start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
    pub memory: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { k: 3, lambda: 0.01, max_iterations: 500, tolerance: 1e-9, seed: 0, init_scale: 0.01, memory: 10 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        self.validate_allowing_bias_only()
    }

    fn validate_allowing_bias_only(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn lbfgs(&self) -> LbfgsParams {
        LbfgsParams {
            memory: self.memory,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            ..LbfgsParams::default()
        }
    }
}

/// Trained biases and factors. Pair factors are stored pair-major
/// (`s_i = pair_factors[i*K .. (i+1)*K]`), likewise user factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub k: usize,
    pub lambda: f64,
    pub mu: f64,
    pub pair_bias: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub pair_factors: Vec<f64>,
    pub user_factors: Vec<f64>,
}

/// Partial derivatives of the training objective, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub pair_bias: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub pair_factors: Vec<f64>,
    pub user_factors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl FactorModel {
    pub fn zeros(n_pairs: usize, n_users: usize, k: usize, lambda: f64, mu: f64) -> Self {
        Self {
            k,
            lambda,
            mu,
            pair_bias: vec![0.0; n_pairs],
            user_bias: vec![0.0; n_users],
            pair_factors: vec![0.0; n_pairs * k],
            user_factors: vec![0.0; n_users * k],
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_bias.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn pair_vector(&self, pair: usize) -> &[f64] {
        &self.pair_factors[pair * self.k..(pair + 1) * self.k]
    }

    pub fn user_vector(&self, user: usize) -> &[f64] {
        &self.user_factors[user * self.k..(user + 1) * self.k]
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, k) = (self.n_pairs(), self.n_users(), self.k);
        if self.pair_factors.len() != m * k || self.user_factors.len() != n * k {
            return Err(Error::Dimension(format!("factor matrices must be {k}x{m} and {k}x{n}")));
        }
        let finite = std::iter::once(&self.mu)
            .chain(&self.pair_bias)
            .chain(&self.user_bias)
            .chain(&self.pair_factors)
            .chain(&self.user_factors)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("model contains non-finite values".into()));
        }
        Ok(())
    }

    /// `mu + b_i + b_j + s_i . t_j`, not clamped.
    pub fn predict(&self, pair: usize, user: usize) -> Result<f64> {
        if pair >= self.n_pairs() {
            return Err(Error::PairOutOfRange(pair, self.n_pairs()));
        }
        if user >= self.n_users() {
            return Err(Error::UserOutOfRange(user, self.n_users()));
        }
        Ok(self.predict_unchecked(pair, user))
    }

    pub(crate) fn predict_unchecked(&self, pair: usize, user: usize) -> f64 {
        let dot: f64 = self.pair_vector(pair).iter().zip(self.user_vector(user)).map(|(s, t)| s * t).sum();
        self.mu + self.pair_bias[pair] + self.user_bias[user] + dot
    }

    fn check_matrix(&self, matrix: &RatingsMatrix) -> Result<()> {
        if matrix.n_pairs() != self.n_pairs() || matrix.n_users() != self.n_users() {
            return Err(Error::Dimension(format!(
                "model is {}x{}, matrix is {}x{}",
                self.n_pairs(),
                self.n_users(),
                matrix.n_pairs(),
                matrix.n_users()
            )));
        }
        Ok(())
    }

    fn to_params(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(
            self.pair_bias.len() + self.user_bias.len() + self.pair_factors.len() + self.user_factors.len(),
        );
        theta.extend_from_slice(&self.pair_bias);
        theta.extend_from_slice(&self.user_bias);
        theta.extend_from_slice(&self.pair_factors);
        theta.extend_from_slice(&self.user_factors);
        theta
    }

    fn load_params(&mut self, theta: &[f64]) {
        let layout = Layout::of(self.n_pairs(), self.n_users(), self.k);
        self.pair_bias.copy_from_slice(&theta[layout.pair_bias()]);
        self.user_bias.copy_from_slice(&theta[layout.user_bias()]);
        self.pair_factors.copy_from_slice(&theta[layout.pair_factors()]);
        self.user_factors.copy_from_slice(&theta[layout.user_factors()]);
    }
}

/// Offsets of each variable block inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    m: usize,
    n: usize,
    k: usize,
}

impl Layout {
    fn of(m: usize, n: usize, k: usize) -> Self {
        Self { m, n, k }
    }
    fn pair_bias(&self) -> std::ops::Range<usize> {
        0..self.m
    }
    fn user_bias(&self) -> std::ops::Range<usize> {
        self.m..self.m + self.n
    }
    fn pair_factors(&self) -> std::ops::Range<usize> {
        let start = self.m + self.n;
        start..start + self.m * self.k
    }
    fn user_factors(&self) -> std::ops::Range<usize> {
        let start = self.m + self.n + self.m * self.k;
        start..start + self.n * self.k
    }
    fn len(&self) -> usize {
        (self.m + self.n) * (1 + self.k)
    }
}

/// Known ratings flattened for the inner loop.
struct Triplets {
    pairs: Vec<u32>,
    users: Vec<u32>,
    ratings: Vec<f64>,
}

impl Triplets {
    fn of(matrix: &RatingsMatrix) -> Self {
        let mut out = Triplets {
            pairs: Vec::with_capacity(matrix.len()),
            users: Vec::with_capacity(matrix.len()),
            ratings: Vec::with_capacity(matrix.len()),
        };
        for e in matrix.entries() {
            out.pairs.push(e.pair as u32);
            out.users.push(e.user as u32);
            out.ratings.push(e.rating);
        }
        out
    }
}

/// Objective and gradient at `theta`.
fn objective(theta: &[f64], grad: &mut [f64], data: &Triplets, layout: Layout, mu: f64, lambda: f64) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let k = layout.k;
    let (pb, ub, pf, uf) =
        (layout.pair_bias().start, layout.user_bias().start, layout.pair_factors().start, layout.user_factors().start);
    let mut total = 0.0;
    for ((&i, &j), &r) in data.pairs.iter().zip(&data.users).zip(&data.ratings) {
        let (i, j) = (i as usize, j as usize);
        let s = pf + i * k;
        let t = uf + j * k;
        let mut dot = 0.0;
        let mut norms = 0.0;
        for d in 0..k {
            dot += theta[s + d] * theta[t + d];
            norms += theta[s + d] * theta[s + d] + theta[t + d] * theta[t + d];
        }
        let bi = theta[pb + i];
        let bj = theta[ub + j];
        let e = r - (mu + bi + bj + dot);
        total += e * e + 0.5 * lambda * (bi * bi + bj * bj + norms);

        grad[pb + i] += -2.0 * e + lambda * bi;
        grad[ub + j] += -2.0 * e + lambda * bj;
        for d in 0..k {
            let (sd, td) = (theta[s + d], theta[t + d]);
            grad[s + d] += -2.0 * e * td + lambda * sd;
            grad[t + d] += -2.0 * e * sd + lambda * td;
        }
    }
    total
}

/// `mu`: mean of the known ratings.
pub fn global_mean(matrix: &RatingsMatrix) -> Result<f64> {
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let sum: f64 = matrix.entries().map(|e| e.rating).sum();
    Ok(sum / matrix.len() as f64)
}

/// Training objective and its exact gradient with respect to every trainable
/// variable of `model` (`mu` excluded).
pub fn loss_and_gradient(model: &FactorModel, matrix: &RatingsMatrix) -> Result<(f64, Gradient)> {
    model.check_matrix(matrix)?;
    let layout = Layout::of(model.n_pairs(), model.n_users(), model.k);
    let theta = model.to_params();
    let mut grad = vec![0.0; layout.len()];
    let value = objective(&theta, &mut grad, &Triplets::of(matrix), layout, model.mu, model.lambda);
    Ok((
        value,
        Gradient {
            pair_bias: grad[layout.pair_bias()].to_vec(),
            user_bias: grad[layout.user_bias()].to_vec(),
            pair_factors: grad[layout.pair_factors()].to_vec(),
            user_factors: grad[layout.user_factors()].to_vec(),
        },
    ))
}

/// Seeded uniform initialization, `mu` from the data.
pub fn initial_model(matrix: &RatingsMatrix, config: &TrainConfig) -> Result<FactorModel> {
    let mu = global_mean(matrix)?;
    let mut model = FactorModel::zeros(matrix.n_pairs(), matrix.n_users(), config.k, config.lambda, mu);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale;
    let mut draw = |v: &mut f64| *v = if scale > 0.0 { rng.random_range(-scale..scale) } else { 0.0 };
    model.pair_bias.iter_mut().for_each(&mut draw);
    model.user_bias.iter_mut().for_each(&mut draw);
    model.pair_factors.iter_mut().for_each(&mut draw);
    model.user_factors.iter_mut().for_each(&mut draw);
    Ok(model)
}

pub fn train(matrix: &RatingsMatrix, config: &TrainConfig) -> Result<FactorModel> {
    train_with_report(matrix, config).map(|(model, _)| model)
}

pub fn train_with_report(matrix: &RatingsMatrix, config: &TrainConfig) -> Result<(FactorModel, TrainReport)> {
    config.validate()?;
    fit(matrix, config)
}

/// Training without the `K >= 1` check; `K = 0` fits biases only.
pub(crate) fn fit(matrix: &RatingsMatrix, config: &TrainConfig) -> Result<(FactorModel, TrainReport)> {
    config.validate_allowing_bias_only()?;
    let mut model = initial_model(matrix, config)?;
    let layout = Layout::of(model.n_pairs(), model.n_users(), model.k);
    let data = Triplets::of(matrix);
    let (mu, lambda) = (model.mu, model.lambda);
    let min = lbfgs::minimize(
        |theta, grad| objective(theta, grad, &data, layout, mu, lambda),
        model.to_params(),
        &config.lbfgs(),
    )?;
    model.load_params(&min.x);
    Ok((model, TrainReport { objective_trace: min.trace, iterations: min.iterations, termination: min.termination }))
}

/// Root mean squared reconstruction error over the known entries.
pub fn rmse(model: &FactorModel, matrix: &RatingsMatrix) -> Result<f64> {
    model.check_matrix(matrix)?;
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let sse: f64 = matrix.entries().map(|e| (e.rating - model.predict_unchecked(e.pair, e.user)).powi(2)).sum();
    Ok((sse / matrix.len() as f64).sqrt())
}

/// On-disk model. `s` and `t` are `K x M` and `K x N`, row-major. The object
/// names and pair list make the file self-describing for the CLI and service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda: f64,
    pub mu: f64,
    pub pair_bias: Vec<f64>,
    pub user_bias: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub catalog_fingerprint: String,
    pub objects: Vec<String>,
    pub pairs: Vec<[String; 2]>,
}

/// A model together with the catalog and pair index it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: FactorModel,
    pub catalog: ObjectCatalog,
    pub pairs: PairIndex,
}

fn to_row_major(pair_major: &[f64], count: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; count * k];
    for c in 0..count {
        for d in 0..k {
            out[d * count + c] = pair_major[c * k + d];
        }
    }
    out
}

fn from_row_major(row_major: &[f64], count: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; count * k];
    for d in 0..k {
        for c in 0..count {
            out[c * k + d] = row_major[d * count + c];
        }
    }
    out
}

impl StoredModel {
    pub fn new(model: FactorModel, catalog: ObjectCatalog, pairs: PairIndex) -> Result<Self> {
        if model.n_pairs() != pairs.len() {
            return Err(Error::Dimension(format!("model has {} pairs, index has {}", model.n_pairs(), pairs.len())));
        }
        Ok(Self { model, catalog, pairs })
    }

    pub fn to_file(&self) -> Result<ModelFile> {
        let m = &self.model;
        let mut pairs = Vec::with_capacity(self.pairs.len());
        for i in 0..self.pairs.len() {
            let (a, b) = self.pairs.names(&self.catalog, i)?;
            pairs.push([a.to_string(), b.to_string()]);
        }
        Ok(ModelFile {
            k: m.k,
            lambda: m.lambda,
            mu: m.mu,
            pair_bias: m.pair_bias.clone(),
            user_bias: m.user_bias.clone(),
            s: to_row_major(&m.pair_factors, m.n_pairs(), m.k),
            t: to_row_major(&m.user_factors, m.n_users(), m.k),
            catalog_fingerprint: self.catalog.fingerprint(),
            objects: self.catalog.names().to_vec(),
            pairs,
        })
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let catalog = ObjectCatalog::new(&file.objects)?;
        if catalog.fingerprint() != file.catalog_fingerprint {
            return Err(Error::Config("catalog fingerprint does not match object list".into()));
        }
        let mut ordinals = Vec::with_capacity(file.pairs.len());
        for [a, b] in &file.pairs {
            ordinals.push((catalog.ordinal(a)?, catalog.ordinal(b)?));
        }
        let pairs = PairIndex::from_pairs(ordinals.iter().copied())?;
        if pairs.len() != file.pairs.len() || ordinals.iter().enumerate().any(|(i, &(a, b))| pairs.get(a, b) != Some(i))
        {
            return Err(Error::Config("model pairs must be distinct and in lexicographic order".into()));
        }
        let (m, n, k) = (file.pair_bias.len(), file.user_bias.len(), file.k);
        if m != pairs.len() || file.s.len() != m * k || file.t.len() != n * k {
            return Err(Error::Dimension("model arrays do not match K, M and N".into()));
        }
        let model = FactorModel {
            k,
            lambda: file.lambda,
            mu: file.mu,
            pair_factors: from_row_major(&file.s, m, k),
            user_factors: from_row_major(&file.t, n, k),
            pair_bias: file.pair_bias,
            user_bias: file.user_bias,
        };
        model.validate()?;
        Ok(Self { model, catalog, pairs })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file()?)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
