//! Experiment drivers. Each protocol trains on a synthetic population,
//! probes held-out users, and scores the predictions and arrangements.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{random_completion, PairMeans};
use super::metrics::{arrangement_success, edit_distance, Confusion, ErrorStats};
use super::synthetic::{bootstrap_columns, bootstrap_matrix, perturb, SyntheticSpec};
use super::{Method, ReportRow};
use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::{Error, Result};
use crate::factorization::{rmse, train, FactorModel, TrainConfig};
use crate::fixtures;
use crate::partitioner::{arrange, SpectralConfig};
use crate::probing::{
    predict_for_user, probes_from_arrangement, random_probes, select_probes_among, solve_new_user, Arrangement,
    ProbeSet,
};
use crate::ratings::{RatingScale, RatingsMatrix};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seed for one sub-experiment, mixed from the run seed and its
/// coordinates.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn train_config(k: usize, lambda: f64, max_iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig { k, lambda, max_iterations, seed, ..TrainConfig::default() }
}

/// Counts gathered for one method over many probed users.
#[derive(Debug, Clone, Default)]
struct Tally {
    confusion: Confusion,
    errors: ErrorStats,
    successes: usize,
    arrangements: usize,
    distance_sum: f64,
    distances: usize,
    samples: usize,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.confusion.merge(&other.confusion);
        self.errors.merge(&other.errors);
        self.successes += other.successes;
        self.arrangements += other.arrangements;
        self.distance_sum += other.distance_sum;
        self.distances += other.distances;
        self.samples += other.samples;
    }

    fn record(&mut self, scale: RatingScale, predicted: f64, truth: f64) {
        self.confusion.record(scale, predicted, truth);
        self.errors.record(scale, predicted, truth);
    }

    fn row(&self, method: Method, scale: RatingScale) -> Result<ReportRow> {
        let mut row = ReportRow::new(method);
        if self.confusion.total() > 0 {
            row.classification = Some(self.confusion.report(scale)?);
            row.errors = Some(self.errors.report()?);
        }
        if self.arrangements > 0 {
            row.success_rate = Some(self.successes as f64 / self.arrangements as f64);
        }
        if self.distances > 0 {
            row.edit_distance = Some(self.distance_sum / self.distances as f64);
        }
        row.samples = self.samples;
        Ok(row)
    }
}

type Tallies = BTreeMap<Method, Tally>;

fn merge_all(parts: Vec<Tallies>) -> Tallies {
    let mut total = Tallies::new();
    for part in parts {
        for (method, tally) in part {
            total.entry(method).or_default().merge(&tally);
        }
    }
    total
}

/// What a trained population offers the per-user predictors.
struct Population<'a> {
    model: &'a FactorModel,
    means: &'a PairMeans,
    solve: &'a TrainConfig,
}

impl Population<'_> {
    fn choose_probes(&self, method: Method, candidates: &[usize], count: usize, seed: u64) -> Result<Vec<usize>> {
        if method.uses_cluster_probes() {
            select_probes_among(self.model, candidates, count, seed)
        } else {
            random_probes(candidates, count, seed)
        }
    }

    /// Predictions for every pair, with probe answers kept verbatim.
    fn complete(&self, method: Method, probes: &ProbeSet) -> Result<Vec<f64>> {
        let n = self.model.n_pairs();
        let mut column = if method.uses_model() {
            let profile = solve_new_user(self.model, probes, self.solve)?;
            (0..n).map(|p| predict_for_user(self.model, &profile, p)).collect::<Result<Vec<_>>>()?
        } else {
            (0..n).map(|p| self.means.predict(p)).collect()
        };
        for (pair, rating) in probes.iter() {
            column[pair] = rating;
        }
        Ok(column)
    }
}

fn probe_set(pairs: &[usize], truth: &[f64]) -> Result<ProbeSet> {
    ProbeSet::from_entries(pairs.iter().map(|&p| (p, truth[p])))
}

fn arrange_column(
    objects: &[usize],
    catalog: &ObjectCatalog,
    pairs: &PairIndex,
    column: &[f64],
    max_containers: usize,
    seed: u64,
) -> Result<Arrangement> {
    arrange(
        objects,
        catalog,
        |l, k| pairs.get(l, k).map(|p| column[p]),
        max_containers,
        seed,
        &SpectralConfig::default(),
    )
}

fn check_methods(methods: &[Method], allowed: &[Method], protocol: &str) -> Result<()> {
    match methods.iter().find(|m| !allowed.contains(m)) {
        Some(m) => Err(Error::Config(format!("method {} is not part of the {protocol} protocol", m.label()))),
        None if methods.is_empty() => Err(Error::Config("no methods selected".into())),
        None => Ok(()),
    }
}

/// Toys: fifteen planted box arrangements re-bootstrapped into a sparse
/// population, then each planted user is probed and re-arranged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToysConfig {
    pub probes: Vec<usize>,
    pub users_per_archetype: usize,
    pub ratings_per_column: usize,
    pub noise: f64,
    pub runs: usize,
    pub max_containers: usize,
    pub k: usize,
    pub lambda: f64,
    pub methods: Vec<Method>,
}

impl Default for ToysConfig {
    fn default() -> Self {
        Self {
            probes: vec![50, 100, 150, 200, 250, 300],
            users_per_archetype: 50,
            ratings_per_column: 78,
            noise: 0.0,
            runs: 20,
            max_containers: 6,
            k: 3,
            lambda: 0.01,
            methods: vec![Method::Cf, Method::CfRand, Method::BaselineOne, Method::BaselineTwo],
        }
    }
}

pub fn run_toys(config: &ToysConfig, seed: u64) -> Result<(Vec<ReportRow>, Vec<String>)> {
    check_methods(&config.methods, &[Method::Cf, Method::CfRand, Method::BaselineOne, Method::BaselineTwo], "toys")?;
    let catalog = fixtures::toys_catalog();
    let pairs = PairIndex::all(catalog.len());
    let planted = fixtures::toys_archetypes(&catalog)?;
    let truths = planted
        .iter()
        .map(|a| {
            let probes = probes_from_arrangement(a, &pairs)?;
            Ok((0..pairs.len()).map(|p| probes.get(p).unwrap_or(0.0)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let boot = bootstrap_matrix(&SyntheticSpec {
        archetypes: truths.clone(),
        users_per_archetype: config.users_per_archetype,
        ratings_per_column: (config.ratings_per_column, config.ratings_per_column),
        noise: config.noise,
        scale: RatingScale::Binary,
        seed: derive_seed(seed, &[0]),
    })?;
    let train_cfg = train_config(config.k, config.lambda, 500, derive_seed(seed, &[1]));
    let model = train(&boot.matrix, &train_cfg)?;
    let means = PairMeans::fit(&boot.matrix);
    let population = Population { model: &model, means: &means, solve: &train_cfg };
    let all_pairs: Vec<usize> = (0..pairs.len()).collect();
    let objects: Vec<usize> = (0..catalog.len()).collect();

    let mut rows = Vec::new();
    for &count in &config.probes {
        let tasks: Vec<(usize, usize)> =
            (0..config.runs).flat_map(|run| (0..planted.len()).map(move |user| (run, user))).collect();
        let parts = tasks
            .par_iter()
            .map(|&(run, user)| -> Result<Tallies> {
                let probe_seed = derive_seed(seed, &[2, count as u64, run as u64, user as u64]);
                let truth = &truths[user];
                let mut out = Tallies::new();
                for &method in &config.methods {
                    let chosen = population.choose_probes(method, &all_pairs, count, probe_seed)?;
                    let probes = probe_set(&chosen, truth)?;
                    let column = population.complete(method, &probes)?;
                    let tally = out.entry(method).or_default();
                    for p in all_pairs.iter().filter(|&&p| probes.get(p).is_none()) {
                        tally.record(RatingScale::Binary, column[*p], truth[*p]);
                    }
                    let computed =
                        arrange_column(&objects, &catalog, &pairs, &column, config.max_containers, probe_seed)?;
                    tally.arrangements += 1;
                    tally.successes += usize::from(arrangement_success(&computed, &planted[user])?);
                    tally.samples += 1;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (method, tally) in merge_all(parts) {
            let mut row = tally.row(method, RatingScale::Binary)?;
            row.probes = Some(count);
            rows.push(row);
        }
    }
    let notes = vec![format!(
        "{} users x {} pairs, {:.1}% missing, training rmse {:.4}",
        boot.matrix.n_users(),
        boot.matrix.n_pairs(),
        100.0 * (1.0 - boot.matrix.fill_ratio()),
        rmse(&model, &boot.matrix)?
    )];
    Ok((rows, notes))
}

/// Shape shared by the grocery-style experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroceryPopulation {
    pub users_per_archetype: usize,
    pub ratings_per_column: (usize, usize),
    pub noise: f64,
}

impl Default for GroceryPopulation {
    fn default() -> Self {
        Self { users_per_archetype: 257, ratings_per_column: (28, 36), noise: 0.1 }
    }
}

fn grocery_truths() -> Result<(ObjectCatalog, PairIndex, Vec<Vec<f64>>)> {
    let catalog = fixtures::grocery_catalog();
    let pairs = fixtures::grocery_pairs(&catalog);
    let truths =
        fixtures::grocery_archetypes().iter().map(|a| a.column(&catalog, &pairs)).collect::<Result<Vec<_>>>()?;
    Ok((catalog, pairs, truths))
}

/// Test columns: users cycling through the archetypes, each revealing a
/// noisy partial column.
fn grocery_test_users(
    truths: &[Vec<f64>],
    count: usize,
    population: &GroceryPopulation,
    seed: u64,
) -> Result<RatingsMatrix> {
    let columns: Vec<Vec<f64>> = (0..count).map(|u| truths[u % truths.len()].clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bootstrap_columns(&columns, population.ratings_per_column, population.noise, RatingScale::Ternary, &mut rng)
}

/// Groceries: survey-shaped population over 179 pairs with three-valued
/// answers; probes are drawn from what each test user actually answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroceriesConfig {
    pub probes: Vec<usize>,
    pub population: GroceryPopulation,
    pub test_users: usize,
    pub runs: usize,
    pub k: usize,
    pub lambda: f64,
    pub methods: Vec<Method>,
}

impl Default for GroceriesConfig {
    fn default() -> Self {
        Self {
            probes: vec![4, 8, 12, 16, 20],
            population: GroceryPopulation::default(),
            test_users: 50,
            runs: 10,
            k: 3,
            lambda: 0.01,
            methods: vec![Method::Cf, Method::CfRand, Method::BaselineOne, Method::BaselineTwo],
        }
    }
}

pub fn run_groceries(config: &GroceriesConfig, seed: u64) -> Result<(Vec<ReportRow>, Vec<String>)> {
    check_methods(
        &config.methods,
        &[Method::Cf, Method::CfRand, Method::BaselineOne, Method::BaselineTwo],
        "groceries",
    )?;
    let (_, _, truths) = grocery_truths()?;
    let boot = bootstrap_matrix(&SyntheticSpec {
        archetypes: truths.clone(),
        users_per_archetype: config.population.users_per_archetype,
        ratings_per_column: config.population.ratings_per_column,
        noise: config.population.noise,
        scale: RatingScale::Ternary,
        seed: derive_seed(seed, &[0]),
    })?;
    let train_cfg = train_config(config.k, config.lambda, 500, derive_seed(seed, &[1]));
    let model = train(&boot.matrix, &train_cfg)?;
    let means = PairMeans::fit(&boot.matrix);
    let population = Population { model: &model, means: &means, solve: &train_cfg };
    let tests = (0..config.runs)
        .map(|run| {
            grocery_test_users(&truths, config.test_users, &config.population, derive_seed(seed, &[2, run as u64]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &count in &config.probes {
        let tasks: Vec<(usize, usize)> =
            (0..config.runs).flat_map(|run| (0..config.test_users).map(move |user| (run, user))).collect();
        let parts = tasks
            .par_iter()
            .map(|&(run, user)| -> Result<Tallies> {
                let answered = tests[run].user_column(user)?;
                let candidates: Vec<usize> = answered.iter().map(|&(p, _)| p).collect();
                let mut truth = vec![0.0; model.n_pairs()];
                for &(p, r) in &answered {
                    truth[p] = r;
                }
                let probe_seed = derive_seed(seed, &[3, count as u64, run as u64, user as u64]);
                let mut out = Tallies::new();
                for &method in &config.methods {
                    let chosen = population.choose_probes(method, &candidates, count, probe_seed)?;
                    let probes = probe_set(&chosen, &truth)?;
                    let column = population.complete(method, &probes)?;
                    let tally = out.entry(method).or_default();
                    for &p in candidates.iter().filter(|&&p| probes.get(p).is_none()) {
                        tally.record(RatingScale::Ternary, column[p], truth[p]);
                    }
                    tally.samples += 1;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (method, tally) in merge_all(parts) {
            let mut row = tally.row(method, RatingScale::Ternary)?;
            row.probes = Some(count);
            rows.push(row);
        }
    }
    let notes = vec![format!(
        "{} training users x {} pairs, {:.1}% missing, training rmse {:.4}",
        boot.matrix.n_users(),
        boot.matrix.n_pairs(),
        100.0 * (1.0 - boot.matrix.fill_ratio()),
        rmse(&model, &boot.matrix)?
    )];
    Ok((rows, notes))
}

/// Fitting a new user against a frozen item model versus retraining the
/// whole matrix with the new users' probes included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncrementalConfig {
    pub training_users: Vec<usize>,
    pub population: GroceryPopulation,
    pub test_users: usize,
    pub probes: usize,
    pub k: usize,
    pub lambda: f64,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        Self {
            training_users: vec![250, 500, 750, 1000],
            population: GroceryPopulation::default(),
            test_users: 100,
            probes: 12,
            k: 3,
            lambda: 0.01,
        }
    }
}

pub fn run_incremental(config: &IncrementalConfig, seed: u64) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let (_, _, truths) = grocery_truths()?;
    let tests = grocery_test_users(&truths, config.test_users, &config.population, derive_seed(seed, &[2]))?;
    let mut rows = Vec::new();
    for &size in &config.training_users {
        let per_archetype = size.div_ceil(truths.len());
        let boot = bootstrap_matrix(&SyntheticSpec {
            archetypes: truths.clone(),
            users_per_archetype: per_archetype,
            ratings_per_column: config.population.ratings_per_column,
            noise: config.population.noise,
            scale: RatingScale::Ternary,
            seed: derive_seed(seed, &[0, size as u64]),
        })?;
        let train_cfg = train_config(config.k, config.lambda, 500, derive_seed(seed, &[1, size as u64]));
        let model = train(&boot.matrix, &train_cfg)?;

        let mut batch_matrix = boot.matrix.clone();
        let mut probe_sets = Vec::with_capacity(config.test_users);
        for user in 0..config.test_users {
            let answered = tests.user_column(user)?;
            let candidates: Vec<usize> = answered.iter().map(|&(p, _)| p).collect();
            let chosen = select_probes_among(
                &model,
                &candidates,
                config.probes,
                derive_seed(seed, &[3, size as u64, user as u64]),
            )?;
            let probes = ProbeSet::from_entries(answered.iter().copied().filter(|(p, _)| chosen.contains(p)))?;
            let column = batch_matrix.push_user();
            for (p, r) in probes.iter() {
                batch_matrix.insert(p, column, r)?;
            }
            probe_sets.push((answered, probes, column));
        }
        let batch = train(&batch_matrix, &train_cfg)?;

        let mut incremental = Tally::default();
        let mut retrained = Tally::default();
        for (answered, probes, column) in &probe_sets {
            let profile = solve_new_user(&model, probes, &train_cfg)?;
            for &(p, truth) in answered.iter().filter(|(p, _)| probes.get(*p).is_none()) {
                incremental.record(RatingScale::Ternary, predict_for_user(&model, &profile, p)?, truth);
                retrained.record(RatingScale::Ternary, batch.predict(p, *column)?, truth);
            }
            incremental.samples += 1;
            retrained.samples += 1;
        }
        for (method, tally) in [(Method::Cf, incremental), (Method::Batch, retrained)] {
            let mut row = tally.row(method, RatingScale::Ternary)?;
            row.probes = Some(config.probes);
            row.training_users = Some(boot.matrix.n_users());
            rows.push(row);
        }
    }
    Ok((rows, Vec::new()))
}

/// Training error as the number of latent factors grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentConfig {
    pub factors: Vec<usize>,
    pub population: GroceryPopulation,
    pub lambda: f64,
    pub max_iterations: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self { factors: vec![1, 3, 6, 9], population: GroceryPopulation::default(), lambda: 0.01, max_iterations: 2000 }
    }
}

pub fn run_latent(config: &LatentConfig, seed: u64) -> Result<(Vec<ReportRow>, Vec<String>)> {
    let (_, _, truths) = grocery_truths()?;
    let boot = bootstrap_matrix(&SyntheticSpec {
        archetypes: truths,
        users_per_archetype: config.population.users_per_archetype,
        ratings_per_column: config.population.ratings_per_column,
        noise: config.population.noise,
        scale: RatingScale::Ternary,
        seed: derive_seed(seed, &[0]),
    })?;
    let rows = config
        .factors
        .par_iter()
        .map(|&k| -> Result<ReportRow> {
            let cfg = train_config(k, config.lambda, config.max_iterations, derive_seed(seed, &[1]));
            let model = train(&boot.matrix, &cfg)?;
            let mut row = ReportRow::new(Method::Cf);
            row.k = Some(k);
            row.rmse = Some(rmse(&model, &boot.matrix)?);
            row.samples = boot.matrix.len();
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, Vec::new()))
}

/// Shelving: planted 17-object shelf arrangements lose `O` random objects,
/// which are put back from predicted ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShelvingConfig {
    pub removed: Vec<usize>,
    pub repetitions: usize,
    pub max_containers: usize,
    /// Training users derived from each planted user.
    pub copies_per_user: usize,
    /// Objects moved away from the planted arrangement in a training copy.
    pub max_moves: usize,
    pub ratings_per_column: (usize, usize),
    pub noise: f64,
    pub k: usize,
    pub lambda: f64,
    pub methods: Vec<Method>,
}

impl Default for ShelvingConfig {
    fn default() -> Self {
        Self {
            removed: (1..=10).collect(),
            repetitions: 100,
            max_containers: 6,
            copies_per_user: 60,
            max_moves: 2,
            ratings_per_column: (30, 40),
            noise: 0.05,
            k: 3,
            lambda: 0.01,
            methods: vec![Method::Cf, Method::BaselineTwo, Method::BaselineThree],
        }
    }
}

fn full_column(arrangement: &Arrangement, pairs: &PairIndex) -> Result<Vec<f64>> {
    let probes = probes_from_arrangement(arrangement, pairs)?;
    (0..pairs.len())
        .map(|p| probes.get(p).ok_or_else(|| Error::Arrangement("arrangement does not place every object".into())))
        .collect()
}

pub fn run_shelving(config: &ShelvingConfig, seed: u64) -> Result<(Vec<ReportRow>, Vec<String>)> {
    check_methods(
        &config.methods,
        &[Method::Cf, Method::CfRand, Method::BaselineTwo, Method::BaselineThree],
        "shelving",
    )?;
    let catalog = fixtures::shelving_catalog();
    let pairs = PairIndex::all(catalog.len());
    let planted = fixtures::shelving_users(&catalog)?;
    let truths = planted.iter().map(|a| full_column(a, &pairs)).collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
    let mut copies = Vec::with_capacity(planted.len() * config.copies_per_user);
    for user in &planted {
        for _ in 0..config.copies_per_user {
            copies.push(full_column(&perturb(user, config.max_moves, &mut rng), &pairs)?);
        }
    }
    let matrix = bootstrap_columns(&copies, config.ratings_per_column, config.noise, RatingScale::Binary, &mut rng)?;
    let train_cfg = train_config(config.k, config.lambda, 500, derive_seed(seed, &[1]));
    let model = train(&matrix, &train_cfg)?;
    let means = PairMeans::fit(&matrix);
    let population = Population { model: &model, means: &means, solve: &train_cfg };
    let objects: Vec<usize> = (0..catalog.len()).collect();

    let mut rows = Vec::new();
    for &count in &config.removed {
        if count == 0 || count >= catalog.len() {
            return Err(Error::Config(format!("cannot remove {count} of {} objects", catalog.len())));
        }
        let tasks: Vec<(usize, usize)> =
            (0..config.repetitions).flat_map(|rep| (0..planted.len()).map(move |user| (rep, user))).collect();
        let parts = tasks
            .par_iter()
            .map(|&(rep, user)| -> Result<Tallies> {
                let task_seed = derive_seed(seed, &[2, count as u64, rep as u64, user as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
                let mut shuffled = objects.clone();
                shuffled.shuffle(&mut rng);
                let removed = &shuffled[..count];
                let kept: Vec<usize> = objects.iter().copied().filter(|o| !removed.contains(o)).collect();
                let truth = &truths[user];
                let probes = probe_set(&pairs.pairs_within(&kept), truth)?;
                let mut out = Tallies::new();
                for &method in &config.methods {
                    let tally = out.entry(method).or_default();
                    tally.samples += 1;
                    let computed = if method == Method::BaselineThree {
                        random_completion(&planted[user], removed, config.max_containers, &mut rng)
                    } else {
                        let column = population.complete(method, &probes)?;
                        for p in (0..pairs.len()).filter(|&p| probes.get(p).is_none()) {
                            tally.record(RatingScale::Binary, column[p], truth[p]);
                        }
                        arrange_column(&objects, &catalog, &pairs, &column, config.max_containers, task_seed)?
                    };
                    tally.distance_sum += edit_distance(&computed, &planted[user], count)?;
                    tally.distances += 1;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (method, tally) in merge_all(parts) {
            let mut row = tally.row(method, RatingScale::Binary)?;
            row.removed = Some(count);
            rows.push(row);
        }
    }
    let notes = vec![format!(
        "{} training users x {} pairs, training rmse {:.4}",
        matrix.n_users(),
        matrix.n_pairs(),
        rmse(&model, &matrix)?
    )];
    Ok((rows, notes))
}
