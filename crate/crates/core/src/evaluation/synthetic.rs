//! Planted-taste rating matrices.
//!
//! Each archetype is a complete rating column (one user's true answer for
//! every pair). Synthetic users copy an archetype, reveal a random subset of
//! its entries, and optionally answer some of them wrongly.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ObjectCatalog, PairIndex};
use crate::error::{Error, Result};
use crate::probing::{probes_from_arrangement, Arrangement, NamedArrangement};
use crate::ratings::{RatingClass, RatingScale, RatingsDataset, RatingsMatrix};

/// A planted taste: containers of object names, plus container pairs the
/// user would answer "maybe" for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub containers: Vec<Vec<String>>,
    #[serde(default)]
    pub maybe: Vec<[usize; 2]>,
}

impl ArchetypeSpec {
    pub fn from_arrangement(arrangement: &Arrangement, catalog: &ObjectCatalog) -> Result<Self> {
        Ok(Self { containers: arrangement.to_named(catalog)?.containers, maybe: Vec::new() })
    }

    /// Full rating column over `pairs`: 1 in the same container, 0.5 for a
    /// "maybe" container pair, 0 otherwise. Every object in `pairs` must be
    /// placed.
    pub fn column(&self, catalog: &ObjectCatalog, pairs: &PairIndex) -> Result<Vec<f64>> {
        let arrangement = NamedArrangement { containers: self.containers.clone() }.to_ordinals(catalog)?;
        let count = arrangement.containers.len();
        if let Some(bad) = self.maybe.iter().find(|[a, b]| *a >= count || *b >= count || a == b) {
            return Err(Error::Arrangement(format!("bad maybe pair {bad:?} for {count} containers")));
        }
        let maybe: BTreeSet<(usize, usize)> = self.maybe.iter().map(|&[a, b]| (a.min(b), a.max(b))).collect();
        let probes = probes_from_arrangement(&arrangement, pairs)?;
        let mut column = Vec::with_capacity(pairs.len());
        for (i, &(l, k)) in pairs.pairs().iter().enumerate() {
            let (Some(cl), Some(ck)) = (arrangement.container_of(l), arrangement.container_of(k)) else {
                let (a, b) = pairs.names(catalog, i)?;
                return Err(Error::Arrangement(format!("archetype does not place `{a}` and `{b}`")));
            };
            let rating = probes.get(i).expect("both objects placed");
            let rating = if rating == 0.0 && maybe.contains(&(cl.min(ck), cl.max(ck))) {
                RatingClass::Maybe.value()
            } else {
                rating
            };
            column.push(rating);
        }
        Ok(column)
    }
}

/// Archetype columns expanded into a sparse population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// One complete rating column per archetype.
    pub archetypes: Vec<Vec<f64>>,
    pub users_per_archetype: usize,
    /// Inclusive range of revealed ratings per user.
    pub ratings_per_column: (usize, usize),
    /// Probability that a revealed rating is replaced by a different class.
    pub noise: f64,
    pub scale: RatingScale,
    pub seed: u64,
}

/// A generated matrix and the archetype behind each user column.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    pub matrix: RatingsMatrix,
    pub archetype_of_user: Vec<usize>,
}

/// A different class on the scale, chosen uniformly.
pub fn corrupt<R: Rng>(rating: f64, scale: RatingScale, rng: &mut R) -> f64 {
    let current = scale.round(rating);
    let others: Vec<RatingClass> = scale.classes().iter().copied().filter(|&c| c != current).collect();
    others[rng.random_range(0..others.len())].value()
}

/// Reveal a random subset of each truth column, with label noise.
pub fn bootstrap_columns<R: Rng>(
    truth: &[Vec<f64>],
    ratings_per_column: (usize, usize),
    noise: f64,
    scale: RatingScale,
    rng: &mut R,
) -> Result<RatingsMatrix> {
    let n_pairs = truth.first().map_or(0, Vec::len);
    let (lo, hi) = ratings_per_column;
    if lo > hi || hi > n_pairs {
        return Err(Error::Config(format!("cannot reveal {lo}..={hi} ratings per user out of {n_pairs} pairs")));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Config(format!("noise probability {noise} outside [0, 1]")));
    }
    let mut matrix = RatingsMatrix::new(n_pairs, truth.len());
    for (user, column) in truth.iter().enumerate() {
        if column.len() != n_pairs {
            return Err(Error::Dimension("archetype columns differ in length".into()));
        }
        let count = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let mut picked = sample(rng, n_pairs, count).into_vec();
        picked.sort_unstable();
        for pair in picked {
            let mut rating = column[pair];
            if noise > 0.0 && rng.random::<f64>() < noise {
                rating = corrupt(rating, scale, rng);
            }
            matrix.insert(pair, user, rating)?;
        }
    }
    Ok(matrix)
}

/// `users_per_archetype` noisy partial copies of every archetype, archetype
/// by archetype.
pub fn bootstrap_matrix(spec: &SyntheticSpec) -> Result<Bootstrap> {
    if spec.archetypes.is_empty() {
        return Err(Error::Config("no archetypes".into()));
    }
    let mut truth = Vec::with_capacity(spec.archetypes.len() * spec.users_per_archetype);
    let mut archetype_of_user = Vec::with_capacity(truth.capacity());
    for (a, column) in spec.archetypes.iter().enumerate() {
        if column.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("archetype {a} has ratings outside [0, 1]")));
        }
        for _ in 0..spec.users_per_archetype {
            truth.push(column.clone());
            archetype_of_user.push(a);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let matrix = bootstrap_columns(&truth, spec.ratings_per_column, spec.noise, spec.scale, &mut rng)?;
    Ok(Bootstrap { matrix, archetype_of_user })
}

/// Move up to `max_moves` random objects to a different non-empty
/// container.
pub fn perturb<R: Rng>(arrangement: &Arrangement, max_moves: usize, rng: &mut R) -> Arrangement {
    let mut containers: Vec<Vec<usize>> = arrangement.containers.iter().filter(|c| !c.is_empty()).cloned().collect();
    if containers.len() < 2 {
        return Arrangement { containers };
    }
    let moves = rng.random_range(0..=max_moves);
    for _ in 0..moves {
        let from = rng.random_range(0..containers.len());
        if containers[from].len() < 2 {
            continue;
        }
        let slot = rng.random_range(0..containers[from].len());
        let object = containers[from].remove(slot);
        let mut to = rng.random_range(0..containers.len() - 1);
        if to >= from {
            to += 1;
        }
        containers[to].push(object);
    }
    Arrangement { containers }
}

fn default_users() -> usize {
    50
}

fn default_range() -> (usize, usize) {
    (78, 78)
}

fn default_scale() -> RatingScale {
    RatingScale::Binary
}

/// Generator input file for the command line: a catalog, optionally a pair
/// subset, and named archetypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub objects: Vec<String>,
    #[serde(default)]
    pub pairs: Option<Vec<[String; 2]>>,
    pub archetypes: Vec<ArchetypeSpec>,
    #[serde(default = "default_users")]
    pub users_per_archetype: usize,
    #[serde(default = "default_range")]
    pub ratings_per_column: (usize, usize),
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_scale")]
    pub scale: RatingScale,
}

impl GenSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Build the dataset; users are named `user0001`, `user0002`, ...
    pub fn generate(&self, seed: u64) -> Result<RatingsDataset> {
        let catalog = ObjectCatalog::new(&self.objects)?;
        let pairs = match &self.pairs {
            None => PairIndex::all(catalog.len()),
            Some(list) => {
                let ordinals = list
                    .iter()
                    .map(|[a, b]| Ok((catalog.ordinal(a)?, catalog.ordinal(b)?)))
                    .collect::<Result<Vec<_>>>()?;
                PairIndex::from_pairs(ordinals)?
            }
        };
        let archetypes = self.archetypes.iter().map(|a| a.column(&catalog, &pairs)).collect::<Result<Vec<_>>>()?;
        let boot = bootstrap_matrix(&SyntheticSpec {
            archetypes,
            users_per_archetype: self.users_per_archetype,
            ratings_per_column: self.ratings_per_column,
            noise: self.noise,
            scale: self.scale,
            seed,
        })?;
        let users = (1..=boot.matrix.n_users()).map(|u| format!("user{u:04}")).collect();
        Ok(RatingsDataset { catalog, pairs, users, matrix: boot.matrix })
    }
}
