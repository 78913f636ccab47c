//! Taste-blind predictors.

use rand::Rng;

use crate::probing::Arrangement;
use crate::ratings::RatingsMatrix;

/// Predicts every pair as its mean rating over the training users, or the
/// global mean for pairs nobody rated.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMeans {
    pub means: Vec<f64>,
    pub global_mean: f64,
}

impl PairMeans {
    pub fn fit(matrix: &RatingsMatrix) -> Self {
        let mut sums = vec![0.0; matrix.n_pairs()];
        let mut counts = vec![0usize; matrix.n_pairs()];
        let (mut total, mut n) = (0.0, 0usize);
        for e in matrix.entries() {
            sums[e.pair] += e.rating;
            counts[e.pair] += 1;
            total += e.rating;
            n += 1;
        }
        let global_mean = if n == 0 { 0.0 } else { total / n as f64 };
        let means = sums.iter().zip(&counts).map(|(&s, &c)| if c == 0 { global_mean } else { s / c as f64 }).collect();
        Self { means, global_mean }
    }

    pub fn predict(&self, pair: usize) -> f64 {
        self.means.get(pair).copied().unwrap_or(self.global_mean)
    }
}

/// Every object on a uniformly random container out of `containers`.
pub fn random_shelves<R: Rng>(objects: &[usize], containers: usize, rng: &mut R) -> Arrangement {
    let mut shelves = vec![Vec::new(); containers.max(1)];
    for &object in objects {
        let shelf = rng.random_range(0..shelves.len());
        shelves[shelf].push(object);
    }
    Arrangement { containers: shelves }
}

/// `truth` with the `removed` objects dropped onto uniformly random shelves
/// out of `shelves`.
pub fn random_completion<R: Rng>(truth: &Arrangement, removed: &[usize], shelves: usize, rng: &mut R) -> Arrangement {
    let mut containers: Vec<Vec<usize>> =
        truth.containers.iter().map(|c| c.iter().copied().filter(|o| !removed.contains(o)).collect()).collect();
    containers.resize(shelves.max(containers.len()), Vec::new());
    let scattered = random_shelves(removed, shelves, rng);
    for (shelf, objects) in scattered.containers.into_iter().enumerate() {
        containers[shelf].extend(objects);
    }
    Arrangement { containers }
}
