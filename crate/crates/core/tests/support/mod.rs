#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidyup_core::factorization::{loss_and_gradient, FactorModel};
use tidyup_core::partitioner::{cut_value, Partition, PreferenceGraph};
use tidyup_core::RatingsMatrix;

/// Random ratings in [0, 1] on roughly `fill` of the cells, at least one per
/// user.
pub fn random_matrix(m: usize, n: usize, fill: f64, seed: u64) -> RatingsMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = RatingsMatrix::new(m, n);
    for user in 0..n {
        let forced = rng.random_range(0..m);
        for pair in 0..m {
            if pair == forced || rng.random::<f64>() < fill {
                matrix.insert(pair, user, rng.random::<f64>()).unwrap();
            }
        }
    }
    matrix
}

pub fn random_model(m: usize, n: usize, k: usize, lambda: f64, scale: f64, seed: u64) -> FactorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = FactorModel::zeros(m, n, k, lambda, 0.5);
    let mut draw = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
    draw(&mut model.pair_bias);
    draw(&mut model.user_bias);
    draw(&mut model.pair_factors);
    draw(&mut model.user_factors);
    model
}

/// Every cell of the matrix `model` describes, clamped to [0, 1].
pub fn planted_matrix(model: &FactorModel) -> RatingsMatrix {
    let mut matrix = RatingsMatrix::new(model.n_pairs(), model.n_users());
    for pair in 0..model.n_pairs() {
        for user in 0..model.n_users() {
            let r = model.predict(pair, user).unwrap().clamp(0.0, 1.0);
            matrix.insert(pair, user, r).unwrap();
        }
    }
    matrix
}

fn field(model: &mut FactorModel, group: usize) -> &mut Vec<f64> {
    match group {
        0 => &mut model.pair_bias,
        1 => &mut model.user_bias,
        2 => &mut model.pair_factors,
        _ => &mut model.user_factors,
    }
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with step `h`.
pub fn max_gradient_error(model: &FactorModel, matrix: &RatingsMatrix, h: f64) -> f64 {
    let (_, grad) = loss_and_gradient(model, matrix).unwrap();
    let analytic = [&grad.pair_bias, &grad.user_bias, &grad.pair_factors, &grad.user_factors];
    let mut worst: f64 = 0.0;
    for (group, values) in analytic.iter().enumerate() {
        for (i, &a) in values.iter().enumerate() {
            let mut plus = model.clone();
            field(&mut plus, group)[i] += h;
            let mut minus = model.clone();
            field(&mut minus, group)[i] -= h;
            let numeric = (loss_and_gradient(&plus, matrix).unwrap().0 - loss_and_gradient(&minus, matrix).unwrap().0)
                / (2.0 * h);
            let scale = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

/// Every way to put `n` nodes into exactly `k` non-empty unlabeled groups.
pub fn set_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn grow(labels: &mut Vec<usize>, used: usize, n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        if labels.len() == n {
            if used == k {
                out.push(labels.clone());
            }
            return;
        }
        if used + (n - labels.len()) < k {
            return;
        }
        for label in 0..(used + 1).min(k) {
            labels.push(label);
            grow(labels, used.max(label + 1), n, k, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), 0, n, k, &mut out);
    out
}

/// Exhaustive minimum `k`-cut and one partition attaining it.
pub fn brute_force_min_cut(graph: &PreferenceGraph, k: usize) -> (f64, Partition) {
    set_partitions(graph.len(), k)
        .into_iter()
        .map(|labels| {
            let p = Partition::from_labels(&labels);
            (cut_value(graph, &p), p)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one partition")
}

pub fn graph(rows: Vec<Vec<f64>>) -> PreferenceGraph {
    PreferenceGraph::from_weights(&rows).unwrap()
}

/// Block structure with weight `intra` inside blocks and `inter` across.
pub fn block_graph(blocks: &[usize], intra: f64, inter: f64) -> PreferenceGraph {
    let n = blocks.len();
    let mut rows = vec![vec![0.0; n]; n];
    for l in 0..n {
        for k in 0..n {
            if l != k {
                rows[l][k] = if blocks[l] == blocks[k] { intra } else { inter };
            }
        }
    }
    graph(rows)
}

/// Symmetric weights drawn uniformly from [0, 1].
pub fn uniform_graph(n: usize, rng: &mut impl Rng) -> PreferenceGraph {
    let mut rows = vec![vec![0.0; n]; n];
    for l in 0..n {
        for k in l + 1..n {
            let w = rng.random::<f64>();
            rows[l][k] = w;
            rows[k][l] = w;
        }
    }
    graph(rows)
}

/// Nodes dealt into `k` non-empty blocks, strong inside and weak across.
pub fn noisy_block_graph(n: usize, k: usize, rng: &mut impl Rng) -> (PreferenceGraph, Vec<usize>) {
    let mut blocks: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        blocks.swap(i, rng.random_range(0..=i));
    }
    let mut rows = vec![vec![0.0; n]; n];
    for l in 0..n {
        for m in l + 1..n {
            let w = if blocks[l] == blocks[m] { rng.random_range(0.7..1.0) } else { rng.random_range(0.0..0.2) };
            rows[l][m] = w;
            rows[m][l] = w;
        }
    }
    (graph(rows), blocks)
}

/// Same grouping up to relabeling.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    Partition::from_labels(a) == Partition::from_labels(b)
}

/// Preference graph of a random arrangement into exactly `k` non-empty
/// groups: 1 inside a group, 0 across, with each rating replaced by another
/// class of {0, 0.5, 1} with probability `noise`.
pub fn arrangement_graph(n: usize, k: usize, noise: f64, rng: &mut impl Rng) -> (PreferenceGraph, Vec<usize>) {
    let mut blocks: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        blocks.swap(i, rng.random_range(0..=i));
    }
    let mut rows = vec![vec![0.0; n]; n];
    for l in 0..n {
        for m in l + 1..n {
            let mut w: f64 = if blocks[l] == blocks[m] { 1.0 } else { 0.0 };
            if rng.random::<f64>() < noise {
                let others: Vec<f64> = [0.0, 0.5, 1.0].into_iter().filter(|&c| c != w).collect();
                w = others[rng.random_range(0..others.len())];
            }
            rows[l][m] = w;
            rows[m][l] = w;
        }
    }
    (graph(rows), blocks)
}
