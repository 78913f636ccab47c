mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidyup_core::fixtures;
use tidyup_core::partitioner::{
    arrange, cut_value, estimate_cluster_count, partition_graph, spectral_partition, zero_eigenvalue_count,
};
use tidyup_core::probing::probes_from_arrangement;
use tidyup_core::{PairIndex, SpectralConfig};

use support::{
    arrangement_graph, block_graph, brute_force_min_cut, noisy_block_graph, same_partition, set_partitions,
    uniform_graph,
};

#[test]
fn set_partition_counts_are_stirling_numbers() {
    assert_eq!(set_partitions(4, 2).len(), 7);
    assert_eq!(set_partitions(5, 3).len(), 25);
    assert_eq!(set_partitions(8, 3).len(), 966);
}

#[test]
fn spectral_cut_is_close_to_the_exhaustive_minimum() {
    let cfg = SpectralConfig::default();
    let mut close = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..=8);
        let k = 2 + (seed as usize % 2);
        let (graph, blocks) =
            if seed % 2 == 0 { arrangement_graph(n, k, 0.0, &mut rng) } else { noisy_block_graph(n, k, &mut rng) };
        let spectral = spectral_partition(&graph, k, seed, &cfg).unwrap();
        let (best, _) = brute_force_min_cut(&graph, k);
        let cut = cut_value(&graph, &spectral);
        if seed % 2 == 0 {
            assert_eq!(cut, best, "planted blocks, seed {seed}");
            assert!(same_partition(&spectral.assignment, &blocks), "seed {seed}");
        }
        if cut <= 1.2 * best + 1e-12 {
            close += 1;
        }
    }
    assert!(close >= 90, "{close} of 100 within 1.2x");
}

#[test]
fn unstructured_graphs_are_far_from_the_minimum_cut() {
    let cfg = SpectralConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let graph = uniform_graph(8, &mut rng);
    let spectral = spectral_partition(&graph, 2, 0, &cfg).unwrap();
    let (best, oracle) = brute_force_min_cut(&graph, 2);
    assert!(cut_value(&graph, &spectral) >= best);
    let smallest = oracle.groups().iter().map(Vec::len).min().unwrap();
    assert_eq!(smallest, 1, "the minimum cut splits off a single node");
}

#[test]
fn noisy_planted_blocks_are_recovered() {
    let cfg = SpectralConfig::default();
    let mut recovered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(4..=8);
        let k = 2 + (seed as usize % 2);
        let (graph, blocks) = noisy_block_graph(n, k, &mut rng);
        let spectral = spectral_partition(&graph, k, seed, &cfg).unwrap();
        recovered += usize::from(same_partition(&spectral.assignment, &blocks));
    }
    assert!(recovered >= 95, "{recovered}");
}

#[test]
fn eigen_gap_counts_components() {
    let cfg = SpectralConfig::default();
    let fixtures: [&[usize]; 5] =
        [&[0, 0, 1, 1], &[0, 0, 0, 1, 1, 2, 2], &[0, 1, 2, 3], &[0, 0, 1, 1, 1, 2, 3, 3], &[0, 0, 0, 0, 0, 1]];
    for blocks in fixtures {
        let graph = block_graph(blocks, 1.0, 0.0);
        let components = blocks.iter().max().unwrap() + 1;
        assert_eq!(estimate_cluster_count(&graph, blocks.len(), &cfg).unwrap(), components, "{blocks:?}");
        assert_eq!(zero_eigenvalue_count(&graph, &cfg), components);
        let p = partition_graph(&graph, blocks.len(), 0, &cfg).unwrap();
        assert!(same_partition(&p.assignment, blocks));
    }
}

#[test]
fn eigen_gap_respects_the_container_limit() {
    let graph = block_graph(&[0, 0, 1, 1, 2, 2, 3, 3], 1.0, 0.0);
    let cfg = SpectralConfig::default();
    assert_eq!(estimate_cluster_count(&graph, 6, &cfg).unwrap(), 4);
    assert_eq!(estimate_cluster_count(&graph, 2, &cfg).unwrap(), 2);
}

#[test]
fn scaling_weights_keeps_the_partitions() {
    let cfg = SpectralConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..10 {
        let (graph, blocks) = arrangement_graph(7, 3, 0.0, &mut rng);
        let scaled = graph.scaled(0.3);
        assert!(same_partition(
            &brute_force_min_cut(&scaled, 3).1.assignment,
            &brute_force_min_cut(&graph, 3).1.assignment
        ));
        let p = spectral_partition(&scaled, 3, seed, &cfg).unwrap();
        assert!(same_partition(&p.assignment, &blocks));
    }
}

#[test]
fn planted_shelves_adapt_to_the_container_count() {
    let catalog = fixtures::shelving_catalog();
    let pairs = PairIndex::all(catalog.len());
    let user = &fixtures::shelving_users(&catalog).unwrap()[0];
    assert_eq!(user.non_empty_count(), 4);
    let truth = probes_from_arrangement(user, &pairs).unwrap();
    let objects: Vec<usize> = (0..catalog.len()).collect();
    let cfg = SpectralConfig::default();
    let rate = |l: usize, k: usize| pairs.get(l, k).and_then(|p| truth.get(p));

    for c in [4, 5, 6] {
        let got = arrange(&objects, &catalog, rate, c, 3, &cfg).unwrap();
        assert_eq!(got.non_empty_count(), 4);
        assert!(tidyup_core::evaluation::arrangement_success(&got, user).unwrap());
    }
    for c in [2, 3] {
        let got = arrange(&objects, &catalog, rate, c, 3, &cfg).unwrap();
        assert_eq!(got.non_empty_count(), c);
        for shelf in &user.containers {
            let homes: std::collections::BTreeSet<_> = shelf.iter().map(|&o| got.container_of(o)).collect();
            assert_eq!(homes.len(), 1, "a planted shelf was split with {c} containers");
        }
    }
}
