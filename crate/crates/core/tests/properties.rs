mod support;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tidyup_core::evaluation::{
    arrangement_success, bootstrap_matrix, classification_report, edit_distance, mean_error_report, SyntheticSpec,
};
use tidyup_core::experts::{blend, expert_confidence, expert_rating, KnownRatings, TaxonomyExpert};
use tidyup_core::factorization::{train, TrainConfig};
use tidyup_core::partitioner::{arrange, cut_value, spectral_partition, Partition};
use tidyup_core::probing::{
    new_user_objective, predict_for_user, probes_from_arrangement, select_probes, solve_new_user,
};
use tidyup_core::{
    Arrangement, ObjectCatalog, PairIndex, ProbeSet, RatingScale, RatingsDataset, SpectralConfig, UserProfile,
};

use support::random_matrix;

fn arrangement_strategy(max_objects: usize) -> impl Strategy<Value = Arrangement> {
    (2..=max_objects)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(0..n.min(5), n)))
        .prop_map(|(_, labels)| Arrangement { containers: Partition::from_labels(&labels).groups() })
}

fn rating() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.5), Just(1.0)]
}

fn taxonomy() -> TaxonomyExpert {
    TaxonomyExpert::from_edges(
        "t",
        [
            ("root", "food"),
            ("root", "drink"),
            ("food", "baking"),
            ("food", "canned"),
            ("baking", "flour"),
            ("baking", "sugar"),
            ("canned", "beans"),
            ("canned", "corn"),
            ("drink", "coffee"),
            ("drink", "tea"),
            ("food", "coffee"),
        ],
    )
    .unwrap()
}

const LEAVES: [&str; 6] = ["flour", "sugar", "beans", "corn", "coffee", "tea"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_lookup_is_symmetric(n in 2usize..30) {
        let pairs = PairIndex::all(n);
        prop_assert_eq!(pairs.len(), n * (n - 1) / 2);
        for (ordinal, &(l, k)) in pairs.pairs().iter().enumerate() {
            prop_assert_eq!(pairs.get(l, k), Some(ordinal));
            prop_assert_eq!(pairs.get(k, l), Some(ordinal));
            prop_assert_eq!(pairs.pair(ordinal).unwrap(), (l, k));
        }
    }

    #[test]
    fn matrix_counts_agree(m in 1usize..20, n in 1usize..20, fill in 0.0f64..1.0, seed: u64) {
        let matrix = random_matrix(m, n, fill, seed);
        let by_user: usize = (0..n).map(|u| matrix.user_count(u)).sum();
        let by_pair: usize = (0..m).map(|p| matrix.pair_count(p)).sum();
        prop_assert_eq!(by_user, matrix.len());
        prop_assert_eq!(by_pair, matrix.len());
    }

    #[test]
    fn ratings_csv_round_trips_exactly(seed: u64) {
        let catalog = ObjectCatalog::new(["a", "b", "c", "d", "e"]).unwrap();
        let pairs = PairIndex::all(5);
        let matrix = random_matrix(pairs.len(), 4, 0.5, seed);
        let data = RatingsDataset {
            catalog: catalog.clone(),
            pairs,
            users: (0..4).map(|u| format!("u{u}")).collect(),
            matrix,
        };
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = RatingsDataset::read_csv(buf.as_slice(), Some(&catalog)).unwrap();
        let a: Vec<_> = data.matrix.entries().map(|e| (data.pairs.names(&catalog, e.pair).unwrap(), data.users[e.user].clone(), e.rating.to_bits())).collect();
        let mut b: Vec<_> = back.matrix.entries().map(|e| (back.pairs.names(&catalog, e.pair).unwrap(), back.users[e.user].clone(), e.rating.to_bits())).collect();
        let mut a = a;
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn arrangement_probes_depend_on_the_unordered_pair(arrangement in arrangement_strategy(10)) {
        let n = arrangement.placed().len();
        let pairs = PairIndex::all(n);
        let probes = probes_from_arrangement(&arrangement, &pairs).unwrap();
        prop_assert_eq!(probes.len(), pairs.len());
        for l in 0..n {
            for k in 0..n {
                if l != k {
                    let same = arrangement.container_of(l) == arrangement.container_of(k);
                    let r = probes.get(pairs.get(l, k).unwrap()).unwrap();
                    prop_assert_eq!(r, if same { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn perfect_preferences_are_rearranged_exactly(arrangement in arrangement_strategy(12), seed: u64) {
        let n = arrangement.placed().len();
        let names: Vec<String> = (0..n).map(|i| format!("o{i}")).collect();
        let catalog = ObjectCatalog::new(&names).unwrap();
        let pairs = PairIndex::all(n);
        let probes = probes_from_arrangement(&arrangement, &pairs).unwrap();
        let objects: Vec<usize> = (0..n).collect();
        let groups = arrangement.non_empty_count();
        let got = arrange(&objects, &catalog, |l, k| probes.get(pairs.get(l, k)?), groups.max(1) + 1, seed, &SpectralConfig::default()).unwrap();
        prop_assert!(arrangement_success(&got, &arrangement).unwrap());
        prop_assert_eq!(edit_distance(&got, &arrangement, 1).unwrap(), 0.0);
    }

    #[test]
    fn partitions_are_exhaustive_and_cut_ignores_labels(n in 2usize..9, k in 1usize..4, seed: u64) {
        let k = k.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = support::uniform_graph(n, &mut rng);
        let p = spectral_partition(&graph, k, seed, &SpectralConfig::default()).unwrap();
        prop_assert_eq!(p.assignment.len(), n);
        prop_assert!(p.count <= k);
        prop_assert!(p.groups().iter().all(|g| !g.is_empty()));
        let relabeled: Vec<usize> = p.assignment.iter().map(|&c| p.count - 1 - c).collect();
        let q = Partition { assignment: relabeled, count: p.count };
        prop_assert_eq!(cut_value(&graph, &p), cut_value(&graph, &q));
    }

    #[test]
    fn wup_is_a_symmetric_similarity(a in 0usize..6, b in 0usize..6) {
        let t = taxonomy();
        let (x, y) = (LEAVES[a], LEAVES[b]);
        let s = t.wup(x, y).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, t.wup(y, x).unwrap());
        prop_assert_eq!(t.wup(x, x).unwrap(), 1.0);
    }

    #[test]
    fn expert_ratings_stay_in_range(entries in prop::collection::vec((0usize..6, 0usize..6, rating()), 1..15), a in 0usize..6, b in 0usize..6) {
        prop_assume!(a != b);
        let t = taxonomy();
        let mut known = KnownRatings::new();
        for (l, k, r) in entries {
            if l != k {
                known.insert(LEAVES[l], LEAVES[k], r).unwrap();
            }
        }
        if let Some(r) = expert_rating(&t, LEAVES[a], LEAVES[b], &known, 0.0) {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn zero_residuals_give_the_similarity(a in 0usize..6, b in 0usize..6) {
        prop_assume!(a != b);
        let t = taxonomy();
        let mut known = KnownRatings::new();
        for (i, x) in LEAVES.iter().enumerate() {
            for y in &LEAVES[i + 1..] {
                known.insert(x, y, t.wup(x, y).unwrap()).unwrap();
            }
        }
        let r = expert_rating(&t, LEAVES[a], LEAVES[b], &known, 0.0).unwrap();
        prop_assert!((r - t.wup(LEAVES[a], LEAVES[b]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn blend_stays_between_its_inputs(parts in prop::collection::vec((0.0f64..1.0, prop::option::of(0.0f64..1.0)), 1..6)) {
        if let Some(r) = blend(&parts) {
            let used: Vec<f64> = parts.iter().filter(|(w, _)| *w > 0.0).filter_map(|(_, r)| *r).collect();
            let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
        }
    }

    #[test]
    fn confidence_ignores_rating_order(entries in prop::collection::vec((0usize..6, 0usize..6, rating()), 2..15), seed: u64) {
        let t = taxonomy();
        let mut dedup = std::collections::BTreeMap::new();
        for (l, k, r) in entries.into_iter().filter(|(l, k, _)| l != k) {
            dedup.insert((l.min(k), l.max(k)), r);
        }
        let items: Vec<_> = dedup.iter().map(|(&(l, k), &r)| (l, k, r)).collect();
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let build = |items: &[(usize, usize, f64)]| {
            let mut known = KnownRatings::new();
            for &(l, k, r) in items {
                known.insert(LEAVES[l], LEAVES[k], r).unwrap();
            }
            known
        };
        prop_assert_eq!(
            expert_confidence(&t, &build(&items), 0.0, 0.0),
            expert_confidence(&t, &build(&shuffled), 0.0, 0.0)
        );
    }

    #[test]
    fn reports_agree_on_perfect_predictions(truth in prop::collection::vec(rating(), 1..40)) {
        let f = classification_report(&truth, &truth, RatingScale::Ternary).unwrap();
        let e = mean_error_report(&truth, &truth, RatingScale::Ternary).unwrap();
        prop_assert!(f.classes.iter().filter(|c| c.support > 0).all(|c| c.f_score == 1.0));
        prop_assert_eq!(e.mean_abs_error, 0.0);
        prop_assert_eq!(e.histogram[0], 1.0);
    }

    #[test]
    fn report_values_are_bounded(pairs in prop::collection::vec((0.0f64..1.0, rating()), 1..60)) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let f = classification_report(&pred, &truth, RatingScale::Ternary).unwrap();
        for c in &f.classes {
            for v in [c.precision, c.recall, c.f_score] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let e = mean_error_report(&pred, &truth, RatingScale::Ternary).unwrap();
        prop_assert!((e.histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edit_distance_is_a_fraction(truth in arrangement_strategy(10), seed: u64, moved in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut objects = truth.placed();
        objects.shuffle(&mut rng);
        let computed = Arrangement { containers: objects.chunks(3).map(<[usize]>::to_vec).collect() };
        let d = edit_distance(&computed, &truth, moved).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(edit_distance(&truth, &truth, moved).unwrap(), 0.0);
    }

    #[test]
    fn bootstrap_fill_is_exact(per_column in 1usize..20, users in 1usize..10, seed: u64) {
        let spec = SyntheticSpec {
            archetypes: vec![vec![1.0; 20], vec![0.0; 20]],
            users_per_archetype: users,
            ratings_per_column: (per_column, per_column),
            noise: 0.0,
            scale: RatingScale::Binary,
            seed,
        };
        let boot = bootstrap_matrix(&spec).unwrap();
        prop_assert!((boot.matrix.fill_ratio() - per_column as f64 / 20.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probe_selection_is_distinct(count in 0usize..40, seed: u64) {
        let matrix = random_matrix(30, 12, 0.5, 3);
        let model = train(&matrix, &TrainConfig::default()).unwrap();
        let count = count.min(30);
        let picked = select_probes(&model, count, seed).unwrap();
        let distinct: std::collections::BTreeSet<_> = picked.iter().copied().collect();
        prop_assert_eq!(picked.len(), count);
        prop_assert_eq!(distinct.len(), count);
        prop_assert!(picked.iter().all(|&p| p < 30));
        prop_assert_eq!(picked, select_probes(&model, count, seed).unwrap());
    }

    #[test]
    fn new_user_fit_improves_on_zero_and_ignores_order(entries in prop::collection::vec((0usize..30, rating()), 1..20), seed: u64) {
        let matrix = random_matrix(30, 12, 0.5, 4);
        let config = TrainConfig::default();
        let model = train(&matrix, &config).unwrap();
        let mut shuffled = entries.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut forward = ProbeSet::new();
        for &(p, r) in &entries {
            forward.insert(p, r).unwrap();
        }
        // keep the last answer per pair in both orders
        let mut last = std::collections::BTreeMap::new();
        for &(p, r) in &entries {
            last.insert(p, r);
        }
        let backward = ProbeSet::from_entries(shuffled.iter().map(|&(p, _)| (p, last[&p]))).unwrap();
        let a = solve_new_user(&model, &forward, &config).unwrap();
        let b = solve_new_user(&model, &backward, &config).unwrap();
        prop_assert_eq!(&a, &b);
        let zero = UserProfile::zeros(config.k);
        prop_assert!(new_user_objective(&model, &forward, config.lambda, &a) <= new_user_objective(&model, &forward, config.lambda, &zero) + 1e-12);
        for p in 0..30 {
            prop_assert_eq!(predict_for_user(&model, &a, p).unwrap(), predict_for_user(&model, &b, p).unwrap());
        }
    }
}
