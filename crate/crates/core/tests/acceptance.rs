//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidyup_core::factorization::{rmse, train, TrainConfig};
use tidyup_core::partitioner::{cut_value, estimate_cluster_count, spectral_partition, PreferenceGraph};
use tidyup_core::probing::{probes_from_arrangement, solve_new_user};
use tidyup_core::{
    fixtures, run_protocol, EvalReport, Method, NamedArrangement, PairIndex, ProbeSet, SpectralConfig, StoredModel,
    UserPreferences,
};

use support::{
    arrangement_graph, block_graph, brute_force_min_cut, max_gradient_error, noisy_block_graph, planted_matrix,
    random_model, same_partition, uniform_graph,
};

const SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
    reference: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, reference: Vec::new() }
    }
}

fn gradient() -> Outcome {
    let worst = (0..20u64)
        .map(|seed| {
            max_gradient_error(
                &random_model(10, 8, 3, 0.01, 0.5, 100 + seed),
                &support::random_matrix(10, 8, 0.4, seed),
                1e-5,
            )
        })
        .fold(0.0, f64::max);
    Outcome::new(worst < 1e-5, format!("20 instances 10x8 K=3 40% fill, worst relative error {worst:.2e} (< 1e-5)"))
}

fn planted_recovery() -> Outcome {
    let planted = random_model(30, 20, 3, 0.0, 0.15, 8);
    let matrix = planted_matrix(&planted);
    let config = TrainConfig { lambda: 0.0, max_iterations: 3000, tolerance: 1e-14, seed: 5, ..TrainConfig::default() };
    match train(&matrix, &config).and_then(|m| rmse(&m, &matrix)) {
        Ok(err) => Outcome::new(err < 1e-3, format!("30x20 K=3 fully observed, lambda 0, rmse {err:.2e} (< 1e-3)")),
        Err(e) => Outcome::new(false, format!("training failed: {e}")),
    }
}

fn wup_values() -> Outcome {
    let experts = fixtures::grocery_experts();
    let first = experts[0].wup("canned corn", "canned tuna").unwrap_or(f64::NAN);
    let second = experts[1].wup("canned corn", "canned tuna").unwrap_or(f64::NAN);
    let pass = (first - 0.40).abs() <= 0.005 && (second - 0.33).abs() <= 0.005;
    Outcome::new(pass, format!("wup(canned corn, canned tuna) = {first:.4} and {second:.4} (0.40, 0.33 +-0.005)"))
}

fn spectral_share(
    seeds: std::ops::Range<u64>,
    mut make: impl FnMut(usize, usize, &mut ChaCha8Rng) -> PreferenceGraph,
) -> usize {
    let cfg = SpectralConfig::default();
    seeds
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(5..=8);
            let k = 2 + (seed as usize % 2);
            let graph = make(n, k, &mut rng);
            let spectral = spectral_partition(&graph, k, seed, &cfg).expect("spectral partition");
            cut_value(&graph, &spectral) <= 1.2 * brute_force_min_cut(&graph, k).0 + 1e-12
        })
        .count()
}

fn spectral_vs_brute_force() -> Outcome {
    let cfg = SpectralConfig::default();
    let (mut close, mut planted, mut exact) = (0, 0, 0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..=8);
        let k = 2 + (seed as usize % 2);
        let (graph, blocks) =
            if seed % 2 == 0 { arrangement_graph(n, k, 0.0, &mut rng) } else { noisy_block_graph(n, k, &mut rng) };
        let Ok(spectral) = spectral_partition(&graph, k, seed, &cfg) else { continue };
        let (best, _) = brute_force_min_cut(&graph, k);
        let cut = cut_value(&graph, &spectral);
        close += usize::from(cut <= 1.2 * best + 1e-12);
        if seed % 2 == 0 {
            planted += 1;
            exact += usize::from(cut == best && same_partition(&spectral.assignment, &blocks));
        }
    }
    let fixtures: [&[usize]; 5] =
        [&[0, 0, 1, 1], &[0, 0, 0, 1, 1, 2, 2], &[0, 1, 2, 3], &[0, 0, 1, 1, 1, 2, 3, 3], &[0, 0, 0, 0, 0, 1]];
    let components_ok = fixtures
        .iter()
        .filter(|blocks| {
            let graph = block_graph(blocks, 1.0, 0.0);
            estimate_cluster_count(&graph, blocks.len(), &cfg).ok() == blocks.iter().max().map(|m| m + 1)
        })
        .count();
    let pass = close >= 90 && exact == planted && components_ok == fixtures.len();
    let mut outcome = Outcome::new(
        pass,
        format!(
            "{close}/100 within 1.2x (>= 90), planted blocks exact {exact}/{planted}, eigen-gap = components {components_ok}/{}",
            fixtures.len()
        ),
    );
    let uniform = spectral_share(0..100, |n, _, rng| uniform_graph(n, rng));
    let noisy = spectral_share(0..100, |n, k, rng| arrangement_graph(n, k, 0.1, rng).0);
    outcome.reference.push(format!("reference: uniform random weights {uniform}/100 within 1.2x"));
    outcome.reference.push(format!("reference: planted blocks with 10% flipped ratings {noisy}/100 within 1.2x"));
    outcome
}

fn protocol(name: &str) -> Result<EvalReport, Outcome> {
    run_protocol(name, None, SEED).map_err(|e| Outcome::new(false, format!("{name} protocol failed: {e}")))
}

fn value(
    report: &EvalReport,
    method: Method,
    setting: impl Fn(&tidyup_core::ReportRow) -> bool,
    metric: impl Fn(&tidyup_core::ReportRow) -> Option<f64>,
) -> f64 {
    report.find(method, setting).and_then(metric).unwrap_or(f64::NAN)
}

fn toys() -> Outcome {
    let report = match protocol("toys") {
        Ok(r) => r,
        Err(o) => return o,
    };
    let curve: Vec<(usize, f64, f64)> = report
        .rows_for(Method::Cf)
        .map(|r| (r.probes.unwrap_or(0), r.macro_f().unwrap_or(f64::NAN), r.success_rate.unwrap_or(f64::NAN)))
        .collect();
    let Some(&(_, f_max, success_max)) = curve.iter().find(|c| c.0 == 300) else {
        return Outcome::new(false, "no CF row at P=300".into());
    };
    let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1 - 0.01);
    let trend: Vec<String> = curve.iter().map(|c| format!("{}:{:.3}", c.0, c.1)).collect();
    let mut outcome = Outcome::new(
        f_max >= 0.95 && success_max >= 0.7 && monotone,
        format!(
            "{}; P=300 macro F {f_max:.3} (>= 0.95), success {success_max:.3} (>= 0.70), F by P [{}] non-decreasing within 0.01: {monotone}",
            report.notes.first().map_or("", String::as_str),
            trend.join(" ")
        ),
    );
    let at100 = |m| value(&report, m, |r| r.probes == Some(100), |r| r.success_rate);
    outcome.reference.push(format!(
        "reference: success at P=100 CF {:.3} vs CF-rand {:.3}",
        at100(Method::Cf),
        at100(Method::CfRand)
    ));
    outcome
}

fn groceries() -> Outcome {
    let report = match protocol("groceries") {
        Ok(r) => r,
        Err(o) => return o,
    };
    let f = |m, p| value(&report, m, |r| r.probes == Some(p), |r| r.macro_f());
    let (cf20, b2_20, cf8, rand8) =
        (f(Method::Cf, 20), f(Method::BaselineTwo, 20), f(Method::Cf, 8), f(Method::CfRand, 8));
    let mut outcome = Outcome::new(
        cf20 - b2_20 >= 0.10 && cf8 >= rand8,
        format!(
            "{}; P=20 CF {cf20:.3} vs Baseline-II {b2_20:.3} (margin >= 0.10), P=8 CF {cf8:.3} vs CF-rand {rand8:.3}",
            report.notes.first().map_or("", String::as_str)
        ),
    );
    let zero = |m| value(&report, m, |r| r.probes == Some(12), |r| r.errors.as_ref().map(|e| e.histogram[0]));
    outcome.reference.push(format!(
        "reference: P=12 share of exact predictions CF {:.3} vs Baseline-I {:.3}",
        zero(Method::Cf),
        zero(Method::BaselineOne)
    ));
    outcome
}

fn incremental() -> Outcome {
    let report = match protocol("incremental") {
        Ok(r) => r,
        Err(o) => return o,
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for users in report.rows_for(Method::Cf).filter_map(|r| r.training_users).filter(|&u| u >= 750) {
        let err = |m| value(&report, m, |r| r.training_users == Some(users), |r| r.mean_error());
        let (cf, batch) = (err(Method::Cf), err(Method::Batch));
        let diff = (cf - batch).abs();
        pass &= diff <= 0.03;
        parts.push(format!("{users} users CF {cf:.4} batch {batch:.4} |diff| {diff:.4}"));
    }
    pass &= !parts.is_empty();
    Outcome::new(pass, format!("P=12, {} (<= 0.03)", parts.join(", ")))
}

fn latent() -> Outcome {
    let report = match protocol("latent") {
        Ok(r) => r,
        Err(o) => return o,
    };
    let at = |k| value(&report, Method::Cf, |r| r.k == Some(k), |r| r.rmse);
    let curve: Vec<String> =
        report.rows.iter().map(|r| format!("K={}:{:.4}", r.k.unwrap_or(0), r.rmse.unwrap_or(f64::NAN))).collect();
    let (k3, k9) = (at(3), at(9));
    Outcome::new(k9 <= k3 + 1e-3, format!("training rmse [{}], K=9 {k9:.4} <= K=3 {k3:.4} + 1e-3", curve.join(" ")))
}

fn shelving() -> Outcome {
    let report = match protocol("shelving") {
        Ok(r) => r,
        Err(o) => return o,
    };
    let d = |m, o| value(&report, m, |r| r.removed == Some(o), |r| r.edit_distance);
    let cf_first = d(Method::Cf, 1);
    let mut cf_below = true;
    let mut random_worst = f64::INFINITY;
    let mut curve = Vec::new();
    for o in 1..=10 {
        let (cf, random) = (d(Method::Cf, o), d(Method::BaselineThree, o));
        cf_below &= cf < random;
        random_worst = random_worst.min(random);
        curve.push(format!("{o}:{cf:.3}/{random:.3}"));
    }
    let mut outcome = Outcome::new(
        cf_first <= 0.25 && cf_below && random_worst > 0.7,
        format!(
            "O=1 CF d {cf_first:.3} (<= 0.25), CF below Baseline-III at every O: {cf_below}, Baseline-III lowest d {random_worst:.3} (> 0.7); O:CF/Baseline-III [{}]",
            curve.join(" ")
        ),
    );
    let b2: Vec<String> = (1..=10).map(|o| format!("{o}:{:.3}", d(Method::BaselineTwo, o))).collect();
    outcome.reference.push(format!("reference: Baseline-II d [{}]", b2.join(" ")));
    outcome
}

fn order_independence() -> Outcome {
    let catalog = fixtures::shelving_catalog();
    let pairs = PairIndex::all(catalog.len());
    let Ok(users) = fixtures::shelving_users(&catalog) else {
        return Outcome::new(false, "shelving fixture failed to load".into());
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let columns: Vec<Vec<f64>> = users
        .iter()
        .flat_map(|u| {
            let probes = probes_from_arrangement(u, &pairs).expect("planted probes");
            std::iter::repeat_n((0..pairs.len()).map(|p| probes.get(p).unwrap_or(0.0)).collect::<Vec<f64>>(), 10)
        })
        .collect();
    let stored = tidyup_core::evaluation::synthetic::bootstrap_columns(
        &columns,
        (40, 40),
        0.05,
        tidyup_core::RatingScale::Binary,
        &mut rng,
    )
    .and_then(|m| train(&m, &TrainConfig::default()))
    .and_then(|model| StoredModel::new(model, catalog.clone(), pairs.clone()));
    let Ok(stored) = stored else {
        return Outcome::new(false, "training failed".into());
    };
    let names: Vec<String> = catalog.names().to_vec();
    let cfg = SpectralConfig::default();
    let (mut agreeing, mut total) = (0, 0);
    for user in users.iter().take(5) {
        let full = probes_from_arrangement(user, &pairs).expect("planted probes");
        let mut lines: Vec<String> = full
            .iter()
            .take(40)
            .map(|(p, r)| {
                let (a, b) = pairs.names(&catalog, p).expect("pair");
                format!("{a},{b},{r}")
            })
            .collect();
        let mut first: Option<(Vec<u64>, NamedArrangement)> = None;
        for _ in 0..10 {
            lines.shuffle(&mut rng);
            let text = format!("pair_a,pair_b,rating\n{}\n", lines.join("\n"));
            let run = ProbeSet::read_csv(text.as_bytes(), &catalog, &pairs).and_then(|probes| {
                let profile = solve_new_user(&stored.model, &probes, &TrainConfig::default())?;
                let bits: Vec<u64> = std::iter::once(profile.user_bias)
                    .chain(profile.factors.iter().copied())
                    .map(f64::to_bits)
                    .collect();
                let arrangement = UserPreferences::new(&stored, &profile, &probes).arrange(&names, 6, SEED, &cfg)?;
                Ok((bits, arrangement))
            });
            total += 1;
            match (run, &first) {
                (Ok(r), None) => {
                    first = Some(r);
                    agreeing += 1;
                }
                (Ok(r), Some(f)) => agreeing += usize::from(&r == f),
                (Err(_), _) => {}
            }
        }
    }
    Outcome::new(
        agreeing == total && total == 50,
        format!(
            "5 fixtures x 10 shuffled probe files, {agreeing}/{total} bit-identical profiles and equal arrangements"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient, Duration::from_secs(5)),
        ("planted-model recovery", planted_recovery, Duration::from_secs(30)),
        ("wup values", wup_values, Duration::from_secs(1)),
        ("spectral vs brute force", spectral_vs_brute_force, Duration::from_secs(60)),
        ("toys protocol", toys, Duration::from_secs(600)),
        ("multimodality dominance", groceries, Duration::from_secs(600)),
        ("incremental vs batch", incremental, Duration::from_secs(600)),
        ("rmse vs K", latent, Duration::from_secs(600)),
        ("shelving edit distance", shelving, Duration::from_secs(600)),
        ("order independence", order_independence, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let in_time = elapsed < *limit;
        let pass = outcome.pass && in_time;
        failures += usize::from(!pass);
        println!(
            "{} {:>2} {name}: {} [{:.2}s, limit {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
        for line in outcome.reference {
            println!("        {line}");
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
