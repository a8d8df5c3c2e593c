//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use carleson_core::bergman::{BergmanGeometry, BergmanTree, DStarMode, NetOptions};
use carleson_core::conditions::{drury_arveson_estimate, SplitOptions};
use carleson_core::kernels::{kernel_carleson_oracle, kernel_matrix, KernelFamily, KernelSpec, KernelVariant};
use carleson_core::measures::{discretize, random_atomic_measure};
use carleson_core::operators::{schur_vino_check, weighted_kernel_norm, OperatorKind, TreeOperator};
use carleson_core::repro::{
    compare_runs, invariant_suite, run_scenario, two_weight_instances, RunReport, Scenario,
    ScenarioSpec,
};
use carleson_core::Tree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(spec: ScenarioSpec) -> RunReport {
    run_scenario(&spec).unwrap_or_else(|e| panic!("{}: {e}", spec.scenario))
}

fn failing(r: &RunReport) -> String {
    let bad: Vec<String> = r
        .verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{} = {} vs {}", v.name, v.value, v.threshold))
        .collect();
    if bad.is_empty() {
        String::new()
    } else {
        format!(" [{}]", bad.join("; "))
    }
}

fn two_weight() -> Outcome {
    let start = Instant::now();
    let (lower, upper) = two_weight_instances(200, 300, 1).expect("two-weight suite");
    let secs = start.elapsed().as_secs_f64();
    let pass = lower <= 1.0 + 1e-9 && upper <= 16.0 && secs < 60.0;
    outcome(pass, format!("max testing/norm² = {lower:.6}, max norm²/testing = {upper:.4}, {secs:.2}s"))
}

fn power_slopes() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for rho in [-0.75, -0.25, 0.5] {
        let r = run(ScenarioSpec::new(Scenario::PowerMeasure).param("rho", rho).param("depths", "8..24"));
        pass &= r.pass;
        detail.push(format!(
            "ρ={rho}: {:.4}/{:.4}/{:.4}{}",
            r.value("slopes/istar_standard").unwrap(),
            r.value("slopes/istar_fattened").unwrap(),
            r.value("slopes/simple_fattened").unwrap(),
            failing(&r)
        ));
    }
    outcome(pass, detail.join(", "))
}

fn fattened() -> Outcome {
    let r = run(ScenarioSpec::new(Scenario::FattenedVsStandard).param("k-bound", 4));
    outcome(
        r.pass,
        format!(
            "K = {:.4}, S_𝔉 growth per doubling ≥ {:.3}{}",
            r.value("suite/k").unwrap(),
            r.value("counterexample/min_simple_fattened_growth").unwrap(),
            failing(&r)
        ),
    )
}

fn ring_domain() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for l in [1.5, 2.0] {
        let r = run(ScenarioSpec::new(Scenario::RingDomain).param("L", l).param("nmax", 20).param("pairs", 1000));
        pass &= r.pass;
        for q in ["ring/max_h2_error", "ring/max_hk_error", "ring/identity_residual"] {
            worst = worst.max(r.value(q).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 10.0, format!("worst error {worst:.2e}, {secs:.2}s"))
}

fn np_kernel() -> Outcome {
    let start = Instant::now();
    let r = run(ScenarioSpec::new(Scenario::NpKernel).param("instances", 500));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.pass && secs < 30.0,
        format!(
            "{} of 500 with one positive eigenvalue, {secs:.2}s{}",
            r.value("np/one_positive").unwrap(),
            failing(&r)
        ),
    )
}

fn split_vacuity() -> Outcome {
    let slice = run(ScenarioSpec::new(Scenario::SliceVacuous).depth(8));
    let curve = run(ScenarioSpec::new(Scenario::TransverseCurve).param("eps", 0.2).depth(8));
    outcome(
        slice.pass && curve.pass,
        format!(
            "slice split {}, ε-split zero from depth {} with C = {}{}{}",
            slice.value("vacuity/max_split").unwrap(),
            curve.value("split/threshold").unwrap(),
            curve.value("split/c").unwrap(),
            failing(&slice),
            failing(&curve)
        ),
    )
}

fn drury_arveson() -> Outcome {
    let geom = Arc::new(BergmanGeometry::build(2, 10, NetOptions::default()).unwrap());
    let da = KernelSpec::new(KernelFamily::DruryArveson, KernelVariant::FullComplex);
    let (mut lows, mut highs, mut simple_k) = (Vec::new(), Vec::new(), 0.0f64);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let count = rng.random_range(1..=200);
            let max_level = rng.random_range(2..=9);
            let mu = random_atomic_measure(2, count, max_level, &mut rng);
            let bt = BergmanTree::closure_of_points(geom.clone(), mu.points()).unwrap();
            let tm = discretize(&mu, &bt).unwrap();
            let est = drury_arveson_estimate(&bt, &tm, SplitOptions::default());
            let oracle = kernel_carleson_oracle(&mu, da).unwrap();
            let combined = est.combined * est.combined;
            lo = lo.max(oracle / combined);
            hi = hi.max(combined / oracle);
            simple_k = simple_k.max(est.simple * est.simple / oracle);
        }
        lows.push(lo);
        highs.push(hi);
    }
    let spread = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = spread(&lows) <= 2.0 && spread(&highs) <= 2.0 && simple_k <= 8.0;
    outcome(
        pass,
        format!(
            "oracle/(s+p)² ≤ {:.3}, (s+p)²/oracle ≤ {:.3}, seed spreads {:.3}/{:.3}, simple/oracle ≤ {simple_k:.3}",
            lows.iter().copied().fold(0.0, f64::max),
            highs.iter().copied().fold(0.0, f64::max),
            spread(&lows),
            spread(&highs)
        ),
    )
}

fn simple_suffices() -> Outcome {
    let r = run(ScenarioSpec::new(Scenario::Cantor).param("k-bound", 4).depth(10));
    outcome(
        r.pass,
        format!(
            "K = {:.4}, slopes in [{:.3}, {:.3}], T_big growth ×{}{}",
            r.value("suite/k").unwrap(),
            r.value("suite/min_slope").unwrap(),
            r.value("suite/max_slope").unwrap(),
            r.value("cantor/big_growth").unwrap(),
            failing(&r)
        ),
    )
}

fn invariant() -> Outcome {
    let (worst, ratios) = invariant_suite(50, 1000, 8, 3).expect("invariant suite");
    outcome(ratios.len() == 50 && worst <= 8.0, format!("max ‖T_full‖/‖μ‖ = {worst:.4}"))
}

fn vino() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut worst_gap = f64::INFINITY;
    let tol = 1e-8;
    let kinds = [
        OperatorKind::TFull(DStarMode::Analytic),
        OperatorKind::TBig,
        OperatorKind::TSmall(1.0),
        OperatorKind::TSmall(0.25),
        OperatorKind::Frac,
    ];
    let geom = Arc::new(BergmanGeometry::build(2, 6, NetOptions::default()).unwrap());
    for _ in 0..10 {
        let mu = random_atomic_measure(2, rng.random_range(1..=60), 6, &mut rng);
        let bt = BergmanTree::closure_of_points(geom.clone(), mu.points()).unwrap();
        let tm = discretize(&mu, &bt).unwrap();
        let nodes: Vec<usize> = (0..bt.len()).collect();
        for kind in kinds {
            let op = TreeOperator::on_bergman(kind, &bt).unwrap();
            let k = op.kernel_matrix(&nodes);
            let w = tm.weights().to_vec();
            let v = schur_vino_check(&k, &w);
            let norm = weighted_kernel_norm(&k, &w);
            worst_gap = worst_gap.min(v.m - norm);
            checked += 1;
        }
        for variant in [KernelVariant::Re, KernelVariant::Modulus] {
            for sigma in [0.25, 0.5, 1.0] {
                let k = kernel_matrix(&mu, KernelSpec::new(KernelFamily::BesovSobolev { sigma }, variant)).unwrap();
                let v = schur_vino_check(&k, mu.masses());
                let norm = weighted_kernel_norm(&k, mu.masses());
                worst_gap = worst_gap.min((v.m - norm) / norm.max(1.0));
                checked += 1;
            }
        }
    }
    for depth in [3, 6] {
        let tree = Tree::binary(depth);
        for (kind, r) in [(OperatorKind::TBig, 0), (OperatorKind::TSmall(0.5), 1)] {
            let op = TreeOperator::new(kind, &tree).unwrap();
            let nodes: Vec<usize> = (0..tree.len()).collect();
            let k = op.kernel_matrix(&nodes);
            let w: Vec<f64> = (0..tree.len()).map(|i| ((i * 7 + r) % 5) as f64 * 0.1).collect();
            worst_gap = worst_gap.min(schur_vino_check(&k, &w).m - weighted_kernel_norm(&k, &w));
            checked += 1;
        }
    }
    outcome(worst_gap >= -tol, format!("{checked} kernels, min (M − norm) = {worst_gap:.3e}"))
}

fn determinism() -> Outcome {
    let mut bad = Vec::new();
    for s in Scenario::ALL {
        let spec = match s {
            Scenario::InvariantMeasure => ScenarioSpec::new(s).param("profiles", 4),
            Scenario::PotentialAppendix => ScenarioSpec::new(s).depth(3),
            Scenario::TwoWeightSuite => ScenarioSpec::new(s).param("trees", 50),
            _ => ScenarioSpec::new(s),
        }
        .seed(17);
        let a = run(spec.clone()).without_timing();
        let b = run(spec).without_timing();
        let bits = a == b && a.to_json() == b.to_json() && compare_runs(&a, &b, 0.0).pass;
        if !bits {
            bad.push(s.name());
        }
    }
    let other = compare_runs(
        &run(ScenarioSpec::new(Scenario::RingDomain).seed(1)),
        &run(ScenarioSpec::new(Scenario::RingDomain).seed(2)),
        0.0,
    );
    outcome(
        bad.is_empty() && !other.pass,
        format!("{} scenarios bit-identical, different seeds differ: {}, mismatches {bad:?}", Scenario::ALL.len() - bad.len(), !other.pass),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("two-weight characterization", two_weight),
        ("power-measure slopes", power_slopes),
        ("fattened versus standard tree", fattened),
        ("ring-domain norms", ring_domain),
        ("one positive eigenvalue", np_kernel),
        ("split vacuity and transverse curve", split_vacuity),
        ("Drury-Arveson comparability", drury_arveson),
        ("simple condition suffices", simple_suffices),
        ("invariant-measure bound", invariant),
        ("Schur test bound", vino),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {} ({:.2}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
