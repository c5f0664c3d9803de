//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use overton::analytic::{compare_with_simulation, detachment_time, holds_forever, influence_bound, TwoGroupSystem};
use overton::metrics::{detect_clusters, primary_interval, summarize, MetricParams, PrimaryParams};
use overton::models::{arwhk_step, awhk_step, rwhk_step, sample_weight_matrix, SnapshotPlan};
use overton::output::write_sweep_csv;
use overton::sweep::{run_cell, run_sweep, Experiment, SweepGrid};
use overton::{run_simulation, ManipulatorGroup, ModelKind, ModelSpec, OpinionState, StopRule};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.detail = format!("{} [{:.2?}]", out.detail, elapsed);
    if let Some(limit) = limit {
        if elapsed > limit {
            out.pass = false;
            out.detail = format!("{} exceeds {:?}", out.detail, limit);
        }
    }
    out
}

fn hk_overton(k: usize) -> Vec<f64> {
    let init = OpinionState::equispaced(-0.6, 0.6, 100).unwrap();
    let group = ManipulatorGroup::new(k, -0.6, 1.0, 80).unwrap();
    let model = ModelSpec::new(ModelKind::Hk, 0.1).unwrap();
    let tr = run_simulation(
        &model,
        init,
        &group,
        StopRule::default_for(ModelKind::Hk),
        5000,
        &SnapshotPlan::Final,
        &mut SplitMix64::seed_from_u64(0),
    )
    .unwrap();
    tr.final_state().opinions().to_vec()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn overton_drag() -> Outcome {
    let x = hk_overton(15);
    let dragged = x.iter().filter(|&&v| (v - 1.0).abs() < 1e-3).count();
    check((19..=23).contains(&dragged), format!("{dragged} agents within 1e-3 of 1 (want 21 +- 2)"))
}

fn overton_shift() -> Outcome {
    let x = hk_overton(10);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = mean(&x);
    let pass = (-0.09..=-0.03).contains(&lo) && (0.59..=0.65).contains(&hi) && m > 0.1;
    check(pass, format!("range [{lo:.4}, {hi:.4}] (want [-0.06, 0.62] +- 0.03), mean {m:.4} (want > 0.1)"))
}

/// Closed form of the gap between a ramping group and the normal agents while
/// they stay in contact.
fn gap_formula(n: f64, k: f64, g0: f64, lambda: f64, t: u64) -> f64 {
    let r = n / (n + k);
    let limit = lambda * (n + k) / k;
    limit + (g0 - limit) * r.powi(t as i32)
}

fn oracle_equivalence() -> Outcome {
    let mut rng = SplitMix64::seed_from_u64(0x0AC1E);
    let mut worst: f64 = 0.0;
    let mut systems = 0;
    let mut attempts = 0;
    let mut short = 0;
    while systems < 100 && attempts < 100_000 {
        attempts += 1;
        let n = rng.random_range(1..=40);
        let k = rng.random_range(1..=40);
        let eps: f64 = rng.random_range(0.02..0.5);
        let x0: f64 = rng.random_range(-0.5..0.5);
        let f0: f64 = (x0 + rng.random_range(-eps..=eps)).clamp(-0.5, 0.5);
        // slope small enough that the ramp stays inside [-1, 1] for 1000 steps
        let cap = influence_bound(k, n, eps).min(0.0004);
        let lambda = rng.random_range(-cap..=cap);
        let Ok(sys) = TwoGroupSystem::new(n, k, x0, f0, lambda, eps) else {
            continue;
        };
        if !holds_forever(&sys) {
            continue;
        }
        systems += 1;
        let cmp = compare_with_simulation(&sys, 1000).unwrap();
        if cmp.compared_until < 1000 {
            short += 1;
        }
        worst = worst.max(cmp.max_deviation);
        // the library closed form agrees with an independent evaluation
        for t in [0, 1, 10, 100, 1000] {
            let own = gap_formula(n as f64, k as f64, f0 - x0, lambda, t);
            worst = worst.max((own - overton::analytic::gap_closed_form(&sys, t)).abs());
        }
    }
    check(
        systems == 100 && short == 0 && worst < 1e-9,
        format!("{systems} systems, {short} compared short of t = 1000, max deviation {worst:.3e} (want < 1e-9)"),
    )
}

fn boundary() -> Outcome {
    let mut rng = SplitMix64::seed_from_u64(0xB0B);
    let mut held = 0;
    let mut detached = 0;
    let mut worst_excess: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=100);
        let k = rng.random_range(1..=100);
        let eps = rng.random_range(0.01..0.6);
        let x0 = rng.random_range(-0.9..0.9);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let bound = influence_bound(k, n, eps);

        let at = TwoGroupSystem::new(n, k, x0, x0, sign * bound, eps).unwrap();
        let mut g: f64 = 0.0;
        let mut ok = true;
        for _ in 0..10_000 {
            g = n as f64 * g / (n + k) as f64 + sign * bound;
            worst_excess = worst_excess.max(g.abs() / eps - 1.0);
            // rounding of the product lambda (K + N) / K may land one ulp above eps
            ok &= g.abs() <= eps * (1.0 + 1e-12);
        }
        if ok && detachment_time(&at, 10_000).is_none() {
            held += 1;
        }

        let over = TwoGroupSystem::new(n, k, x0, x0, 1.01 * sign * bound, eps).unwrap();
        if detachment_time(&over, u64::MAX).is_some() {
            detached += 1;
        }
    }
    check(
        held == 100 && detached == 100,
        format!(
            "{held}/100 stay in contact at the bound (max relative excess {worst_excess:.1e}), \
             {detached}/100 detach at 1.01x"
        ),
    )
}

fn hk_baselines() -> Outcome {
    let run = |eps: f64| {
        let init = OpinionState::equispaced(-1.0, 1.0, 100).unwrap();
        let model = ModelSpec::new(ModelKind::Hk, eps).unwrap();
        let tr = run_simulation(
            &model,
            init,
            &ManipulatorGroup::none(),
            StopRule::default_for(ModelKind::Hk),
            5000,
            &SnapshotPlan::Final,
            &mut SplitMix64::seed_from_u64(0),
        )
        .unwrap();
        tr.final_state().opinions().to_vec()
    };
    let wide = run(0.6);
    let s = summarize(&wide, 0.6, &MetricParams::with_delta(0.5)).unwrap();
    let consensus = s.n_clusters == 1 && s.std < 1e-3;

    let narrow = run(0.1);
    let clusters = detect_clusters(&narrow, 1e-3);
    let reps: Vec<f64> = clusters.clusters().iter().map(|c| c.opinion).collect();
    let separated = reps.windows(2).all(|w| w[1] - w[0] > 0.1);
    check(
        consensus && reps.len() >= 2 && separated,
        format!(
            "eps 0.6: {} cluster(s), std {:.2e}; eps 0.1: {} clusters, pairwise separated {}",
            s.n_clusters,
            s.std,
            reps.len(),
            separated
        ),
    )
}

fn sweep_experiment(kind: ModelKind, horizon: Option<u64>) -> Experiment {
    // weighted-model experiments ramp from -0.9 to 0.9, the others from -1 to 1
    let reach = if kind.is_weighted() { 0.9 } else { 1.0 };
    let mut e = Experiment::new(kind, 0.1, OpinionState::equispaced(-1.0, 1.0, 100).unwrap(), -reach, reach);
    if let Some(h) = horizon {
        e.horizon = h;
    }
    e.base_seed = 1;
    e
}

fn final_means(e: &Experiment, k: usize, t_delta: u64) -> Vec<f64> {
    let cell = run_cell(e, k, t_delta, 100).unwrap();
    let last = cell.snapshots.last().unwrap();
    last.summaries.iter().map(|s| s.mean).collect()
}

fn dw_capture() -> Outcome {
    let e = sweep_experiment(ModelKind::Dw, None);
    let captured = mean(&final_means(&e, 30, 900));
    let control = mean(&final_means(&e, 0, 900));
    check(
        captured > 0.9 && (-0.1..=0.1).contains(&control),
        format!("K = 30: average final mean {captured:.4} (want > 0.9); K = 0: {control:.4} (want in [-0.1, 0.1])"),
    )
}

fn repulsive_ceiling() -> Outcome {
    let e = sweep_experiment(ModelKind::Rwhk, Some(1000));
    let m = mean(&final_means(&e, 200, 200));
    check(
        (0.0..=0.6).contains(&m),
        format!("average final mean {m:.4} (want in [0, 0.6]), net converted {:.1}", m * 50.0),
    )
}

fn backfire() -> Outcome {
    let e = sweep_experiment(ModelKind::Arwhk, Some(500));
    let m = mean(&final_means(&e, 200, 25));
    check(m < -0.2, format!("average final mean {m:.4} (want < -0.2)"))
}

fn boundedness() -> Outcome {
    let mut rng = SplitMix64::seed_from_u64(0xB0D);
    let mut steps = 0u64;
    let mut violations = 0u64;
    let mut moved_extremes = 0u64;
    let mut worst: f64 = 0.0;
    while steps < 100_000 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(0..=12);
        let eps = rng.random_range(0.01..=2.0);
        let mut x: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => -1.0,
                1 => 1.0,
                _ => rng.random_range(-1.0..=1.0),
            })
            .collect();
        x[0] = 1.0;
        x[1] = -1.0;
        let f_start = rng.random_range(-1.0..=1.0);
        let f_end = rng.random_range(-1.0..=1.0);
        let group = ManipulatorGroup::new(k, f_start, f_end, rng.random_range(0..20)).unwrap();
        let weights = sample_weight_matrix(n, k, &mut rng);
        let mut state = OpinionState::new(x).unwrap();
        for _ in 0..20 {
            let kind = rng.random_range(0..3);
            let next = match kind {
                0 => awhk_step(&state, &group, eps, &weights, &mut rng),
                1 => rwhk_step(&state, &group, eps, &weights, &mut rng),
                _ => arwhk_step(&state, &group, eps, &weights, &mut rng),
            };
            steps += 1;
            let next = match next {
                Ok(s) => s,
                Err(_) => {
                    violations += 1;
                    break;
                }
            };
            for (&before, &after) in state.opinions().iter().zip(next.opinions()) {
                worst = worst.max(after.abs() - 1.0);
                if after.abs() > 1.0 + 1e-12 {
                    violations += 1;
                }
                if before.abs() == 1.0 && after != before {
                    moved_extremes += 1;
                }
            }
            state = next;
        }
    }
    check(
        violations == 0 && moved_extremes == 0,
        format!(
            "{steps} steps, {violations} out-of-range opinions (max excess {worst:.1e}), \
             {moved_extremes} moved extreme agents"
        ),
    )
}

fn metric_pipeline() -> Outcome {
    let h = 200;
    let tol = 2.0 / h as f64;
    let params = PrimaryParams {
        delta: 0.5,
        h,
        alpha: 0.1,
    };
    let cloud = |a: usize, b: usize| {
        let mut x = vec![-0.5; a];
        x.extend(std::iter::repeat_n(0.5, b));
        x
    };

    let equal = primary_interval(&cloud(50, 50), 0.1, params).unwrap();
    let eq_w: Vec<f64> = equal.maxima.iter().map(|m| m.effective_weight).collect();
    let eq_ok = eq_w.len() == 2
        && eq_w.iter().all(|w| (w - 1.0).abs() < 1e-9)
        && equal.n_primary() == 2
        && equal.center.abs() <= tol
        && (equal.amplitude - 0.5).abs() <= tol;

    // weights w / sum(w^2) for shares 0.8 and 0.2
    let (heavy, light) = (0.8 / 0.68, 0.2 / 0.68);
    let split = primary_interval(&cloud(80, 20), 0.1, params).unwrap();
    let sp_w: Vec<f64> = split.maxima.iter().map(|m| m.effective_weight).collect();
    let sp_ok = sp_w.len() == 2
        && (sp_w[0] - heavy).abs() < 1e-3
        && (sp_w[1] - light).abs() < 1e-3
        && split.n_primary() == 1;
    check(
        eq_ok && sp_ok,
        format!(
            "equal: W = {eq_w:.4?}, c_b = {:.4}, a_b = {:.4}; 80/20: W = {sp_w:.4?} (want {heavy:.3}/{light:.3}), {} kept",
            equal.center,
            equal.amplitude,
            split.n_primary()
        ),
    )
}

fn determinism() -> Outcome {
    let mut e = sweep_experiment(ModelKind::Dw, None);
    e.init = OpinionState::equispaced(-1.0, 1.0, 40).unwrap();
    let grid = SweepGrid {
        k_values: vec![0, 5, 20],
        tdelta_values: vec![0, 50, 200],
        replicates: 6,
    };
    let csv = |workers| {
        let r = run_sweep(&grid, &e, Some(workers)).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &r).unwrap();
        buf
    };
    let reference = csv(1);
    let same = [1, 2, 4, 8].iter().all(|&w| csv(w) == reference);
    check(same, format!("{} bytes, identical across 1/2/4/8 workers: {same}", reference.len()))
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 overton drag", Some(Duration::from_secs(1)), overton_drag),
        ("2 overton shift", None, overton_shift),
        ("3 oracle equivalence", Some(Duration::from_secs(1)), oracle_equivalence),
        ("4 influence bound", None, boundary),
        ("5 hk baselines", None, hk_baselines),
        ("6 dw consensus capture", Some(Duration::from_secs(120)), dw_capture),
        ("7 repulsive ceiling", None, repulsive_ceiling),
        ("8 backfire", None, backfire),
        ("9 boundedness", None, boundedness),
        ("10 metric pipeline", None, metric_pipeline),
        ("11 determinism", None, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let out = timed(limit, f);
        println!("{} {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
