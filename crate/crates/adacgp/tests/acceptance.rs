//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adacgp::control::DetectorConfig;
use adacgp::estimator::{
    run_adacgp_with, AdaCgp, DebiasMode, EstimatorConfig, Path, StepMode, TraceOptions,
};
use adacgp::experiment::{
    benchmark_complexity, median_lag_difference, run_experiment, ExperimentConfig, Variant,
};
use adacgp::graph::{generate_gso, GraphShiftOperator, Topology};
use adacgp::ops;
use adacgp::sim::{apply_graph_filter, generate_filter_coeffs, simulate_cgp, FilterCoeffs};
use adacgp::split::FilterBank;

/// Criteria run one at a time so the wall-clock benchmark is not
/// perturbed by sibling tests.
static GATE: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {id:02} ({name}): {status} — {detail}");
    assert!(pass, "criterion {id:02} ({name}) failed: {detail}");
}

/// Criterion 1: Random-topology reproduction at desk scale.
/// N = 50, P = 3, 10k retained samples, 5 seeds, tuned hyper-parameters:
/// mean steady-state NMSE(W) <= 0.15, P_M <= 0.05, P_FA <= 0.05, and the
/// whole topology completes within the 15-minute budget.
#[test]
fn criterion_01_random_table_reproduction() {
    let _serial = serial();
    let start = Instant::now();
    let config = ExperimentConfig::new(Topology::Random, Variant::P1Debias);
    let set = run_experiment(&config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let nmse_w = set.aggregate.nmse_w.unwrap();
    let p_m = set.aggregate.p_miss.unwrap();
    let p_fa = set.aggregate.p_false_alarm.unwrap();
    let pass = set.aggregate.failed_runs == 0
        && nmse_w.mean <= 0.15
        && p_m.mean <= 0.05
        && p_fa.mean <= 0.05
        && elapsed <= 900.0;
    report(
        1,
        "random table reproduction",
        pass,
        &format!(
            "NMSE(W) {:.4}±{:.4} (<=0.15), P_M {:.4} (<=0.05), P_FA {:.4} (<=0.05), {:.0}s (<=900s)",
            nmse_w.mean, nmse_w.std, p_m.mean, p_fa.mean, elapsed
        ),
    );
}

/// Criterion 2: Erdős-Rényi reproduction.
/// Mean NMSE(W) <= 0.10 with P_M, P_FA <= 0.02.
#[test]
fn criterion_02_erdos_renyi_table_reproduction() {
    let _serial = serial();
    let config = ExperimentConfig::new(Topology::ErdosRenyi, Variant::P1Debias);
    let set = run_experiment(&config).unwrap();
    let nmse_w = set.aggregate.nmse_w.unwrap();
    let p_m = set.aggregate.p_miss.unwrap();
    let p_fa = set.aggregate.p_false_alarm.unwrap();
    let pass = set.aggregate.failed_runs == 0
        && nmse_w.mean <= 0.10
        && p_m.mean <= 0.02
        && p_fa.mean <= 0.02;
    report(
        2,
        "erdos-renyi table reproduction",
        pass,
        &format!(
            "NMSE(W) {:.4}±{:.4} (<=0.10), P_M {:.4} (<=0.02), P_FA {:.4} (<=0.02)",
            nmse_w.mean, nmse_w.std, p_m.mean, p_fa.mean
        ),
    );
}

/// Criterion 3: path ordering on Random — per seed, Path 1 keeps
/// P_FA <= 0.05 while Path 2 shows P_FA >= 0.5, on at least 4 of 5 seeds.
#[test]
fn criterion_03_path_ordering() {
    let _serial = serial();
    let p1 = run_experiment(&ExperimentConfig::new(Topology::Random, Variant::P1Debias)).unwrap();
    let mut p2_config = ExperimentConfig::new(Topology::Random, Variant::P2Debias);
    p2_config.hyper.gamma = 0.5;
    let p2 = run_experiment(&p2_config).unwrap();
    let mut holds = 0usize;
    let mut detail = String::new();
    for (a, b) in p1.per_seed.iter().zip(p2.per_seed.iter()) {
        match (a.p_false_alarm, b.p_false_alarm) {
            (Some(fa1), Some(fa2)) => {
                if fa1 <= 0.05 && fa2 >= 0.5 {
                    holds += 1;
                }
                detail.push_str(&format!("[P1 {fa1:.3} vs P2 {fa2:.3}] "));
            }
            _ => detail.push_str("[diverged] "),
        }
    }
    report(3, "path ordering", holds >= 4, &format!("ordering held on {holds}/5 seeds: {detail}"));
}

/// Criterion 4: the adaptive-VAR baseline's NMSE(W) exceeds AdaCGP
/// P1+debias by at least 5x (>= 80% improvement) on Random and ER.
#[test]
fn criterion_04_baseline_gap() {
    let _serial = serial();
    let mut detail = String::new();
    let mut pass = true;
    for topology in [Topology::Random, Topology::ErdosRenyi] {
        let adacgp =
            run_experiment(&ExperimentConfig::new(topology, Variant::P1Debias)).unwrap();
        let mut var_config = ExperimentConfig::new(topology, Variant::AdaptiveVar);
        // TISO-style sparsity grid bottom; keeps the baseline dense.
        var_config.hyper.mu[0] = 0.025;
        let baseline = run_experiment(&var_config).unwrap();
        let a = adacgp.aggregate.nmse_w.unwrap().mean;
        let b = baseline.aggregate.nmse_w.unwrap().mean;
        pass &= a <= 0.2 * b;
        detail.push_str(&format!("{topology:?}: adacgp {a:.4} vs baseline {b:.4}; "));
    }
    report(4, "baseline gap", pass, &detail);
}

/// Criterion 5: sparsity sweep on Random. Scaling the sparsity weights
/// over a grid, the setting that minimises steady-state NMSE(x_h) puts
/// the Path-1 non-zero count within ±20% of the truth, while Path 2
/// overestimates at its own optimum.
#[test]
fn criterion_05_sparsity_sweep() {
    let _serial = serial();
    let scales = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let sweep = |variant: Variant, gamma: f64| -> (f64, f64, f64) {
        let mut best: Option<(f64, f64)> = None; // (nmse_h, mean est_nnz)
        let mut true_nnz = 0.0;
        for &scale in &scales {
            let mut config = ExperimentConfig::new(Topology::Random, variant);
            config.monte_carlo_runs = 2;
            config.hyper.gamma = gamma;
            for m in config.hyper.mu.iter_mut() {
                *m *= scale;
            }
            let set = run_experiment(&config).unwrap();
            true_nnz = set.per_seed.iter().map(|r| r.true_nnz as f64).sum::<f64>()
                / set.per_seed.len() as f64;
            if let (Some(h), Some(nnz)) = (set.aggregate.nmse_h, set.aggregate.est_nnz) {
                if best.is_none() || h.mean < best.unwrap().0 {
                    best = Some((h.mean, nnz.mean));
                }
            }
        }
        let (h, nnz) = best.expect("at least one finite sweep point");
        (h, nnz, true_nnz)
    };

    let (h1, nnz1, truth) = sweep(Variant::P1AltDebias, 0.1);
    let (h2, nnz2, _) = sweep(Variant::P2Debias, 0.5);
    let p1_ok = (nnz1 - truth).abs() <= 0.2 * truth;
    let p2_overestimates = nnz2 > truth;
    report(
        5,
        "sparsity sweep",
        p1_ok && p2_overestimates,
        &format!(
            "true nnz {truth:.0}; P1 optimum nnz {nnz1:.0} at NMSE(x_h) {h1:.3} (±20% band), \
             P2 optimum nnz {nnz2:.0} at NMSE(x_h) {h2:.3} (must exceed truth)"
        ),
    );
}

/// Central finite differences of `f` over every matrix entry.
fn finite_difference<F: Fn(&Array2<f64>) -> f64>(f: F, at: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut grad = Array2::zeros(at.dim());
    let mut probe = at.clone();
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let orig = probe[[i, j]];
            probe[[i, j]] = orig + h;
            let up = f(&probe);
            probe[[i, j]] = orig - h;
            let down = f(&probe);
            probe[[i, j]] = orig;
            grad[[i, j]] = (up - down) / (2.0 * h);
        }
    }
    grad
}

fn rel_err(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = analytic - numeric;
    let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    diff.iter().map(|v| v * v).sum::<f64>().sqrt() / scale
}

/// Criterion 6: gradient oracles. On 100 random 5x5 instances the
/// least-squares gradient (with and without the commutativity term) and
/// both commutativity gradients match central finite differences within
/// 1e-5 relative error.
#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_06_gradient_oracles() {
    let _serial = serial();
    let n = 5;
    let order = 2;
    let lambda: f64 = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        // Random short window of samples with decaying weights.
        let xs: Vec<Array1<f64>> = (0..6)
            .map(|_| Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0)))
            .collect();
        let window = |t: usize| -> Array1<f64> {
            let mut w = Array1::zeros(n * order);
            for p in 1..=order {
                if t >= p {
                    w.slice_mut(s![(p - 1) * n..p * n]).assign(&xs[t - p]);
                }
            }
            w
        };
        let t_max = xs.len() - 1;
        let mut r = Array2::zeros((n * order, n * order));
        let mut pxy = Array2::zeros((n, n * order));
        for t in 1..=t_max {
            let wv = window(t);
            let decay = lambda.powi((t_max - t) as i32);
            let wv_row = wv.clone().insert_axis(ndarray::Axis(0));
            r += &(decay * &wv_row.t().dot(&wv_row));
            let xt = xs[t].clone().insert_axis(ndarray::Axis(1));
            pxy += &(decay * &xt.dot(&wv_row));
        }

        let mut bank = FilterBank::zeros(n, order);
        bank.assign_value(&Array2::from_shape_fn((n, n * order), |_| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let value = bank.value();
        let gamma = 0.7;

        let ls_objective = |v: &Array2<f64>, with_gamma: bool| -> f64 {
            let mut acc = 0.0;
            for t in 1..=t_max {
                let err = &xs[t] - &v.dot(&window(t));
                acc += 0.5 * lambda.powi((t_max - t) as i32) * err.dot(&err);
            }
            if with_gamma {
                let blocks: Vec<Array2<f64>> = (0..order)
                    .map(|p| v.slice(s![.., p * n..(p + 1) * n]).to_owned())
                    .collect();
                acc += gamma * ops::psi_commutativity_penalty(&blocks);
            }
            acc
        };

        // Least-squares gradient without the commutativity term.
        let g0 = ops::psi_gradient(&value, &r, &pxy, 0.0, None, None);
        worst = worst.max(rel_err(&g0, &finite_difference(|v| ls_objective(v, false), &value, 1e-5)));

        // Least-squares gradient with the commutativity term, P = 2.
        let q = ops::psi_commutator_gradient(&bank);
        let g1 = ops::psi_gradient(&value, &r, &pxy, gamma, Some(&q), None);
        worst = worst.max(rel_err(&g1, &finite_difference(|v| ls_objective(v, true), &value, 1e-5)));

        // Filter-bank commutativity gradient alone.
        let numeric_q = finite_difference(
            |v| {
                let mut b = FilterBank::zeros(n, order);
                b.assign_value(v).unwrap();
                let blocks: Vec<Array2<f64>> = (1..=order).map(|p| b.block(p)).collect();
                ops::psi_commutativity_penalty(&blocks)
            },
            &value,
            1e-5,
        );
        worst = worst.max(rel_err(&q, &numeric_q));

        // Shift-operator commutativity gradient.
        let w = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let tail = ops::psi_tail_blocks(&bank);
        let s_grad = ops::w_commutator_gradient(&w, &tail);
        let numeric_s =
            finite_difference(|v| ops::w_commutativity_penalty(v, &tail), &w, 1e-5);
        worst = worst.max(rel_err(&s_grad, &numeric_s));

        if worst > 1e-5 {
            report(6, "gradient oracles", false, &format!("case {case}: error {worst:.2e}"));
        }
    }
    report(6, "gradient oracles", worst <= 1e-5, &format!("worst relative error {worst:.2e} over 100 cases"));
}

/// Criterion 7: scalar oracle. On an AR(1) stream the converged scalar
/// estimate matches the closed-form least-squares coefficient within 5%.
#[test]
fn criterion_07_scalar_oracle() {
    let _serial = serial();
    let a = 0.8;
    let truth = GraphShiftOperator::from_weights(ndarray::array![[a]]).unwrap();
    let coeffs = FilterCoeffs::new(1, ndarray::array![0.0, 1.0]).unwrap();
    let stream = simulate_cgp(&truth, &coeffs, 5000, 200, 21).unwrap();

    let mut cfg = EstimatorConfig::new(1);
    cfg.mu = vec![0.002];
    cfg.lambda = 0.99;
    cfg.step_mode = StepMode::Armijo;
    cfg.detector.patience = 400;
    let trace = adacgp::estimator::run_adacgp(&stream, cfg, TraceOptions::default()).unwrap();

    let xs = stream.samples().column(0);
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..xs.len() {
        num += xs[t] * xs[t - 1];
        den += xs[t - 1] * xs[t - 1];
    }
    let ls = num / den;
    let est = trace.final_gso[[0, 0]];
    let rel = (est - ls).abs() / ls.abs();
    report(
        7,
        "scalar oracle",
        rel < 0.05,
        &format!("estimate {est:.4} vs least squares {ls:.4} ({:.1}% off)", rel * 100.0),
    );
}

/// Criterion 8: projection invariants. Across a full Random run every
/// step keeps the split parts non-negative and the reported matrices
/// equal to their split differences exactly.
#[test]
fn criterion_08_projection_invariants() {
    let _serial = serial();
    let config = ExperimentConfig::new(Topology::Random, Variant::P1Debias);
    let data = adacgp::experiment::generate_run_data(&config, 0).unwrap();
    let mut est = AdaCgp::new(config.n, config.estimator_config().unwrap()).unwrap();
    let mut violations = 0usize;
    let mut steps = 0usize;
    for x in data.stream.iter() {
        est.step(x).unwrap();
        steps += 1;
        let psi = est.psi();
        if psi.pos().iter().any(|v| *v < 0.0) || psi.neg().iter().any(|v| *v < 0.0) {
            violations += 1;
        }
        let w = est.split_gso();
        if w.pos().iter().any(|v| *v < 0.0) || w.neg().iter().any(|v| *v < 0.0) {
            violations += 1;
        }
        let psi_value = psi.value();
        let diff = &psi_value - &(&psi.pos().to_owned() - &psi.neg().to_owned());
        if diff.iter().any(|v| *v != 0.0) {
            violations += 1;
        }
        let w_value = w.value();
        let wdiff = &w_value - &(&w.pos().to_owned() - &w.neg().to_owned());
        if wdiff.iter().any(|v| *v != 0.0) {
            violations += 1;
        }
        if est.finished() {
            break;
        }
    }
    report(
        8,
        "projection invariants",
        violations == 0,
        &format!("{violations} violations over {steps} steps"),
    );
}

/// Criterion 9: debias support preservation — the zero pattern of the
/// debiased filter bank is unchanged across every debias step.
#[test]
fn criterion_09_debias_support_preservation() {
    let _serial = serial();
    let config = ExperimentConfig::new(Topology::Random, Variant::P1Debias);
    let data = adacgp::experiment::generate_run_data(&config, 1).unwrap();
    let mut est = AdaCgp::new(config.n, config.estimator_config().unwrap()).unwrap();
    let mut previous: Option<Array2<bool>> = None;
    let mut changes = 0usize;
    let mut debias_steps = 0usize;
    for x in data.stream.iter() {
        let rec = est.step(x).unwrap();
        if rec.debiasing {
            let pattern = est.debias_pattern().unwrap();
            if let Some(prev) = &previous {
                if *prev != pattern {
                    changes += 1;
                }
            }
            previous = Some(pattern);
            debias_steps += 1;
        }
        if est.finished() {
            break;
        }
    }
    report(
        9,
        "debias support preservation",
        debias_steps > 0 && changes == 0,
        &format!("{changes} pattern changes over {debias_steps} debias steps"),
    );
}

/// Criterion 10: complexity scaling. The fitted per-iteration exponent of
/// the estimator over N in {25, 50, 100, 200, 400} lies in [2.3, 3.3] and
/// strictly exceeds the adaptive baseline's, with a dense matrix multiply
/// as a known-cubic calibration control.
#[test]
fn criterion_10_complexity_scaling() {
    let _serial = serial();
    let report_data = benchmark_complexity(&[25, 50, 100, 200, 400], 5).unwrap();
    let adacgp = report_data.exponent("adacgp-p1").unwrap();
    let baseline = report_data.exponent("adaptive-var").unwrap();
    let control = report_data.exponent("matmul-control").unwrap();
    let pass = (2.3..=3.3).contains(&adacgp)
        && baseline < adacgp
        && (2.5..=3.3).contains(&control);
    report(
        10,
        "complexity scaling",
        pass,
        &format!(
            "adacgp O(N^{adacgp:.2}) in [2.3,3.3], baseline O(N^{baseline:.2}) < adacgp, \
             matmul control O(N^{control:.2}) in [2.5,3.3]"
        ),
    );
}

/// Criterion 11: stability analytics. With the GSO re-drawn every 2000
/// steps, the median lag-1000 Frobenius difference of estimated GSO
/// snapshots is at least 3x the fixed-GSO regime's.
#[test]
fn criterion_11_stability_analytics() {
    let _serial = serial();
    let n = 30;
    let order = 2;
    let segment = 2000usize;
    let segments = 4usize;

    // Shared driving noise so only the topology schedule differs. The
    // sparse ER family keeps the steady-state estimate quiet while a
    // redraw replaces the entire support.
    let run_regime = |redraw: bool| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let coeffs = generate_filter_coeffs(order, 5).unwrap();
        let mut gso = generate_gso(Topology::ErdosRenyi, n, 11).unwrap();
        let mut history: Vec<Array1<f64>> = vec![Array1::zeros(n); order];
        let mut samples = Array2::zeros((segment * segments, n));
        for seg in 0..segments {
            if redraw && seg > 0 {
                gso = generate_gso(Topology::ErdosRenyi, n, 11 + seg as u64).unwrap();
            }
            for t in 0..segment {
                let mut x_t: Array1<f64> =
                    Array1::from_shape_fn(n, |_| rng.sample(rand_distr::StandardNormal));
                for p in 1..=order {
                    x_t += &apply_graph_filter(
                        gso.weights(),
                        coeffs.block(p),
                        history[p - 1].view(),
                    )
                    .unwrap();
                }
                samples.row_mut(seg * segment + t).assign(&x_t);
                history.rotate_right(1);
                history[0] = x_t;
            }
        }
        let stream = adacgp::sim::SignalStream::new(samples, 0);

        // Plain sparse tracking: the huge patience keeps the debias
        // phase off so snapshots reflect the integrated W estimate.
        let mut cfg = EstimatorConfig::new(order);
        cfg.path = Path::Path1;
        cfg.debias_mode = DebiasMode::AfterSteadyState;
        cfg.mu = vec![3e-4, 3e-3];
        cfg.lambda = 0.99; // long enough memory to settle between redraws
        cfg.w_step = Some(0.02);
        cfg.debias_step_scale = 0.05;
        cfg.detector = DetectorConfig { patience: usize::MAX / 2, ..Default::default() };
        let options = TraceOptions { snapshot_stride: 100, snapshot_matrices: true };
        let trace = run_adacgp_with(&stream, cfg, options, |_, _| {}).unwrap();
        // Skip the first segment: both regimes share that initial
        // convergence ramp and it would blur the contrast.
        let snapshots: Vec<Array2<f64>> = trace
            .snapshots
            .into_iter()
            .filter(|s| s.step > segment)
            .map(|s| s.w)
            .collect();
        // Lag of 1000 steps = 10 snapshots at stride 100.
        median_lag_difference(&snapshots, 10).unwrap()
    };

    let fixed = run_regime(false);
    let switching = run_regime(true);
    report(
        11,
        "stability analytics",
        switching >= 3.0 * fixed,
        &format!("median lag-1000 diff: switching {switching:.4} vs fixed {fixed:.4} (>=3x)"),
    );
}
