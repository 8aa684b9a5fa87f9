//! Acceptance gate: one test per release criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture`). Tolerances are
//! pinned here and nowhere else.

#![allow(clippy::needless_range_loop)] // indexed loops read clearer for matrix identities
use std::process::Command;
use std::time::Instant;

use ippkit::control::closed_loop_simulate;
use ippkit::dynamics::{
    euler_rate_matrix, euler_rate_matrix_body, mlm_drift, rotation_matrix, MlmState,
};
use ippkit::moments::{self, integrate_moments};
use ippkit::rng::RandomStream;
use ippkit::scenario::{guided_scenario, nominal_scenario, Scenario, StateDist};
use ippkit::sde::{run_ensemble, simulate_trajectory, wiener_increments, SimOptions};

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

/// Nominal airframe without fin cant or launch spin: the integrator's
/// rotation substep is the identity here, and the flight has no fast
/// roll dynamics.
fn spin_free() -> Scenario {
    let mut sc = nominal_scenario();
    sc.projectile.CDD = 0.0;
    sc.initial.p = StateDist::new(0.0, 0.0);
    sc.initial.phi = StateDist::new(0.0, 0.0);
    sc.noise.a1 = 0.0;
    sc.noise.a2 = 0.0;
    sc.noise.a3 = 0.0;
    sc
}

/// Deterministic reference: classical RK4 over the drift alone, matching
/// the moment engine's integrator and step.
fn rk4_drift_trajectory(sc: &Scenario, record_every: usize) -> Vec<(f64, MlmState)> {
    let dt = sc.integration.step;
    let mut s = sc.initial.mean_state();
    let mut tau = 0.0;
    let mut out = vec![(tau, s)];
    let mut step_idx = 0usize;
    let mut armed = false;
    while tau < sc.integration.max_span {
        let a = s.to_array();
        let f = |arr: [f64; 12]| {
            let st = MlmState::from_array(&arr);
            mlm_drift(&st, &sc.projectile, &sc.wind).unwrap()
        };
        let add = |a: &[f64; 12], k: &[f64; 12], h: f64| {
            let mut r = *a;
            for i in 0..12 {
                r[i] += h * k[i];
            }
            r
        };
        let k1 = f(a);
        let k2 = f(add(&a, &k1, dt / 2.0));
        let k3 = f(add(&a, &k2, dt / 2.0));
        let k4 = f(add(&a, &k3, dt));
        let mut next = a;
        for i in 0..12 {
            next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s = MlmState::from_array(&next);
        tau += dt;
        step_idx += 1;
        if s.theta < 0.0 {
            armed = true;
        }
        if step_idx.is_multiple_of(record_every) {
            out.push((tau, s));
        }
        if armed && s.z >= 0.0 {
            break;
        }
    }
    out
}

#[test]
fn criterion_1_point_mass_reduction() {
    let t0 = Instant::now();
    let mut sc = spin_free();
    sc.integration.step = 0.05;
    let every = 20;
    let det = rk4_drift_trajectory(&sc, every);
    let mm = integrate_moments(&sc, false, every).expect("moment integration");
    let mean_indices = [
        (0usize, moments::X),
        (1, moments::Y),
        (2, moments::Z),
        (5, moments::PSI),
        (6, moments::V),
        (7, moments::VT),
        (8, moments::WT),
        (9, moments::PT),
        (10, moments::QT),
        (11, moments::RT),
    ];
    let mut worst = 0.0f64;
    let n = det.len().min(mm.series.len());
    for k in 0..n {
        let (t1, s) = det[k];
        let (t2, m) = (mm.series[k].0, &mm.series[k].1);
        assert!((t1 - t2).abs() < 1e-9, "tau grids diverged");
        let a = s.to_array();
        for (si, mi) in mean_indices {
            let rel = (m.mean(mi).re - a[si]).abs() / a[si].abs().max(1.0);
            worst = worst.max(rel);
        }
        // pitch enters through the complex exponential states
        let rel = (m.mean(moments::DP).arg() - s.theta).abs() / s.theta.abs().max(1.0);
        worst = worst.max(rel);
    }
    let dur = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-6 && dur < 1.0;
    report(
        1,
        "point-mass reduction",
        pass,
        &format!("max rel err {worst:.3e} (≤ 1e-6) over {n} samples in {dur:.2}s (< 1s)"),
    );
}

#[test]
fn criterion_2_kinematics_suite() {
    let t0 = Instant::now();
    let mut stream = RandomStream::new(11);
    let mut worst_rot = 0.0f64;
    let mut worst_inv = 0.0f64;
    for _ in 0..10_000 {
        let phi = stream.normal(0.0, 2.0);
        let theta = stream.normal(0.0, 0.6).clamp(-1.39, 1.39);
        let psi = stream.normal(0.0, 2.0);
        let r = rotation_matrix(phi, theta, psi);
        // orthonormality: R Rᵀ = I
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst_rot = worst_rot.max((dot - target).abs());
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        worst_rot = worst_rot.max((det - 1.0).abs());
        let e = euler_rate_matrix(phi, theta).expect("cos(theta) bounded away from 0");
        let b = euler_rate_matrix_body(phi, theta);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| e[i][k] * b[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst_inv = worst_inv.max((dot - target).abs());
            }
        }
    }
    let dur = t0.elapsed().as_secs_f64();
    let pass = worst_rot <= 1e-12 && worst_inv <= 1e-10 && dur < 1.0;
    report(
        2,
        "kinematics suite",
        pass,
        &format!(
            "rotation err {worst_rot:.3e} (≤ 1e-12), rate-matrix inverse err {worst_inv:.3e} (≤ 1e-10), {dur:.2}s (< 1s)"
        ),
    );
}

#[test]
fn criterion_3_wiener_statistics() {
    let dt = 0.01;
    let n = 1_000_000usize;
    let mut stream = RandomStream::new(5);
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    let mut sum_cross = [0.0f64; 3]; // (0,1), (0,2), (1,2)
    for _ in 0..n {
        let dw = wiener_increments(&mut stream, dt);
        for i in 0..3 {
            sum[i] += dw[i];
            sum_sq[i] += dw[i] * dw[i];
        }
        sum_cross[0] += dw[0] * dw[1];
        sum_cross[1] += dw[0] * dw[2];
        sum_cross[2] += dw[1] * dw[2];
    }
    let nf = n as f64;
    let mut var_ok = true;
    let mut worst_var = 0.0f64;
    for i in 0..3 {
        let mean = sum[i] / nf;
        let var = sum_sq[i] / nf - mean * mean;
        let rel = (var - dt).abs() / dt;
        worst_var = worst_var.max(rel);
        var_ok &= rel <= 0.01;
    }
    // se of the sample covariance of independent N(0, dt) pairs
    let se = dt / nf.sqrt();
    let mut cov_ok = true;
    let mut worst_cov = 0.0f64;
    for c in sum_cross {
        let cov = c / nf;
        worst_cov = worst_cov.max((cov / se).abs());
        cov_ok &= cov.abs() <= 3.0 * se;
    }
    let pass = var_ok && cov_ok;
    report(
        3,
        "Wiener statistics",
        pass,
        &format!(
            "variance rel err {worst_var:.4} (≤ 0.01), max |cov|/se {worst_cov:.2} (≤ 3) over {n} increments"
        ),
    );
}

#[test]
fn criterion_4_oracle_consistency() {
    let t0 = Instant::now();
    let sc = nominal_scenario();
    let mc = run_ensemble(&sc, 1000, 2024, false, None).expect("ensemble");
    let mm = integrate_moments(&sc, false, usize::MAX).expect("moments");
    let p = &mm.prediction;
    let range = (mc.stats.mean_x.powi(2) + mc.stats.mean_y.powi(2)).sqrt();
    let mean_gap =
        ((p.mean_x - mc.stats.mean_x).powi(2) + (p.mean_y - mc.stats.mean_y).powi(2)).sqrt();
    let mean_rel = mean_gap / range;
    let sdx_rel = (p.sd_x - mc.stats.sd_x).abs() / mc.stats.sd_x;
    let sdy_rel = (p.sd_y - mc.stats.sd_y).abs() / mc.stats.sd_y;
    let dur = t0.elapsed().as_secs_f64();
    let pass = mean_rel <= 0.05 && sdx_rel <= 0.20 && sdy_rel <= 0.20 && dur < 10.0;
    report(
        4,
        "oracle consistency",
        pass,
        &format!(
            "mean gap {:.2} ft = {:.2}% of range (≤ 5%), sd rel ({:.1}%, {:.1}%) (≤ 20%), {dur:.2}s (< 10s)",
            mean_gap,
            100.0 * mean_rel,
            100.0 * sdx_rel,
            100.0 * sdy_rel
        ),
    );
}

#[test]
fn criterion_5_random_ic_growth() {
    let sc = nominal_scenario();
    let n = 300;
    let mc_fixed = run_ensemble(&sc, n, 2024, false, None).expect("fixed ensemble");
    let mc_random = run_ensemble(&sc, n, 2024, true, None).expect("random ensemble");
    let mm_fixed = integrate_moments(&sc, false, usize::MAX).expect("fixed moments");
    let mm_random = integrate_moments(&sc, true, usize::MAX).expect("random moments");
    let mc_ok = mc_random.stats.sd_x > mc_fixed.stats.sd_x
        && mc_random.stats.sd_y > mc_fixed.stats.sd_y;
    let mm_ok = mm_random.prediction.sd_x > mm_fixed.prediction.sd_x
        && mm_random.prediction.sd_y > mm_fixed.prediction.sd_y;
    let pass = mc_ok && mm_ok;
    report(
        5,
        "random-IC growth",
        pass,
        &format!(
            "MC sd ({:.2},{:.2}) > ({:.2},{:.2}); moments sd ({:.2},{:.2}) > ({:.2},{:.2})",
            mc_random.stats.sd_x,
            mc_random.stats.sd_y,
            mc_fixed.stats.sd_x,
            mc_fixed.stats.sd_y,
            mm_random.prediction.sd_x,
            mm_random.prediction.sd_y,
            mm_fixed.prediction.sd_x,
            mm_fixed.prediction.sd_y
        ),
    );
}

#[test]
fn criterion_6_control_dispersion_reduction() {
    let t0 = Instant::now();
    let sc = guided_scenario();
    let study = closed_loop_simulate(&sc, 2024, 500).expect("control study");
    let dur = t0.elapsed().as_secs_f64();
    let pass = study.trace_ratio < 0.7 && dur < 15.0;
    report(
        6,
        "control dispersion reduction",
        pass,
        &format!(
            "trace ratio {:.4} (< 0.7) over {} paired runs, {dur:.2}s (< 15s)",
            study.trace_ratio,
            study.controlled.n
        ),
    );
}

#[test]
fn criterion_7_integrator_order() {
    let sc = spin_free();
    let impact_x = |dt: f64| {
        let mut sc = sc.clone();
        sc.integration.step = dt;
        let mut stream = RandomStream::new(0);
        simulate_trajectory(
            &sc,
            &mut stream,
            None,
            &SimOptions {
                zero_noise: true,
                record_every: usize::MAX,
                sample_ic: false,
            },
        )
        .expect("zero-noise trajectory")
        .impact
        .expect("impact")
        .x
    };
    let d0 = 0.16;
    let reference = impact_x(d0 / 16.0);
    let errs: Vec<f64> = [d0, d0 / 2.0, d0 / 4.0]
        .iter()
        .map(|&dt| impact_x(dt) - reference)
        .collect();
    let r1 = errs[0] / errs[1];
    let r2 = errs[1] / errs[2];
    let in_band = |r: f64| (1.5..=2.5).contains(&r);
    let pass = in_band(r1) && in_band(r2);
    report(
        7,
        "integrator order",
        pass,
        &format!("halving ratios ({r1:.3}, {r2:.3}) in [1.5, 2.5], errors {errs:?}"),
    );
}

#[test]
fn criterion_8_thread_determinism() {
    let bin = env!("CARGO_BIN_EXE_ippkit");
    let tmp = std::env::temp_dir().join(format!("ippkit-acc8-{}", std::process::id()));
    let run = |cmd: &[&str], threads: &str, out: &std::path::Path| {
        let status = Command::new(bin)
            .args(cmd)
            .args(["--out", out.to_str().unwrap()])
            .env("IPP_THREADS", threads)
            .output()
            .expect("spawn ippkit");
        assert!(
            status.status.success(),
            "ippkit failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    };
    let read = |dir: &std::path::Path, name: &str| std::fs::read(dir.join(name)).expect(name);
    let mc = ["montecarlo", "--runs", "200", "--seed", "42"];
    let ctl = ["control", "--scenario", "guided", "--runs", "60", "--seed", "7"];
    let d1 = tmp.join("t1");
    let d2 = tmp.join("t2");
    std::fs::create_dir_all(&d1).unwrap();
    std::fs::create_dir_all(&d2).unwrap();
    run(&mc, "1", &d1);
    run(&mc, "2", &d2);
    let mc_same = read(&d1, "impacts.csv") == read(&d2, "impacts.csv");
    run(&ctl, "2", &d1);
    run(&ctl, "1", &d2);
    let ctl_same = read(&d1, "controlled_impacts.csv") == read(&d2, "controlled_impacts.csv")
        && read(&d1, "uncontrolled_impacts.csv") == read(&d2, "uncontrolled_impacts.csv");
    let _ = std::fs::remove_dir_all(&tmp);
    let pass = mc_same && ctl_same;
    report(
        8,
        "determinism",
        pass,
        &format!("montecarlo identical: {mc_same}, control identical: {ctl_same} across IPP_THREADS=1/2"),
    );
}
