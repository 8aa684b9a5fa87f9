//! Stochastic integration of the noisy projectile model, impact detection,
//! and Monte Carlo ensembles with reproducible per-run substreams.
//!
//! The stepper is Euler–Maruyama with one refinement: the gyroscopic
//! (q̃, r̃) coupling — a pure rotation at rate ω = (Ixx D / Iyy V) p̃, which
//! reaches hundreds of radians per unit τ at high spin — is applied as an
//! exact rotation over the step instead of an explicit-Euler update. A
//! naive explicit step amplifies that rotation unconditionally at any
//! practical step size; splitting it out leaves the remaining drift slow
//! and well-conditioned. With p̃ = 0 the rotation is the identity and the
//! step reduces to explicit Euler–Maruyama exactly.
//!
//! Noise enters additively on x, y, z only, and positions feed back into
//! no other equation, so every non-position state is deterministic given
//! the initial condition. The fixed-IC ensemble path exploits this: the
//! shared deterministic skeleton is integrated once and each run only
//! accumulates its own Brownian sums.

use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::{apply_canards, canard_forces, check_state, DriftCoeffs, MlmState};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scenario::{sample_initial_state, Scenario};

/// Per-step guidance hook; returns the four canard deflections.
pub trait StepController {
    fn command(&mut self, tau: f64, s: &MlmState) -> Result<[f64; 4]>;
}

/// Three independent Wiener increments of variance `dt`.
pub fn wiener_increments(stream: &mut RandomStream, dt: f64) -> [f64; 3] {
    let s = dt.sqrt();
    [
        s * stream.standard_normal(),
        s * stream.standard_normal(),
        s * stream.standard_normal(),
    ]
}

/// One stochastic step (gyro-split Euler–Maruyama).
pub fn em_step(
    s: &MlmState,
    dt: f64,
    stream: &mut RandomStream,
    sc: &Scenario,
    canard_command: Option<&[f64; 4]>,
) -> Result<MlmState> {
    let coeffs = DriftCoeffs::new(&sc.projectile, &sc.wind);
    let dw = wiener_increments(stream, dt);
    let noise = [
        sc.noise.a1 * dw[0],
        sc.noise.a2 * dw[1],
        sc.noise.a3 * dw[2],
    ];
    step_core(s, dt, &coeffs, sc, canard_command, noise)
}

fn step_core(
    s: &MlmState,
    dt: f64,
    coeffs: &DriftCoeffs,
    sc: &Scenario,
    canard_command: Option<&[f64; 4]>,
    noise: [f64; 3],
) -> Result<MlmState> {
    check_state(s)?;
    let mut f = coeffs.eval_without_gyro(s);
    if let Some(lambdas) = canard_command {
        let cfg = sc.canards.as_ref().ok_or_else(|| {
            Error::Usage("canard command supplied but scenario has no canards".into())
        })?;
        let forces = canard_forces(s, lambdas, cfg, &sc.projectile)?;
        apply_canards(&mut f, &forces, &sc.projectile, s);
    }
    let omega = coeffs.gyro_rate(s);
    let mut a = s.to_array();
    for i in 0..12 {
        a[i] += dt * f[i];
    }
    let (sw, cw) = (omega * dt).sin_cos();
    let (q, r) = (a[10], a[11]);
    a[10] = cw * q - sw * r;
    a[11] = sw * q + cw * r;
    a[0] += noise[0];
    a[1] += noise[1];
    a[2] += noise[2];
    let next = MlmState::from_array(&a);
    if !next.is_finite() {
        return Err(Error::Singularity(format!(
            "non-finite state after step from tau-local V = {}",
            s.v_total
        )));
    }
    Ok(next)
}

/// Ground-crossing record in the model's independent variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactRecord {
    pub tau: f64,
    pub x: f64,
    pub y: f64,
}

/// Interpolated ground crossing between two samples, if z crosses 0 from
/// below. Callers arm this after apogee so the launch point (z = 0) is
/// never declared an impact.
pub fn detect_impact(prev: (f64, &MlmState), next: (f64, &MlmState)) -> Option<ImpactRecord> {
    let (t0, s0) = prev;
    let (t1, s1) = next;
    if s0.z < 0.0 && s1.z >= 0.0 {
        let frac = -s0.z / (s1.z - s0.z);
        Some(ImpactRecord {
            tau: t0 + frac * (t1 - t0),
            x: s0.x + frac * (s1.x - s0.x),
            y: s0.y + frac * (s1.y - s0.y),
        })
    } else {
        None
    }
}

/// Recorded path of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, MlmState)>,
    pub impact: Option<ImpactRecord>,
}

/// Options for a single simulated run.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Sample the launch state from the scenario distribution instead of
    /// pinning it at the means. Either way 12 launch draws are consumed,
    /// so downstream noise draws line up across the two modes.
    pub sample_ic: bool,
    /// Keep every k-th sample (k >= 1); the final state is always kept.
    pub record_every: usize,
    /// Suppress diffusion (draws are still consumed).
    pub zero_noise: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            sample_ic: false,
            record_every: 1,
            zero_noise: false,
        }
    }
}

/// Integrate one run until impact or `max_span`.
pub fn simulate_trajectory<'c>(
    sc: &Scenario,
    stream: &mut RandomStream,
    mut controller: Option<&mut (dyn StepController + 'c)>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let coeffs = DriftCoeffs::new(&sc.projectile, &sc.wind);
    let dt = sc.step();
    let record_every = opts.record_every.max(1);
    let dist = if opts.sample_ic {
        sc.initial.clone()
    } else {
        sc.initial.to_point_mass()
    };
    let mut s = sample_initial_state(&dist, stream);
    let amp = if opts.zero_noise {
        [0.0; 3]
    } else {
        [sc.noise.a1, sc.noise.a2, sc.noise.a3]
    };
    let mut samples = vec![(0.0, s)];
    let mut impact = None;
    let n_steps = (sc.max_span() / dt).ceil() as usize;
    let mut armed = s.theta < 0.0;
    let mut tau = 0.0;
    for k in 0..n_steps {
        let lambdas = match controller.as_deref_mut() {
            Some(c) => Some(c.command(tau, &s)?),
            None => None,
        };
        let dw = wiener_increments(stream, dt);
        let noise = [amp[0] * dw[0], amp[1] * dw[1], amp[2] * dw[2]];
        let next = step_core(&s, dt, &coeffs, sc, lambdas.as_ref(), noise)?;
        let next_tau = (k + 1) as f64 * dt;
        if armed {
            if let Some(rec) = detect_impact((tau, &s), (next_tau, &next)) {
                impact = Some(rec);
                s = next;
                tau = next_tau;
                break;
            }
        } else if next.theta < 0.0 {
            armed = true;
        }
        s = next;
        tau = next_tau;
        if (k + 1) % record_every == 0 {
            samples.push((tau, s));
        }
    }
    if samples.last().map(|(t, _)| *t) != Some(tau) {
        samples.push((tau, s));
    }
    Ok(Trajectory { samples, impact })
}

/// One impact point of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactPoint {
    pub run: usize,
    pub tau: f64,
    pub x: f64,
    pub y: f64,
}

/// 1-σ dispersion ellipse of the impact scatter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Orientation of the major axis from +x (rad).
    pub angle: f64,
}

/// Impact-point statistics over the runs that landed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ImpactStats {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub cov: [[f64; 2]; 2],
    pub sd_x: f64,
    pub sd_y: f64,
    pub ellipse: Ellipse,
}

impl ImpactStats {
    pub fn from_points(pts: &[(f64, f64)]) -> Result<ImpactStats> {
        if pts.len() < 2 {
            return Err(Error::Statistics(format!(
                "need at least 2 impacts for statistics, got {}",
                pts.len()
            )));
        }
        let n = pts.len() as f64;
        let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let mut cxx = 0.0;
        let mut cxy = 0.0;
        let mut cyy = 0.0;
        for (x, y) in pts {
            let dx = x - mean_x;
            let dy = y - mean_y;
            cxx += dx * dx;
            cxy += dx * dy;
            cyy += dy * dy;
        }
        let denom = n - 1.0;
        cxx /= denom;
        cxy /= denom;
        cyy /= denom;
        let t = 0.5 * (cxx + cyy);
        let disc = (0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy).sqrt();
        let l1 = (t + disc).max(0.0);
        let l2 = (t - disc).max(0.0);
        let angle = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
        Ok(ImpactStats {
            n: pts.len(),
            mean_x,
            mean_y,
            cov: [[cxx, cxy], [cxy, cyy]],
            sd_x: cxx.sqrt(),
            sd_y: cyy.sqrt(),
            ellipse: Ellipse {
                cx: mean_x,
                cy: mean_y,
                semi_major: l1.sqrt(),
                semi_minor: l2.sqrt(),
                angle,
            },
        })
    }

    pub fn trace(&self) -> f64 {
        self.cov[0][0] + self.cov[1][1]
    }
}

/// Ensemble output: statistics, the per-run impact list, and the number of
/// runs that never landed inside the horizon.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub stats: ImpactStats,
    pub impacts: Vec<ImpactPoint>,
    pub non_impacting: usize,
}

/// Cap for ensemble parallelism from `IPP_THREADS` (0 or unset = auto).
pub fn configured_threads() -> usize {
    std::env::var("IPP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0)
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = configured_threads();
    if threads == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(f)
    }
}

/// Run `n` independent realizations; run `i` draws from substream
/// `base_seed ^ i`. Fixed-IC, uncontrolled ensembles reuse the shared
/// deterministic skeleton; anything else integrates each run in full.
pub fn run_ensemble(
    sc: &Scenario,
    n: usize,
    base_seed: u64,
    random_ic: bool,
    make_controller: Option<&(dyn Fn() -> Box<dyn StepController> + Sync)>,
) -> Result<EnsembleResult> {
    if n < 2 {
        return Err(Error::Usage(format!("ensemble size must be >= 2, got {n}")));
    }
    if !random_ic && make_controller.is_none() {
        if let Some(result) = run_ensemble_skeleton(sc, n, base_seed)? {
            return Ok(result);
        }
    }
    let run_one = |run: usize| -> Result<Option<ImpactPoint>> {
        let mut stream = RandomStream::substream(base_seed, run as u64);
        let mut controller = make_controller.map(|mk| mk());
        let opts = SimOptions {
            sample_ic: random_ic,
            record_every: usize::MAX,
            zero_noise: false,
        };
        let impact =
            simulate_trajectory(sc, &mut stream, controller.as_deref_mut(), &opts)?.impact;
        Ok(impact.map(|r| ImpactPoint {
            run,
            tau: r.tau,
            x: r.x,
            y: r.y,
        }))
    };
    let outcomes: Result<Vec<Option<ImpactPoint>>> =
        with_pool(|| (0..n).into_par_iter().map(run_one).collect());
    collect_ensemble(outcomes?, n)
}

fn collect_ensemble(outcomes: Vec<Option<ImpactPoint>>, n: usize) -> Result<EnsembleResult> {
    let impacts: Vec<ImpactPoint> = outcomes.into_iter().flatten().collect();
    let non_impacting = n - impacts.len();
    let pts: Vec<(f64, f64)> = impacts.iter().map(|p| (p.x, p.y)).collect();
    let stats = ImpactStats::from_points(&pts)?;
    Ok(EnsembleResult {
        stats,
        impacts,
        non_impacting,
    })
}

/// Shared deterministic path for the fixed-IC fast path: positions, the
/// arming flag, and the step grid.
struct Skeleton {
    dt: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    armed: Vec<bool>,
    /// First step index of the per-run fine walk.
    start: usize,
}

/// Fast ensemble for fixed ICs without control. Every non-position state
/// is deterministic (noise enters positions only and positions drive
/// nothing), so each run is the skeleton plus its own Brownian sums. The
/// walk starts from a bulk Gaussian jump to just above the earliest
/// altitude any run could plausibly reach ground (a 6-σ guard band), and
/// only the final stretch is stepped increment by increment.
///
/// Returns Ok(None) when the deterministic path never lands, in which
/// case the caller falls back to full per-run integration.
fn run_ensemble_skeleton(
    sc: &Scenario,
    n: usize,
    base_seed: u64,
) -> Result<Option<EnsembleResult>> {
    let coeffs = DriftCoeffs::new(&sc.projectile, &sc.wind);
    let dt = sc.step();
    let n_steps = (sc.max_span() / dt).ceil() as usize;
    let mut s = sc.initial.mean_state();
    let mut x = Vec::with_capacity(n_steps + 1);
    let mut y = Vec::with_capacity(n_steps + 1);
    let mut z = Vec::with_capacity(n_steps + 1);
    let mut armed_v = Vec::with_capacity(n_steps + 1);
    let mut armed = s.theta < 0.0;
    x.push(s.x);
    y.push(s.y);
    z.push(s.z);
    armed_v.push(armed);
    let mut mean_impact_step = None;
    let sigma_guard = {
        let horizon = sc.max_span();
        6.0 * sc.noise.a3.max(1e-12) * horizon.sqrt() + 1.0
    };
    for k in 0..n_steps {
        let next = step_core(&s, dt, &coeffs, sc, None, [0.0; 3])?;
        if next.theta < 0.0 {
            armed = true;
        }
        if armed && mean_impact_step.is_none() && s.z < 0.0 && next.z >= 0.0 {
            mean_impact_step = Some(k + 1);
        }
        s = next;
        x.push(s.x);
        y.push(s.y);
        z.push(s.z);
        armed_v.push(armed);
        // once the mean path has landed, extend far enough that a run
        // pushed down by noise can still come back up through z = 0
        if let Some(m) = mean_impact_step {
            if s.z > sigma_guard || k + 1 >= m + 4 * ((sigma_guard / (dt * 0.05)) as usize) {
                break;
            }
        }
    }
    if mean_impact_step.is_none() {
        return Ok(None);
    }
    // earliest index where a +6-σ excursion could already touch ground
    let mut start = z.len() - 1;
    for (k, (&zk, &ak)) in z.iter().zip(armed_v.iter()).enumerate() {
        let guard = 6.0 * sc.noise.a3 * ((k as f64) * dt).sqrt() + 1e-9;
        if ak && zk >= -guard {
            start = k;
            break;
        }
    }
    let skel = Skeleton {
        dt,
        x,
        y,
        z,
        armed: armed_v,
        start,
    };
    let amp = [sc.noise.a1, sc.noise.a2, sc.noise.a3];
    let run_one = |run: usize| -> Option<ImpactPoint> {
        let mut stream = RandomStream::substream(base_seed, run as u64);
        // launch draws (fixed ICs: values unused, layout preserved)
        for _ in 0..12 {
            let _ = stream.standard_normal();
        }
        let t_start = skel.start as f64 * skel.dt;
        let mut b = [0.0f64; 3];
        if skel.start > 0 {
            let sd = t_start.sqrt();
            for i in 0..3 {
                b[i] = amp[i] * sd * stream.standard_normal();
            }
        }
        let sqdt = skel.dt.sqrt();
        let mut prev_z = skel.z[skel.start] + b[2];
        let mut prev_x = skel.x[skel.start] + b[0];
        let mut prev_y = skel.y[skel.start] + b[1];
        if skel.armed[skel.start] && prev_z >= 0.0 {
            // already at or below ground after the bulk jump (vanishingly
            // rare); land it at the first evaluated point
            return Some(ImpactPoint {
                run,
                tau: t_start,
                x: prev_x,
                y: prev_y,
            });
        }
        for k in skel.start + 1..skel.z.len() {
            for (i, bi) in b.iter_mut().enumerate() {
                *bi += amp[i] * sqdt * stream.standard_normal();
            }
            let zk = skel.z[k] + b[2];
            let xk = skel.x[k] + b[0];
            let yk = skel.y[k] + b[1];
            if skel.armed[k] && prev_z < 0.0 && zk >= 0.0 {
                let frac = -prev_z / (zk - prev_z);
                let t0 = (k - 1) as f64 * skel.dt;
                return Some(ImpactPoint {
                    run,
                    tau: t0 + frac * skel.dt,
                    x: prev_x + frac * (xk - prev_x),
                    y: prev_y + frac * (yk - prev_y),
                });
            }
            prev_z = zk;
            prev_x = xk;
            prev_y = yk;
        }
        None
    };
    let outcomes: Vec<Option<ImpactPoint>> =
        with_pool(|| (0..n).into_par_iter().map(run_one).collect());
    Ok(Some(collect_ensemble(outcomes, n)?))
}

fn sig(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits - 1, v)
}

/// Impact list CSV: `run,tau,x,y`, 6 significant digits.
pub fn write_impacts_csv(w: &mut impl Write, impacts: &[ImpactPoint]) -> std::io::Result<()> {
    writeln!(w, "run,tau,x,y")?;
    for p in impacts {
        writeln!(w, "{},{},{},{}", p.run, sig(p.tau, 6), sig(p.x, 6), sig(p.y, 6))?;
    }
    Ok(())
}

/// Trajectory CSV: full state per sample, 9 significant digits.
pub fn write_trajectory_csv(w: &mut impl Write, traj: &Trajectory) -> std::io::Result<()> {
    writeln!(w, "tau,x,y,z,phi,theta,psi,V,vt,wt,pt,qt,rt")?;
    for (tau, s) in &traj.samples {
        let a = s.to_array();
        let cols: Vec<String> = std::iter::once(sig(*tau, 9))
            .chain(a.iter().map(|v| sig(*v, 9)))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::nominal_scenario;
    use approx::assert_relative_eq;

    #[test]
    fn wiener_increment_statistics() {
        let mut stream = RandomStream::new(7);
        let dt = 0.01;
        let n = 200_000;
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut cross = 0.0f64;
        for _ in 0..n {
            let dw = wiener_increments(&mut stream, dt);
            for i in 0..3 {
                sum[i] += dw[i];
                sq[i] += dw[i] * dw[i];
            }
            cross += dw[0] * dw[1];
        }
        for i in 0..3 {
            let var = sq[i] / n as f64 - (sum[i] / n as f64).powi(2);
            assert_relative_eq!(var, dt, max_relative = 0.02);
        }
        let cov = cross / n as f64;
        assert!(cov.abs() < 3.0 * dt / (n as f64).sqrt());
    }

    #[test]
    fn wiener_determinism() {
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        assert_eq!(wiener_increments(&mut a, 0.5), wiener_increments(&mut b, 0.5));
    }

    #[test]
    fn em_step_zero_noise_zero_spin_is_explicit_euler() {
        let mut sc = nominal_scenario();
        sc.noise.a1 = 0.0;
        sc.noise.a2 = 0.0;
        sc.noise.a3 = 0.0;
        let mut s = sc.initial.mean_state();
        s.p_t = 0.0; // gyro rotation is the identity
        let dt = 1e-3;
        let mut stream = RandomStream::new(1);
        let next = em_step(&s, dt, &mut stream, &sc, None).unwrap();
        let f = crate::dynamics::mlm_drift(&s, &sc.projectile, &sc.wind).unwrap();
        let a0 = s.to_array();
        let a1 = next.to_array();
        for i in 0..12 {
            assert_relative_eq!(a1[i], a0[i] + dt * f[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn em_step_channel_isolation() {
        let mut sc = nominal_scenario();
        sc.noise.a1 = 0.0;
        sc.noise.a2 = 0.0;
        sc.noise.a3 = 1.0;
        let s = sc.initial.mean_state();
        let dt = 1e-3;
        let mut noisy = RandomStream::new(9);
        let next = em_step(&s, dt, &mut noisy, &sc, None).unwrap();
        sc.noise.a3 = 0.0;
        let mut quiet = RandomStream::new(9);
        let det = em_step(&s, dt, &mut quiet, &sc, None).unwrap();
        assert_eq!(next.x, det.x);
        assert_eq!(next.y, det.y);
        assert!(next.z != det.z);
    }

    #[test]
    fn em_step_golden_one_step() {
        // pinned after verifying the step against the hand-evaluated drift;
        // regenerate with `cargo test golden -- --nocapture` and the
        // GOLDEN_PRINT=1 environment variable after an intentional change
        let sc = nominal_scenario();
        let s = sc.initial.mean_state();
        let mut stream = RandomStream::new(2024);
        let next = em_step(&s, sc.step(), &mut stream, &sc, None).unwrap();
        let a = next.to_array();
        if std::env::var("GOLDEN_PRINT").is_ok() {
            for v in a {
                println!("{v:.17e},");
            }
        }
        let golden = GOLDEN_STEP;
        for i in 0..12 {
            assert_relative_eq!(a[i], golden[i], max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    const GOLDEN_STEP: [f64; 12] = [
        -1.062_029_713_698_702e-2,
        2.445_837_981_987_924_3e-2,
        7.314_948_951_530_099e-3,
        2.901_716_316_796_25,
        2.670_018_464_253_75e-1,
        -7.006_855_698_926_791e-3,
        3.999_981_410_265_687e2,
        3.215_629_868_664_733e-3,
        1.442_348_576_754_783e-3,
        4.021_338_755_794_937e2,
        4.719_519_793_871_772e-1,
        -1.579_218_080_003_875_5,
    ];

    #[test]
    fn detect_impact_midpoint() {
        let sc = nominal_scenario();
        let mut a = sc.initial.mean_state();
        let mut b = a;
        a.z = -1.0;
        a.x = 100.0;
        b.z = 1.0;
        b.x = 102.0;
        let r = detect_impact((0.0, &a), (1.0, &b)).unwrap();
        assert_relative_eq!(r.x, 101.0, epsilon = 1e-12);
        assert_relative_eq!(r.tau, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn detect_impact_requires_crossing() {
        let sc = nominal_scenario();
        let mut a = sc.initial.mean_state();
        let mut b = a;
        a.z = -3.0;
        b.z = -1.0;
        assert!(detect_impact((0.0, &a), (1.0, &b)).is_none());
    }

    #[test]
    fn detect_impact_linear_root_position() {
        let sc = nominal_scenario();
        let mut a = sc.initial.mean_state();
        let mut b = a;
        a.z = -3.0;
        b.z = 1.0;
        let r = detect_impact((2.0, &a), (3.0, &b)).unwrap();
        assert_relative_eq!(r.tau, 2.75, epsilon = 1e-12);
    }
}
