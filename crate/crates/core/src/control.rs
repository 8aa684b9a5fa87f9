//! Canard guidance loop: desired-trajectory table, error geometry, the
//! feedback law, and paired controlled/uncontrolled ensemble studies.
//!
//! The "uncontrolled" arm of a paired study flies the same airframe with
//! the canards frozen at zero deflection, so the measured dispersion
//! ratio isolates the effect of the feedback itself (and a zero-gain
//! controller reproduces the uncontrolled arm exactly).

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::MlmState;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scenario::{CanardConfig, ControlGains, Scenario};
use crate::sde::{
    simulate_trajectory, ImpactPoint, ImpactStats, SimOptions, StepController, Trajectory,
};

/// Pre-defined flight path, sampled on strictly increasing downrange x.
#[derive(Debug, Clone)]
pub struct DesiredTrajectory {
    pub tau: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl DesiredTrajectory {
    pub fn from_samples(tau: Vec<f64>, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() || x.len() != z.len() || x.len() != tau.len() {
            return Err(Error::validation(
                "desired_trajectory",
                "need at least 2 samples of equal length",
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation(
                "desired_trajectory.x",
                "downrange x must be strictly increasing",
            ));
        }
        Ok(DesiredTrajectory { tau, x, y, z })
    }

    /// Resample a recorded trajectory onto its own (monotone) x grid.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let mut tau = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        let mut last_x = f64::NEG_INFINITY;
        for (t, s) in &traj.samples {
            if s.x > last_x {
                tau.push(*t);
                x.push(s.x);
                y.push(s.y);
                z.push(s.z);
                last_x = s.x;
            }
        }
        DesiredTrajectory::from_samples(tau, x, y, z)
    }

    /// Parse a `x,y,z` CSV (header required).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty desired-trajectory file".into()))?;
        if header.trim() != "x,y,z" {
            return Err(Error::Parse(format!(
                "desired-trajectory header must be `x,y,z`, got `{header}`"
            )));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!(
                    "desired-trajectory line {}: expected 3 columns",
                    ln + 2
                )));
            }
            let mut vals = [0.0f64; 3];
            for (i, c) in cols.iter().enumerate() {
                vals[i] = c.trim().parse().map_err(|_| {
                    Error::Parse(format!("desired-trajectory line {}: bad number `{c}`", ln + 2))
                })?;
            }
            x.push(vals[0]);
            y.push(vals[1]);
            z.push(vals[2]);
        }
        let tau = (0..x.len()).map(|i| i as f64).collect();
        DesiredTrajectory::from_samples(tau, x, y, z)
    }

    pub fn to_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "x,y,z")?;
        for i in 0..self.x.len() {
            writeln!(w, "{},{},{}", self.x[i], self.y[i], self.z[i])?;
        }
        Ok(())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Linear interpolation of (y_d, z_d) at downrange x.
    pub fn lookup(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.x_range();
        if x < lo || x > hi {
            return Err(Error::Usage(format!(
                "desired-trajectory lookup at x = {x} outside [{lo}, {hi}]"
            )));
        }
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => return Ok((self.y[k], self.z[k])),
            Err(k) => k,
        };
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let f = (x - x0) / (x1 - x0);
        Ok((
            self.y[k - 1] + f * (self.y[k] - self.y[k - 1]),
            self.z[k - 1] + f * (self.z[k] - self.z[k - 1]),
        ))
    }

    /// Clamped lookup for in-loop use near the table ends.
    fn lookup_clamped(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.x_range();
        self.lookup(x.clamp(lo, hi)).expect("clamped into range")
    }
}

/// The zero-noise mean-launch arc of the scenario, as the default desired
/// trajectory.
pub fn desired_trajectory(sc: &Scenario) -> Result<DesiredTrajectory> {
    let mut stream = RandomStream::new(0);
    let traj = simulate_trajectory(
        sc,
        &mut stream,
        None,
        &SimOptions {
            zero_noise: true,
            record_every: 1,
            sample_ic: false,
        },
    )?;
    DesiredTrajectory::from_trajectory(&traj)
}

/// Position errors and the derived angle errors toward the lookahead
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceErrors {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub theta_e: f64,
    pub psi_e: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Errors toward the desired point one lookahead distance downrange.
pub fn compute_errors(
    s: &MlmState,
    d: &DesiredTrajectory,
    gains: &ControlGains,
) -> Result<GuidanceErrors> {
    let x_t = s.x + gains.lookahead;
    let (y_d, z_d) = d.lookup(x_t)?;
    errors_at(s, gains.lookahead, y_d - s.y, z_d - s.z)
}

fn errors_at(s: &MlmState, e1: f64, e2: f64, e3: f64) -> Result<GuidanceErrors> {
    let axial2 = s.v_total * s.v_total - s.v_t * s.v_t - s.w_t * s.w_t;
    if axial2 <= 0.0 {
        return Err(Error::Singularity(format!(
            "axial velocity reconstruction failed: V^2 - v^2 - w^2 = {axial2}"
        )));
    }
    let u = axial2.sqrt();
    let alpha = (s.w_t / u).atan();
    let beta = (s.v_t / u).atan();
    Ok(GuidanceErrors {
        e1,
        e2,
        e3,
        theta_e: alpha - (e3 / e1).atan(),
        psi_e: -beta + (e2 / e1).atan(),
        alpha,
        beta,
    })
}

/// The four commanded deflections plus the intermediate channel errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanardCommand {
    pub lambda: [f64; 4],
    pub e_phi: f64,
    pub e_theta: f64,
    pub e_psi: f64,
    pub saturated: bool,
}

fn wrap_pi(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    } else if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// λ₁ = e_θ − e_φ, λ₂ = e_ψ + e_φ, λ₃ = e_θ + e_φ, λ₄ = e_ψ − e_φ,
/// clamped to the deflection limit. The roll channel feeds back the
/// fixed-frame roll rate and the roll angle wrapped to (−π, π].
pub fn feedback_law(
    s: &MlmState,
    err: &GuidanceErrors,
    gains: &ControlGains,
    limit: f64,
) -> CanardCommand {
    let e_phi = gains.Kp * s.p_t + gains.Kphi * wrap_pi(s.phi);
    let e_theta = gains.Ktheta * err.theta_e;
    let e_psi = gains.Kpsi * err.psi_e;
    let raw = [
        e_theta - e_phi,
        e_psi + e_phi,
        e_theta + e_phi,
        e_psi - e_phi,
    ];
    let mut lambda = [0.0; 4];
    let mut saturated = false;
    for i in 0..4 {
        lambda[i] = raw[i].clamp(-limit, limit);
        if lambda[i] != raw[i] {
            saturated = true;
        }
    }
    CanardCommand {
        lambda,
        e_phi,
        e_theta,
        e_psi,
        saturated,
    }
}

/// One row of the per-step control log.
#[derive(Debug, Clone, Copy)]
pub struct ControlLogRow {
    pub tau: f64,
    pub err: GuidanceErrors,
    pub cmd: CanardCommand,
}

/// Control log CSV: `tau,e1,e2,e3,thetaE,psiE,l1,l2,l3,l4,saturated`.
pub fn write_control_log_csv(w: &mut impl Write, log: &[ControlLogRow]) -> std::io::Result<()> {
    writeln!(w, "tau,e1,e2,e3,thetaE,psiE,l1,l2,l3,l4,saturated")?;
    let sig = |v: f64| format!("{:.8e}", v);
    for r in log {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            sig(r.tau),
            sig(r.err.e1),
            sig(r.err.e2),
            sig(r.err.e3),
            sig(r.err.theta_e),
            sig(r.err.psi_e),
            sig(r.cmd.lambda[0]),
            sig(r.cmd.lambda[1]),
            sig(r.cmd.lambda[2]),
            sig(r.cmd.lambda[3]),
            u8::from(r.cmd.saturated),
        )?;
    }
    Ok(())
}

/// Per-run guidance state: evaluates the error geometry and feedback law
/// each step.
pub struct GuidanceController<'a> {
    desired: &'a DesiredTrajectory,
    gains: ControlGains,
    limit: f64,
    pub log: Option<Vec<ControlLogRow>>,
}

impl<'a> GuidanceController<'a> {
    pub fn new(desired: &'a DesiredTrajectory, gains: &ControlGains, cfg: &CanardConfig) -> Self {
        GuidanceController {
            desired,
            gains: gains.clone(),
            limit: cfg.deflection_limit,
            log: None,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }
}

impl StepController for GuidanceController<'_> {
    fn command(&mut self, tau: f64, s: &MlmState) -> Result<[f64; 4]> {
        let x_t = s.x + self.gains.lookahead;
        let (y_d, z_d) = self.desired.lookup_clamped(x_t);
        let err = errors_at(s, self.gains.lookahead, y_d - s.y, z_d - s.z)?;
        let cmd = feedback_law(s, &err, &self.gains, self.limit);
        if let Some(log) = &mut self.log {
            log.push(ControlLogRow { tau, err, cmd });
        }
        Ok(cmd.lambda)
    }
}

/// Frozen zero-deflection canards: the paired study's baseline arm.
pub struct ZeroDeflection;

impl StepController for ZeroDeflection {
    fn command(&mut self, _tau: f64, _s: &MlmState) -> Result<[f64; 4]> {
        Ok([0.0; 4])
    }
}

/// Outcome of a paired controlled/uncontrolled ensemble study.
pub struct ControlStudy {
    pub controlled: ImpactStats,
    pub uncontrolled: ImpactStats,
    pub controlled_impacts: Vec<ImpactPoint>,
    pub uncontrolled_impacts: Vec<ImpactPoint>,
    pub non_impacting: usize,
    pub trace_ratio: f64,
    /// Control log of run 0's guided arm.
    pub log: Vec<ControlLogRow>,
}

/// Run `n` paired realizations over identical noise substreams, with and
/// without the guidance loop, and report both impact statistics plus the
/// covariance-trace ratio.
pub fn closed_loop_simulate(sc: &Scenario, base_seed: u64, n: usize) -> Result<ControlStudy> {
    let cfg = sc
        .canards
        .as_ref()
        .ok_or_else(|| Error::Usage("scenario has no canards section".into()))?;
    let gains = sc
        .gains
        .as_ref()
        .ok_or_else(|| Error::Usage("scenario has no gains section".into()))?;
    if n < 2 {
        return Err(Error::Usage(format!("ensemble size must be >= 2, got {n}")));
    }
    let desired = desired_trajectory(sc)?;
    let opts = SimOptions {
        sample_ic: false,
        record_every: usize::MAX,
        zero_noise: false,
    };
    type PairOutcome = (Option<ImpactPoint>, Option<ImpactPoint>, Vec<ControlLogRow>);
    let run_pair = |run: usize| -> Result<PairOutcome> {
        let mut ctrl = GuidanceController::new(&desired, gains, cfg);
        if run == 0 {
            ctrl = ctrl.with_log();
        }
        let mut stream = RandomStream::substream(base_seed, run as u64);
        let con = simulate_trajectory(sc, &mut stream, Some(&mut ctrl), &opts)?;
        let mut base = ZeroDeflection;
        let mut stream = RandomStream::substream(base_seed, run as u64);
        let unc = simulate_trajectory(sc, &mut stream, Some(&mut base), &opts)?;
        let to_point = |rec: crate::sde::ImpactRecord| ImpactPoint {
            run,
            tau: rec.tau,
            x: rec.x,
            y: rec.y,
        };
        Ok((
            con.impact.map(to_point),
            unc.impact.map(to_point),
            ctrl.log.unwrap_or_default(),
        ))
    };
    let outcomes: Result<Vec<PairOutcome>> = (0..n).into_par_iter().map(run_pair).collect();
    let outcomes = outcomes?;
    let mut controlled_impacts = Vec::new();
    let mut uncontrolled_impacts = Vec::new();
    let mut log = Vec::new();
    let mut non_impacting = 0;
    for (run, (c, u, l)) in outcomes.into_iter().enumerate() {
        // keep only pairs where both arms landed, so the ratio compares
        // identical noise realizations
        match (c, u) {
            (Some(c), Some(u)) => {
                controlled_impacts.push(c);
                uncontrolled_impacts.push(u);
            }
            _ => non_impacting += 1,
        }
        if run == 0 {
            log = l;
        }
    }
    let cpts: Vec<(f64, f64)> = controlled_impacts.iter().map(|p| (p.x, p.y)).collect();
    let upts: Vec<(f64, f64)> = uncontrolled_impacts.iter().map(|p| (p.x, p.y)).collect();
    let controlled = ImpactStats::from_points(&cpts)?;
    let uncontrolled = ImpactStats::from_points(&upts)?;
    let trace_ratio = controlled.trace() / uncontrolled.trace();
    Ok(ControlStudy {
        controlled,
        uncontrolled,
        controlled_impacts,
        uncontrolled_impacts,
        non_impacting,
        trace_ratio,
        log,
    })
}
