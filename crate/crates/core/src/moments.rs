//! Mean-field moment propagation for the transformed 14-state system.
//!
//! The pitch trigonometry is replaced by the complex exponential states
//! δ⁺ = e^{jθ}, δ⁻ = e^{-jθ}, which turns every drift right-hand side into
//! polynomials in the 14 states (plus two reciprocal factors handled
//! below). Taking expectations yields ODEs for the retained first and
//! second moments; any moment outside the retained set is factorized into
//! retained pieces (mean-field closure).
//!
//! Reciprocal factors: 1/V is evaluated at the live mean speed ⟨V⟩ each
//! step (freezing it at the launch speed sends the arc far from the
//! simulated one — the speed decays by a factor of ~5 in flight), and
//! 1/cos θ in the ψ dynamics uses κ = 2/(⟨δ⁺⟩+⟨δ⁻⟩).
//!
//! Everything is compiled once per scenario into flat term lists (closure
//! resolution happens at build time, since it depends only on which
//! moments appear, not on their values), so a right-hand-side evaluation
//! is straight arithmetic.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{InitialDistribution, Scenario};

pub const N_STATES: usize = 14;
pub const N_PAIRS: usize = 32;
pub const N_MOMENTS: usize = N_STATES + N_PAIRS;

// transformed-state indices
pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;
pub const PHI: usize = 3;
pub const THETA: usize = 4;
pub const PSI: usize = 5;
pub const V: usize = 6;
pub const VT: usize = 7;
pub const WT: usize = 8;
pub const PT: usize = 9;
pub const QT: usize = 10;
pub const RT: usize = 11;
pub const DP: usize = 12;
pub const DM: usize = 13;

pub const STATE_NAMES: [&str; N_STATES] = [
    "x", "y", "z", "phi", "theta", "psi", "V", "vt", "wt", "pt", "qt", "rt", "dp", "dm",
];

/// Retained pair moments, as unordered index pairs. Order: the 14
/// diagonals, the δ-bearing pairs, the coordinate–velocity pairs, and the
/// roll-rate pairs.
pub const PAIRS: [(usize, usize); N_PAIRS] = [
    (X, X),
    (Y, Y),
    (Z, Z),
    (PHI, PHI),
    (THETA, THETA),
    (PSI, PSI),
    (V, V),
    (VT, VT),
    (WT, WT),
    (PT, PT),
    (QT, QT),
    (RT, RT),
    (DP, DP),
    (DM, DM),
    (X, DP),
    (X, DM),
    (Y, DP),
    (Y, DM),
    (Z, DP),
    (Z, DM),
    (PSI, DP),
    (PSI, DM),
    (WT, DP),
    (WT, DM),
    (QT, DP),
    (QT, DM),
    (Y, VT),
    (Z, WT),
    (PT, VT),
    (PT, WT),
    (PT, QT),
    (PT, RT),
];

/// Retained-pair lookup; `None` means the pair is closed by factorization.
pub fn pair_index(a: usize, b: usize) -> Option<usize> {
    let key = (a.min(b), a.max(b));
    PAIRS
        .iter()
        .position(|&(i, j)| (i.min(j), i.max(j)) == key)
}

/// Closure priority when several retained sub-pairs could be extracted
/// from a third-order moment: diagonals first, then roll-rate pairs, then
/// coordinate–velocity pairs, then δ pairs.
fn pair_rank(idx: usize) -> u8 {
    match idx {
        0..=13 => 0,
        28..=31 => 1,
        26 | 27 => 2,
        _ => 3,
    }
}

/// Retained first and second moments. `m[0..14]` are the means,
/// `m[14..46]` the retained pairs in `PAIRS` order; `v0` is the launch
/// mean speed kept for reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedMoments {
    pub m: [Complex64; N_MOMENTS],
    pub v0: f64,
}

impl TransformedMoments {
    pub fn mean(&self, i: usize) -> Complex64 {
        self.m[i]
    }

    pub fn pair(&self, a: usize, b: usize) -> Option<Complex64> {
        pair_index(a, b).map(|k| self.m[N_STATES + k])
    }

    /// Central second moment of a real state (real part).
    pub fn variance(&self, i: usize) -> f64 {
        let d = self.pair(i, i).expect("diagonal always retained") - self.m[i] * self.m[i];
        d.re
    }
}

/// How one closed moment is evaluated from the retained vector.
#[derive(Debug, Clone, Copy)]
enum Eval {
    One,
    Mean(u8),
    Pair(u8),
    MeanMean(u8, u8),
    PairMean(u8, u8),
    MeanMeanMean(u8, u8, u8),
}

/// Mean-field factorization plan for a multi-index of order <= 3.
fn plan(mono: &[usize]) -> Result<Eval> {
    let mut idx = mono.to_vec();
    idx.sort_unstable();
    match idx.len() {
        0 => Ok(Eval::One),
        1 => Ok(Eval::Mean(idx[0] as u8)),
        2 => match pair_index(idx[0], idx[1]) {
            Some(k) => Ok(Eval::Pair(k as u8)),
            None => Ok(Eval::MeanMean(idx[0] as u8, idx[1] as u8)),
        },
        3 => {
            let splits = [
                (idx[0], idx[1], idx[2]),
                (idx[0], idx[2], idx[1]),
                (idx[1], idx[2], idx[0]),
            ];
            let mut best: Option<(u8, usize, usize)> = None;
            for (a, b, rest) in splits {
                if let Some(k) = pair_index(a, b) {
                    let r = pair_rank(k);
                    if best.map(|(br, _, _)| r < br).unwrap_or(true) {
                        best = Some((r, k, rest));
                    }
                }
            }
            match best {
                Some((_, k, rest)) => Ok(Eval::PairMean(k as u8, rest as u8)),
                None => Ok(Eval::MeanMeanMean(idx[0] as u8, idx[1] as u8, idx[2] as u8)),
            }
        }
        n => Err(Error::Usage(format!(
            "closure only supports moments of order <= 3, got {n}"
        ))),
    }
}

fn eval_plan(e: &Eval, mu: &TransformedMoments) -> Complex64 {
    match *e {
        Eval::One => Complex64::new(1.0, 0.0),
        Eval::Mean(i) => mu.m[i as usize],
        Eval::Pair(k) => mu.m[N_STATES + k as usize],
        Eval::MeanMean(i, j) => mu.m[i as usize] * mu.m[j as usize],
        Eval::PairMean(k, i) => mu.m[N_STATES + k as usize] * mu.m[i as usize],
        Eval::MeanMeanMean(i, j, k) => mu.m[i as usize] * mu.m[j as usize] * mu.m[k as usize],
    }
}

/// Evaluate one (possibly closed) moment from the current retained set.
pub fn closure_factorize(mono: &[usize], mu: &TransformedMoments) -> Result<Complex64> {
    Ok(eval_plan(&plan(mono)?, mu))
}

/// Scaling applied to a term's constant at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CoeffKind {
    Const,
    /// Multiply by 1/⟨V⟩.
    OverV,
    /// Multiply by κ/⟨V⟩, κ = 2/(⟨δ⁺⟩+⟨δ⁻⟩).
    KappaOverV,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    kind: CoeffKind,
    c: Complex64,
    eval: Eval,
}

#[derive(Debug, Clone)]
struct TermSpec {
    kind: CoeffKind,
    c: Complex64,
    mono: Vec<usize>,
}

/// Polynomial drift of the 14 transformed states, as term lists.
fn drift_terms(sc: &Scenario) -> [Vec<TermSpec>; 14] {
    let p = &sc.projectile;
    let d = p.D;
    let g = p.g;
    let (vw, ww) = (sc.wind.vw, sc.wind.ww);
    let pi = std::f64::consts::PI;
    let d3 = d * d * d;
    let d4 = d3 * d;
    let d5 = d4 * d;
    let kna_m = pi * p.rho * d3 * p.CNA / (8.0 * p.m);
    let cx = pi * p.rho * d3 * p.CX0 / (8.0 * p.m);
    let kdd = pi * p.rho * d4 * p.CDD / (8.0 * p.Ixx);
    let klp = pi * p.rho * d5 * p.CLP / (16.0 * p.Ixx);
    let kmq = pi * p.rho * d5 * p.CMQ / (16.0 * p.Iyy);
    let kna_r = pi * p.rho * d3 * p.RMCP * p.CNA / (8.0 * p.Iyy);
    let kmag_num = pi * p.rho * d4 * p.RMCM * p.CYPA / (16.0 * p.Iyy);
    let kgy_num = p.Ixx * p.D / p.Iyy;

    let re = |v: f64| Complex64::new(v, 0.0);
    let im = |v: f64| Complex64::new(0.0, v);
    let t = |kind: CoeffKind, c: Complex64, mono: &[usize]| TermSpec {
        kind,
        c,
        mono: mono.to_vec(),
    };
    use CoeffKind::{Const, KappaOverV, OverV};

    [
        // x' = (D/2)(δ⁺ + δ⁻)                                  [cos θ]
        vec![
            t(Const, re(d / 2.0), &[DP]),
            t(Const, re(d / 2.0), &[DM]),
        ],
        // y' = (D/2)(δ⁺ + δ⁻)ψ + (D/V)ṽ
        vec![
            t(Const, re(d / 2.0), &[DP, PSI]),
            t(Const, re(d / 2.0), &[DM, PSI]),
            t(OverV, re(d), &[VT]),
        ],
        // z' = (jD/2)(δ⁺ − δ⁻) + (D/2V)(δ⁺ + δ⁻)w̃             [−sin θ]
        vec![
            t(Const, im(d / 2.0), &[DP]),
            t(Const, im(-d / 2.0), &[DM]),
            t(OverV, re(d / 2.0), &[DP, WT]),
            t(OverV, re(d / 2.0), &[DM, WT]),
        ],
        // φ' = (D/V)p̃
        vec![t(OverV, re(d), &[PT])],
        // θ' = (D/V)q̃
        vec![t(OverV, re(d), &[QT])],
        // ψ' = D r̃ / (V cos θ)
        vec![t(KappaOverV, re(d), &[RT])],
        // V' = −cx V − (Dg/V) sin θ
        vec![
            t(Const, re(-cx), &[V]),
            t(OverV, im(d * g / 2.0), &[DP]),
            t(OverV, im(-d * g / 2.0), &[DM]),
        ],
        // ṽ' = −kna_m (ṽ − ṽw) − D r̃
        vec![
            t(Const, re(-kna_m), &[VT]),
            t(Const, re(kna_m * vw), &[]),
            t(Const, re(-d), &[RT]),
        ],
        // w̃' = −kna_m (w̃ − w̃w) + D q̃ + (Dg/2V)(δ⁺ + δ⁻)
        vec![
            t(Const, re(-kna_m), &[WT]),
            t(Const, re(kna_m * ww), &[]),
            t(Const, re(d), &[QT]),
            t(OverV, re(d * g / 2.0), &[DP]),
            t(OverV, re(d * g / 2.0), &[DM]),
        ],
        // p̃' = kdd V + klp p̃
        vec![t(Const, re(kdd), &[V]), t(Const, re(klp), &[PT])],
        // q̃' = (kmag/V) p̃ (ṽ − ṽw) + kmq q̃ + kna_r (w̃ − w̃w) − (kgy/V) p̃ r̃
        vec![
            t(OverV, re(kmag_num), &[PT, VT]),
            t(OverV, re(-kmag_num * vw), &[PT]),
            t(Const, re(kmq), &[QT]),
            t(Const, re(kna_r), &[WT]),
            t(Const, re(-kna_r * ww), &[]),
            t(OverV, re(-kgy_num), &[PT, RT]),
        ],
        // r̃' = (kmag/V) p̃ (w̃ − w̃w) + kmq r̃ − kna_r (ṽ − ṽw) + (kgy/V) p̃ q̃
        vec![
            t(OverV, re(kmag_num), &[PT, WT]),
            t(OverV, re(-kmag_num * ww), &[PT]),
            t(Const, re(kmq), &[RT]),
            t(Const, re(-kna_r), &[VT]),
            t(Const, re(kna_r * vw), &[]),
            t(OverV, re(kgy_num), &[PT, QT]),
        ],
        // δ⁺' = +j (D/V) δ⁺ q̃
        vec![t(OverV, im(d), &[DP, QT])],
        // δ⁻' = −j (D/V) δ⁻ q̃
        vec![t(OverV, im(-d), &[DM, QT])],
    ]
}

/// Scenario-specific compiled right-hand side of the moment system.
pub struct MomentProgram {
    targets: Vec<Vec<Term>>,
}

impl MomentProgram {
    pub fn new(sc: &Scenario) -> Result<MomentProgram> {
        let drift = drift_terms(sc);
        let mut targets: Vec<Vec<Term>> = Vec::with_capacity(N_MOMENTS);
        // mean dynamics: d⟨s_i⟩ = Σ c ⟨mono⟩
        for terms in drift.iter() {
            let mut out = Vec::with_capacity(terms.len());
            for ts in terms {
                out.push(Term {
                    kind: ts.kind,
                    c: ts.c,
                    eval: plan(&ts.mono)?,
                });
            }
            targets.push(out);
        }
        // pair dynamics: d⟨s_i s_j⟩ = Σ_i c ⟨mono ∪ {j}⟩ + Σ_j c ⟨mono ∪ {i}⟩
        for &(i, j) in PAIRS.iter() {
            let mut out = Vec::new();
            for (src, other) in [(i, j), (j, i)] {
                for ts in &drift[src] {
                    let mut mono = ts.mono.clone();
                    mono.push(other);
                    out.push(Term {
                        kind: ts.kind,
                        c: ts.c,
                        eval: plan(&mono)?,
                    });
                }
            }
            // Itô diffusion on the position diagonals
            let a = match (i, j) {
                (X, X) => sc.noise.a1,
                (Y, Y) => sc.noise.a2,
                (Z, Z) => sc.noise.a3,
                _ => 0.0,
            };
            if a != 0.0 {
                out.push(Term {
                    kind: CoeffKind::Const,
                    c: Complex64::new(a * a, 0.0),
                    eval: Eval::One,
                });
            }
            targets.push(out);
        }
        Ok(MomentProgram { targets })
    }

    /// Closed ODE right-hand side.
    pub fn rhs(&self, mu: &TransformedMoments) -> Result<[Complex64; N_MOMENTS]> {
        let v_mean = mu.m[V].re;
        if v_mean.abs() < 1e-9 {
            return Err(Error::Singularity(format!(
                "mean speed underflow: <V> = {v_mean}"
            )));
        }
        let dsum = mu.m[DP] + mu.m[DM];
        if dsum.norm() < 1e-9 {
            return Err(Error::Singularity(
                "1/cos(theta) term degenerate: <delta+> + <delta-> ~ 0 (mean pitch near +-pi/2)"
                    .into(),
            ));
        }
        let inv_v = Complex64::new(1.0 / v_mean, 0.0);
        let kappa_over_v = Complex64::new(2.0, 0.0) / dsum * inv_v;
        let mut out = [Complex64::new(0.0, 0.0); N_MOMENTS];
        for (k, terms) in self.targets.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in terms {
                let scale = match t.kind {
                    CoeffKind::Const => Complex64::new(1.0, 0.0),
                    CoeffKind::OverV => inv_v,
                    CoeffKind::KappaOverV => kappa_over_v,
                };
                acc += t.c * scale * eval_plan(&t.eval, mu);
            }
            out[k] = acc;
        }
        Ok(out)
    }
}

/// One-shot right-hand-side evaluation (compiles the scenario program).
pub fn moment_rhs(mu: &TransformedMoments, sc: &Scenario) -> Result<[Complex64; N_MOMENTS]> {
    MomentProgram::new(sc)?.rhs(mu)
}

/// Initial retained moments for independent Gaussian launch conditions.
///
/// ⟨δ±⟩ and ⟨(δ±)²⟩ come from the Gaussian characteristic function of θ;
/// every cross pair starts at the product of means (independence), and
/// the speed mean/spread is carried by the axial component.
pub fn init_moments(dist: &InitialDistribution, _sc: &Scenario) -> TransformedMoments {
    let re = |v: f64| Complex64::new(v, 0.0);
    let (mu_th, sd_th) = (dist.theta.mean, dist.theta.sd);
    let dp = (Complex64::new(-sd_th * sd_th / 2.0, mu_th)).exp();
    let dm = (Complex64::new(-sd_th * sd_th / 2.0, -mu_th)).exp();
    let dp2 = (Complex64::new(-2.0 * sd_th * sd_th, 2.0 * mu_th)).exp();
    let dm2 = (Complex64::new(-2.0 * sd_th * sd_th, -2.0 * mu_th)).exp();
    let v0 = (dist.u.mean * dist.u.mean + dist.v.mean * dist.v.mean + dist.w.mean * dist.w.mean)
        .sqrt();
    let sd_v = dist.u.sd;

    let mut mean = [Complex64::new(0.0, 0.0); N_STATES];
    let mut sd = [0.0f64; N_STATES];
    let assign = [
        (X, dist.x.mean, dist.x.sd),
        (Y, dist.y.mean, dist.y.sd),
        (Z, dist.z.mean, dist.z.sd),
        (PHI, dist.phi.mean, dist.phi.sd),
        (THETA, dist.theta.mean, dist.theta.sd),
        (PSI, dist.psi.mean, dist.psi.sd),
        (V, v0, sd_v),
        (VT, dist.v.mean, dist.v.sd),
        (WT, dist.w.mean, dist.w.sd),
        (PT, dist.p.mean, dist.p.sd),
        (QT, dist.q.mean, dist.q.sd),
        (RT, dist.r.mean, dist.r.sd),
    ];
    for (i, m, s) in assign {
        mean[i] = re(m);
        sd[i] = s;
    }
    mean[DP] = dp;
    mean[DM] = dm;

    let mut m = [Complex64::new(0.0, 0.0); N_MOMENTS];
    m[..N_STATES].copy_from_slice(&mean);
    for (k, &(i, j)) in PAIRS.iter().enumerate() {
        m[N_STATES + k] = if i == j {
            match i {
                DP => dp2,
                DM => dm2,
                _ => mean[i] * mean[i] + re(sd[i] * sd[i]),
            }
        } else if j == DP || j == DM {
            // none of the retained δ pairs involves θ itself
            mean[i] * mean[j]
        } else {
            mean[i] * mean[j]
        };
    }
    TransformedMoments { m, v0 }
}

/// Predicted ground-plane impact statistics from the moment trajectory.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentImpactPrediction {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub tau: f64,
}

/// Moment time series plus the impact prediction.
pub struct MomentResult {
    pub series: Vec<(f64, TransformedMoments)>,
    pub prediction: MomentImpactPrediction,
}

/// Classical fixed-step RK4 over the closed moment system, from launch to
/// the mean-altitude ground crossing.
///
/// The reported impact spread folds the altitude variance through the
/// mean flight-path slope: the ensemble landing time varies with each
/// run's altitude noise, so the ground-plane spread along x is
/// Var(x) + (dx/dz)² Var(z) (same along y), not Var(x) alone.
pub fn integrate_moments(
    sc: &Scenario,
    random_ic: bool,
    record_every: usize,
) -> Result<MomentResult> {
    let program = MomentProgram::new(sc)?;
    let dist = if random_ic {
        sc.initial.clone()
    } else {
        sc.initial.to_point_mass()
    };
    let mut mu = init_moments(&dist, sc);
    let dt = sc.step();
    let n_steps = (sc.max_span() / dt).ceil() as usize;
    let record_every = record_every.max(1);
    let mut series = vec![(0.0, mu)];
    let mut armed = mu.m[THETA].re < 0.0;
    let mut tau = 0.0;
    for k in 0..n_steps {
        let next = rk4_step(&program, &mu, dt)?;
        let next_tau = (k + 1) as f64 * dt;
        if next.m[THETA].re < 0.0 {
            armed = true;
        }
        if armed && mu.m[Z].re < 0.0 && next.m[Z].re >= 0.0 {
            let prediction = predict_impact(&program, (tau, &mu), (next_tau, &next))?;
            series.push((next_tau, next));
            return Ok(MomentResult { series, prediction });
        }
        mu = next;
        tau = next_tau;
        if (k + 1) % record_every == 0 {
            series.push((tau, mu));
        }
    }
    Err(Error::HorizonExceeded(tau))
}

fn rk4_step(
    program: &MomentProgram,
    mu: &TransformedMoments,
    dt: f64,
) -> Result<TransformedMoments> {
    let axpy = |mu: &TransformedMoments, k: &[Complex64; N_MOMENTS], h: f64| {
        let mut out = *mu;
        for (o, kv) in out.m.iter_mut().zip(k.iter()) {
            *o += h * kv;
        }
        out
    };
    let k1 = program.rhs(mu)?;
    let k2 = program.rhs(&axpy(mu, &k1, dt / 2.0))?;
    let k3 = program.rhs(&axpy(mu, &k2, dt / 2.0))?;
    let k4 = program.rhs(&axpy(mu, &k3, dt))?;
    let mut out = *mu;
    for i in 0..N_MOMENTS {
        out.m[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

fn predict_impact(
    program: &MomentProgram,
    prev: (f64, &TransformedMoments),
    next: (f64, &TransformedMoments),
) -> Result<MomentImpactPrediction> {
    let (t0, a) = prev;
    let (t1, b) = next;
    let z0 = a.m[Z].re;
    let z1 = b.m[Z].re;
    let frac = -z0 / (z1 - z0);
    let lerp = |u: f64, v: f64| u + frac * (v - u);
    let mean_x = lerp(a.m[X].re, b.m[X].re);
    let mean_y = lerp(a.m[Y].re, b.m[Y].re);
    let var_x = lerp(a.variance(X), b.variance(X)).max(0.0);
    let var_y = lerp(a.variance(Y), b.variance(Y)).max(0.0);
    let var_z = lerp(a.variance(Z), b.variance(Z)).max(0.0);
    let f = program.rhs(a)?;
    let (dx, dy, dz) = (f[X].re, f[Y].re, f[Z].re);
    if dz.abs() < 1e-12 {
        return Err(Error::Singularity(
            "mean descent rate vanishes at the ground crossing".into(),
        ));
    }
    let sx = dx / dz;
    let sy = dy / dz;
    Ok(MomentImpactPrediction {
        mean_x,
        mean_y,
        sd_x: (var_x + sx * sx * var_z).sqrt(),
        sd_y: (var_y + sy * sy * var_z).sqrt(),
        tau: lerp(t0, t1),
    })
}

fn sig(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits - 1, v)
}

/// Moment time-series CSV: summary columns, then the full retained set as
/// re/im pairs.
pub fn write_moments_csv(w: &mut impl Write, series: &[(f64, TransformedMoments)]) -> std::io::Result<()> {
    let mut header = vec![
        "tau".to_string(),
        "mean_x".into(),
        "mean_y".into(),
        "mean_z".into(),
        "sd_x".into(),
        "sd_y".into(),
        "sd_z".into(),
    ];
    for name in STATE_NAMES {
        header.push(format!("m_{name}_re"));
        header.push(format!("m_{name}_im"));
    }
    for &(i, j) in PAIRS.iter() {
        header.push(format!("p_{}_{}_re", STATE_NAMES[i], STATE_NAMES[j]));
        header.push(format!("p_{}_{}_im", STATE_NAMES[i], STATE_NAMES[j]));
    }
    writeln!(w, "{}", header.join(","))?;
    for (tau, mu) in series {
        let mut cols = vec![
            sig(*tau, 9),
            sig(mu.m[X].re, 9),
            sig(mu.m[Y].re, 9),
            sig(mu.m[Z].re, 9),
            sig(mu.variance(X).max(0.0).sqrt(), 9),
            sig(mu.variance(Y).max(0.0).sqrt(), 9),
            sig(mu.variance(Z).max(0.0).sqrt(), 9),
        ];
        for v in mu.m.iter() {
            cols.push(sig(v.re, 9));
            cols.push(sig(v.im, 9));
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}
