//! Deterministic drift of the modified linear projectile model, the exact
//! kinematic transform matrices, and canard force/moment increments.
//!
//! Conventions: z is positive down (altitude is -z, ground impact is the
//! return of z to 0); the tilde velocities/rates are fixed-frame quantities;
//! the independent variable is the model's own scaled time tau.

use crate::error::{Error, Result};
use crate::scenario::{CanardConfig, ProjectileParams, WindModel};

use std::f64::consts::PI;

/// The 12 modified-linear-model states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlmState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    /// Total velocity V (ft/s).
    pub v_total: f64,
    /// Fixed-frame lateral velocity ṽ (ft/s).
    pub v_t: f64,
    /// Fixed-frame lateral velocity w̃ (ft/s).
    pub w_t: f64,
    /// Fixed-frame roll rate p̃ (rad/s).
    pub p_t: f64,
    /// Fixed-frame pitch rate q̃ (rad/s).
    pub q_t: f64,
    /// Fixed-frame yaw rate r̃ (rad/s).
    pub r_t: f64,
}

/// Per-unit-tau derivative of the 12 states, ordered as `MlmState::to_array`.
pub type StateDerivative = [f64; 12];

impl MlmState {
    pub fn to_array(&self) -> [f64; 12] {
        [
            self.x, self.y, self.z, self.phi, self.theta, self.psi, self.v_total, self.v_t,
            self.w_t, self.p_t, self.q_t, self.r_t,
        ]
    }

    pub fn from_array(a: &[f64; 12]) -> Self {
        MlmState {
            x: a[0],
            y: a[1],
            z: a[2],
            phi: a[3],
            theta: a[4],
            psi: a[5],
            v_total: a[6],
            v_t: a[7],
            w_t: a[8],
            p_t: a[9],
            q_t: a[10],
            r_t: a[11],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Euler angles plus body-frame velocities and rates, for the exact
/// kinematic transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullKinematicState {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

/// Body-to-inertial rotation matrix; maps (u,v,w) to (ẋ,ẏ,ż).
pub fn rotation_matrix(phi: f64, theta: f64, psi: f64) -> [[f64; 3]; 3] {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    [
        [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
        [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
        [-st, sf * ct, cf * ct],
    ]
}

const COS_THETA_EPS: f64 = 1e-12;

/// Maps body rates (p,q,r) to Euler-angle rates (φ̇,θ̇,ψ̇).
pub fn euler_rate_matrix(phi: f64, theta: f64) -> Result<[[f64; 3]; 3]> {
    let (sf, cf) = phi.sin_cos();
    let ct = theta.cos();
    if ct.abs() < COS_THETA_EPS {
        return Err(Error::Singularity(format!(
            "euler_rate_matrix: cos(theta) = {ct} at theta = {theta}"
        )));
    }
    let tt = theta.tan();
    Ok([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])
}

/// Inverse transform: maps Euler-angle rates to body rates.
pub fn euler_rate_matrix_body(phi: f64, theta: f64) -> [[f64; 3]; 3] {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    [
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ]
}

/// Precomputed drift coefficient bundle for one (params, wind) pair.
///
/// Groupings (π ρ D^n C / denominator) are hoisted out of the hot loop;
/// the two 1/V-carrying coefficients store their numerators.
#[derive(Debug, Clone, Copy)]
pub struct DriftCoeffs {
    pub d: f64,
    pub g: f64,
    /// π ρ D³ C_NA / (8 m) — lateral-velocity relaxation.
    pub kna_m: f64,
    /// π ρ D³ C_X0 / (8 m) — axial drag.
    pub cx: f64,
    /// π ρ D⁴ C_DD / (8 Ixx) — fin-cant spin driver (multiplies V).
    pub kdd: f64,
    /// π ρ D⁵ C_LP / (16 Ixx) — roll damping.
    pub klp: f64,
    /// π ρ D⁵ C_MQ / (16 Iyy) — pitch/yaw damping.
    pub kmq: f64,
    /// π ρ D³ R_MCP C_NA / (8 Iyy) — restoring moment.
    pub kna_r: f64,
    /// π ρ D⁴ R_MCM C_YPA / (16 Iyy) — Magnus moment numerator (divide by V).
    pub kmag_num: f64,
    /// Ixx D / Iyy — gyroscopic coupling numerator (divide by V).
    pub kgy_num: f64,
    pub vw: f64,
    pub ww: f64,
}

impl DriftCoeffs {
    pub fn new(p: &ProjectileParams, wind: &WindModel) -> Self {
        let d3 = p.D * p.D * p.D;
        let d4 = d3 * p.D;
        let d5 = d4 * p.D;
        DriftCoeffs {
            d: p.D,
            g: p.g,
            kna_m: PI * p.rho * d3 * p.CNA / (8.0 * p.m),
            cx: PI * p.rho * d3 * p.CX0 / (8.0 * p.m),
            kdd: PI * p.rho * d4 * p.CDD / (8.0 * p.Ixx),
            klp: PI * p.rho * d5 * p.CLP / (16.0 * p.Ixx),
            kmq: PI * p.rho * d5 * p.CMQ / (16.0 * p.Iyy),
            kna_r: PI * p.rho * d3 * p.RMCP * p.CNA / (8.0 * p.Iyy),
            kmag_num: PI * p.rho * d4 * p.RMCM * p.CYPA / (16.0 * p.Iyy),
            kgy_num: p.Ixx * p.D / p.Iyy,
            vw: wind.vw,
            ww: wind.ww,
        }
    }

    /// Gyroscopic rotation rate ω = (Ixx D / Iyy V) p̃ of the (q̃, r̃) pair.
    #[inline]
    pub fn gyro_rate(&self, s: &MlmState) -> f64 {
        self.kgy_num / s.v_total * s.p_t
    }

    /// Full drift right-hand side. No validity checks; callers guard
    /// V > 0 and |cos θ| > 0.
    #[inline]
    pub fn eval(&self, s: &MlmState) -> StateDerivative {
        let (st, ct) = s.theta.sin_cos();
        let inv_v = 1.0 / s.v_total;
        let d = self.d;
        let dv = d * inv_v;
        let dvt = s.v_t - self.vw;
        let dwt = s.w_t - self.ww;
        let kmag = self.kmag_num * inv_v;
        let kgy = self.kgy_num * inv_v;
        [
            d * ct,
            d * ct * s.psi + dv * s.v_t,
            -d * st + d * ct * inv_v * s.w_t,
            dv * s.p_t,
            dv * s.q_t,
            d * s.r_t * inv_v / ct,
            -self.cx * s.v_total - d * self.g * st * inv_v,
            -self.kna_m * dvt - d * s.r_t,
            -self.kna_m * dwt + d * s.q_t + d * self.g * ct * inv_v,
            self.kdd * s.v_total + self.klp * s.p_t,
            kmag * s.p_t * dvt + self.kmq * s.q_t + self.kna_r * dwt - kgy * s.p_t * s.r_t,
            kmag * s.p_t * dwt + self.kmq * s.r_t - self.kna_r * dvt + kgy * s.p_t * s.q_t,
        ]
    }

    /// Drift with the gyroscopic (q̃, r̃) rotation terms removed; the
    /// splitting stepper applies those as an exact rotation instead.
    #[inline]
    pub fn eval_without_gyro(&self, s: &MlmState) -> StateDerivative {
        let mut f = self.eval(s);
        let omega = self.gyro_rate(s);
        f[10] += omega * s.r_t;
        f[11] -= omega * s.q_t;
        f
    }
}

const V_EPS: f64 = 1e-9;

/// Validated drift evaluation.
pub fn mlm_drift(
    s: &MlmState,
    params: &ProjectileParams,
    wind: &WindModel,
) -> Result<StateDerivative> {
    check_state(s)?;
    Ok(DriftCoeffs::new(params, wind).eval(s))
}

pub(crate) fn check_state(s: &MlmState) -> Result<()> {
    if s.v_total.abs() < V_EPS {
        return Err(Error::Singularity(format!(
            "total velocity underflow: V = {}",
            s.v_total
        )));
    }
    if s.theta.cos().abs() < COS_THETA_EPS {
        return Err(Error::Singularity(format!(
            "cos(theta) underflow at theta = {}",
            s.theta
        )));
    }
    Ok(())
}

/// Per-canard forces, moments, and flow diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanardForces {
    /// Body force components per canard (lbf).
    pub fx: [f64; 4],
    pub fy: [f64; 4],
    pub fz: [f64; 4],
    /// Moment components per canard (ft·lbf).
    pub ml: [f64; 4],
    pub mm: [f64; 4],
    pub mn: [f64; 4],
    /// Lift and drag magnitudes.
    pub lift: [f64; 4],
    pub drag: [f64; 4],
    /// Local flow at each canard root.
    pub flow: [[f64; 3]; 4],
    /// Total incidence α_i.
    pub alpha: [f64; 4],
    /// Local Mach number.
    pub mach: [f64; 4],
}

impl CanardForces {
    pub fn total_force(&self) -> [f64; 3] {
        [
            self.fx.iter().sum(),
            self.fy.iter().sum(),
            self.fz.iter().sum(),
        ]
    }

    pub fn total_moment(&self) -> [f64; 3] {
        [
            self.ml.iter().sum(),
            self.mm.iter().sum(),
            self.mn.iter().sum(),
        ]
    }
}

/// Local flow at canard `i`: (V, ṽ, w̃) plus ω×r with the fixed-frame rates.
pub fn canard_local_flow(s: &MlmState, i: usize, cfg: &CanardConfig) -> [f64; 3] {
    let c = &cfg.surfaces[i];
    let (p, q, r) = (s.p_t, s.q_t, s.r_t);
    [
        s.v_total + (q * c.rz - r * c.ry),
        s.v_t + (r * c.rx - p * c.rz),
        s.w_t + (p * c.ry - q * c.rx),
    ]
}

/// Forces and moments for all four canards at deflections `lambdas`.
///
/// Canards 1 and 3 (indices 0, 2) sit on the ±y axis and resolve lift in
/// the x–z plane; canards 2 and 4 (indices 1, 3) sit on the ±z axis and
/// resolve in the x–y plane. Moments are the lever-arm cross products.
pub fn canard_forces(
    s: &MlmState,
    lambdas: &[f64; 4],
    cfg: &CanardConfig,
    params: &ProjectileParams,
) -> Result<CanardForces> {
    let mut out = CanardForces::default();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let c = &cfg.surfaces[i];
        let flow = canard_local_flow(s, i, cfg);
        let [u, v, w] = flow;
        if u <= 0.0 {
            return Err(Error::DegenerateFlow { index: i + 1, value: u });
        }
        let speed2 = u * u + v * v + w * w;
        let pitch_plane = i % 2 == 0;
        let incidence = if pitch_plane {
            (w / u).atan()
        } else {
            (v / u).atan()
        };
        let alpha = lambda + c.alpha_sign * incidence;
        let cl = cfg.c_l_alpha * alpha;
        let cd = cfg.c_d0 + cfg.c_d2 * alpha * alpha + cfg.c_i * cl * cl;
        let q_dyn = 0.5 * params.rho * speed2 * c.S;
        let lift = q_dyn * cl;
        let drag = q_dyn * cd;
        let (fx, fy, fz) = if pitch_plane {
            let s_pl = (u * u + w * w).sqrt();
            (
                (lift * w - drag * u) / s_pl,
                0.0,
                (-lift * u - drag * w) / s_pl,
            )
        } else {
            let s_pl = (u * u + v * v).sqrt();
            (
                (-lift * v - drag * u) / s_pl,
                (lift * u - drag * v) / s_pl,
                0.0,
            )
        };
        out.fx[i] = fx;
        out.fy[i] = fy;
        out.fz[i] = fz;
        out.ml[i] = c.ry * fz - c.rz * fy;
        out.mm[i] = c.rz * fx - c.rx * fz;
        out.mn[i] = c.rx * fy - c.ry * fx;
        out.lift[i] = lift;
        out.drag[i] = drag;
        out.flow[i] = flow;
        out.alpha[i] = alpha;
        out.mach[i] = speed2.sqrt() / cfg.a_s;
    }
    Ok(out)
}

/// Add canard force/moment increments to a drift evaluation.
///
/// Accelerations (force/mass, moment/inertia) are per unit time; the D/V
/// factor converts them to the model's independent variable, matching the
/// tilde-state scaling of the drift itself.
pub fn apply_canards(
    drift: &mut StateDerivative,
    f: &CanardForces,
    params: &ProjectileParams,
    s: &MlmState,
) {
    let scale = params.D / s.v_total;
    let [fx, fy, fz] = f.total_force();
    let [ml, mm, mn] = f.total_moment();
    drift[6] += scale * fx / params.m;
    drift[7] += scale * fy / params.m;
    drift[8] += scale * fz / params.m;
    drift[9] += scale * ml / params.Ixx;
    drift[10] += scale * mm / params.Iyy;
    drift[11] += scale * mn / params.Iyy;
}
