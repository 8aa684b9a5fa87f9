//! Scenario definition: physical constants, aerodynamic coefficients, wind,
//! noise amplitudes, initial-condition distribution, canard geometry, and
//! control gains. Everything downstream consumes an immutable `Scenario`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::MlmState;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Mass, geometry, and dimensionless aerodynamic coefficients.
///
/// Units: ft, slug, slug/ft^3, ft/s^2, slug*ft^2. `RMCP`/`RMCM` are the
/// center-of-pressure and Magnus-center offsets from the center of mass (ft).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)] // field names mirror the conventional symbols
pub struct ProjectileParams {
    pub D: f64,
    pub m: f64,
    pub rho: f64,
    pub g: f64,
    pub Ixx: f64,
    pub Iyy: f64,
    pub CX0: f64,
    pub CDD: f64,
    pub CLP: f64,
    pub CNA: f64,
    pub CYPA: f64,
    pub CMQ: f64,
    pub RMCP: f64,
    pub RMCM: f64,
}

/// Constant fixed-frame wind components (ft/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindModel {
    pub vw: f64,
    pub ww: f64,
}

/// Diffusion amplitudes on the x, y, z channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default = "one")]
    pub a1: f64,
    #[serde(default = "one")]
    pub a2: f64,
    #[serde(default = "one")]
    pub a3: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            a1: 1.0,
            a2: 1.0,
            a3: 1.0,
        }
    }
}

/// Independent Gaussian marginal for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDist {
    pub mean: f64,
    #[serde(default)]
    pub sd: f64,
}

impl StateDist {
    pub fn point(mean: f64) -> Self {
        StateDist { mean, sd: 0.0 }
    }

    pub fn new(mean: f64, sd: f64) -> Self {
        StateDist { mean, sd }
    }

    fn sample(&self, stream: &mut RandomStream) -> f64 {
        if self.sd == 0.0 {
            // Still consume a draw so fixed/random variants share stream layout.
            let _ = stream.standard_normal();
            self.mean
        } else {
            self.mean + self.sd * stream.standard_normal()
        }
    }
}

/// Launch-condition distribution: independent Gaussians per state.
///
/// `u`, `v`, `w` are body velocity components; the lateral means seed the
/// fixed-frame ṽ, w̃ states and the speed is V = sqrt(u^2 + v^2 + w^2).
/// `p`, `q`, `r` seed the fixed-frame tilde rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDistribution {
    pub x: StateDist,
    pub y: StateDist,
    pub z: StateDist,
    pub phi: StateDist,
    pub theta: StateDist,
    pub psi: StateDist,
    pub u: StateDist,
    pub v: StateDist,
    pub w: StateDist,
    pub p: StateDist,
    pub q: StateDist,
    pub r: StateDist,
}

impl InitialDistribution {
    /// Zero out every standard deviation, keeping the means.
    pub fn to_point_mass(&self) -> Self {
        let mut d = self.clone();
        for s in [
            &mut d.x, &mut d.y, &mut d.z, &mut d.phi, &mut d.theta, &mut d.psi, &mut d.u,
            &mut d.v, &mut d.w, &mut d.p, &mut d.q, &mut d.r,
        ] {
            s.sd = 0.0;
        }
        d
    }

    /// State built from the means only.
    pub fn mean_state(&self) -> MlmState {
        let (u, v, w) = (self.u.mean, self.v.mean, self.w.mean);
        MlmState {
            x: self.x.mean,
            y: self.y.mean,
            z: self.z.mean,
            phi: self.phi.mean,
            theta: self.theta.mean,
            psi: self.psi.mean,
            v_total: (u * u + v * v + w * w).sqrt(),
            v_t: v,
            w_t: w,
            p_t: self.p.mean,
            q_t: self.q.mean,
            r_t: self.r.mean,
        }
    }
}

/// One canard surface: size, lever arm from the center of gravity, and the
/// sign applied to its local-flow incidence term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)] // field names mirror the conventional symbols
pub struct CanardSurface {
    pub D: f64,
    pub S: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    pub alpha_sign: f64,
}

/// Four canard surfaces plus their shared constant aerodynamic coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanardConfig {
    pub surfaces: Vec<CanardSurface>,
    pub c_l_alpha: f64,
    pub c_d0: f64,
    pub c_d2: f64,
    pub c_i: f64,
    /// Speed of sound for Mach bookkeeping (ft/s); sea-level standard.
    #[serde(default = "default_speed_of_sound")]
    pub a_s: f64,
    /// Deflection clamp applied to commanded lambda (rad).
    #[serde(default = "default_deflection_limit")]
    pub deflection_limit: f64,
}

fn default_speed_of_sound() -> f64 {
    1116.45
}

fn default_deflection_limit() -> f64 {
    0.35
}

/// Feedback gains and the desired-point lookahead distance (ft).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)] // field names mirror the conventional symbols
pub struct ControlGains {
    pub Kp: f64,
    pub Kphi: f64,
    pub Ktheta: f64,
    pub Kpsi: f64,
    pub lookahead: f64,
}

/// Fixed-step integration settings, in the model's independent variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub step: f64,
    pub max_span: f64,
}

/// Everything a run needs. Immutable after load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub projectile: ProjectileParams,
    pub wind: WindModel,
    #[serde(default)]
    pub noise: NoiseModel,
    pub initial: InitialDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canards: Option<CanardConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<ControlGains>,
    pub integration: IntegrationConfig,
}

impl Scenario {
    pub fn step(&self) -> f64 {
        self.integration.step
    }

    pub fn max_span(&self) -> f64 {
        self.integration.max_span
    }

    /// Parse and validate a scenario from JSON text.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.projectile;
        let positives = [
            ("projectile.D", p.D),
            ("projectile.m", p.m),
            ("projectile.rho", p.rho),
            ("projectile.g", p.g),
            ("projectile.Ixx", p.Ixx),
            ("projectile.Iyy", p.Iyy),
        ];
        for (name, v) in positives {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::validation(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [("wind.vw", self.wind.vw), ("wind.ww", self.wind.ww)] {
            if !v.is_finite() {
                return Err(Error::validation(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("noise.a1", self.noise.a1),
            ("noise.a2", self.noise.a2),
            ("noise.a3", self.noise.a3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(name, format!("must be >= 0, got {v}")));
            }
        }
        let init = &self.initial;
        let dists = [
            ("initial.x", init.x),
            ("initial.y", init.y),
            ("initial.z", init.z),
            ("initial.phi", init.phi),
            ("initial.theta", init.theta),
            ("initial.psi", init.psi),
            ("initial.u", init.u),
            ("initial.v", init.v),
            ("initial.w", init.w),
            ("initial.p", init.p),
            ("initial.q", init.q),
            ("initial.r", init.r),
        ];
        for (name, d) in dists {
            if !d.mean.is_finite() {
                return Err(Error::validation(name, "mean must be finite"));
            }
            if !d.sd.is_finite() || d.sd < 0.0 {
                return Err(Error::validation(name, format!("sd must be >= 0, got {}", d.sd)));
            }
        }
        if let Some(c) = &self.canards {
            if c.surfaces.len() != 4 {
                return Err(Error::validation(
                    "canards.surfaces",
                    format!("exactly 4 canards required, got {}", c.surfaces.len()),
                ));
            }
            for (i, s) in c.surfaces.iter().enumerate() {
                if !s.S.is_finite() || s.S <= 0.0 {
                    return Err(Error::validation(
                        "canards.surfaces.S",
                        format!("canard {i}: area must be > 0"),
                    ));
                }
                let expect = PI * s.D * s.D / 4.0;
                if ((s.S - expect) / expect).abs() > 1e-9 {
                    return Err(Error::validation(
                        "canards.surfaces.S",
                        format!("canard {i}: S must equal pi*D^2/4 (got {}, want {expect})", s.S),
                    ));
                }
                if s.alpha_sign != 1.0 && s.alpha_sign != -1.0 {
                    return Err(Error::validation(
                        "canards.surfaces.alpha_sign",
                        format!("canard {i}: alpha_sign must be +1 or -1"),
                    ));
                }
            }
            if !c.deflection_limit.is_finite() || c.deflection_limit <= 0.0 {
                return Err(Error::validation("canards.deflection_limit", "must be > 0"));
            }
        }
        if let Some(g) = &self.gains {
            if !g.lookahead.is_finite() || g.lookahead <= 0.0 {
                return Err(Error::validation("gains.lookahead", "must be > 0"));
            }
        }
        if !self.integration.step.is_finite() || self.integration.step <= 0.0 {
            return Err(Error::validation("integration.step", "must be > 0"));
        }
        if !self.integration.max_span.is_finite()
            || self.integration.max_span <= self.integration.step
        {
            return Err(Error::validation(
                "integration.max_span",
                "must exceed integration.step",
            ));
        }
        Ok(())
    }
}

/// Built-in fin-stabilized projectile scenario with the standard launch
/// distribution and canard geometry.
pub fn nominal_scenario() -> Scenario {
    let surface_d = (4.0 * 0.02104 / PI).sqrt();
    let mk = |ry: f64, rz: f64, alpha_sign: f64| CanardSurface {
        D: surface_d,
        S: PI * surface_d * surface_d / 4.0,
        rx: 0.474,
        ry,
        rz,
        alpha_sign,
    };
    Scenario {
        projectile: ProjectileParams {
            D: 0.343521,
            m: 0.0116,
            rho: 0.00238,
            g: 32.174,
            Ixx: 2.85e-5,
            Iyy: 2.72e-5,
            CX0: 0.279,
            CDD: 2.672,
            CLP: -0.042,
            CNA: 2.329,
            CYPA: -0.295,
            CMQ: -1.800,
            RMCP: -0.1657,
            RMCM: -0.1677,
        },
        wind: WindModel { vw: 15.0, ww: 15.0 },
        noise: NoiseModel {
            a1: 0.25,
            a2: 0.25,
            a3: 0.25,
        },
        initial: InitialDistribution {
            x: StateDist::new(0.0, 3.0),
            y: StateDist::new(0.0, 3.0),
            z: StateDist::new(0.0, 0.0),
            phi: StateDist::new(2.9, 1.0),
            theta: StateDist::new(0.267, 0.017),
            psi: StateDist::new(-0.007, 0.002),
            u: StateDist::new(400.0, 2.0),
            v: StateDist::new(0.0, 0.01),
            w: StateDist::new(0.0, 0.001),
            p: StateDist::new(399.7, 3.0),
            q: StateDist::new(0.43, 0.01),
            r: StateDist::new(-1.54, 0.01),
        },
        canards: Some(CanardConfig {
            // canards 1,3 offset along y; canards 2,4 along z; the second
            // member of each opposed pair senses incidence with flipped
            // sign, so passive flow response cancels within the pair and
            // only commanded deflection produces net force and moment
            surfaces: vec![
                mk(0.102, 0.0, 1.0),
                mk(0.0, -0.102, 1.0),
                mk(-0.102, 0.0, -1.0),
                mk(0.0, 0.102, -1.0),
            ],
            c_l_alpha: PI,
            c_d0: 0.02,
            c_d2: 0.3,
            c_i: 0.05,
            a_s: default_speed_of_sound(),
            deflection_limit: default_deflection_limit(),
        }),
        // with the opposed-pair geometry the roll channel has little
        // authority, so its gains stay gentle; pitch/yaw do the work
        gains: Some(ControlGains {
            Kp: -0.01,
            Kphi: -0.1,
            Ktheta: 0.01,
            Kpsi: 0.015,
            lookahead: 50.0 * 0.343521,
        }),
        integration: IntegrationConfig {
            step: 0.005,
            max_span: 3000.0,
        },
    }
}

/// Guided-study variant: the nominal airframe reconfigured for canard
/// guidance. Fin cant is removed (CDD = 0) and the launch roll state is
/// quiet, so the airframe flies without the spin build-up that saturates
/// the roll channel of the feedback law.
pub fn guided_scenario() -> Scenario {
    let mut sc = nominal_scenario();
    sc.projectile.CDD = 0.0;
    sc.initial.phi = StateDist::new(0.0, 0.01);
    sc.initial.p = StateDist::new(0.0, 0.1);
    sc.integration.step = 0.05;
    sc
}

/// Draw one launch state; each component independent Gaussian.
pub fn sample_initial_state(dist: &InitialDistribution, stream: &mut RandomStream) -> MlmState {
    let x = dist.x.sample(stream);
    let y = dist.y.sample(stream);
    let z = dist.z.sample(stream);
    let phi = dist.phi.sample(stream);
    let theta = dist.theta.sample(stream);
    let psi = dist.psi.sample(stream);
    let u = dist.u.sample(stream);
    let v = dist.v.sample(stream);
    let w = dist.w.sample(stream);
    let p = dist.p.sample(stream);
    let q = dist.q.sample(stream);
    let r = dist.r.sample(stream);
    MlmState {
        x,
        y,
        z,
        phi,
        theta,
        psi,
        v_total: (u * u + v * v + w * w).sqrt(),
        v_t: v,
        w_t: w,
        p_t: p,
        q_t: q,
        r_t: r,
    }
}
