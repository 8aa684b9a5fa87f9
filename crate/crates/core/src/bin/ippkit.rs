//! Command-line front end: scenario runs, Monte Carlo ensembles, moment
//! propagation, engine comparison, and closed-loop control studies.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ippkit::control::{closed_loop_simulate, write_control_log_csv};
use ippkit::moments::{integrate_moments, write_moments_csv, MomentImpactPrediction};
use ippkit::plot::{write_scatter_svg, Series};
use ippkit::rng::RandomStream;
use ippkit::scenario::{guided_scenario, nominal_scenario, Scenario};
use ippkit::sde::{
    run_ensemble, simulate_trajectory, write_impacts_csv, write_trajectory_csv, Ellipse,
    ImpactStats, SimOptions,
};
use ippkit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ippkit",
    version,
    about = "Stochastic projectile trajectory and impact-point prediction toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON path, or the built-in names `nominal` / `guided`
    #[arg(long, default_value = "nominal")]
    scenario: String,
    /// Base RNG seed
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario integration step
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a single trajectory and export it as CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Zero the additive noise (deterministic drift arc)
        #[arg(long)]
        deterministic: bool,
        /// Sample the launch state instead of pinning it at the means
        #[arg(long)]
        random_ic: bool,
    },
    /// Run a Monte Carlo impact ensemble with scatter figure
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        /// Sample launch states from the scenario distribution
        #[arg(long)]
        random_ic: bool,
    },
    /// Propagate the first and second moments directly
    Moments {
        #[command(flatten)]
        common: Common,
        /// Include launch-state variances in the initial moments
        #[arg(long)]
        random_ic: bool,
    },
    /// Monte Carlo vs moment propagation side by side
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        /// Sample launch states in both engines
        #[arg(long)]
        random_ic: bool,
    },
    /// Paired controlled/uncontrolled dispersion study
    Control {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        runs: usize,
    },
}

/// Everything a run reports, mirrored into `report.json`.
#[derive(Serialize, Default)]
struct RunReport {
    command: String,
    scenario_digest: String,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    non_impacting: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    impact_stats: Option<ImpactStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    moment_prediction: Option<MomentImpactPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    controlled: Option<ImpactStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    uncontrolled: Option<ImpactStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warn: Option<String>,
    duration_s: f64,
    outputs: Vec<String>,
}

fn load_scenario(spec: &str, step: Option<f64>) -> Result<Scenario> {
    let mut sc = match spec {
        "nominal" => nominal_scenario(),
        "guided" => guided_scenario(),
        path => Scenario::from_file(Path::new(path)).map_err(|e| match e {
            // an unreadable scenario argument is a usage problem
            Error::Io(io) => Error::Usage(format!("cannot read scenario `{path}`: {io}")),
            other => other,
        })?,
    };
    if let Some(dt) = step {
        sc.integration.step = dt;
        sc.validate()?;
    }
    Ok(sc)
}

/// FNV-1a hash of the canonical scenario JSON, as a stable run identifier.
fn scenario_digest(sc: &Scenario) -> Result<String> {
    let json = sc.to_json();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// Write-then-rename so readers never observe a partial file.
fn atomic_write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

fn record_every(sc: &Scenario) -> usize {
    // roughly one record per unit of dimensionless arc length
    (1.0 / sc.integration.step).ceil().max(1.0) as usize
}

fn stats_ellipse(stats: &ImpactStats) -> Ellipse {
    stats.ellipse
}

fn prediction_ellipse(p: &MomentImpactPrediction) -> Ellipse {
    Ellipse {
        cx: p.mean_x,
        cy: p.mean_y,
        semi_major: p.sd_x.max(p.sd_y),
        semi_minor: p.sd_x.min(p.sd_y),
        angle: if p.sd_x >= p.sd_y {
            0.0
        } else {
            std::f64::consts::FRAC_PI_2
        },
    }
}

fn finish(report: &mut RunReport, out: &Path, t0: Instant) -> Result<()> {
    report.duration_s = t0.elapsed().as_secs_f64();
    report.outputs.push("report.json".into());
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Statistics(format!("report serialization failed: {e}")))?;
    atomic_write(out, "report.json", json.as_bytes())?;
    Ok(())
}

fn cmd_simulate(common: &Common, deterministic: bool, random_ic: bool) -> Result<()> {
    let t0 = Instant::now();
    let sc = load_scenario(&common.scenario, common.step)?;
    let mut stream = RandomStream::substream(common.seed, 0);
    let traj = simulate_trajectory(
        &sc,
        &mut stream,
        None,
        &SimOptions {
            sample_ic: random_ic,
            record_every: record_every(&sc),
            zero_noise: deterministic,
        },
    )?;
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &traj)?;
    atomic_write(&common.out, "trajectory.csv", &csv)?;
    let mut report = RunReport {
        command: "simulate".into(),
        scenario_digest: scenario_digest(&sc)?,
        seed: common.seed,
        outputs: vec!["trajectory.csv".into()],
        ..Default::default()
    };
    match traj.impact {
        Some(r) => println!(
            "simulate: impact at tau = {:.3}, x = {:.3} ft, y = {:.3} ft ({} samples)",
            r.tau,
            r.x,
            r.y,
            traj.samples.len()
        ),
        None => println!(
            "simulate: no ground impact within max span ({} samples)",
            traj.samples.len()
        ),
    }
    finish(&mut report, &common.out, t0)
}

fn print_stats(tag: &str, s: &ImpactStats) {
    println!(
        "{tag}: n = {}, mean = ({:.3}, {:.3}) ft, sd = ({:.3}, {:.3}) ft",
        s.n, s.mean_x, s.mean_y, s.sd_x, s.sd_y
    );
}

fn cmd_montecarlo(common: &Common, runs: usize, random_ic: bool) -> Result<()> {
    let t0 = Instant::now();
    let sc = load_scenario(&common.scenario, common.step)?;
    let res = run_ensemble(&sc, runs, common.seed, random_ic, None)?;
    let mut csv = Vec::new();
    write_impacts_csv(&mut csv, &res.impacts)?;
    atomic_write(&common.out, "impacts.csv", &csv)?;
    let pts: Vec<(f64, f64)> = res.impacts.iter().map(|p| (p.x, p.y)).collect();
    let mut svg = Vec::new();
    write_scatter_svg(
        &mut svg,
        "Monte Carlo impact points",
        "downrange x (ft)",
        "crossrange y (ft)",
        &[Series {
            label: "impacts",
            color: "#1f77b4",
            points: &pts,
            ellipse: Some(&stats_ellipse(&res.stats)),
        }],
    )?;
    atomic_write(&common.out, "scatter.svg", &svg)?;
    print_stats("montecarlo", &res.stats);
    if res.non_impacting > 0 {
        println!("montecarlo: {} runs did not impact", res.non_impacting);
    }
    let mut report = RunReport {
        command: "montecarlo".into(),
        scenario_digest: scenario_digest(&sc)?,
        seed: common.seed,
        runs: Some(runs),
        non_impacting: Some(res.non_impacting),
        impact_stats: Some(res.stats),
        outputs: vec!["impacts.csv".into(), "scatter.svg".into()],
        ..Default::default()
    };
    finish(&mut report, &common.out, t0)
}

fn cmd_moments(common: &Common, random_ic: bool) -> Result<()> {
    let t0 = Instant::now();
    let sc = load_scenario(&common.scenario, common.step)?;
    let res = integrate_moments(&sc, random_ic, record_every(&sc))?;
    let mut csv = Vec::new();
    write_moments_csv(&mut csv, &res.series)?;
    atomic_write(&common.out, "moments.csv", &csv)?;
    let p = &res.prediction;
    println!(
        "moments: impact at tau = {:.3}, mean = ({:.3}, {:.3}) ft, sd = ({:.3}, {:.3}) ft",
        p.tau, p.mean_x, p.mean_y, p.sd_x, p.sd_y
    );
    let mut report = RunReport {
        command: "moments".into(),
        scenario_digest: scenario_digest(&sc)?,
        seed: common.seed,
        moment_prediction: Some(res.prediction),
        outputs: vec!["moments.csv".into()],
        ..Default::default()
    };
    finish(&mut report, &common.out, t0)
}

fn cmd_compare(common: &Common, runs: usize, random_ic: bool) -> Result<()> {
    let t0 = Instant::now();
    let sc = load_scenario(&common.scenario, common.step)?;
    let mc = run_ensemble(&sc, runs, common.seed, random_ic, None)?;
    let mm = integrate_moments(&sc, random_ic, record_every(&sc))?;
    let mut csv = Vec::new();
    write_impacts_csv(&mut csv, &mc.impacts)?;
    atomic_write(&common.out, "impacts.csv", &csv)?;
    let mut csv = Vec::new();
    write_moments_csv(&mut csv, &mm.series)?;
    atomic_write(&common.out, "moments.csv", &csv)?;
    let pts: Vec<(f64, f64)> = mc.impacts.iter().map(|p| (p.x, p.y)).collect();
    let moment_ellipse = prediction_ellipse(&mm.prediction);
    let mut svg = Vec::new();
    write_scatter_svg(
        &mut svg,
        "Monte Carlo vs moment propagation",
        "downrange x (ft)",
        "crossrange y (ft)",
        &[
            Series {
                label: "Monte Carlo",
                color: "#1f77b4",
                points: &pts,
                ellipse: Some(&stats_ellipse(&mc.stats)),
            },
            Series {
                label: "moments",
                color: "#d62728",
                points: &[],
                ellipse: Some(&moment_ellipse),
            },
        ],
    )?;
    atomic_write(&common.out, "compare.svg", &svg)?;
    let p = &mm.prediction;
    let rel = |a: f64, b: f64| {
        if b.abs() > 0.0 {
            (a - b) / b
        } else {
            a - b
        }
    };
    let sd_gap_x = rel(p.sd_x, mc.stats.sd_x);
    let sd_gap_y = rel(p.sd_y, mc.stats.sd_y);
    let mean_gap =
        ((p.mean_x - mc.stats.mean_x).powi(2) + (p.mean_y - mc.stats.mean_y).powi(2)).sqrt();
    print_stats("compare/montecarlo", &mc.stats);
    println!(
        "compare/moments: mean = ({:.3}, {:.3}) ft, sd = ({:.3}, {:.3}) ft",
        p.mean_x, p.mean_y, p.sd_x, p.sd_y
    );
    println!(
        "compare: relative sd gap = ({:+.2}%, {:+.2}%), mean gap = {:.3} ft",
        100.0 * sd_gap_x,
        100.0 * sd_gap_y,
        mean_gap
    );
    let range = mc.stats.mean_x.abs().max(1.0);
    let warn = if sd_gap_x.abs() > 0.2 || sd_gap_y.abs() > 0.2 || mean_gap > 0.05 * range {
        let w = format!(
            "engines disagree beyond the comparison band: sd gap ({:+.1}%, {:+.1}%), mean gap {:.1} ft",
            100.0 * sd_gap_x,
            100.0 * sd_gap_y,
            mean_gap
        );
        println!("compare: warning: {w}");
        Some(w)
    } else {
        None
    };
    let mut report = RunReport {
        command: "compare".into(),
        scenario_digest: scenario_digest(&sc)?,
        seed: common.seed,
        runs: Some(runs),
        non_impacting: Some(mc.non_impacting),
        impact_stats: Some(mc.stats),
        moment_prediction: Some(mm.prediction),
        warn,
        outputs: vec![
            "impacts.csv".into(),
            "moments.csv".into(),
            "compare.svg".into(),
        ],
        ..Default::default()
    };
    finish(&mut report, &common.out, t0)
}

fn cmd_control(common: &Common, runs: usize) -> Result<()> {
    let t0 = Instant::now();
    let sc = load_scenario(&common.scenario, common.step)?;
    let study = closed_loop_simulate(&sc, common.seed, runs)?;
    let mut csv = Vec::new();
    write_impacts_csv(&mut csv, &study.controlled_impacts)?;
    atomic_write(&common.out, "controlled_impacts.csv", &csv)?;
    let mut csv = Vec::new();
    write_impacts_csv(&mut csv, &study.uncontrolled_impacts)?;
    atomic_write(&common.out, "uncontrolled_impacts.csv", &csv)?;
    let mut csv = Vec::new();
    write_control_log_csv(&mut csv, &study.log)?;
    atomic_write(&common.out, "control_log.csv", &csv)?;
    let cpts: Vec<(f64, f64)> = study.controlled_impacts.iter().map(|p| (p.x, p.y)).collect();
    let upts: Vec<(f64, f64)> = study
        .uncontrolled_impacts
        .iter()
        .map(|p| (p.x, p.y))
        .collect();
    let mut svg = Vec::new();
    write_scatter_svg(
        &mut svg,
        "Canard guidance dispersion study",
        "downrange x (ft)",
        "crossrange y (ft)",
        &[
            Series {
                label: "uncontrolled",
                color: "#d62728",
                points: &upts,
                ellipse: Some(&stats_ellipse(&study.uncontrolled)),
            },
            Series {
                label: "controlled",
                color: "#1f77b4",
                points: &cpts,
                ellipse: Some(&stats_ellipse(&study.controlled)),
            },
        ],
    )?;
    atomic_write(&common.out, "control.svg", &svg)?;
    print_stats("control/uncontrolled", &study.uncontrolled);
    print_stats("control/controlled", &study.controlled);
    println!(
        "control: covariance trace ratio controlled/uncontrolled = {:.4}",
        study.trace_ratio
    );
    if study.non_impacting > 0 {
        println!("control: {} paired runs dropped (no impact)", study.non_impacting);
    }
    let mut report = RunReport {
        command: "control".into(),
        scenario_digest: scenario_digest(&sc)?,
        seed: common.seed,
        runs: Some(runs),
        non_impacting: Some(study.non_impacting),
        controlled: Some(study.controlled),
        uncontrolled: Some(study.uncontrolled),
        trace_ratio: Some(study.trace_ratio),
        outputs: vec![
            "controlled_impacts.csv".into(),
            "uncontrolled_impacts.csv".into(),
            "control_log.csv".into(),
            "control.svg".into(),
        ],
        ..Default::default()
    };
    finish(&mut report, &common.out, t0)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Simulate {
            common,
            deterministic,
            random_ic,
        } => cmd_simulate(common, *deterministic, *random_ic),
        Cmd::Montecarlo {
            common,
            runs,
            random_ic,
        } => cmd_montecarlo(common, *runs, *random_ic),
        Cmd::Moments { common, random_ic } => cmd_moments(common, *random_ic),
        Cmd::Compare {
            common,
            runs,
            random_ic,
        } => cmd_compare(common, *runs, *random_ic),
        Cmd::Control { common, runs } => cmd_control(common, *runs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Validation { .. } | Error::Parse(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
