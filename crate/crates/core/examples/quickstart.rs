//! Minimal library tour: one deterministic arc, a Monte Carlo ensemble,
//! the moment-engine prediction, and a small closed-loop study.
//!
//! Run with: cargo run --release --example quickstart

use ippkit::control::closed_loop_simulate;
use ippkit::moments::integrate_moments;
use ippkit::rng::RandomStream;
use ippkit::scenario::{guided_scenario, nominal_scenario};
use ippkit::sde::{run_ensemble, simulate_trajectory, SimOptions};

fn main() -> ippkit::Result<()> {
    let sc = nominal_scenario();

    // Deterministic drift arc from the mean launch state.
    let traj = simulate_trajectory(
        &sc,
        &mut RandomStream::new(1),
        None,
        &SimOptions {
            zero_noise: true,
            record_every: 200,
            sample_ic: false,
        },
    )?;
    let end = traj.samples.last().unwrap();
    println!(
        "deterministic arc: impact at tau = {:.1}, x = {:.1} ft, y = {:.1} ft",
        end.0, end.1.x, end.1.y
    );

    // Monte Carlo impact dispersion under the position noise.
    let ens = run_ensemble(&sc, 500, 2024, false, None)?;
    let s = &ens.stats;
    println!(
        "monte carlo (n = {}): mean = ({:.1}, {:.1}) ft, sd = ({:.2}, {:.2}) ft",
        s.n, s.mean_x, s.mean_y, s.sd_x, s.sd_y
    );

    // The same dispersion from one moment propagation.
    let mr = integrate_moments(&sc, false, 200)?;
    let p = &mr.prediction;
    println!(
        "moment engine: mean = ({:.1}, {:.1}) ft, sd = ({:.2}, {:.2}) ft",
        p.mean_x, p.mean_y, p.sd_x, p.sd_y
    );

    // Paired controlled/uncontrolled canard study on the guided variant.
    let study = closed_loop_simulate(&guided_scenario(), 2024, 100)?;
    println!(
        "canard guidance: dispersion trace ratio = {:.3} (controlled/uncontrolled)",
        study.trace_ratio
    );
    Ok(())
}
