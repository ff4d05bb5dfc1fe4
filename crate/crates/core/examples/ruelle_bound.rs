// One-loop moment function at fixed test loops in two dimensions, checked
// against its explicit bound.

use loopgas::cli::test_loops;
use loopgas::estimators::{validate_ruelle, RuelleObserver};
use loopgas::geometry::BoxRegion;
use loopgas::mcmc::{run_chain, SimulationParams};
use loopgas::potential::PotentialModel;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let region = BoxRegion::centered(2, 1.5)?;
    let v = PotentialModel::smoothed_well(0.4, 0.8, 0.1)?;
    let mut params = SimulationParams::new(region, 0.5, 1.0, v, 4, 2);
    params.seed = 6;
    params.sweeps = 3_000;
    params.burn_in = 200;
    let consts = params.constants()?;
    println!("rho_bar = {:.4}", consts.rho_bar);

    let points = vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.5]];
    let mut obs = RuelleObserver::new(test_loops(&params, &points)?);
    run_chain(&params, 0, &mut obs)?;
    for (l, e) in obs.loops.iter().zip(obs.estimates(params.z)) {
        println!("base {:?} k = {}: rho = {:.5} +- {:.5}", l.base(), l.multiplicity(), e.value, e.stderr);
    }
    for c in validate_ruelle(&obs, params.z, consts.rho_bar) {
        println!("{} {}: {:.5} <= {:.5}", if c.passed { "PASS" } else { "FAIL" }, c.tag, c.estimate, c.target);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
