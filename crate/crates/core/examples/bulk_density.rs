// Time-zero density profile of a two-dimensional hard-core gas, coarse
// grained into rows to show the depletion near the walls.

use loopgas::estimators::DensityObserver;
use loopgas::geometry::BoxRegion;
use loopgas::mcmc::{run_chain, SimulationParams};
use loopgas::potential::PotentialModel;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let region = BoxRegion::centered(2, 2.0)?;
    let v = PotentialModel::hard_core(0.5, 1.0)?;
    let mut params = SimulationParams::new(region.clone(), 0.4, 1.0, v, 4, 2);
    params.seed = 12;
    params.sweeps = 4_000;
    params.burn_in = 200;
    params.steps_per_sweep = 20;

    let cells = 8;
    let mut obs = DensityObserver::new(region, cells);
    run_chain(&params, 0, &mut obs)?;
    let est = obs.estimates();
    println!("density by column, averaged over rows:");
    for i in 0..cells {
        let col: f64 = (0..cells).map(|j| est[j * cells + i].value).sum::<f64>() / cells as f64;
        let x = obs.cell_center(i)[0];
        println!("  x = {x:+.2}: {col:.4} {}", "#".repeat((col * 60.0) as usize));
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
