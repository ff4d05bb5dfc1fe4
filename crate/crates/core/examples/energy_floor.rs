// Sampled energies of loop collections never drop below the per-strand
// floor when the range is twice the core in one dimension.

use loopgas::energy::{collection_energy, energy_lower_bound};
use loopgas::geometry::BoxRegion;
use loopgas::loops::k_of;
use loopgas::mcmc::{ChainState, SimulationParams};
use loopgas::potential::PotentialModel;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let region = BoxRegion::centered(1, 2.0)?;
    let v = PotentialModel::smoothed_well(0.3, 0.6, 0.3)?;
    let mut params = SimulationParams::new(region, 0.4, 1.0, v.clone(), 4, 2);
    params.seed = 3;
    let consts = params.constants()?;

    let mut state = ChainState::new(&params, 0)?;
    let mut worst = f64::INFINITY;
    let mut seen = 0;
    for _ in 0..5_000 {
        state.sweep(&params)?;
        let k = k_of(state.config());
        if k == 0 {
            continue;
        }
        let h = collection_energy(state.config(), &v, params.beta);
        worst = worst.min(h / k as f64);
        seen += 1;
    }
    let floor = energy_lower_bound(1, &consts, &v, params.beta, 1);
    println!("{seen} non-empty samples, lowest energy per strand {worst:.4}, floor {floor:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
