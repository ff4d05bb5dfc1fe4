// The loop-gas Markov chain on its own: acceptance rates per move, cached
// weight coherence, and the insert/delete ratio identity on one proposal.

use loopgas::geometry::BoxRegion;
use loopgas::loops::LoopConfiguration;
use loopgas::mcmc::{log_weight, ChainState, Change, MoveKind, SimulationParams};
use loopgas::potential::PotentialModel;
use loopgas::sampling::RandomStream;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let region = BoxRegion::centered(1, 1.5)?;
    let v = PotentialModel::smoothed_well(0.3, 0.6, 0.8)?;
    let mut params = SimulationParams::new(region, 0.6, 1.0, v, 4, 3);
    params.wiggle_max = 8;
    params.seed = 5;

    let mut state = ChainState::new(&params, 0)?;
    let mut loops = 0.0;
    let sweeps = 5_000;
    for _ in 0..sweeps {
        state.sweep(&params)?;
        loops += state.config().len() as f64;
    }
    state.verify(&params)?;
    println!("{sweeps} sweeps, mean loop count {:.3}, max {}", loops / sweeps as f64, state.stats.max_loops);
    for kind in MoveKind::ALL {
        println!("  {kind:?}: acceptance {:.3}", state.stats.acceptance(kind));
    }
    println!("energy {:.4}, ln weight {:.4}", state.energy(), log_weight(state.config(), &params));

    // inserting a loop and deleting it again are exact inverses
    let (l, up) = loop {
        let Some(Change::Insert(l)) = state.propose(&params, MoveKind::Insert) else { unreachable!() };
        let (up, _) = state.log_acceptance(&params, &Change::Insert(l.clone()));
        if up.is_finite() {
            break (l, up);
        }
    };
    let mut loops = state.config().loops().to_vec();
    loops.push(l);
    let after = LoopConfiguration::from_loops(1, params.beta, params.slices, loops)?;
    let mut bigger = ChainState::with_config(&params, after, RandomStream::new(0, 0))?;
    let last = bigger.config().len() - 1;
    let (down, _) = bigger.log_acceptance(&params, &Change::Delete(last));
    println!("ln A(insert) = {up:.6}, ln A(delete) = {down:.6}, sum {:.1e}", up + down);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
