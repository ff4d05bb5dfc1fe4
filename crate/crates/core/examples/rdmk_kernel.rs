// Reduced density matrix kernel of a sub-box: Monte Carlo over chain
// environments against the quadrature value, and the trace identity.

use loopgas::estimators::{estimate_rdmk, TraceObserver};
use loopgas::geometry::{BoxRegion, ClassicalConfig};
use loopgas::loops::LoopConfiguration;
use loopgas::mcmc::{run_chain, ChainState, Observer, SimulationParams};
use loopgas::oracle::{quad_rdmk, quad_trace, QuadratureSpec};
use loopgas::potential::PotentialModel;
use loopgas::sampling::RandomStream;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let region = BoxRegion::centered(1, 0.5)?;
    let v = PotentialModel::hard_core(0.6, 1.2)?;
    let mut params = SimulationParams::new(region, 0.3, 0.5, v, 2, 1);
    params.seed = 11;
    params.sweeps = 20_000;
    params.burn_in = 200;
    params.steps_per_sweep = 4;
    let inner = BoxRegion::new(vec![0.0], 13.0 / 30.0)?;

    let mut envs: Vec<LoopConfiguration> = Vec::new();
    let mut trace = TraceObserver::new(inner.clone(), 4, RandomStream::new(params.seed, 1));
    let mut obs = |s: &ChainState, p: &SimulationParams| {
        envs.push(s.config().clone());
        trace.observe(s, p)
    };
    run_chain(&params, 0, &mut obs)?;

    let spec = QuadratureSpec::for_params(&params, 16);
    let mut rng = RandomStream::new(params.seed, 2);
    let pt = |x: f64| ClassicalConfig::from_points(1, &[[x]]);
    for (x, y) in [(-0.2, 0.1), (0.1, -0.2), (0.05, 0.05)] {
        let (x0, y0) = (pt(x)?, pt(y)?);
        let mc = estimate_rdmk(&params, &inner, &x0, &y0, &envs, 4, &mut rng)?;
        let q = quad_rdmk(&params, &spec, &inner, &x0, &y0)?;
        println!(
            "F({x:+.2}, {y:+.2}): MC {:.5} +- {:.5}, quadrature {:.5} +- {:.1e}",
            mc.value, mc.stderr, q.value, q.error
        );
    }
    let t = trace.estimate();
    let qt = quad_trace(&params, &spec, &inner)?;
    println!("trace: MC {:.4} +- {:.4}, quadrature {:.6}", t.value, t.stderr, qt.value);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
