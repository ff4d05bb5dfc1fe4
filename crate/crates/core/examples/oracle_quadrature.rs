// Deterministic quadrature for a small one-dimensional system: partition
// function under grid refinement, occupation probabilities, kernel values
// and the kernel trace.

use loopgas::geometry::{BoxRegion, ClassicalConfig};
use loopgas::mcmc::SimulationParams;
use loopgas::oracle::{quad_partition, quad_rdmk, quad_trace, QuadratureSpec};
use loopgas::potential::PotentialModel;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let region = BoxRegion::centered(1, 0.5)?;
    let v = PotentialModel::hard_core(0.6, 1.2)?;
    let params = SimulationParams::new(region, 0.3, 0.5, v, 2, 1);

    for grid in [6, 11, 16] {
        let q = quad_partition(&params, &QuadratureSpec::for_params(&params, grid))?;
        println!(
            "grid {grid:>2}: xi {:.6} (coarse {:.6}, fine {:.6}, error {:.1e})",
            q.xi.value, q.xi.coarse, q.xi.fine, q.xi.error
        );
    }
    let spec = QuadratureSpec::for_params(&params, 16);
    let q = quad_partition(&params, &spec)?;
    for (n, o) in q.occupation.iter().enumerate() {
        println!("P(N = {n}) = {:.6} +- {:.1e}", o.value, o.error);
    }

    // the inner box must sit on the grid: x = -0.5 + i/30 at the refined level
    let inner = BoxRegion::new(vec![0.0], 13.0 / 30.0)?;
    let pt = |x: f64| ClassicalConfig::from_points(1, &[[x]]);
    for (x, y) in [(-0.2, 0.1), (0.1, -0.2), (0.05, 0.05)] {
        let f = quad_rdmk(&params, &spec, &inner, &pt(x)?, &pt(y)?)?;
        println!("F({x:+.2}, {y:+.2}) = {:.6} +- {:.1e}", f.value, f.error);
    }
    let t = quad_trace(&params, &spec, &inner)?;
    println!("trace = {:.6} +- {:.1e}", t.value, t.error);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
