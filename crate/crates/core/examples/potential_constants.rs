// Potential profiles, their stability constants and the kernel bounds they
// imply for a few inner boxes.

use loopgas::estimators::bound_constants;
use loopgas::potential::{constants, PotentialModel};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let (z, beta, d) = (0.3, 1.0, 2);
    let models = [
        ("hard core", PotentialModel::hard_core(0.5, 1.0)?),
        ("smoothed well", PotentialModel::smoothed_well(0.5, 1.0, 0.2)?),
        ("deep well", PotentialModel::smoothed_well(0.5, 1.0, 2.0)?),
    ];
    for (name, v) in &models {
        let c = constants(v, z, beta, d)?;
        println!("{name:<14} v_bar {:.3} v_bar1 {:.3} rho_bar {:.4} stable {}", c.v_bar, c.v_bar1, c.rho_bar, c.stable);
        print!("  V(s):");
        for s in [0.4, 0.5, 0.6, 0.75, 0.9, 1.0, 1.2] {
            print!(" {:.3}", v.evaluate(s));
        }
        println!();
        if !c.stable {
            continue;
        }
        for l0 in [0.25, 0.5, 1.0] {
            let b = bound_constants(v, z, beta, d, l0)?;
            println!(
                "  inner half side {l0}: v0 = {}, kernel bound {:.3e}, gradient bound {:.3e}",
                b.v0, b.kernel_bound, b.gradient_bound
            );
        }
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
