// Brownian bridges on the slice grid: the midpoint spread of a closed loop,
// the multiplicity law, and how confinement on the grid approaches the
// Dirichlet heat trace as the time step shrinks.
//
// ```bash
// cargo run --release --example bridge_sampling
// ```

use loopgas::geometry::BoxRegion;
use loopgas::loops::path_confined;
use loopgas::oracle::dirichlet_single_particle;
use loopgas::sampling::{sample_bridge, MultiplicityLaw, RandomStream};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = RandomStream::new(1, 0);
    let (beta, slices) = (0.5, 8);

    // the midpoint of a closed bridge of duration k*beta has variance k*beta/4
    for k in 1..=3 {
        let n = 20_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let p = sample_bridge(&[0.0], &[0.0], k, beta, slices, &mut rng);
            s2 += p.position(k * slices / 2)[0].powi(2);
        }
        println!("k = {k}: midpoint variance {:.4}, expected {:.4}", s2 / n as f64, k as f64 * beta / 4.0);
    }

    let law = MultiplicityLaw::new(0.6, beta, 1, 4);
    let probs: Vec<String> = (1..=4).map(|k| format!("{:.3}", law.prob(k))).collect();
    println!("multiplicity law at z = 0.6: [{}]", probs.join(", "));

    let region = BoxRegion::centered(1, 1.0)?;
    let free = region.volume() / (2.0 * std::f64::consts::PI * beta).sqrt();
    let exact = dirichlet_single_particle(&region, beta, 1);
    println!("Dirichlet trace {exact:.5}");
    for m in [2, 8, 32, 128] {
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            let x = [region.lower(0) + region.side() * rng.uniform()];
            if path_confined(&region, &sample_bridge(&x, &x, 1, beta, m, &mut rng)) {
                hits += 1;
            }
        }
        let est = free * hits as f64 / n as f64;
        println!("  M = {m:>3}: confined weight {est:.5} ({:+.2}%)", 100.0 * (est / exact - 1.0));
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
