//! Confinement on the slice grid against exact references.

use loopgas::geometry::BoxRegion;
use loopgas::loops::path_confined;
use loopgas::mcmc::SimulationParams;
use loopgas::oracle::{dirichlet_single_particle, quad_partition, QuadratureSpec};
use loopgas::potential::PotentialModel;
use loopgas::sampling::{sample_bridge, RandomStream};

/// Fraction of closed bridges, based uniformly in the box, whose slice points
/// stay inside it.
fn confined_fraction(region: &BoxRegion, beta: f64, k: usize, slices: usize, n: usize, stream: u64) -> (f64, f64) {
    let mut rng = RandomStream::new(77, stream);
    let mut hits = 0usize;
    for _ in 0..n {
        let x = [region.lower(0) + region.side() * rng.uniform()];
        if path_confined(region, &sample_bridge(&x, &x, k, beta, slices, &mut rng)) {
            hits += 1;
        }
    }
    let f = hits as f64 / n as f64;
    (f, (f * (1.0 - f) / n as f64).sqrt())
}

#[test]
fn slice_confinement_decreases_towards_the_dirichlet_trace() {
    let region = BoxRegion::centered(1, 1.0).unwrap();
    let beta = 0.5;
    let free = region.volume() / (2.0 * std::f64::consts::PI * beta).sqrt();
    let exact = dirichlet_single_particle(&region, beta, 1) / free;
    let mut prev: Option<(f64, f64)> = None;
    for (i, m) in [2usize, 8, 32].into_iter().enumerate() {
        let (f, se) = confined_fraction(&region, beta, 1, m, 200_000, i as u64);
        assert!(f - exact > -3.0 * se, "M = {m}: {f} below the continuum value {exact}");
        if let Some((pf, pse)) = prev {
            assert!(pf - f > -3.0 * (se * se + pse * pse).sqrt(), "M = {m}: {f} above coarser {pf}");
        }
        prev = Some((f, se));
    }
}

#[test]
fn one_loop_box_partition_matches_direct_bridge_sampling() {
    // the core exceeds the box side, so at most one loop fits
    let region = BoxRegion::centered(1, 0.5).unwrap();
    let v = PotentialModel::hard_core(1.2, 2.4).unwrap();
    let (z, beta, slices) = (0.4, 0.5, 2);
    let params = SimulationParams::new(region.clone(), z, beta, v, slices, 1);
    let q = quad_partition(&params, &QuadratureSpec::for_params(&params, 16)).unwrap();
    let (f, se) = confined_fraction(&region, beta, 1, slices, 400_000, 9);
    let free = region.volume() / (2.0 * std::f64::consts::PI * beta).sqrt();
    let xi = 1.0 + z * free * f;
    let sigma = (z * free * se).hypot(q.xi.error);
    assert!((xi - q.xi.value).abs() <= 3.0 * sigma, "direct {xi} vs quadrature {} (sigma {sigma})", q.xi.value);
    assert!(q.occupation[2].value.abs() < 1e-12);
}
