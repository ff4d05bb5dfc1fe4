//! Deterministic quadrature of the loop-gas integrals for tiny one-dimensional
//! systems with at most two strands per time section.
//!
//! Positions at interior slices are integrated on a uniform grid over the box.
//! Two-strand states use piecewise-linear quadrature on a triangulation whose
//! diagonals run along `x1 - x2 = const`, so with `r` a multiple of the grid
//! step the hard-core region `|x1 - x2| >= r` is a union of whole triangles.
//! Every quantity is evaluated on the base grid and on the grid with half the
//! step; the reported value is the Richardson combination `(4 fine - coarse)/3`
//! and the error estimate is `|fine - coarse|`.

use serde::{Deserialize, Serialize};

use crate::energy::Boundary;
use crate::error::{Error, Result};
use crate::geometry::{BoxRegion, ClassicalConfig};
use crate::mcmc::SimulationParams;
use crate::potential::PotentialModel;

pub const MAX_STRANDS: usize = 2;
pub const MAX_MULTIPLICITY: usize = 2;
pub const MAX_SLICES: usize = 4;
pub const MAX_GRID: usize = 16;

/// Size of a quadrature run. `n_max` caps the number of strands per section.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub n_max: usize,
    pub k_max: usize,
    pub slices: usize,
    pub grid: usize,
}

impl QuadratureSpec {
    pub fn for_params(params: &SimulationParams, grid: usize) -> Self {
        Self { n_max: MAX_STRANDS, k_max: params.k_max, slices: params.slices, grid }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max > MAX_STRANDS || self.k_max > MAX_MULTIPLICITY || self.slices > MAX_SLICES || self.grid > MAX_GRID {
            return Err(Error::QuadratureSize(format!(
                "caps are n <= {MAX_STRANDS}, k <= {MAX_MULTIPLICITY}, M <= {MAX_SLICES}, grid <= {MAX_GRID}; got {self:?}"
            )));
        }
        if self.k_max == 0 || self.slices == 0 || self.grid < 3 {
            return Err(Error::QuadratureSize("need k_max >= 1, M >= 1 and at least 3 grid points".into()));
        }
        Ok(())
    }

    /// Rough count of kernel evaluations on the refined grid.
    pub fn work_estimate(&self) -> u64 {
        let g = (2 * self.grid - 1) as u64;
        let starts = if self.n_max >= 2 { g * g } else { g };
        let per = if self.n_max >= 2 { 2 * g * g * g } else { g * g };
        starts * per * self.slices.saturating_sub(1).max(1) as u64
    }
}

/// Extrapolated quadrature result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub error: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl OracleValue {
    fn from_levels(coarse: f64, fine: f64) -> Self {
        Self { value: (4.0 * fine - coarse) / 3.0, error: (fine - coarse).abs(), coarse, fine }
    }
}

/// Partition function and occupation probabilities `P(N = n)`, `n = 0..=2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionQuadrature {
    pub xi: OracleValue,
    pub occupation: Vec<OracleValue>,
    /// False when more than two points fit in the box, so the strand cap truncates.
    pub truncation_exact: bool,
    pub grid: (usize, usize),
    pub slices: usize,
}

#[inline]
fn gauss(u: f64, var: f64) -> f64 {
    (-(u * u) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// One grid level with its precomputed weights and kernels.
struct Level<'a> {
    x: Vec<f64>,
    h: f64,
    tau: f64,
    slices: usize,
    v: &'a PotentialModel,
    lower: f64,
    upper: f64,
    phi: Vec<f64>,
    w1: Vec<f64>,
    /// Triangle weights on `|x1 - x2| >= r` times the interior slice factor.
    w2: Vec<f64>,
}

impl<'a> Level<'a> {
    fn new(params: &'a SimulationParams, nodes: usize) -> Self {
        let lower = params.region.lower(0);
        let upper = params.region.upper(0);
        let h = (upper - lower) / (nodes - 1) as f64;
        let x: Vec<f64> = (0..nodes).map(|i| lower + i as f64 * h).collect();
        let tau = params.tau();
        let n = nodes;
        let mut phi = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                phi[i * n + j] = gauss(x[i] - x[j], tau);
            }
        }
        let v = &params.potential;
        let mut lvl = Self { x, h, tau, slices: params.slices, v, lower, upper, phi, w1: Vec::new(), w2: Vec::new() };
        lvl.w1 = lvl.segment_weights(|_| true);
        let w2 = lvl.triangle_weights(|_, _| true);
        lvl.w2 = (0..n * n)
            .map(|s| {
                let (i, j) = (s / n, s % n);
                if w2[s] == 0.0 {
                    0.0
                } else {
                    w2[s] * (-lvl.tau * v.evaluate((lvl.x[i] - lvl.x[j]).abs())).exp()
                }
            })
            .collect();
        lvl
    }

    fn n(&self) -> usize {
        self.x.len()
    }

    fn core_steps(&self) -> usize {
        (self.v.core() / self.h).round() as usize
    }

    /// Trapezoid weights over the grid segments whose midpoint satisfies `pred`.
    fn segment_weights(&self, pred: impl Fn(f64) -> bool) -> Vec<f64> {
        let mut w = vec![0.0; self.n()];
        for i in 0..self.n() - 1 {
            if pred(0.5 * (self.x[i] + self.x[i + 1])) {
                w[i] += 0.5 * self.h;
                w[i + 1] += 0.5 * self.h;
            }
        }
        w
    }

    /// Piecewise-linear weights over triangles inside `{|i1 - i2| >= m}` whose
    /// centroid satisfies `pred`.
    fn triangle_weights(&self, pred: impl Fn(f64, f64) -> bool) -> Vec<f64> {
        let n = self.n();
        let m = self.core_steps() as f64;
        let share = self.h * self.h / 6.0;
        let mut w = vec![0.0; n * n];
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                // lower triangle (i,j),(i+1,j),(i+1,j+1) and upper (i,j),(i,j+1),(i+1,j+1)
                let tris = [
                    ([(i, j), (i + 1, j), (i + 1, j + 1)], (i as f64 + 2.0 / 3.0, j as f64 + 1.0 / 3.0)),
                    ([(i, j), (i, j + 1), (i + 1, j + 1)], (i as f64 + 1.0 / 3.0, j as f64 + 2.0 / 3.0)),
                ];
                for (verts, (ci, cj)) in tris {
                    if (ci - cj).abs() < m {
                        continue;
                    }
                    let (cx, cy) = (self.lower + ci * self.h, self.lower + cj * self.h);
                    if !pred(cx, cy) {
                        continue;
                    }
                    for (a, b) in verts {
                        w[a * n + b] += share;
                    }
                }
            }
        }
        w
    }

    /// Trapezoid nodes and weights on the parts of the box that satisfy
    /// `domain` (a union of grid segments) and avoid `(c - r, c + r)` for
    /// every `c` in `avoid`.
    fn pinned_rule(&self, domain: impl Fn(f64) -> bool, avoid: &[f64]) -> Vec<(f64, f64)> {
        let r = self.v.core();
        let mut cuts: Vec<f64> = self.x.clone();
        for &c in avoid {
            for e in [c - r, c + r] {
                if e > self.lower && e < self.upper {
                    cuts.push(e);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * self.h);
        let mut rule: Vec<(f64, f64)> = Vec::new();
        for win in cuts.windows(2) {
            let (a, b) = (win[0], win[1]);
            let mid = 0.5 * (a + b);
            if !domain(mid) || avoid.iter().any(|c| (mid - c).abs() < r) {
                continue;
            }
            for (p, wt) in [(a, 0.5 * (b - a)), (b, 0.5 * (b - a))] {
                match rule.last_mut() {
                    Some(last) if (last.0 - p).abs() < 1e-12 * self.h => last.1 += wt,
                    _ => rule.push((p, wt)),
                }
            }
        }
        rule
    }

    fn pair_factor(&self, a: f64, b: f64) -> f64 {
        let e = self.v.evaluate((a - b).abs());
        if e == f64::INFINITY {
            0.0
        } else {
            (-0.5 * self.tau * e).exp()
        }
    }

    /// Free single-strand propagation from `a` to `b` over one period,
    /// confined to the box at the interior slices.
    fn propagate1(&self, a: f64, b: f64) -> f64 {
        if self.slices == 1 {
            return gauss(b - a, self.tau);
        }
        let n = self.n();
        let mut v: Vec<f64> = (0..n).map(|i| gauss(self.x[i] - a, self.tau) * self.w1[i]).collect();
        for _ in 2..self.slices {
            let mut next = vec![0.0; n];
            for (i, vi) in v.iter().enumerate() {
                if *vi == 0.0 {
                    continue;
                }
                let row = &self.phi[i * n..(i + 1) * n];
                for (nx, p) in next.iter_mut().zip(row) {
                    *nx += vi * p;
                }
            }
            for (nx, w) in next.iter_mut().zip(&self.w1) {
                *nx *= w;
            }
            v = next;
        }
        v.iter().zip(&self.x).map(|(vi, xi)| vi * gauss(b - xi, self.tau)).sum()
    }

    /// Two interacting strands from `(a1, a2)` to `(b1, b2)` over one period.
    /// End-slice factors are left to the caller.
    fn propagate2(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        if self.slices == 1 {
            return gauss(b.0 - a.0, self.tau) * gauss(b.1 - a.1, self.tau);
        }
        let n = self.n();
        let ga: Vec<f64> = self.x.iter().map(|x| gauss(x - a.0, self.tau)).collect();
        let gb: Vec<f64> = self.x.iter().map(|x| gauss(x - a.1, self.tau)).collect();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = ga[i] * gb[j] * self.w2[i * n + j];
            }
        }
        let mut tmp = vec![0.0; n * n];
        for _ in 2..self.slices {
            // tmp = Φ^T v, then v = tmp Φ, then weights
            tmp.iter_mut().for_each(|t| *t = 0.0);
            for i in 0..n {
                for i2 in 0..n {
                    let p = self.phi[i * n + i2];
                    let src = &v[i * n..(i + 1) * n];
                    let dst = &mut tmp[i2 * n..(i2 + 1) * n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += p * s;
                    }
                }
            }
            for row in 0..n {
                let src = &tmp[row * n..(row + 1) * n];
                let dst = &mut v[row * n..(row + 1) * n];
                for (j2, d) in dst.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (j, t) in src.iter().enumerate() {
                        s += t * self.phi[j * n + j2];
                    }
                    *d = s * self.w2[row * n + j2];
                }
            }
        }
        let ea: Vec<f64> = self.x.iter().map(|x| gauss(b.0 - x, self.tau)).collect();
        let eb: Vec<f64> = self.x.iter().map(|x| gauss(b.1 - x, self.tau)).collect();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += v[i * n + j] * ea[i] * eb[j];
            }
        }
        s
    }

    /// `∫ du` of closed single-strand loops with base in `domain`.
    fn single_loops(&self, domain: impl Fn(f64) -> bool) -> f64 {
        let w = self.segment_weights(domain);
        (0..self.n()).filter(|&i| w[i] > 0.0).map(|i| w[i] * self.propagate1(self.x[i], self.x[i])).sum()
    }

    /// `∫∫` over admissible pairs in `domain^2` of two strands that return to
    /// their own start (`swap = false`) or to each other's (`swap = true`).
    fn strand_pairs(&self, domain: impl Fn(f64) -> bool, swap: bool) -> f64 {
        let n = self.n();
        let w = self.triangle_weights(|a, b| domain(a) && domain(b));
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let wt = w[i * n + j];
                if wt == 0.0 {
                    continue;
                }
                let (a, b) = (self.x[i], self.x[j]);
                let end = if swap { (b, a) } else { (a, b) };
                let f = self.pair_factor(a, b);
                s += wt * f * f * self.propagate2((a, b), end);
            }
        }
        s
    }

    /// Sector weights `[N0, N1, N2]` of the box restricted to base and control
    /// points in `domain`.
    fn sectors(&self, params: &SimulationParams, spec: &QuadratureSpec, domain: impl Fn(f64) -> bool + Copy) -> [f64; 3] {
        let z = params.z;
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        if spec.n_max >= 1 {
            n1 += z * self.single_loops(domain);
        }
        if spec.n_max >= 2 {
            if spec.k_max >= 2 {
                n1 += 0.5 * z * z * self.strand_pairs(domain, true);
            }
            n2 = 0.5 * z * z * self.strand_pairs(domain, false);
        }
        [1.0, n1, n2]
    }

    /// Unnormalized kernel numerator for `x0 -> y0` with the environment in `outside`.
    fn kernel_numerator(
        &self,
        params: &SimulationParams,
        spec: &QuadratureSpec,
        outside: impl Fn(f64) -> bool + Copy,
        x0: &[f64],
        y0: &[f64],
    ) -> f64 {
        let z = params.z;
        let r = self.v.core();
        match x0.len() {
            0 => self.sectors(params, spec, outside).iter().sum(),
            1 => {
                let (x, y) = (x0[0], y0[0]);
                let mut s = z * self.propagate1(x, y);
                if spec.n_max >= 2 {
                    for (p, w) in self.pinned_rule(outside, &[x, y]) {
                        let f = self.pair_factor(x, p) * self.pair_factor(y, p);
                        // environment loop based at p next to the bridge
                        let mut t = self.propagate2((x, p), (y, p));
                        if spec.k_max >= 2 {
                            // the bridge itself winds twice, visiting p at time beta
                            t += self.propagate2((x, p), (p, y));
                        }
                        s += z * z * w * f * t;
                    }
                }
                s
            }
            2 => {
                if spec.n_max < 2 || (x0[0] - x0[1]).abs() < r || (y0[0] - y0[1]).abs() < r {
                    return 0.0;
                }
                let f = self.pair_factor(x0[0], x0[1]) * self.pair_factor(y0[0], y0[1]);
                let mut t = self.propagate2((x0[0], x0[1]), (y0[0], y0[1]));
                if spec.k_max >= 2 {
                    t += self.propagate2((x0[0], x0[1]), (y0[1], y0[0]));
                }
                z * z * f * t
            }
            _ => 0.0,
        }
    }
}

fn check_inputs(params: &SimulationParams, spec: &QuadratureSpec) -> Result<()> {
    spec.validate()?;
    if params.dim() != 1 {
        return Err(Error::QuadratureSize(format!("the oracle is one-dimensional, got d = {}", params.dim())));
    }
    if params.slices != spec.slices || params.k_max > spec.k_max {
        return Err(Error::QuadratureSize("spec slices and k_max must match the parameters".into()));
    }
    if !matches!(params.boundary, Boundary::Empty) && !params.boundary.is_empty() {
        return Err(Error::QuadratureSize("the oracle supports an empty boundary only".into()));
    }
    let h = params.region.side() / (spec.grid - 1) as f64;
    check_on_grid(params.potential.core(), 0.0, h, "core diameter")?;
    Ok(())
}

fn check_on_grid(value: f64, origin: f64, h: f64, what: &str) -> Result<()> {
    let steps = (value - origin) / h;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "{what} {value} is not on the quadrature grid (step {h}); choose the grid size so it is"
        )));
    }
    Ok(())
}

fn check_inner(params: &SimulationParams, spec: &QuadratureSpec, inner: &BoxRegion) -> Result<()> {
    if inner.dim() != 1 || !params.region.contains_box(inner) {
        return Err(Error::Domain("inner box must be a 1-d box inside the simulation box".into()));
    }
    let h = params.region.side() / (spec.grid - 1) as f64;
    let lo = params.region.lower(0);
    check_on_grid(inner.lower(0), lo, h, "inner box edge")?;
    check_on_grid(inner.upper(0), lo, h, "inner box edge")
}

fn levels(spec: &QuadratureSpec) -> [usize; 2] {
    [spec.grid, 2 * spec.grid - 1]
}

/// `Ξ` and `P(N = n)` by quadrature.
pub fn quad_partition(params: &SimulationParams, spec: &QuadratureSpec) -> Result<PartitionQuadrature> {
    check_inputs(params, spec)?;
    let mut xi = [0.0; 2];
    let mut occ = [[0.0; 3]; 2];
    for (li, nodes) in levels(spec).into_iter().enumerate() {
        let lvl = Level::new(params, nodes);
        let s = lvl.sectors(params, spec, |_| true);
        let total: f64 = s.iter().sum();
        xi[li] = total;
        for n in 0..3 {
            occ[li][n] = s[n] / total;
        }
    }
    Ok(PartitionQuadrature {
        xi: OracleValue::from_levels(xi[0], xi[1]),
        occupation: (0..3).map(|n| OracleValue::from_levels(occ[0][n], occ[1][n])).collect(),
        truncation_exact: params.region.side() < 2.0 * params.potential.core(),
        grid: (spec.grid, 2 * spec.grid - 1),
        slices: spec.slices,
    })
}

/// `F^{Λ0}(x0, y0)` by quadrature; zero for unequal cardinalities.
pub fn quad_rdmk(
    params: &SimulationParams,
    spec: &QuadratureSpec,
    inner: &BoxRegion,
    x0: &ClassicalConfig,
    y0: &ClassicalConfig,
) -> Result<OracleValue> {
    check_inputs(params, spec)?;
    check_inner(params, spec, inner)?;
    if x0.len() != y0.len() {
        return Ok(OracleValue { value: 0.0, error: 0.0, coarse: 0.0, fine: 0.0 });
    }
    if x0.len() > spec.n_max {
        return Err(Error::QuadratureSize(format!("at most {} endpoints", spec.n_max)));
    }
    if x0.points().chain(y0.points()).any(|p| !inner.contains(p)) {
        return Err(Error::Domain("endpoints must lie in the inner box".into()));
    }
    let xs: Vec<f64> = x0.coords().to_vec();
    let ys: Vec<f64> = y0.coords().to_vec();
    let outside = |u: f64| !inner.contains(&[u]);
    let mut val = [0.0; 2];
    for (li, nodes) in levels(spec).into_iter().enumerate() {
        let lvl = Level::new(params, nodes);
        let xi: f64 = lvl.sectors(params, spec, |_| true).iter().sum();
        val[li] = lvl.kernel_numerator(params, spec, outside, &xs, &ys) / xi;
    }
    Ok(OracleValue::from_levels(val[0], val[1]))
}

/// `sum_n 1/n! ∫ F^{Λ0}(w, w) dw` by quadrature.
pub fn quad_trace(params: &SimulationParams, spec: &QuadratureSpec, inner: &BoxRegion) -> Result<OracleValue> {
    check_inputs(params, spec)?;
    check_inner(params, spec, inner)?;
    let outside = |u: f64| !inner.contains(&[u]);
    let in_inner = |u: f64| inner.contains(&[u]);
    let mut val = [0.0; 2];
    for (li, nodes) in levels(spec).into_iter().enumerate() {
        let lvl = Level::new(params, nodes);
        let xi: f64 = lvl.sectors(params, spec, |_| true).iter().sum();
        let mut t = lvl.kernel_numerator(params, spec, outside, &[], &[]);
        if spec.n_max >= 1 {
            let w = lvl.segment_weights(in_inner);
            for (&wi, &x) in w.iter().zip(&lvl.x) {
                if wi > 0.0 {
                    t += wi * lvl.kernel_numerator(params, spec, outside, &[x], &[x]);
                }
            }
        }
        if spec.n_max >= 2 {
            let n = lvl.n();
            let w = lvl.triangle_weights(|a, b| in_inner(a) && in_inner(b));
            for i in 0..n {
                for j in 0..n {
                    if w[i * n + j] > 0.0 {
                        let p = [lvl.x[i], lvl.x[j]];
                        t += 0.5 * w[i * n + j] * lvl.kernel_numerator(params, spec, outside, &p, &p);
                    }
                }
            }
        }
        val[li] = t / xi;
    }
    Ok(OracleValue::from_levels(val[0], val[1]))
}

/// Heat trace of `-Δ/2` with Dirichlet walls on the cube, at time `k beta`.
pub fn dirichlet_single_particle(region: &BoxRegion, beta: f64, k: usize) -> f64 {
    let l = region.half_side();
    let c = k as f64 * beta * std::f64::consts::PI.powi(2) / (8.0 * l * l);
    let mut s = 0.0;
    let mut m = 1.0f64;
    loop {
        let t = (-c * m * m).exp();
        s += t;
        if t <= 1e-15 * s {
            break;
        }
        m += 1.0;
    }
    s.powi(region.dim() as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_params(z: f64, k_max: usize, slices: usize) -> SimulationParams {
        let region = BoxRegion::centered(1, 0.5).unwrap();
        let v = PotentialModel::hard_core(0.6, 1.2).unwrap();
        SimulationParams::new(region, z, 0.5, v, slices, k_max)
    }

    fn spec(p: &SimulationParams) -> QuadratureSpec {
        QuadratureSpec::for_params(p, 16)
    }

    fn pts(p: &[f64]) -> ClassicalConfig {
        ClassicalConfig::from_points(1, &p.iter().map(|x| [*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn caps_enforced() {
        let p = oracle_params(0.3, 1, 2);
        let mut s = spec(&p);
        s.grid = 17;
        assert!(matches!(quad_partition(&p, &s), Err(Error::QuadratureSize(_))));
        let mut p5 = oracle_params(0.3, 1, 5);
        p5.slices = 5;
        assert!(matches!(QuadratureSpec::for_params(&p5, 16).validate(), Err(Error::QuadratureSize(_))));
        let mut p2 = p.clone();
        p2.region = BoxRegion::centered(2, 0.5).unwrap();
        assert!(quad_partition(&p2, &s).is_err());
        let mut off = p.clone();
        off.potential = PotentialModel::hard_core(0.61, 1.2).unwrap();
        assert!(matches!(quad_partition(&off, &spec(&off)), Err(Error::Domain(_))));
    }

    #[test]
    fn tiny_z_gives_one() {
        let p = oracle_params(1e-12, 1, 2);
        let q = quad_partition(&p, &spec(&p)).unwrap();
        assert!((q.xi.value - 1.0).abs() < 1e-10);
        assert!(q.truncation_exact);
    }

    #[test]
    fn one_slice_closed_form() {
        // M = 1, k_max = 1: Ξ = 1 + z |Λ| (2πβ)^(-1/2) + z^2/2 |{|u-v| >= r}| (2πβ)^(-1)
        let p = oracle_params(0.3, 1, 1);
        let q = quad_partition(&p, &spec(&p)).unwrap();
        let g = (2.0 * std::f64::consts::PI * 0.5).powf(-0.5);
        let area = (1.0f64 - 0.6).powi(2);
        let exact = 1.0 + 0.3 * g + 0.5 * 0.09 * area * g * g;
        assert!((q.xi.value - exact).abs() < 1e-12, "{:?} vs {exact}", q.xi);
        assert!(q.xi.error < 1e-12);
    }

    #[test]
    fn single_loop_matches_gaussian_integral() {
        // M = 2, one strand: ∫_Λ du ∫_Λ dv φ_τ(v-u)^2 in closed form
        let p = oracle_params(0.3, 1, 2);
        let lvl = Level::new(&p, 31);
        let got = lvl.single_loops(|_| true);
        // φ_τ(w)^2 = φ_{τ/2}(w) / sqrt(4πτ); ∫∫ over the unit square of φ_s(v-u)
        let tau: f64 = 0.25;
        let s = tau / 2.0;
        let erf_int = |a: f64| {
            // ∫_0^1 ∫_0^1 φ_s(v-u) = 2 ∫_0^1 (1-w) φ_s(w) dw
            let n = 200_000;
            let h = a / n as f64;
            (0..n).map(|i| {
                let w = (i as f64 + 0.5) * h;
                2.0 * (1.0 - w) * gauss(w, s)
            }).sum::<f64>() * h
        };
        let exact = erf_int(1.0) / (4.0 * std::f64::consts::PI * tau).sqrt();
        assert!((got / exact - 1.0).abs() < 2e-3, "{got} {exact}");
    }

    #[test]
    fn partition_monotone_in_z_and_refines() {
        let mut last = 1.0;
        for z in [0.1, 0.3, 0.6] {
            let p = oracle_params(z, 2, 2);
            let q = quad_partition(&p, &spec(&p)).unwrap();
            assert!(q.xi.value > last);
            last = q.xi.value;
            let total: f64 = q.occupation.iter().map(|o| o.value).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(q.xi.error < 1e-2 * q.xi.value);
        }
    }

    #[test]
    fn refinement_is_second_order() {
        let p = oracle_params(0.3, 1, 2);
        let xi = |n: usize| {
            let lvl = Level::new(&p, n);
            lvl.sectors(&p, &spec(&p), |_| true).iter().sum::<f64>()
        };
        // grids with steps h, h/2, h/4 where r stays aligned: 6, 11, 21 nodes on side 1 with r = 0.6
        let (a, b, c) = (xi(6), xi(11), xi(21));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 3.0, "ratio {ratio}");
    }

    #[test]
    fn kernel_symmetry_and_positivity() {
        let p = oracle_params(0.3, 2, 2);
        let inner = BoxRegion::centered(1, 13.0 / 30.0).unwrap();
        let s = spec(&p);
        let a = quad_rdmk(&p, &s, &inner, &pts(&[-0.2]), &pts(&[0.1])).unwrap();
        let b = quad_rdmk(&p, &s, &inner, &pts(&[0.1]), &pts(&[-0.2])).unwrap();
        assert!(a.value > 0.0);
        assert!((a.value - b.value).abs() < 1e-12 * a.value);
        let d = quad_rdmk(&p, &s, &inner, &pts(&[0.05]), &pts(&[0.05])).unwrap();
        assert!(d.error < 0.01 * d.value);
        let two = quad_rdmk(&p, &s, &inner, &pts(&[-0.4, 0.3]), &pts(&[0.35, -0.3])).unwrap();
        let owt = quad_rdmk(&p, &s, &inner, &pts(&[0.35, -0.3]), &pts(&[-0.4, 0.3])).unwrap();
        assert!((two.value - owt.value).abs() < 1e-12 * two.value.abs().max(1e-300));
        assert_eq!(quad_rdmk(&p, &s, &inner, &pts(&[0.0]), &pts(&[])).unwrap().value, 0.0);
    }

    #[test]
    fn empty_kernel_is_restricted_partition_ratio() {
        let p = oracle_params(0.3, 1, 2);
        let inner = BoxRegion::centered(1, 13.0 / 30.0).unwrap();
        let s = spec(&p);
        let f0 = quad_rdmk(&p, &s, &inner, &pts(&[]), &pts(&[])).unwrap();
        let q = quad_partition(&p, &s).unwrap();
        assert!(f0.value > 0.0 && f0.value < 1.0);
        assert!(f0.value > q.occupation[0].value);
        let whole = BoxRegion::centered(1, 0.5).unwrap();
        let g = quad_rdmk(&p, &s, &whole, &pts(&[]), &pts(&[])).unwrap();
        assert!((g.value - q.occupation[0].value).abs() < 1e-12);
    }

    #[test]
    fn trace_is_one() {
        for (k_max, slices) in [(1, 2), (2, 2), (1, 1), (2, 3)] {
            let p = oracle_params(0.3, k_max, slices);
            let inner = BoxRegion::centered(1, 13.0 / 30.0).unwrap();
            let t = quad_trace(&p, &spec(&p), &inner).unwrap();
            assert!((t.value - 1.0).abs() < 5e-4, "k_max {k_max} M {slices}: {t:?}");
        }
    }

    #[test]
    fn misaligned_inner_box_rejected() {
        let p = oracle_params(0.3, 1, 2);
        let inner = BoxRegion::centered(1, 0.41).unwrap();
        assert!(matches!(quad_trace(&p, &spec(&p), &inner), Err(Error::Domain(_))));
    }

    #[test]
    fn dirichlet_examples() {
        let b = BoxRegion::centered(1, 1.0).unwrap();
        assert!(dirichlet_single_particle(&b, 0.5, 1) > dirichlet_single_particle(&b, 0.7, 1));
        let b2 = BoxRegion::centered(2, 1.0).unwrap();
        let one = dirichlet_single_particle(&b, 0.5, 2);
        assert!((dirichlet_single_particle(&b2, 0.5, 2) - one * one).abs() < 1e-14);
        let kb: f64 = 0.5;
        let l = 10.0 * kb.sqrt();
        let big = BoxRegion::centered(1, l).unwrap();
        // two-term Weyl expansion with the Dirichlet wall correction
        let weyl = 2.0 * l * (2.0 * std::f64::consts::PI * kb).powf(-0.5) - 0.5;
        assert!((dirichlet_single_particle(&big, kb, 1) - weyl).abs() < 1e-9);
    }
}
