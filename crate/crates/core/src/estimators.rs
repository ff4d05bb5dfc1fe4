//! Estimators fed by chain samples: occupation probabilities and the partition
//! function, reduced density matrix kernels, their trace and compatibility
//! checks, density profiles, the one-loop moment function, and the explicit
//! kernel bounds they are validated against.

use serde::{Deserialize, Serialize};

use crate::energy::{collection_energy, cross_collection_energy, energy_lower_bound, Boundary, FloorMonitor};
use crate::error::{Error, Result};
use crate::geometry::{hardcore_admissible, max_occupancy, BoxRegion, ClassicalConfig};
use crate::loops::{path_confined, path_controls_outside, Loop, LoopConfiguration, Path};
use crate::mcmc::{ChainState, Observer, SimulationParams};
use crate::potential::{constants, PotentialModel};
use crate::sampling::{
    ln_factorial, permutation_cycles, sample_bridge, sample_permutation, sample_uniform_point, MultiplicityLaw,
    RandomStream,
};

/// Stream of raw sample values. Merging concatenates, so a merged accumulator
/// is exactly the accumulator of the concatenated stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    values: Vec<f64>,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.values.push(x);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.values.extend_from_slice(&other.values);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean via compensated summation of the sorted values, so it does not
    /// depend on the order samples arrived in. `NaN` when empty.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        neumaier_sum(&sorted) / sorted.len() as f64
    }

    pub fn second_moment(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        let mut sq: Vec<f64> = self.values.iter().map(|x| x * x).collect();
        sq.sort_by(f64::total_cmp);
        neumaier_sum(&sq) / sq.len() as f64
    }

    /// Batch-means standard error. The batch size doubles until the lag-1
    /// autocorrelation of the batch means drops below 0.1, or fewer than 16
    /// batches would remain. `+inf` with fewer than two samples.
    pub fn stderr(&self) -> f64 {
        self.batch_means().0
    }

    /// `(stderr, batch size)`.
    pub fn batch_means(&self) -> (f64, usize) {
        let n = self.values.len();
        if n < 2 {
            return (f64::INFINITY, 1);
        }
        let mut b = 1;
        let mut best = f64::INFINITY;
        loop {
            let nb = n / b;
            if nb < 16 && b > 1 {
                return (best, b / 2);
            }
            let means: Vec<f64> = self.values[..nb * b].chunks_exact(b).map(|c| neumaier_sum(c) / b as f64).collect();
            let mu = neumaier_sum(&means) / nb as f64;
            let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (nb - 1).max(1) as f64;
            if var == 0.0 {
                return (0.0, b);
            }
            best = (var / nb as f64).sqrt();
            let lag = means.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum::<f64>() / (nb - 1).max(1) as f64;
            if lag / var < 0.1 || nb < 32 {
                return (best, b);
            }
            b *= 2;
        }
    }
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for &x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Value with a standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn of(acc: &Accumulator) -> Self {
        Self { value: acc.mean(), stderr: acc.stderr() }
    }

    /// `|a - b| / sqrt(sa^2 + sb^2)`.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        (self.value - other.value).abs() / (self.stderr.powi(2) + other.stderr.powi(2)).sqrt()
    }
}

/// Estimate of `F^{Λ0}(x0, y0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub x0: ClassicalConfig,
    pub y0: ClassicalConfig,
    pub value: f64,
    pub stderr: f64,
}

/// Counts loops per sample and records the indicators of `N = n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OccupancyObserver {
    pub n_max: usize,
    /// `indicators[n]` holds `1(N = n)` per sample.
    pub indicators: Vec<Accumulator>,
    pub loops: Accumulator,
    pub multiplicity: Accumulator,
    /// Histogram of loop multiplicities over all samples.
    pub k_histogram: Vec<u64>,
}

impl OccupancyObserver {
    pub fn new(n_max: usize) -> Self {
        Self { n_max, indicators: vec![Accumulator::new(); n_max + 1], ..Default::default() }
    }

    pub fn record(&mut self, config: &LoopConfiguration) {
        let n = config.len();
        for (i, acc) in self.indicators.iter_mut().enumerate() {
            acc.push(if i == n { 1.0 } else { 0.0 });
        }
        self.loops.push(n as f64);
        self.multiplicity.push(crate::loops::k_of(config) as f64);
        for l in config.loops() {
            let k = l.multiplicity();
            if self.k_histogram.len() < k {
                self.k_histogram.resize(k, 0);
            }
            self.k_histogram[k - 1] += 1;
        }
    }

    /// When every sample agrees the batch error vanishes; the error is then
    /// floored at one event per effective sample.
    pub fn probability(&self, n: usize) -> Estimate {
        let acc = &self.indicators[n];
        let mut e = Estimate::of(acc);
        let (se, batch) = acc.batch_means();
        if se == 0.0 {
            e.stderr = batch as f64 / acc.len() as f64;
        }
        e
    }

    pub fn merge(&mut self, other: &OccupancyObserver) {
        for (a, b) in self.indicators.iter_mut().zip(&other.indicators) {
            a.merge(b);
        }
        self.loops.merge(&other.loops);
        self.multiplicity.merge(&other.multiplicity);
        if self.k_histogram.len() < other.k_histogram.len() {
            self.k_histogram.resize(other.k_histogram.len(), 0);
        }
        for (a, b) in self.k_histogram.iter_mut().zip(&other.k_histogram) {
            *a += b;
        }
    }
}

impl Observer for OccupancyObserver {
    fn observe(&mut self, state: &ChainState, _: &SimulationParams) -> Result<()> {
        self.record(state.config());
        Ok(())
    }
}

/// `Ξ = 1 / P(N = 0)` with a delta-method error.
pub fn estimate_partition(empty_indicator: &Accumulator) -> Result<Estimate> {
    let p = Estimate::of(empty_indicator);
    if empty_indicator.is_empty() || p.value == 0.0 {
        return Err(Error::EstimatorUndefined(
            "the chain never visited the empty configuration; shrink the box or lower z".into(),
        ));
    }
    Ok(Estimate { value: 1.0 / p.value, stderr: p.stderr / (p.value * p.value) })
}

/// Everything needed to weight bridge collections inside a sub-box.
#[derive(Clone, Debug)]
pub struct KernelContext<'a> {
    pub params: &'a SimulationParams,
    pub inner: BoxRegion,
    law: MultiplicityLaw,
    floor_per_strand: f64,
}

impl<'a> KernelContext<'a> {
    pub fn new(params: &'a SimulationParams, inner: BoxRegion) -> Result<Self> {
        if !params.region.contains_box(&inner) {
            return Err(Error::Domain("inner box must lie inside the simulation box".into()));
        }
        let consts = params.constants()?;
        Ok(Self {
            law: params.multiplicity_law(),
            floor_per_strand: energy_lower_bound(1, &consts, &params.potential, params.beta, params.dim()),
            params,
            inner,
        })
    }

    /// `ceil((2 L0)^d / r^d)`.
    pub fn occupancy_cap(&self) -> usize {
        max_occupancy(&self.inner, self.params.potential.core())
    }

    /// Endpoint configurations must sit in the inner box and respect the core.
    pub fn check_endpoints(&self, x0: &ClassicalConfig, y0: &ClassicalConfig) -> Result<()> {
        let r = self.params.potential.core();
        for c in [x0, y0] {
            if c.points().any(|p| !self.inner.contains(p)) {
                return Err(Error::Domain("endpoint outside the inner box".into()));
            }
            if !hardcore_admissible(c, r) {
                return Err(Error::Domain("endpoint configuration violates the hard core".into()));
            }
        }
        Ok(())
    }

    /// `1` iff no loop of the environment has a time-zero point (base or
    /// control point) in the inner box.
    pub fn environment_clear(&self, env: &LoopConfiguration) -> bool {
        env.loops()
            .iter()
            .all(|l| !self.inner.contains(l.base()) && path_controls_outside(&self.inner, l.path()))
    }

    /// One importance-sampled weight of the bridge collection from `x0` to `y0`:
    /// uniform permutation, multiplicities from the truncated law, bridges by
    /// bisection. Its expectation times the outer indicator, averaged over the
    /// chain, is `F^{Λ0}(x0, y0)`.
    pub fn bridge_weight(
        &self,
        x0: &ClassicalConfig,
        y0: &ClassicalConfig,
        env: &LoopConfiguration,
        rng: &mut RandomStream,
        floor: &mut FloorMonitor,
    ) -> f64 {
        let n = x0.len();
        if n != y0.len() {
            return 0.0;
        }
        if n == 0 {
            return 1.0;
        }
        let p = self.params;
        let perm = sample_permutation(n, rng);
        let ks: Vec<usize> = (0..n).map(|_| self.law.sample(rng)).collect();
        for cycle in permutation_cycles(&perm) {
            if cycle.iter().map(|&j| ks[j]).sum::<usize>() > p.k_max {
                return 0.0;
            }
        }
        let mut paths: Vec<Path> = Vec::with_capacity(n);
        let mut ln_w = ln_factorial(n);
        for j in 0..n {
            let (x, y) = (x0.point(j), y0.point(perm[j]));
            let k = ks[j];
            ln_w += self.law.normalizer().ln() - crate::geometry::dist2(x, y) / (2.0 * k as f64 * p.beta);
            let path = sample_bridge(x, y, k, p.beta, p.slices, rng);
            if !path_confined(&p.region, &path) || !path_controls_outside(&self.inner, &path) {
                return 0.0;
            }
            paths.push(path);
        }
        let h = bridges_energy(&paths, env, &p.potential, p.beta, &p.boundary);
        if h == f64::INFINITY {
            return 0.0;
        }
        let k_total: usize = ks.iter().sum();
        floor.check(h, self.floor_per_strand * k_total as f64);
        (ln_w - h).exp()
    }

    /// Average of `samples` bridge weights, times the outer indicator.
    pub fn kernel_sample(
        &self,
        x0: &ClassicalConfig,
        y0: &ClassicalConfig,
        env: &LoopConfiguration,
        samples: usize,
        rng: &mut RandomStream,
        floor: &mut FloorMonitor,
    ) -> f64 {
        if x0.len() != y0.len() || !self.environment_clear(env) {
            return 0.0;
        }
        if x0.is_empty() {
            return 1.0;
        }
        let s: f64 = (0..samples).map(|_| self.bridge_weight(x0, y0, env, rng, floor)).sum();
        s / samples as f64
    }
}

/// `h(bridges | env ∨ boundary)`.
pub fn bridges_energy(
    paths: &[Path],
    env: &LoopConfiguration,
    v: &PotentialModel,
    beta: f64,
    boundary: &Boundary,
) -> f64 {
    let own = collection_energy(paths, v, beta);
    if own == f64::INFINITY {
        return own;
    }
    let cross = cross_collection_energy(paths, env, v, beta);
    if cross == f64::INFINITY {
        return cross;
    }
    let ext = boundary.energy_with_all(paths, v, beta);
    own + cross + ext
}

/// A pair of endpoint configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub x0: ClassicalConfig,
    pub y0: ClassicalConfig,
}

/// Accumulates `F^{Λ0}(x0, y0)` for a list of endpoint pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RdmkObserver {
    pub inner: BoxRegion,
    pub pairs: Vec<KernelPair>,
    pub bridge_samples: usize,
    pub values: Vec<Accumulator>,
    pub floor: FloorMonitor,
    rng: RandomStream,
}

impl RdmkObserver {
    /// Pairs with unequal cardinalities are kept and estimated as exactly zero.
    pub fn new(
        params: &SimulationParams,
        inner: BoxRegion,
        pairs: Vec<KernelPair>,
        bridge_samples: usize,
        rng: RandomStream,
    ) -> Result<Self> {
        let ctx = KernelContext::new(params, inner.clone())?;
        for p in &pairs {
            ctx.check_endpoints(&p.x0, &p.y0)?;
        }
        Ok(Self {
            inner,
            values: vec![Accumulator::new(); pairs.len()],
            pairs,
            bridge_samples: bridge_samples.max(1),
            floor: FloorMonitor::default(),
            rng,
        })
    }

    pub fn estimates(&self) -> Vec<KernelEstimate> {
        self.pairs
            .iter()
            .zip(&self.values)
            .map(|(p, acc)| {
                let e = if p.x0.len() != p.y0.len() {
                    Estimate { value: 0.0, stderr: 0.0 }
                } else {
                    Estimate::of(acc)
                };
                KernelEstimate { x0: p.x0.clone(), y0: p.y0.clone(), value: e.value, stderr: e.stderr }
            })
            .collect()
    }

    pub fn merge(&mut self, other: &RdmkObserver) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.merge(b);
        }
        self.floor.merge(&other.floor);
    }
}

impl Observer for RdmkObserver {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()> {
        let ctx = KernelContext::new(params, self.inner.clone())?;
        for (p, acc) in self.pairs.iter().zip(self.values.iter_mut()) {
            if p.x0.len() != p.y0.len() {
                continue;
            }
            acc.push(ctx.kernel_sample(&p.x0, &p.y0, state.config(), self.bridge_samples, &mut self.rng, &mut self.floor));
        }
        Ok(())
    }
}

/// Estimate of `F^{Λ0}(x0, y0)` from a finished list of chain configurations.
pub fn estimate_rdmk(
    params: &SimulationParams,
    inner: &BoxRegion,
    x0: &ClassicalConfig,
    y0: &ClassicalConfig,
    samples: &[LoopConfiguration],
    bridge_samples: usize,
    rng: &mut RandomStream,
) -> Result<KernelEstimate> {
    let ctx = KernelContext::new(params, inner.clone())?;
    ctx.check_endpoints(x0, y0)?;
    let mut acc = Accumulator::new();
    let mut floor = FloorMonitor::default();
    if x0.len() == y0.len() {
        for env in samples {
            acc.push(ctx.kernel_sample(x0, y0, env, bridge_samples.max(1), rng, &mut floor));
        }
    }
    let e = if x0.len() == y0.len() { Estimate::of(&acc) } else { Estimate { value: 0.0, stderr: 0.0 } };
    Ok(KernelEstimate { x0: x0.clone(), y0: y0.clone(), value: e.value, stderr: e.stderr })
}

/// Uniform draw of `n` points in `region` that avoid `hole`.
fn uniform_points_avoiding(region: &BoxRegion, hole: Option<&BoxRegion>, n: usize, rng: &mut RandomStream) -> ClassicalConfig {
    let d = region.dim();
    let mut coords = Vec::with_capacity(n * d);
    while coords.len() < n * d {
        let p = sample_uniform_point(region, rng);
        if hole.is_some_and(|h| h.contains(&p)) {
            continue;
        }
        coords.extend(p);
    }
    ClassicalConfig::from_points(d, &coords.chunks(d).collect::<Vec<_>>()).unwrap_or_else(|_| ClassicalConfig::empty(d))
}

/// One sample of `sum_n |A|^n / n! E_unif[F^{Λ0}(x ∨ w, y ∨ w)]` over `w ⊂ A`
/// with `A = region ∖ hole`, truncated at `cap` extra points. Each cardinality
/// gets `draws` fresh uniform configurations with one bridge collection each.
#[allow(clippy::too_many_arguments)]
fn marginal_sample(
    ctx: &KernelContext<'_>,
    x: &ClassicalConfig,
    y: &ClassicalConfig,
    hole: Option<&BoxRegion>,
    cap: usize,
    env: &LoopConfiguration,
    draws: usize,
    rng: &mut RandomStream,
    floor: &mut FloorMonitor,
) -> f64 {
    if !ctx.environment_clear(env) {
        return 0.0;
    }
    let region = &ctx.inner;
    let area = region.volume() - hole.map_or(0.0, |h| h.volume());
    let r = ctx.params.potential.core();
    let mut total = 0.0;
    for m in 0..=cap {
        let scale = (m as f64 * area.ln() - ln_factorial(m)).exp();
        if m == 0 {
            let w = if x.is_empty() {
                1.0
            } else {
                (0..draws).map(|_| ctx.bridge_weight(x, y, env, rng, floor)).sum::<f64>() / draws as f64
            };
            total += w;
            continue;
        }
        let mut s = 0.0;
        for _ in 0..draws {
            let w = uniform_points_avoiding(region, hole, m, rng);
            if w.len() != m {
                continue;
            }
            let xs = x.union(&w);
            let ys = y.union(&w);
            if !hardcore_admissible(&xs, r) || !hardcore_admissible(&ys, r) {
                continue;
            }
            s += ctx.bridge_weight(&xs, &ys, env, rng, floor);
        }
        total += scale * s / draws as f64;
    }
    total
}

/// Accumulates `∫ F^{Λ0}(w, w) dw` over the inner box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceObserver {
    pub inner: BoxRegion,
    pub draws: usize,
    pub values: Accumulator,
    pub floor: FloorMonitor,
    rng: RandomStream,
}

impl TraceObserver {
    pub fn new(inner: BoxRegion, draws: usize, rng: RandomStream) -> Self {
        Self { inner, draws: draws.max(1), values: Accumulator::new(), floor: FloorMonitor::default(), rng }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::of(&self.values)
    }

    pub fn merge(&mut self, other: &TraceObserver) {
        self.values.merge(&other.values);
        self.floor.merge(&other.floor);
    }
}

impl Observer for TraceObserver {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()> {
        let ctx = KernelContext::new(params, self.inner.clone())?;
        let empty = ClassicalConfig::empty(params.dim());
        let cap = ctx.occupancy_cap();
        let v = marginal_sample(&ctx, &empty, &empty, None, cap, state.config(), self.draws, &mut self.rng, &mut self.floor);
        self.values.push(v);
        Ok(())
    }
}

/// Compares the partial trace of `F^{Λ0}` over `Λ0 ∖ Λ1` with `F^{Λ1}`, pair by pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompatibilityObserver {
    pub outer: BoxRegion,
    pub inner: BoxRegion,
    pub pairs: Vec<KernelPair>,
    pub draws: usize,
    /// Marginalized `F^{Λ0}` per pair.
    pub marginal: Vec<Accumulator>,
    /// Direct `F^{Λ1}` per pair.
    pub direct: Vec<Accumulator>,
    /// Per-sample difference, for a correlation-aware error.
    pub difference: Vec<Accumulator>,
    pub floor: FloorMonitor,
    rng: RandomStream,
}

impl CompatibilityObserver {
    /// `outer` is `Λ0`, `inner` is `Λ1 ⊂ Λ0`.
    pub fn new(
        params: &SimulationParams,
        outer: BoxRegion,
        inner: BoxRegion,
        pairs: Vec<KernelPair>,
        draws: usize,
        rng: RandomStream,
    ) -> Result<Self> {
        if !outer.contains_box(&inner) || outer == inner {
            return Err(Error::Domain("the small box must sit strictly inside the large one".into()));
        }
        let ctx = KernelContext::new(params, inner.clone())?;
        for p in &pairs {
            ctx.check_endpoints(&p.x0, &p.y0)?;
            if p.x0.len() != p.y0.len() {
                return Err(Error::Domain("compatibility pairs need equal cardinalities".into()));
            }
        }
        let n = pairs.len();
        Ok(Self {
            outer,
            inner,
            pairs,
            draws: draws.max(1),
            marginal: vec![Accumulator::new(); n],
            direct: vec![Accumulator::new(); n],
            difference: vec![Accumulator::new(); n],
            floor: FloorMonitor::default(),
            rng,
        })
    }

    /// `(marginal, direct, difference)` per pair.
    pub fn estimates(&self) -> Vec<(Estimate, Estimate, Estimate)> {
        (0..self.pairs.len())
            .map(|i| (Estimate::of(&self.marginal[i]), Estimate::of(&self.direct[i]), Estimate::of(&self.difference[i])))
            .collect()
    }

    pub fn merge(&mut self, other: &CompatibilityObserver) {
        for i in 0..self.pairs.len() {
            self.marginal[i].merge(&other.marginal[i]);
            self.direct[i].merge(&other.direct[i]);
            self.difference[i].merge(&other.difference[i]);
        }
        self.floor.merge(&other.floor);
    }
}

impl Observer for CompatibilityObserver {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()> {
        let big = KernelContext::new(params, self.outer.clone())?;
        let small = KernelContext::new(params, self.inner.clone())?;
        let cap0 = big.occupancy_cap();
        for (i, p) in self.pairs.iter().enumerate() {
            let cap = cap0.saturating_sub(p.x0.len());
            let lhs = marginal_sample(&big, &p.x0, &p.y0, Some(&self.inner), cap, state.config(), self.draws, &mut self.rng, &mut self.floor);
            let rhs = small.kernel_sample(&p.x0, &p.y0, state.config(), self.draws, &mut self.rng, &mut self.floor);
            self.marginal[i].push(lhs);
            self.direct[i].push(rhs);
            self.difference[i].push(lhs - rhs);
        }
        Ok(())
    }
}

/// Time-zero section density on a regular grid of cells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityObserver {
    pub region: BoxRegion,
    pub cells_per_axis: usize,
    pub values: Vec<Accumulator>,
}

impl DensityObserver {
    pub fn new(region: BoxRegion, cells_per_axis: usize) -> Self {
        let n = cells_per_axis.max(1).pow(region.dim() as u32);
        Self { region, cells_per_axis: cells_per_axis.max(1), values: vec![Accumulator::new(); n] }
    }

    pub fn cell_volume(&self) -> f64 {
        (self.region.side() / self.cells_per_axis as f64).powi(self.region.dim() as i32)
    }

    /// Flat cell index of `p`, or `None` outside the region.
    pub fn cell_of(&self, p: &[f64]) -> Option<usize> {
        if !self.region.contains(p) {
            return None;
        }
        let n = self.cells_per_axis;
        let mut idx = 0;
        for a in (0..p.len()).rev() {
            let u = (p[a] - self.region.lower(a)) / self.region.side();
            let i = ((u * n as f64).floor() as usize).min(n - 1);
            idx = idx * n + i;
        }
        Some(idx)
    }

    /// Centre of cell `idx`.
    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let n = self.cells_per_axis;
        let w = self.region.side() / n as f64;
        let mut rest = idx;
        (0..self.region.dim())
            .map(|a| {
                let i = rest % n;
                rest /= n;
                self.region.lower(a) + (i as f64 + 0.5) * w
            })
            .collect()
    }

    pub fn record(&mut self, config: &LoopConfiguration) {
        let mut counts = vec![0usize; self.values.len()];
        for l in config.loops() {
            for p in l.section_points(0) {
                if let Some(i) = self.cell_of(p) {
                    counts[i] += 1;
                }
            }
        }
        let vol = self.cell_volume();
        for (acc, c) in self.values.iter_mut().zip(counts) {
            acc.push(c as f64 / vol);
        }
    }

    pub fn estimates(&self) -> Vec<Estimate> {
        self.values.iter().map(Estimate::of).collect()
    }

    pub fn merge(&mut self, other: &DensityObserver) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.merge(b);
        }
    }
}

impl Observer for DensityObserver {
    fn observe(&mut self, state: &ChainState, _: &SimulationParams) -> Result<()> {
        self.record(state.config());
        Ok(())
    }
}

/// One-loop moment function `ρ(ω) = z^k/k α(ω) E[exp(-h(ω | Ω ∨ boundary))]`
/// for fixed test loops.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuelleObserver {
    pub loops: Vec<Loop>,
    pub boltzmann: Vec<Accumulator>,
    pub floor: FloorMonitor,
}

impl RuelleObserver {
    pub fn new(loops: Vec<Loop>) -> Self {
        let n = loops.len();
        Self { loops, boltzmann: vec![Accumulator::new(); n], floor: FloorMonitor::default() }
    }

    pub fn estimates(&self, z: f64) -> Vec<Estimate> {
        self.loops
            .iter()
            .zip(&self.boltzmann)
            .map(|(l, acc)| {
                let k = l.multiplicity() as f64;
                let f = z.powf(k) / k;
                let e = Estimate::of(acc);
                Estimate { value: f * e.value, stderr: f * e.stderr }
            })
            .collect()
    }

    pub fn merge(&mut self, other: &RuelleObserver) {
        for (a, b) in self.boltzmann.iter_mut().zip(&other.boltzmann) {
            a.merge(b);
        }
        self.floor.merge(&other.floor);
    }
}

impl Observer for RuelleObserver {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()> {
        let consts = params.constants()?;
        for (l, acc) in self.loops.iter().zip(self.boltzmann.iter_mut()) {
            if !path_confined(&params.region, l.path()) {
                acc.push(0.0);
                continue;
            }
            let one = [l.path().clone()];
            let h = bridges_energy(&one, state.config(), &params.potential, params.beta, &params.boundary);
            if h.is_finite() {
                let floor = energy_lower_bound(l.multiplicity(), &consts, &params.potential, params.beta, params.dim());
                self.floor.check(h, floor);
            }
            acc.push((-h).exp());
        }
        Ok(())
    }
}

/// Right-hand sides of the explicit kernel bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub v0: usize,
    pub rho_bar: f64,
    /// `beta * v_bar * R^d / r^d`; the weight bound is `exp(K * this)`.
    pub q_rate: f64,
    /// `sum_k rho^k / (2 pi beta k)^(d/2)`.
    pub series: f64,
    /// `sum_k rho^k / (2 pi beta k)^(1 + d/2)`.
    pub series_gradient: f64,
    /// `sum_k rho^k / [(2 pi)^(d/2) (beta k)^(d/2 - 1)]`.
    pub series_energy: f64,
    pub kernel_bound: f64,
    pub gradient_bound: f64,
    pub divergent: bool,
}

impl BoundConstants {
    /// Bound on the conditional weight of a bridge collection of total multiplicity `k`.
    pub fn q_bound(&self, k: usize) -> f64 {
        if self.q_rate == 0.0 {
            1.0
        } else {
            (k as f64 * self.q_rate).exp()
        }
    }
}

/// Sums `sum_{k>=1} term(k)` until a term drops below `1e-15` of the partial sum.
fn truncated_series(term: impl Fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    let mut k = 1.0;
    loop {
        let t = term(k);
        s += t;
        if t <= 1e-15 * s || k > 1e7 {
            return s;
        }
        k += 1.0;
    }
}

/// Evaluates the kernel, weight and gradient bounds for an inner box of half side `l0`.
/// With `rho_bar >= 1` the series diverge and every bound is `+inf`.
pub fn bound_constants(v: &PotentialModel, z: f64, beta: f64, d: usize, l0: f64) -> Result<BoundConstants> {
    let consts = constants(v, z, beta, d)?;
    let inner = BoxRegion::centered(d, l0)?;
    let v0 = max_occupancy(&inner, v.core());
    let ratio = crate::potential::PotentialConstants::range_ratio_pow(v, d);
    let q_rate = beta * consts.v_bar * ratio;
    let rho = consts.rho_bar;
    let two_pi = 2.0 * std::f64::consts::PI;
    let half_d = 0.5 * d as f64;
    if rho >= 1.0 {
        eprintln!("warning: rho_bar = {rho} >= 1, the bound series diverge");
        return Ok(BoundConstants {
            v0,
            rho_bar: rho,
            q_rate,
            series: f64::INFINITY,
            series_gradient: f64::INFINITY,
            series_energy: f64::INFINITY,
            kernel_bound: f64::INFINITY,
            gradient_bound: f64::INFINITY,
            divergent: true,
        });
    }
    let series = truncated_series(|k| rho.powf(k) / (two_pi * beta * k).powf(half_d));
    let series_gradient = truncated_series(|k| rho.powf(k) / (two_pi * beta * k).powf(1.0 + half_d));
    let series_energy = truncated_series(|k| rho.powf(k) / (two_pi.powf(half_d) * (beta * k).powf(half_d - 1.0)));
    let fact = ln_factorial(v0).exp();
    let common = fact * series.max(1.0).powi(v0 as i32);
    let kernel_bound = common;
    let gradient_bound = 2.0 * (d as f64).sqrt() * l0 * common * series_gradient
        + consts.v_bar1 * beta * ratio * common * series_energy;
    Ok(BoundConstants {
        v0,
        rho_bar: rho,
        q_rate,
        series,
        series_gradient,
        series_energy,
        kernel_bound,
        gradient_bound,
        divergent: false,
    })
}

/// Outcome of one validation check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub tag: String,
    pub source: String,
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
    pub passed: bool,
    pub note: String,
}

impl CheckRecord {
    pub fn new(check: &str, tag: &str, estimate: f64, target: f64, stderr: f64, passed: bool) -> Self {
        Self {
            check: check.into(),
            tag: tag.into(),
            source: "mc".into(),
            estimate,
            target,
            stderr,
            passed,
            note: String::new(),
        }
    }

    pub fn with_source(mut self, source: &str) -> Self {
        self.source = source.into();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// Every `|F| <= kernel_bound + 2 stderr`.
pub fn validate_kernel_bounds(estimates: &[KernelEstimate], bounds: &BoundConstants) -> Vec<CheckRecord> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let passed = bounds.divergent || e.value.abs() <= bounds.kernel_bound + 2.0 * e.stderr;
            let rec = CheckRecord::new("kernel_bound", "uniform_kernel_bound", e.value.abs(), bounds.kernel_bound, e.stderr, passed)
                .with_note(format!("pair {i}, n = {}", e.x0.len()));
            if bounds.divergent {
                rec.with_note("skipped: bound series diverge")
            } else {
                rec
            }
        })
        .collect()
}

/// Every singleton moment estimate satisfies `ρ <= rho_bar^k / k + 2 stderr`.
pub fn validate_ruelle(observer: &RuelleObserver, z: f64, rho_bar: f64) -> Vec<CheckRecord> {
    observer
        .estimates(z)
        .iter()
        .zip(&observer.loops)
        .enumerate()
        .map(|(i, (e, l))| {
            let k = l.multiplicity() as f64;
            let bound = rho_bar.powf(k) / k;
            CheckRecord::new("ruelle_bound", "moment_function_bound", e.value, bound, e.stderr, e.value <= bound + 2.0 * e.stderr)
                .with_note(format!("loop {i}, k = {}", l.multiplicity()))
        })
        .collect()
}

/// `|estimate - target| <= 3 stderr`.
pub fn check_within(check: &str, tag: &str, e: Estimate, target: f64) -> CheckRecord {
    let passed = (e.value - target).abs() <= 3.0 * e.stderr;
    CheckRecord::new(check, tag, e.value, target, e.stderr, passed)
}
