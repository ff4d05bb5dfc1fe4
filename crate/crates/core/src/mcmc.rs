//! Metropolis-Hastings sampler for the finite-box loop gas.
//!
//! The target on loop configurations in `Λ` is
//! `α_Λ(Ω) z^K(Ω) / L(Ω) exp(-h(Ω | boundary))`
//! with respect to the Lebesgue-Poisson measure on base points times the
//! multiplicity-summed bridge measure. Four moves: insert, delete, wiggle
//! (resample a window of one loop) and rek (redraw one loop's multiplicity
//! and path at a fixed base).

use serde::{Deserialize, Serialize};

use crate::energy::{energy_lower_bound, path_pair_energy, path_self_energy, Boundary, FloorMonitor};
use crate::error::{Error, Result};
use crate::geometry::{max_occupancy, BoxRegion};
use crate::loops::{admissible_r, alpha_indicator, path_confined, Loop, LoopConfiguration, Path, Worldlines};
use crate::potential::{constants, PotentialConstants, PotentialModel};
use crate::sampling::{fill_bridge, sample_bridge, sample_uniform_point, MultiplicityLaw, RandomStream, StreamState};

/// Relative frequencies of the four move kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveWeights {
    pub insert: f64,
    pub delete: f64,
    pub wiggle: f64,
    pub rek: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        Self { insert: 0.3, delete: 0.3, wiggle: 0.3, rek: 0.1 }
    }
}

impl MoveWeights {
    fn validate(&self) -> Result<()> {
        let w = [self.insert, self.delete, self.wiggle, self.rek];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("move weights must be nonnegative with a positive sum".into()));
        }
        if (self.insert > 0.0) != (self.delete > 0.0) {
            return Err(Error::Config("insert and delete must both be enabled or both disabled".into()));
        }
        Ok(())
    }

    fn pick(&self, u: f64) -> MoveKind {
        let total = self.insert + self.delete + self.wiggle + self.rek;
        let mut x = u * total;
        for (kind, w) in [
            (MoveKind::Insert, self.insert),
            (MoveKind::Delete, self.delete),
            (MoveKind::Wiggle, self.wiggle),
        ] {
            if x < w {
                return kind;
            }
            x -= w;
        }
        MoveKind::Rek
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Insert,
    Delete,
    Wiggle,
    Rek,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Insert, MoveKind::Delete, MoveKind::Wiggle, MoveKind::Rek];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub region: BoxRegion,
    pub inner: Option<BoxRegion>,
    pub z: f64,
    pub beta: f64,
    pub potential: PotentialModel,
    pub slices: usize,
    pub k_max: usize,
    pub boundary: Boundary,
    pub moves: MoveWeights,
    /// Longest wiggle window, in time steps.
    pub wiggle_max: usize,
    pub steps_per_sweep: usize,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
}

impl SimulationParams {
    /// Parameters with default moves and run lengths.
    pub fn new(region: BoxRegion, z: f64, beta: f64, potential: PotentialModel, slices: usize, k_max: usize) -> Self {
        Self {
            region,
            inner: None,
            z,
            beta,
            potential,
            slices,
            k_max,
            boundary: Boundary::Empty,
            moves: MoveWeights::default(),
            wiggle_max: slices.max(2),
            steps_per_sweep: 10,
            sweeps: 0,
            burn_in: 0,
            thin: 1,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn tau(&self) -> f64 {
        self.beta / self.slices as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::Config(format!("z must be positive, got {}", self.z)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.slices == 0 || self.k_max == 0 {
            return Err(Error::Config("slices and k_max must be at least 1".into()));
        }
        if self.wiggle_max < 2 || self.steps_per_sweep == 0 || self.thin == 0 {
            return Err(Error::Config("wiggle_max >= 2, steps_per_sweep >= 1 and thin >= 1 required".into()));
        }
        self.moves.validate()?;
        if let Some(inner) = &self.inner {
            if !self.region.contains_box(inner) {
                return Err(Error::Config("inner box must lie inside the simulation box".into()));
            }
        }
        if let Some(d) = self.boundary.dim() {
            if d != self.dim() {
                return Err(Error::Config("boundary dimension differs from the box".into()));
            }
        }
        match &self.boundary {
            Boundary::Classical { points } => {
                if !crate::geometry::hardcore_admissible(points, self.potential.core()) {
                    return Err(Error::Config("boundary points violate the hard core".into()));
                }
                if points.points().any(|p| interior(&self.region, p)) {
                    return Err(Error::Config("boundary points must lie outside the box".into()));
                }
            }
            Boundary::Loops { loops } => {
                if loops.slices() != self.slices || loops.beta() != self.beta {
                    return Err(Error::Config("boundary loops must share beta and the slice grid".into()));
                }
                if !admissible_r(loops, self.potential.core()) {
                    return Err(Error::Config("boundary loops violate the hard core".into()));
                }
            }
            Boundary::Empty => {}
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<PotentialConstants> {
        constants(&self.potential, self.z, self.beta, self.dim())
    }

    pub fn multiplicity_law(&self) -> MultiplicityLaw {
        MultiplicityLaw::new(self.z, self.beta, self.dim(), self.k_max)
    }

    /// `ceil((2L)^d / r^d)` for the simulation box.
    pub fn occupancy_cap(&self) -> usize {
        max_occupancy(&self.region, self.potential.core())
    }
}

fn interior(region: &BoxRegion, p: &[f64]) -> bool {
    p.iter()
        .zip(region.center())
        .all(|(x, c)| (x - c).abs() < region.half_side())
}

/// Per-kind counters and invariant monitors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
    pub floor: FloorMonitor,
    pub max_loops: usize,
}

impl ChainStats {
    pub fn acceptance(&self, kind: MoveKind) -> f64 {
        let i = kind.index();
        if self.proposed[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }

    pub fn merge(&mut self, other: &ChainStats) {
        for i in 0..4 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
        self.floor.merge(&other.floor);
        self.max_loops = self.max_loops.max(other.max_loops);
    }
}

/// A proposed modification of the configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Change {
    Insert(Loop),
    Delete(usize),
    /// Same base and multiplicity, resampled window.
    Wiggle(usize, Loop),
    /// Same base, new multiplicity and path.
    Rek(usize, Loop),
}

impl Change {
    pub fn kind(&self) -> MoveKind {
        match self {
            Change::Insert(_) => MoveKind::Insert,
            Change::Delete(_) => MoveKind::Delete,
            Change::Wiggle(..) => MoveKind::Wiggle,
            Change::Rek(..) => MoveKind::Rek,
        }
    }
}

type Bounds = (Vec<f64>, Vec<f64>);

/// Markov chain state with cached weight components.
#[derive(Clone, Debug)]
pub struct ChainState {
    config: LoopConfiguration,
    bounds: Vec<Bounds>,
    k_total: usize,
    ln_l: f64,
    energy: f64,
    steps: u64,
    sweeps: u64,
    rng: RandomStream,
    pub stats: ChainStats,
    law: MultiplicityLaw,
    floor_per_strand: f64,
}

/// Serializable snapshot of a [`ChainState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub config: LoopConfiguration,
    pub steps: u64,
    pub sweeps: u64,
    pub rng: StreamState,
    pub stats: ChainStats,
}

impl ChainState {
    /// Empty configuration, RNG stream `stream` of the configured seed.
    pub fn new(params: &SimulationParams, stream: u64) -> Result<Self> {
        let config = LoopConfiguration::empty(params.dim(), params.beta, params.slices);
        Self::with_config(params, config, RandomStream::new(params.seed, stream))
    }

    pub fn with_config(params: &SimulationParams, config: LoopConfiguration, rng: RandomStream) -> Result<Self> {
        params.validate()?;
        let consts = params.constants()?;
        let floor_per_strand = energy_lower_bound(1, &consts, &params.potential, params.beta, params.dim());
        let mut s = Self {
            bounds: config.loops().iter().map(|l| l.bounds()).collect(),
            k_total: 0,
            ln_l: 0.0,
            energy: 0.0,
            steps: 0,
            sweeps: 0,
            rng,
            stats: ChainStats::default(),
            law: params.multiplicity_law(),
            floor_per_strand,
            config,
        };
        let (k, ln_l, h) = s.recompute(params);
        if !alpha_indicator(&params.region, &s.config) || h == f64::INFINITY {
            return Err(Error::Domain("initial configuration has zero weight".into()));
        }
        s.k_total = k;
        s.ln_l = ln_l;
        s.energy = h;
        s.stats.max_loops = s.config.len();
        Ok(s)
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            config: self.config.clone(),
            steps: self.steps,
            sweeps: self.sweeps,
            rng: self.rng.state(),
            stats: self.stats.clone(),
        }
    }

    pub fn restore(params: &SimulationParams, snap: ChainSnapshot) -> Result<Self> {
        let mut s = Self::with_config(params, snap.config, RandomStream::from_state(snap.rng))?;
        s.steps = snap.steps;
        s.sweeps = snap.sweeps;
        s.stats = snap.stats;
        Ok(s)
    }

    pub fn config(&self) -> &LoopConfiguration {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn rng(&mut self) -> &mut RandomStream {
        &mut self.rng
    }

    pub fn total_multiplicity(&self) -> usize {
        self.k_total
    }

    /// Cached `h(Ω | boundary)`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Cached log weight `K ln z - ln L - h`.
    pub fn cached_log_weight(&self, params: &SimulationParams) -> f64 {
        self.k_total as f64 * params.z.ln() - self.ln_l - self.energy
    }

    fn recompute(&self, params: &SimulationParams) -> (usize, f64, f64) {
        let k = crate::loops::k_of(&self.config);
        let ln_l = crate::loops::ln_l_of(&self.config);
        let h = crate::energy::collection_energy(&self.config, &params.potential, params.beta)
            + params.boundary.energy_with_all(&self.config, &params.potential, params.beta);
        (k, ln_l, h)
    }

    /// Compares the cached components with a from-scratch evaluation.
    pub fn verify(&self, params: &SimulationParams) -> Result<()> {
        let (k, ln_l, h) = self.recompute(params);
        let tol = 1e-9 * (1.0 + h.abs());
        let drift = (h - self.energy).abs();
        if k != self.k_total || (ln_l - self.ln_l).abs() > 1e-9 || drift.is_nan() || drift > tol {
            return Err(Error::Consistency(format!(
                "cache (K={}, lnL={}, h={}) differs from recomputation (K={k}, lnL={ln_l}, h={h})",
                self.k_total, self.ln_l, self.energy
            )));
        }
        if !alpha_indicator(&params.region, &self.config) {
            return Err(Error::Consistency("a loop left the box".into()));
        }
        Ok(())
    }

    /// `h(path | rest ∨ boundary)`, including the path's self energy;
    /// `skip` excludes one loop of the current configuration.
    fn conditional_energy(&mut self, params: &SimulationParams, path: &Path, skip: Option<usize>) -> f64 {
        let v = &params.potential;
        let beta = params.beta;
        let mut h = path_self_energy(path, v, beta);
        if h == f64::INFINITY {
            return h;
        }
        let (lo, hi) = path.bounds();
        let range = v.range();
        for (i, l) in self.config.loops().iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let (qlo, qhi) = &self.bounds[i];
            if (0..lo.len()).any(|a| lo[a] - qhi[a] >= range || qlo[a] - hi[a] >= range) {
                continue;
            }
            h += path_pair_energy(path, l.path(), v, beta);
            if h == f64::INFINITY {
                return h;
            }
        }
        h += params.boundary.energy_with(path, v, beta);
        if h.is_finite() {
            let floor = self.floor_per_strand * path.multiplicity() as f64;
            self.stats.floor.check(h, floor);
        }
        h
    }

    /// `ln` of the Metropolis-Hastings ratio for `change` (before `min(0, .)`),
    /// together with the energy difference it implies.
    pub fn log_acceptance(&mut self, params: &SimulationParams, change: &Change) -> (f64, f64) {
        let n = self.config.len();
        let ln_vol_z = (params.region.volume() * self.law.normalizer()).ln();
        match change {
            Change::Insert(l) => {
                if !path_confined(&params.region, l.path()) {
                    return (f64::NEG_INFINITY, f64::INFINITY);
                }
                let dh = self.conditional_energy(params, l.path(), None);
                let k = l.multiplicity() as f64;
                (ln_vol_z - k.ln() - ((n + 1) as f64).ln() - dh, dh)
            }
            Change::Delete(i) => {
                let l = self.config.loops()[*i].clone();
                let dh = -self.conditional_energy(params, l.path(), Some(*i));
                let k = l.multiplicity() as f64;
                (-ln_vol_z + k.ln() + (n as f64).ln() - dh, dh)
            }
            Change::Wiggle(i, l) | Change::Rek(i, l) => {
                if !path_confined(&params.region, l.path()) {
                    return (f64::NEG_INFINITY, f64::INFINITY);
                }
                let old = self.config.loops()[*i].clone();
                let h_old = self.conditional_energy(params, old.path(), Some(*i));
                let h_new = self.conditional_energy(params, l.path(), Some(*i));
                let dh = h_new - h_old;
                let ratio = match change {
                    Change::Rek(..) => (old.multiplicity() as f64 / l.multiplicity() as f64).ln(),
                    _ => 0.0,
                };
                if h_new == f64::INFINITY {
                    return (f64::NEG_INFINITY, f64::INFINITY);
                }
                (ratio - dh, dh)
            }
        }
    }

    fn apply(&mut self, change: Change, dh: f64) {
        match change {
            Change::Insert(l) => {
                self.k_total += l.multiplicity();
                self.ln_l += (l.multiplicity() as f64).ln();
                self.bounds.push(l.bounds());
                self.config.push(l);
            }
            Change::Delete(i) => {
                let l = self.config.swap_remove(i);
                self.bounds.swap_remove(i);
                self.k_total -= l.multiplicity();
                self.ln_l -= (l.multiplicity() as f64).ln();
            }
            Change::Wiggle(i, l) | Change::Rek(i, l) => {
                self.k_total += l.multiplicity();
                self.ln_l += (l.multiplicity() as f64).ln();
                self.bounds[i] = l.bounds();
                let old = self.config.replace(i, l);
                self.k_total -= old.multiplicity();
                self.ln_l -= (old.multiplicity() as f64).ln();
            }
        }
        self.energy += dh;
        if self.config.is_empty() {
            // drop accumulated rounding; the empty state has zero energy exactly
            self.energy = 0.0;
            self.ln_l = 0.0;
        }
    }

    /// Draws a proposal of the given kind; `None` when the move does not apply.
    pub fn propose(&mut self, params: &SimulationParams, kind: MoveKind) -> Option<Change> {
        match kind {
            MoveKind::Insert => Some(Change::Insert(self.draw_loop(params, None))),
            MoveKind::Delete => {
                if self.config.is_empty() {
                    return None;
                }
                Some(Change::Delete(self.rng.below(self.config.len())))
            }
            MoveKind::Wiggle => {
                if self.config.is_empty() {
                    return None;
                }
                let i = self.rng.below(self.config.len());
                let mut path = self.config.loops()[i].path().clone();
                let n = path.steps();
                if n < 2 {
                    return None;
                }
                let len = 2 + self.rng.below(params.wiggle_max.min(n) - 1);
                let a = self.rng.below(n - len + 1);
                fill_bridge(&mut path, a, a + len, params.tau(), &mut self.rng);
                Some(Change::Wiggle(i, Loop::from_path_unchecked(path)))
            }
            MoveKind::Rek => {
                if self.config.is_empty() {
                    return None;
                }
                let i = self.rng.below(self.config.len());
                let base = self.config.loops()[i].base().to_vec();
                Some(Change::Rek(i, self.draw_loop(params, Some(&base))))
            }
        }
    }

    fn draw_loop(&mut self, params: &SimulationParams, base: Option<&[f64]>) -> Loop {
        let x = match base {
            Some(b) => b.to_vec(),
            None => sample_uniform_point(&params.region, &mut self.rng),
        };
        let k = self.law.sample(&mut self.rng);
        let path = sample_bridge(&x, &x, k, params.beta, params.slices, &mut self.rng);
        Loop::from_path_unchecked(path)
    }

    /// One Metropolis-Hastings step. Returns whether the proposal was accepted.
    pub fn mh_step(&mut self, params: &SimulationParams) -> Result<bool> {
        let kind = params.moves.pick(self.rng.uniform());
        self.steps += 1;
        self.stats.proposed[kind.index()] += 1;
        let Some(change) = self.propose(params, kind) else {
            return Ok(false);
        };
        let (log_a, dh) = self.log_acceptance(params, &change);
        let accept = log_a >= 0.0 || self.rng.uniform().ln() < log_a;
        if accept {
            self.apply(change, dh);
            self.stats.accepted[kind.index()] += 1;
            self.stats.max_loops = self.stats.max_loops.max(self.config.len());
        }
        if cfg!(debug_assertions) && self.steps.is_multiple_of(4096) {
            self.verify(params)?;
        }
        Ok(accept)
    }

    /// Runs `params.steps_per_sweep` steps.
    pub fn sweep(&mut self, params: &SimulationParams) -> Result<()> {
        for _ in 0..params.steps_per_sweep {
            self.mh_step(params)?;
        }
        self.sweeps += 1;
        Ok(())
    }
}

/// From-scratch `ln[α z^K / L exp(-h)]`; `-inf` for zero weight.
pub fn log_weight(config: &LoopConfiguration, params: &SimulationParams) -> f64 {
    if !alpha_indicator(&params.region, config) {
        return f64::NEG_INFINITY;
    }
    let h = crate::energy::collection_energy(config, &params.potential, params.beta)
        + params.boundary.energy_with_all(config, &params.potential, params.beta);
    if h == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    crate::loops::k_of(config) as f64 * params.z.ln() - crate::loops::ln_l_of(config) - h
}

/// Receives thinned samples after burn-in.
pub trait Observer {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()>;
}

impl<F: FnMut(&ChainState, &SimulationParams) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &ChainState, params: &SimulationParams) -> Result<()> {
        self(state, params)
    }
}

/// Advances the chain to sweep `until`, observing every `thin`-th sweep past burn-in.
/// Which sweeps are observed depends only on the absolute sweep index, so a run
/// split into pieces observes the same samples as one uninterrupted run.
pub fn run_sweeps<O: Observer + ?Sized>(
    state: &mut ChainState,
    params: &SimulationParams,
    observer: &mut O,
    until: u64,
) -> Result<()> {
    while state.sweeps < until {
        state.sweep(params)?;
        let s = state.sweeps;
        if s > params.burn_in && (s - params.burn_in).is_multiple_of(params.thin) {
            observer.observe(state, params)?;
        }
    }
    Ok(())
}

/// Burn-in plus `params.sweeps` sweeps on stream `stream`. Warns when `rho_bar >= 1`.
pub fn run_chain<O: Observer + ?Sized>(params: &SimulationParams, stream: u64, observer: &mut O) -> Result<ChainState> {
    let consts = params.constants()?;
    if !consts.stable {
        eprintln!("warning: rho_bar = {} >= 1, outside the stability regime", consts.rho_bar);
    }
    let mut state = ChainState::new(params, stream)?;
    run_sweeps(&mut state, params, observer, params.burn_in + params.sweeps)?;
    Ok(state)
}

/// Full legality check of a state: confinement, hard core against itself and the boundary.
pub fn state_is_legal(state: &ChainState, params: &SimulationParams) -> bool {
    let cfg = state.config();
    if !alpha_indicator(&params.region, cfg) || !admissible_r(cfg, params.potential.core()) {
        return false;
    }
    // profiles are finite on [r, R], so an infinite energy means a core overlap
    params.boundary.energy_with_all(cfg, &params.potential, params.beta) < f64::INFINITY
}

impl Worldlines for ChainState {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_> {
        self.config.members()
    }
}
