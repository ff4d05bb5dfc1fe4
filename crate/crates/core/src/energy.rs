//! Path energies as time-sliced sums of classical pair energies.
//!
//! Every time integral over one period uses the trapezoid rule on the slice
//! grid: weight `tau/2` at slices `0` and `M`, `tau` in between, `tau = beta/M`.
//! For closed loops slice `M` carries the same section as slice `0`, so this is
//! the left Riemann sum; for open paths it keeps both end sections in play.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{dist2, BoxRegion, ClassicalConfig};
use crate::loops::{LoopConfiguration, OpenPathCollection, Path, Worldlines};
use crate::potential::{PotentialConstants, PotentialModel};

/// Above this many points per section, pair sums go through a cell list.
const CELL_LIST_THRESHOLD: usize = 48;

/// Quadrature weight of slice `j` in units of `tau`.
#[inline]
pub fn slice_weight(j: usize, slices: usize) -> f64 {
    if j == 0 || j == slices {
        0.5
    } else {
        1.0
    }
}

/// Components of a total energy. `total` is `+inf` whenever any component is.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub self_energy: f64,
    pub internal_pairs: f64,
    pub external: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(self_energy: f64, internal_pairs: f64, external: f64) -> Self {
        let total = if [self_energy, internal_pairs, external].contains(&f64::INFINITY) {
            f64::INFINITY
        } else {
            self_energy + internal_pairs + external
        };
        Self { self_energy, internal_pairs, external, total }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Interaction between distinct copies of one path.
pub fn path_self_energy(p: &Path, v: &PotentialModel, beta: f64) -> f64 {
    let k = p.multiplicity();
    if k < 2 {
        return 0.0;
    }
    let m = p.slices();
    let tau = beta / m as f64;
    let mut h = 0.0;
    for j in 0..=m {
        let mut e = 0.0;
        for l in 0..k {
            for l2 in (l + 1)..k {
                let term = v.evaluate_sq(dist2(p.position(l * m + j), p.position(l2 * m + j)));
                if term == f64::INFINITY {
                    return f64::INFINITY;
                }
                e += term;
            }
        }
        h += tau * slice_weight(j, m) * e;
    }
    h
}

/// Interaction between two paths on the same slice grid.
pub fn path_pair_energy(p: &Path, q: &Path, v: &PotentialModel, beta: f64) -> f64 {
    assert_eq!(p.slices(), q.slices(), "paths must share the slice grid");
    if far_apart(p, q, v.range()) {
        return 0.0;
    }
    let m = p.slices();
    let tau = beta / m as f64;
    let mut h = 0.0;
    for j in 0..=m {
        let mut e = 0.0;
        for a in p.section_points(j) {
            for b in q.section_points(j) {
                let term = v.evaluate_sq(dist2(a, b));
                if term == f64::INFINITY {
                    return f64::INFINITY;
                }
                e += term;
            }
        }
        h += tau * slice_weight(j, m) * e;
    }
    h
}

/// True when the bounding boxes are at least `range` apart along some axis,
/// in which case the paths cannot interact.
pub fn far_apart(p: &Path, q: &Path, range: f64) -> bool {
    let (plo, phi) = p.bounds();
    let (qlo, qhi) = q.bounds();
    (0..p.dim()).any(|a| plo[a] - qhi[a] >= range || qlo[a] - phi[a] >= range)
}

/// `h` of a collection: all self energies plus every unordered member pair.
pub fn collection_energy<W: Worldlines + ?Sized>(c: &W, v: &PotentialModel, beta: f64) -> f64 {
    let Some(m) = c.members().next().map(|p| p.slices()) else {
        return 0.0;
    };
    let tau = beta / m as f64;
    let mut h = 0.0;
    for j in 0..=m {
        let sec = c.section(j);
        let e = section_energy(&sec, v);
        if e == f64::INFINITY {
            return f64::INFINITY;
        }
        h += tau * slice_weight(j, m) * e;
    }
    h
}

/// Self and pair parts of a collection's energy, computed member by member.
pub fn collection_breakdown<W: Worldlines + ?Sized>(c: &W, v: &PotentialModel, beta: f64) -> EnergyBreakdown {
    let members: Vec<&Path> = c.members().collect();
    let mut self_e = 0.0;
    for p in &members {
        self_e += path_self_energy(p, v, beta);
    }
    let mut pairs = 0.0;
    'outer: for i in 0..members.len() {
        for q in &members[i + 1..] {
            pairs += path_pair_energy(members[i], q, v, beta);
            if pairs == f64::INFINITY {
                break 'outer;
            }
        }
    }
    EnergyBreakdown::new(self_e, pairs, 0.0)
}

/// Classical pair energy of one section, via a cell list for large sections.
pub fn section_energy(sec: &ClassicalConfig, v: &PotentialModel) -> f64 {
    if sec.len() <= CELL_LIST_THRESHOLD {
        return crate::potential::pair_energy(sec, v);
    }
    let cells = CellList::new(sec, v.range());
    let mut e = 0.0;
    let mut neighbors = Vec::new();
    for i in 0..sec.len() {
        neighbors.clear();
        cells.neighbors_into(sec.point(i), &mut neighbors);
        neighbors.retain(|&j| j > i);
        neighbors.sort_unstable();
        for &j in &neighbors {
            let term = v.evaluate_sq(dist2(sec.point(i), sec.point(j)));
            if term == f64::INFINITY {
                return f64::INFINITY;
            }
            e += term;
        }
    }
    e
}

/// Uniform grid of cubic cells of side `cell` over a point set.
pub struct CellList<'a> {
    points: &'a ClassicalConfig,
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> CellList<'a> {
    pub fn new(points: &'a ClassicalConfig, cell: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.points().enumerate() {
            buckets.entry(cell_of(p, cell)).or_default().push(i);
        }
        Self { points, cell, buckets }
    }

    /// Indices of every point within one cell of `x` (a superset of the
    /// points closer than the cell side).
    pub fn neighbors_into(&self, x: &[f64], out: &mut Vec<usize>) {
        let home = cell_of(x, self.cell);
        let d = home.len();
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = home.iter().zip(&offset).map(|(h, o)| h + o).collect();
            if let Some(b) = self.buckets.get(&key) {
                out.extend_from_slice(b);
            }
            // odometer over {-1, 0, 1}^d
            let mut a = 0;
            while a < d && offset[a] == 1 {
                offset[a] = -1;
                a += 1;
            }
            if a == d {
                break;
            }
            offset[a] += 1;
        }
    }

    pub fn points(&self) -> &ClassicalConfig {
        self.points
    }
}

fn cell_of(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|x| (x / cell).floor() as i64).collect()
}

/// Cross energy between two collections on the same slice grid.
pub fn cross_collection_energy<A, B>(a: &A, b: &B, v: &PotentialModel, beta: f64) -> f64
where
    A: Worldlines + ?Sized,
    B: Worldlines + ?Sized,
{
    let mut h = 0.0;
    for p in a.members() {
        for q in b.members() {
            h += path_pair_energy(p, q, v, beta);
            if h == f64::INFINITY {
                return h;
            }
        }
    }
    h
}

/// `h(pc ∨ lc)`: both internal energies plus their cross term.
pub fn combined_energy(pc: &OpenPathCollection, lc: &LoopConfiguration, v: &PotentialModel, beta: f64) -> f64 {
    let parts = [
        collection_energy(pc, v, beta),
        collection_energy(lc, v, beta),
        cross_collection_energy(pc, lc, v, beta),
    ];
    if parts.contains(&f64::INFINITY) {
        f64::INFINITY
    } else {
        parts.iter().sum()
    }
}

/// Energy of a path against fixed classical points, which are present at every time.
pub fn path_cc_energy(p: &Path, ext: &ClassicalConfig, v: &PotentialModel, beta: f64) -> f64 {
    if ext.is_empty() {
        return 0.0;
    }
    let (lo, hi) = p.bounds();
    let range = v.range();
    let near: Vec<&[f64]> = ext
        .points()
        .filter(|x| (0..p.dim()).all(|a| x[a] > lo[a] - range && x[a] < hi[a] + range))
        .collect();
    if near.is_empty() {
        return 0.0;
    }
    let m = p.slices();
    let tau = beta / m as f64;
    let mut h = 0.0;
    for j in 0..=m {
        let mut e = 0.0;
        for a in p.section_points(j) {
            for b in &near {
                let term = v.evaluate_sq(dist2(a, b));
                if term == f64::INFINITY {
                    return f64::INFINITY;
                }
                e += term;
            }
        }
        h += tau * slice_weight(j, m) * e;
    }
    h
}

pub fn external_cc_energy<W: Worldlines + ?Sized>(
    c: &W,
    ext: &ClassicalConfig,
    v: &PotentialModel,
    beta: f64,
) -> f64 {
    let mut h = 0.0;
    for p in c.members() {
        h += path_cc_energy(p, ext, v, beta);
        if h == f64::INFINITY {
            return h;
        }
    }
    h
}

/// Energy against boundary loops, keeping only those based in `truncation`.
pub fn external_lc_energy<W: Worldlines + ?Sized>(
    c: &W,
    boundary: &LoopConfiguration,
    v: &PotentialModel,
    beta: f64,
    truncation: &BoxRegion,
) -> f64 {
    let kept: Vec<&Path> = boundary.based_in(truncation).map(|l| l.path()).collect();
    cross_collection_energy(c, kept.as_slice(), v, beta)
}

impl Worldlines for [&Path] {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_> {
        Box::new(self.iter().copied())
    }
}

/// Fixed data outside the simulation box.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Empty,
    Classical { points: ClassicalConfig },
    Loops { loops: LoopConfiguration },
}

impl Boundary {
    /// Interaction energy of one path with the boundary.
    pub fn energy_with(&self, p: &Path, v: &PotentialModel, beta: f64) -> f64 {
        match self {
            Boundary::Empty => 0.0,
            Boundary::Classical { points } => path_cc_energy(p, points, v, beta),
            Boundary::Loops { loops } => {
                let mut h = 0.0;
                for q in loops.loops() {
                    h += path_pair_energy(p, q.path(), v, beta);
                    if h == f64::INFINITY {
                        break;
                    }
                }
                h
            }
        }
    }

    pub fn energy_with_all<W: Worldlines + ?Sized>(&self, c: &W, v: &PotentialModel, beta: f64) -> f64 {
        let mut h = 0.0;
        for p in c.members() {
            h += self.energy_with(p, v, beta);
            if h == f64::INFINITY {
                break;
            }
        }
        h
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Boundary::Empty => true,
            Boundary::Classical { points } => points.is_empty(),
            Boundary::Loops { loops } => loops.is_empty(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Boundary::Empty => None,
            Boundary::Classical { points } => Some(points.dim()),
            Boundary::Loops { loops } => Some(loops.dim()),
        }
    }
}

/// `-beta * v_bar * (R/r)^d * K`, the floor for any finite energy of `K`
/// strands against an admissible environment.
pub fn energy_lower_bound(k: usize, consts: &PotentialConstants, v: &PotentialModel, beta: f64, d: usize) -> f64 {
    if k == 0 || consts.v_bar == 0.0 {
        return 0.0;
    }
    -beta * consts.v_bar * PotentialConstants::range_ratio_pow(v, d) * k as f64
}

/// Counts energy evaluations and floor violations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorMonitor {
    pub checked: u64,
    pub violations: u64,
}

impl FloorMonitor {
    /// Records one finite energy of `k` strands against the floor.
    pub fn check(&mut self, h: f64, floor: f64) -> bool {
        if !h.is_finite() {
            return true;
        }
        self.checked += 1;
        let ok = h >= floor;
        if !ok {
            self.violations += 1;
        }
        ok
    }

    pub fn merge(&mut self, other: &FloorMonitor) {
        self.checked += other.checked;
        self.violations += other.violations;
    }
}
