//! Time-sliced paths and loops with multiplicity, their collections, and the
//! functionals `K`, `L`, the confinement indicator and the control-point indicator.
//!
//! A path of multiplicity `k` with `M` slices per period stores `k*M + 1`
//! positions at times `j * beta / M`. Its `t`-section at slice `j` is the set
//! of positions with indices `l*M + j`, `l = 0..k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hardcore_admissible, BoxRegion, ClassicalConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    dim: usize,
    multiplicity: usize,
    slices: usize,
    coords: Vec<f64>,
}

impl Path {
    /// `coords` holds `k*M + 1` points, flattened.
    pub fn new(dim: usize, multiplicity: usize, slices: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || multiplicity == 0 || slices == 0 {
            return Err(Error::Domain("dimension, multiplicity and slices must be positive".into()));
        }
        let expect = (multiplicity * slices + 1) * dim;
        if coords.len() != expect {
            return Err(Error::Domain(format!(
                "path needs {expect} coordinates, got {}",
                coords.len()
            )));
        }
        Ok(Self { dim, multiplicity, slices, coords })
    }

    /// A path sitting at `x` for its whole duration.
    pub fn constant(x: &[f64], multiplicity: usize, slices: usize) -> Self {
        let n = multiplicity * slices + 1;
        let coords = x.iter().copied().cycle().take(n * x.len()).collect();
        Self { dim: x.len(), multiplicity, slices, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// Number of time steps, `k*M`.
    pub fn steps(&self) -> usize {
        self.multiplicity * self.slices
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn start(&self) -> &[f64] {
        self.position(0)
    }

    pub fn end(&self) -> &[f64] {
        self.position(self.steps())
    }

    pub fn is_closed(&self) -> bool {
        self.start() == self.end()
    }

    /// Positions forming the section at slice `j` (`0 <= j <= M`).
    pub fn section_points(&self, j: usize) -> impl Iterator<Item = &[f64]> + '_ {
        debug_assert!(j <= self.slices);
        (0..self.multiplicity).map(move |l| self.position(l * self.slices + j))
    }

    /// Positions at the control times `l*beta`, `l = 1..k-1`.
    pub fn control_points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (1..self.multiplicity).map(move |l| self.position(l * self.slices))
    }

    /// The section at slice `j` as a configuration.
    pub fn section(&self, j: usize) -> ClassicalConfig {
        let coords = self.section_points(j).flatten().copied().collect();
        ClassicalConfig::from_flat_unchecked(self.dim, coords)
    }

    /// Section at continuous time `t`, which must sit on the slice grid.
    pub fn t_section(&self, t: f64, beta: f64) -> Result<ClassicalConfig> {
        Ok(self.section(slice_index(t, beta, self.slices)?))
    }

    pub fn translate(&mut self, s: &[f64]) {
        for p in self.coords.chunks_exact_mut(self.dim) {
            for (x, d) in p.iter_mut().zip(s) {
                *x += d;
            }
        }
    }

    /// Axis-aligned bounding box as `(lo, hi)` per axis.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.positions() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }
}

/// A closed path: first and last positions coincide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Path", into = "Path")]
pub struct Loop(Path);

impl TryFrom<Path> for Loop {
    type Error = Error;

    fn try_from(p: Path) -> Result<Self> {
        if !p.is_closed() {
            return Err(Error::Domain("loop must start and end at the same point".into()));
        }
        Ok(Loop(p))
    }
}

impl From<Loop> for Path {
    fn from(l: Loop) -> Path {
        l.0
    }
}

impl Loop {
    pub fn base(&self) -> &[f64] {
        self.0.start()
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn multiplicity(&self) -> usize {
        self.0.multiplicity
    }

    pub(crate) fn from_path_unchecked(p: Path) -> Self {
        debug_assert!(p.is_closed());
        Loop(p)
    }
}

impl std::ops::Deref for Loop {
    type Target = Path;

    fn deref(&self) -> &Path {
        &self.0
    }
}

/// Converts `t` to a slice index, rejecting off-grid times.
pub fn slice_index(t: f64, beta: f64, slices: usize) -> Result<usize> {
    let step = beta / slices as f64;
    let x = t / step;
    let j = x.round();
    if !(0.0..=slices as f64).contains(&j) || (x - j).abs() > 1e-9 {
        return Err(Error::Alignment { t, step });
    }
    Ok(j as usize)
}

/// Anything made of time-sliced paths sharing one slice grid.
pub trait Worldlines {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_>;

    fn section(&self, j: usize) -> ClassicalConfig {
        let mut coords = Vec::new();
        let mut dim = 0;
        for p in self.members() {
            dim = p.dim();
            coords.extend(p.section_points(j).flatten());
        }
        ClassicalConfig::from_flat_unchecked(dim.max(1), coords)
    }
}

impl Worldlines for [Path] {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_> {
        Box::new(self.iter())
    }
}

impl Worldlines for [Loop] {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_> {
        Box::new(self.iter().map(|l| l.path()))
    }
}

/// A finite collection of loops over a box; the Markov chain state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfiguration {
    dim: usize,
    beta: f64,
    slices: usize,
    loops: Vec<Loop>,
}

impl LoopConfiguration {
    pub fn empty(dim: usize, beta: f64, slices: usize) -> Self {
        Self { dim, beta, slices, loops: Vec::new() }
    }

    pub fn from_loops(dim: usize, beta: f64, slices: usize, loops: Vec<Loop>) -> Result<Self> {
        for l in &loops {
            if l.dim() != dim || l.slices() != slices {
                return Err(Error::Domain("loop does not match the configuration grid".into()));
            }
        }
        let cfg = Self { dim, beta, slices, loops };
        let bases = cfg.base_points();
        for i in 0..bases.len() {
            for j in 0..i {
                if bases.point(i) == bases.point(j) {
                    return Err(Error::Domain("loop base points must be distinct".into()));
                }
            }
        }
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn loops(&self) -> &[Loop] {
        &self.loops
    }

    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    pub fn base_points(&self) -> ClassicalConfig {
        let coords = self.loops.iter().flat_map(|l| l.base().iter().copied()).collect();
        ClassicalConfig::from_flat_unchecked(self.dim, coords)
    }

    pub(crate) fn push(&mut self, l: Loop) {
        self.loops.push(l);
    }

    pub(crate) fn swap_remove(&mut self, i: usize) -> Loop {
        self.loops.swap_remove(i)
    }

    pub(crate) fn replace(&mut self, i: usize, l: Loop) -> Loop {
        std::mem::replace(&mut self.loops[i], l)
    }

    /// Loops whose base point lies in `region`.
    pub fn based_in(&self, region: &BoxRegion) -> impl Iterator<Item = &Loop> + '_ {
        let region = region.clone();
        self.loops.iter().filter(move |l| region.contains(l.base()))
    }

    pub fn t_section(&self, t: f64) -> Result<ClassicalConfig> {
        Ok(self.section(slice_index(t, self.beta, self.slices)?))
    }
}

impl Worldlines for LoopConfiguration {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_> {
        Box::new(self.loops.iter().map(|l| l.path()))
    }
}

/// Open paths with permuted endpoints: path `j` runs from `x[j]` to `y[perm[j]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenPathCollection {
    paths: Vec<Path>,
    permutation: Vec<usize>,
}

impl OpenPathCollection {
    pub fn new(paths: Vec<Path>, permutation: Vec<usize>) -> Result<Self> {
        if paths.len() != permutation.len() {
            return Err(Error::Domain("one permutation entry per path required".into()));
        }
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Domain("permutation is not a bijection".into()));
            }
        }
        Ok(Self { paths, permutation })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Checks that path `j` starts at `x0[j]` and ends at `y0[perm[j]]`.
    pub fn connects(&self, x0: &ClassicalConfig, y0: &ClassicalConfig) -> bool {
        self.paths.len() == x0.len()
            && x0.len() == y0.len()
            && self.paths.iter().enumerate().all(|(j, p)| {
                p.start() == x0.point(j) && p.end() == y0.point(self.permutation[j])
            })
    }
}

impl Worldlines for OpenPathCollection {
    fn members(&self) -> Box<dyn Iterator<Item = &Path> + '_> {
        Box::new(self.paths.iter())
    }
}

/// Sum of multiplicities.
pub fn k_of<W: Worldlines + ?Sized>(c: &W) -> usize {
    c.members().map(|p| p.multiplicity()).sum()
}

/// Product of multiplicities (saturating; 1 for the empty collection).
pub fn l_of<W: Worldlines + ?Sized>(c: &W) -> u128 {
    c.members()
        .fold(1u128, |acc, p| acc.saturating_mul(p.multiplicity() as u128))
}

/// `ln L`, safe against overflow.
pub fn ln_l_of<W: Worldlines + ?Sized>(c: &W) -> f64 {
    c.members().map(|p| (p.multiplicity() as f64).ln()).sum()
}

/// 1 iff every slice position of every member is inside `region`.
pub fn alpha_indicator<W: Worldlines + ?Sized>(region: &BoxRegion, c: &W) -> bool {
    c.members().all(|p| path_confined(region, p))
}

pub fn path_confined(region: &BoxRegion, p: &Path) -> bool {
    p.positions().all(|x| region.contains(x))
}

/// 1 iff every member with `k >= 2` has all its control points outside `inner`.
pub fn chi_indicator<W: Worldlines + ?Sized>(inner: &BoxRegion, c: &W) -> bool {
    c.members().all(|p| path_controls_outside(inner, p))
}

pub fn path_controls_outside(inner: &BoxRegion, p: &Path) -> bool {
    p.control_points().all(|x| !inner.contains(x))
}

/// True iff every section at slice times `0..=M` is hard-core admissible at `r`.
pub fn admissible_r<W: Worldlines + ?Sized>(c: &W, r: f64) -> bool {
    let Some(slices) = c.members().next().map(|p| p.slices()) else {
        return true;
    };
    (0..=slices).all(|j| hardcore_admissible(&c.section(j), r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// k = 2, M = 2 loop in 1-d: positions 0, a, b, c, 0
    fn loop_1d(pos: &[f64]) -> Loop {
        let k = (pos.len() - 1) / 2;
        Loop::try_from(Path::new(1, k, 2, pos.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn sections() {
        let p = Path::new(1, 1, 2, vec![0.0, 0.3, 0.5]).unwrap();
        assert_eq!(p.section(0).coords(), &[0.0]);
        let l = loop_1d(&[0.0, 1.0, 2.0, 3.0, 0.0]);
        let s = l.t_section(0.5, 1.0).unwrap();
        assert_eq!(s.coords(), &[1.0, 3.0]);
        assert!(matches!(l.t_section(0.3, 1.0), Err(Error::Alignment { .. })));
        let l3 = Loop::try_from(Path::constant(&[0.0, 1.0], 3, 4)).unwrap();
        for j in 0..=4 {
            assert!(l3.section(j).len() <= 3);
        }
    }

    #[test]
    fn config_sections() {
        let empty = LoopConfiguration::empty(1, 1.0, 2);
        assert!(empty.section(0).is_empty());
        let a = Loop::try_from(Path::constant(&[0.0], 1, 2)).unwrap();
        let b = Loop::try_from(Path::constant(&[2.0], 1, 2)).unwrap();
        let c = LoopConfiguration::from_loops(1, 1.0, 2, vec![a, b]).unwrap();
        assert_eq!(c.t_section(0.0).unwrap().coords(), &[0.0, 2.0]);
        let single = LoopConfiguration::from_loops(1, 1.0, 2, vec![loop_1d(&[0.0, 1.0, 2.0, 3.0, 0.0])]).unwrap();
        assert_eq!(single.section(0).len(), 2);
    }

    #[test]
    fn k_and_l() {
        let mk = |k| Loop::try_from(Path::constant(&[k as f64], k, 1)).unwrap();
        let loops = [mk(1), mk(2), mk(3)];
        assert_eq!(k_of(&loops[..]), 6);
        assert_eq!(l_of(&loops[..]), 6);
        let empty: Vec<Loop> = vec![];
        assert_eq!((k_of(&empty[..]), l_of(&empty[..])), (0, 1));
        let five = [mk(5)];
        assert_eq!((k_of(&five[..]), l_of(&five[..])), (5, 5));
        assert!((ln_l_of(&loops[..]) - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn alpha_examples() {
        let b = BoxRegion::centered(1, 1.0).unwrap();
        let inside = [loop_1d(&[0.0, 0.5, -0.5, 0.9, 0.0])];
        assert!(alpha_indicator(&b, &inside[..]));
        let out = [loop_1d(&[0.0, 0.5, -1.5, 0.9, 0.0])];
        assert!(!alpha_indicator(&b, &out[..]));
        let empty: Vec<Loop> = vec![];
        assert!(alpha_indicator(&b, &empty[..]));
    }

    #[test]
    fn chi_examples() {
        let b0 = BoxRegion::centered(1, 0.5).unwrap();
        let ones = [Loop::try_from(Path::constant(&[0.0], 1, 2)).unwrap()];
        assert!(chi_indicator(&b0, &ones[..]));
        // k = 2: control point is position[M] = position[2]
        let back_inside = [loop_1d(&[2.0, 1.0, 0.1, 1.0, 2.0])];
        assert!(!chi_indicator(&b0, &back_inside[..]));
        let k3 = Path::new(1, 3, 1, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        assert!(chi_indicator(&b0, &[k3][..]));
    }

    #[test]
    fn admissibility_examples() {
        let apart = [loop_1d(&[0.0, 1.0, 2.0, 3.0, 0.0])];
        assert!(admissible_r(&apart[..], 1.0));
        let a = Path::new(1, 1, 2, vec![0.0, 0.5, 0.0]).unwrap();
        let b = Path::new(1, 1, 2, vec![1.0, 0.6, 1.0]).unwrap();
        assert!(!admissible_r(&[a, b][..], 0.5));
        let empty: Vec<Loop> = vec![];
        assert!(admissible_r(&empty[..], 1.0));
    }

    #[test]
    fn open_collection_checks() {
        let x0 = ClassicalConfig::from_points(1, &[[0.0], [1.0]]).unwrap();
        let y0 = ClassicalConfig::from_points(1, &[[0.5], [1.5]]).unwrap();
        let p0 = Path::new(1, 1, 1, vec![0.0, 1.5]).unwrap();
        let p1 = Path::new(1, 1, 1, vec![1.0, 0.5]).unwrap();
        let c = OpenPathCollection::new(vec![p0, p1], vec![1, 0]).unwrap();
        assert!(c.connects(&x0, &y0));
        assert!(OpenPathCollection::new(vec![], vec![0]).is_err());
        assert!(Loop::try_from(Path::new(1, 1, 1, vec![0.0, 1.0]).unwrap()).is_err());
    }

    fn arb_loop() -> impl Strategy<Value = Vec<f64>> {
        (1usize..4).prop_flat_map(|k| prop::collection::vec(-2.0f64..2.0, 2 * k * 3))
    }

    fn mk_loop(v: &[f64]) -> Loop {
        // 2-d, M = 3: v holds k*M points; close it
        let mut coords = v.to_vec();
        coords.extend_from_slice(&v[0..2]);
        let k = v.len() / 6;
        Loop::try_from(Path::new(2, k, 3, coords).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn k_l_shift_invariant(a in arb_loop(), b in arb_loop(), s in [-5.0f64..5.0, -5.0f64..5.0]) {
            let loops = vec![mk_loop(&a), mk_loop(&b)];
            let mut shifted = loops.clone();
            for l in &mut shifted {
                l.0.translate(&s);
            }
            prop_assert_eq!(k_of(&loops[..]), k_of(&shifted[..]));
            prop_assert_eq!(l_of(&loops[..]), l_of(&shifted[..]));
        }

        #[test]
        fn alpha_monotone_in_box(a in arb_loop(), l in 0.5f64..3.0, grow in 0.0f64..1.0) {
            let loops = [mk_loop(&a)];
            let small = BoxRegion::centered(2, l).unwrap();
            let big = BoxRegion::centered(2, l + grow).unwrap();
            prop_assert!(!alpha_indicator(&small, &loops[..]) || alpha_indicator(&big, &loops[..]));
        }

        #[test]
        fn chi_monotone_in_inner_box(a in arb_loop(), l in 0.1f64..2.0, shrink in 0.0f64..1.0) {
            let loops = [mk_loop(&a)];
            let big = BoxRegion::centered(2, l).unwrap();
            let small = BoxRegion::centered(2, l * shrink + 1e-6).unwrap();
            prop_assert!(!chi_indicator(&big, &loops[..]) || chi_indicator(&small, &loops[..]));
        }

        #[test]
        fn admissibility_monotone(a in arb_loop(), b in arb_loop(), r in 0.01f64..1.0, f in 0.0f64..1.0) {
            let loops = [mk_loop(&a), mk_loop(&b)];
            prop_assert!(!admissible_r(&loops[..], r) || admissible_r(&loops[..], r * f));
        }

        #[test]
        fn zero_section_contains_bases(a in arb_loop(), b in arb_loop()) {
            let (la, lb) = (mk_loop(&a), mk_loop(&b));
            if la.base() != lb.base() {
                let cfg = LoopConfiguration::from_loops(2, 1.0, 3, vec![la, lb]).unwrap();
                let s0 = cfg.section(0);
                let bases = cfg.base_points();
                for p in bases.points() {
                    prop_assert!(s0.points().any(|q| q == p));
                }
            }
        }
    }
}
