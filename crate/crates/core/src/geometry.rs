//! Cubes, point sets and the hard-core admissibility test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned cube `center ± half_side` in `d` dimensions. Closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    center: Vec<f64>,
    half_side: f64,
}

impl BoxRegion {
    pub fn new(center: Vec<f64>, half_side: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Domain("box dimension must be at least 1".into()));
        }
        if !(half_side > 0.0 && half_side.is_finite()) {
            return Err(Error::Domain(format!("box half side must be positive, got {half_side}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("box center must be finite".into()));
        }
        Ok(Self { center, half_side })
    }

    /// Cube centred at the origin.
    pub fn centered(dim: usize, half_side: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], half_side)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_side
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.center[axis] + self.half_side
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        debug_assert_eq!(p.len(), self.dim());
        p.iter()
            .zip(&self.center)
            .all(|(x, c)| (x - c).abs() <= self.half_side)
    }

    /// True when `other` lies inside `self` (boundaries may touch).
    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|a| other.lower(a) >= self.lower(a) && other.upper(a) <= self.upper(a))
    }

    /// The same cube grown by `margin` on every side.
    pub fn enlarged(&self, margin: f64) -> BoxRegion {
        BoxRegion {
            center: self.center.clone(),
            half_side: self.half_side + margin,
        }
    }

    /// Euclidean distance from `p` to the cube (zero inside).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| {
                let excess = (x - c).abs() - self.half_side;
                if excess > 0.0 {
                    excess * excess
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// A finite set of points in `R^d`, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalConfig {
    dim: usize,
    coords: Vec<f64>,
}

impl ClassicalConfig {
    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    /// Builds a configuration, rejecting repeated points (exact equality).
    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::Domain(format!(
                    "point has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain("point coordinates must be finite".into()));
            }
            coords.extend_from_slice(p);
        }
        let cc = Self { dim, coords };
        for i in 0..cc.len() {
            for j in 0..i {
                if cc.point(i) == cc.point(j) {
                    return Err(Error::Domain(format!("points {j} and {i} coincide")));
                }
            }
        }
        Ok(cc)
    }

    /// Internal constructor for samplers, where coincidences have probability zero.
    pub(crate) fn from_flat_unchecked(dim: usize, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % dim.max(1), 0);
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Points of `self` followed by points of `other`.
    pub fn union(&self, other: &ClassicalConfig) -> ClassicalConfig {
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        ClassicalConfig { dim: self.dim, coords }
    }

    pub fn restricted_to(&self, region: &BoxRegion) -> ClassicalConfig {
        let coords = self
            .points()
            .filter(|p| region.contains(p))
            .flatten()
            .copied()
            .collect();
        ClassicalConfig { dim: self.dim, coords }
    }
}

/// Minimum distance over distinct pairs; `+inf` for fewer than two points.
pub fn min_pair_distance(cc: &ClassicalConfig) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..cc.len() {
        for j in 0..i {
            best = best.min(dist2(cc.point(i), cc.point(j)));
        }
    }
    best.sqrt()
}

/// `true` iff all pairwise distances are at least `r`. The boundary case counts as admissible.
pub fn hardcore_admissible(cc: &ClassicalConfig, r: f64) -> bool {
    let r2 = r * r;
    for i in 0..cc.len() {
        for j in 0..i {
            if dist2(cc.point(i), cc.point(j)) < r2 {
                return false;
            }
        }
    }
    true
}

/// Occupancy cap `ceil((2L)^d / r^d)` for a cube of half side `L`.
pub fn max_occupancy(region: &BoxRegion, r: f64) -> usize {
    let ratio = (region.side() / r).powi(region.dim() as i32);
    // guard against 4/0.25 = 15.999.. style rounding
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

pub fn shift_config(cc: &ClassicalConfig, s: &[f64]) -> ClassicalConfig {
    assert_eq!(s.len(), cc.dim(), "shift vector dimension mismatch");
    let coords = cc
        .coords
        .chunks_exact(cc.dim.max(1))
        .flat_map(|p| p.iter().zip(s).map(|(x, d)| x + d))
        .collect();
    ClassicalConfig { dim: cc.dim, coords }
}
