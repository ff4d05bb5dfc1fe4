//! Radial two-body potential with a hard core of diameter `r` and range `R`.
//!
//! Distances below the core give `+inf`, distances at or beyond the range give
//! zero, and the profile in between comes from one of the built-in families or
//! a tabulated curve interpolated by a natural cubic spline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2, ClassicalConfig};

/// Number of evenly spaced samples used for the profile extrema.
pub const DEFAULT_PROFILE_SAMPLES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `V = 0` on `[r, R]`: pure hard core.
    HardCore,
    /// `V(s) = -depth * (1 - S((s - r) / (R - r)))` with `S` the quintic smoothstep,
    /// so `V(r) = -depth` and `V` meets zero at `R` with two vanishing derivatives.
    SmoothedWell { depth: f64 },
    /// Flat `V = value` on `[r, R)`; discontinuous at `R`, meant for tests.
    SquareWell { value: f64 },
    Tabulated(CubicSpline),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    core_r: f64,
    range_r: f64,
    profile: Profile,
}

impl PotentialModel {
    pub fn new(core_r: f64, range_r: f64, profile: Profile) -> Result<Self> {
        if !(core_r > 0.0 && range_r > core_r && range_r.is_finite()) {
            return Err(Error::InvalidPotential(format!(
                "need 0 < r < R < inf, got r = {core_r}, R = {range_r}"
            )));
        }
        match &profile {
            Profile::SmoothedWell { depth } if !depth.is_finite() => {
                return Err(Error::InvalidPotential("well depth must be finite".into()));
            }
            Profile::SquareWell { value } if !value.is_finite() => {
                return Err(Error::InvalidPotential("well value must be finite".into()));
            }
            Profile::Tabulated(spline)
                if (spline.x_min() > core_r + 1e-12 || spline.x_max() < range_r - 1e-12) => {
                    return Err(Error::InvalidPotential(format!(
                        "table spans [{}, {}] but must cover [{core_r}, {range_r}]",
                        spline.x_min(),
                        spline.x_max()
                    )));
                }
            _ => {}
        }
        Ok(Self { core_r, range_r, profile })
    }

    pub fn hard_core(core_r: f64, range_r: f64) -> Result<Self> {
        Self::new(core_r, range_r, Profile::HardCore)
    }

    pub fn smoothed_well(core_r: f64, range_r: f64, depth: f64) -> Result<Self> {
        Self::new(core_r, range_r, Profile::SmoothedWell { depth })
    }

    pub fn core(&self) -> f64 {
        self.core_r
    }

    pub fn range(&self) -> f64 {
        self.range_r
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Pure hard core: no finite interaction anywhere.
    pub fn is_hard_core_only(&self) -> bool {
        matches!(self.profile, Profile::HardCore)
    }

    /// `V(dist)`; `+inf` inside the core.
    #[inline]
    pub fn evaluate(&self, dist: f64) -> f64 {
        if dist < self.core_r {
            f64::INFINITY
        } else if dist >= self.range_r {
            0.0
        } else {
            self.profile_value(dist)
        }
    }

    /// Same as [`evaluate`](Self::evaluate) but from a squared distance.
    #[inline]
    pub fn evaluate_sq(&self, d2: f64) -> f64 {
        if d2 < self.core_r * self.core_r {
            f64::INFINITY
        } else if d2 >= self.range_r * self.range_r {
            0.0
        } else {
            match self.profile {
                Profile::HardCore => 0.0,
                _ => self.profile_value(d2.sqrt()),
            }
        }
    }

    fn profile_value(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::HardCore => 0.0,
            Profile::SmoothedWell { depth } => {
                let u = (s - self.core_r) / (self.range_r - self.core_r);
                -depth * (1.0 - smoothstep(u))
            }
            Profile::SquareWell { value } => *value,
            Profile::Tabulated(spline) => spline.value(s),
        }
    }

    /// `V'(s)` on `[r, R]`.
    pub fn derivative(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::HardCore | Profile::SquareWell { .. } => 0.0,
            Profile::SmoothedWell { depth } => {
                let w = self.range_r - self.core_r;
                let u = (s - self.core_r) / w;
                depth * smoothstep_derivative(u) / w
            }
            Profile::Tabulated(spline) => spline.derivative(s),
        }
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

fn smoothstep_derivative(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

/// Derived constants of a potential at given `z`, `beta`, `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialConstants {
    /// Depth of the most negative value on `[r, R]` (zero for `V >= 0`).
    pub v_bar: f64,
    /// Largest `|V'|` on `[r, R]`.
    pub v_bar1: f64,
    /// `z * exp(beta * v_bar * R^d / r^d)`.
    pub rho_bar: f64,
    /// `rho_bar < 1`.
    pub stable: bool,
}

impl PotentialConstants {
    /// `(R / r)^d`.
    pub fn range_ratio_pow(v: &PotentialModel, d: usize) -> f64 {
        (v.range() / v.core()).powi(d as i32)
    }
}

pub fn constants(v: &PotentialModel, z: f64, beta: f64, d: usize) -> Result<PotentialConstants> {
    constants_with_resolution(v, z, beta, d, DEFAULT_PROFILE_SAMPLES)
}

pub fn constants_with_resolution(
    v: &PotentialModel,
    z: f64,
    beta: f64,
    d: usize,
    samples: usize,
) -> Result<PotentialConstants> {
    if !(z > 0.0 && beta > 0.0) {
        return Err(Error::Domain(format!("need z > 0 and beta > 0, got z = {z}, beta = {beta}")));
    }
    let samples = samples.max(2);
    let (r, big_r) = (v.core(), v.range());
    let mut v_min = 0.0f64;
    let mut dv_max = 0.0f64;
    for i in 0..samples {
        let s = r + (big_r - r) * i as f64 / (samples - 1) as f64;
        // the right end sits on the range itself, where the profile is continued
        let val = if i + 1 == samples { v.profile_value(s) } else { v.evaluate(s) };
        let der = v.derivative(s);
        if !val.is_finite() || !der.is_finite() {
            return Err(Error::InvalidPotential(format!("profile not finite at distance {s}")));
        }
        v_min = v_min.min(val);
        dv_max = dv_max.max(der.abs());
    }
    let v_bar = 0.0 - v_min;
    let rho_bar = z * (beta * v_bar * PotentialConstants::range_ratio_pow(v, d)).exp();
    Ok(PotentialConstants {
        v_bar,
        v_bar1: dv_max,
        rho_bar,
        stable: rho_bar < 1.0,
    })
}

/// `E(z)`: sum of `V` over unordered distinct pairs; `+inf` on any core overlap.
pub fn pair_energy(cc: &ClassicalConfig, v: &PotentialModel) -> f64 {
    let mut e = 0.0;
    for i in 0..cc.len() {
        for j in 0..i {
            let term = v.evaluate_sq(dist2(cc.point(i), cc.point(j)));
            if term == f64::INFINITY {
                return f64::INFINITY;
            }
            e += term;
        }
    }
    e
}

/// `E(a || b)`: sum of `V` over all pairs in `a x b`, no one-half factor.
pub fn cross_energy(a: &ClassicalConfig, b: &ClassicalConfig, v: &PotentialModel) -> f64 {
    let mut e = 0.0;
    for p in a.points() {
        for q in b.points() {
            let term = v.evaluate_sq(dist2(p, q));
            if term == f64::INFINITY {
                return f64::INFINITY;
            }
            e += term;
        }
    }
    e
}

/// Natural cubic spline through tabulated `(x, y)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidPotential("table needs at least two rows of (distance, value)".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("table contains non-finite entries".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPotential("table distances must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior knots
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut sup = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                sup[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let h0 = x[i + 1] - x[i];
                let w = h0 / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - sup[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { x, y, m })
    }

    /// Parses two-column delimited text (comma, tab or whitespace separated).
    /// Blank lines and lines starting with `#` are skipped, as is a leading header row.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 2 => {
                    xs.push(v[0]);
                    ys.push(v[1]);
                }
                None if xs.is_empty() => continue,
                _ => {
                    return Err(Error::InvalidPotential(format!(
                        "line {}: expected two numeric columns",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(xs, ys)
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    fn interval(&self, s: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= s) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        let i = self.interval(s);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - s) / h;
        let b = (s - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let i = self.interval(s);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - s) / h;
        let b = (s - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(value: f64) -> PotentialModel {
        PotentialModel::new(1.0, 2.0, Profile::SquareWell { value }).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let v = PotentialModel::smoothed_well(1.0, 2.0, 0.7).unwrap();
        assert_eq!(v.evaluate(0.5), f64::INFINITY);
        assert_eq!(v.evaluate(4.0), 0.0);
        assert_eq!(square(-1.0).evaluate(1.5), -1.0);
        assert_eq!(v.evaluate(1.0), -0.7);
        assert!(v.evaluate(2.0 - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn constants_examples() {
        let hc = PotentialModel::hard_core(1.0, 2.0).unwrap();
        let c = constants(&hc, 0.5, 1.0, 2).unwrap();
        assert_eq!(c.rho_bar, 0.5);
        assert!(c.stable);
        assert_eq!((c.v_bar, c.v_bar1), (0.0, 0.0));

        // V̄ = 1, R/r = 2, d = 2: rho_bar = 0.2 e^4
        let c = constants(&square(-1.0), 0.2, 1.0, 2).unwrap();
        assert_eq!(c.v_bar, 1.0);
        assert!((c.rho_bar - 0.2 * 4f64.exp()).abs() < 1e-12);
        assert!((c.rho_bar - 10.9196).abs() < 1e-4);
        assert!(!c.stable);
    }

    #[test]
    fn smoothed_well_derivative_bound() {
        let v = PotentialModel::smoothed_well(1.0, 3.0, 2.0).unwrap();
        let c = constants(&v, 0.1, 1.0, 1).unwrap();
        assert_eq!(c.v_bar, 2.0);
        // max of 30u^2(1-u)^2 is 15/8 at u = 1/2
        let exact = 2.0 * 1.875 / 2.0;
        assert!((c.v_bar1 - exact).abs() < 1e-6, "{}", c.v_bar1);
        let fd = (v.evaluate(1.6 + 1e-6) - v.evaluate(1.6 - 1e-6)) / 2e-6;
        assert!((fd - v.derivative(1.6)).abs() < 1e-6);
    }

    #[test]
    fn invalid_potentials() {
        assert!(PotentialModel::hard_core(1.0, 1.0).is_err());
        assert!(PotentialModel::smoothed_well(1.0, 2.0, f64::NAN).is_err());
        let spline = CubicSpline::new(vec![1.2, 2.0], vec![0.0, 0.0]).unwrap();
        assert!(PotentialModel::new(1.0, 2.0, Profile::Tabulated(spline)).is_err());
    }

    #[test]
    fn pair_and_cross_examples() {
        let v = square(-1.0);
        let two = ClassicalConfig::from_points(1, &[[0.0], [1.5]]).unwrap();
        assert_eq!(pair_energy(&two, &v), -1.0);
        assert_eq!(pair_energy(&ClassicalConfig::from_points(1, &[[0.0]]).unwrap(), &v), 0.0);
        let far = ClassicalConfig::from_points(1, &[[0.0], [3.0], [6.0]]).unwrap();
        assert_eq!(pair_energy(&far, &v), 0.0);

        let a = ClassicalConfig::from_points(1, &[[0.0]]).unwrap();
        let b = ClassicalConfig::from_points(1, &[[1.5]]).unwrap();
        assert_eq!(cross_energy(&a, &b, &v), -1.0);
        assert_eq!(cross_energy(&a, &ClassicalConfig::empty(1), &v), 0.0);
        let inside = ClassicalConfig::from_points(1, &[[0.5]]).unwrap();
        assert_eq!(cross_energy(&a, &inside, &v), f64::INFINITY);
    }

    #[test]
    fn spline_reproduces_cubic_data_smoothly() {
        let xs: Vec<f64> = (0..=20).map(|i| 1.0 + i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
        let s = CubicSpline::new(xs, ys).unwrap();
        for i in 0..50 {
            let x = 1.1 + i as f64 * 0.016;
            assert!((s.value(x) - (3.0 * x).sin()).abs() < 1e-4);
            assert!((s.derivative(x) - 3.0 * (3.0 * x).cos()).abs() < 5e-3);
        }
    }

    #[test]
    fn tabulated_from_text() {
        let text = "# distance value\ndist,val\n1.0, -1.0\n1.5, -0.5\n2.0, 0.0\n";
        let s = CubicSpline::parse_table(text).unwrap();
        let v = PotentialModel::new(1.0, 2.0, Profile::Tabulated(s)).unwrap();
        assert!((v.evaluate(1.5) + 0.5).abs() < 1e-12);
        assert_eq!(v.evaluate(2.5), 0.0);
        assert!(CubicSpline::parse_table("1.0 2.0\n1.5 x\n").is_err());
    }

    fn arb_cc() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec([-4.0f64..4.0, -4.0f64..4.0], 0..6)
    }

    fn flat(p: &[[f64; 2]]) -> ClassicalConfig {
        ClassicalConfig::from_flat_unchecked(2, p.iter().flatten().copied().collect())
    }

    proptest! {
        #[test]
        fn cross_energy_symmetric(a in arb_cc(), b in arb_cc()) {
            let v = PotentialModel::smoothed_well(0.3, 1.2, 1.0).unwrap();
            let (a, b) = (flat(&a), flat(&b));
            let ab = cross_energy(&a, &b, &v);
            let ba = cross_energy(&b, &a, &v);
            prop_assert!(ab == ba || (ab - ba).abs() < 1e-12);
        }

        #[test]
        fn pair_energy_additive(a in arb_cc(), b in arb_cc()) {
            let v = PotentialModel::smoothed_well(0.3, 1.2, 1.0).unwrap();
            let (a, b) = (flat(&a), flat(&b));
            let whole = pair_energy(&a.union(&b), &v);
            let parts = pair_energy(&a, &v) + pair_energy(&b, &v) + cross_energy(&a, &b, &v);
            if whole.is_finite() {
                prop_assert!((whole - parts).abs() < 1e-10);
            } else {
                prop_assert_eq!(parts, f64::INFINITY);
            }
        }

        #[test]
        fn nonnegative_potential_keeps_rho_bar(z in 0.01f64..2.0, beta in 0.1f64..3.0, d in 1usize..4) {
            let v = PotentialModel::new(0.5, 1.0, Profile::SquareWell { value: 0.3 }).unwrap();
            prop_assert_eq!(constants(&v, z, beta, d).unwrap().rho_bar, z);
        }

        #[test]
        fn isolated_point_can_move(a in arb_cc(), dx in -1.0f64..1.0) {
            let v = PotentialModel::smoothed_well(0.3, 1.2, 1.0).unwrap();
            let a = flat(&a);
            // a point far from everything, moved while staying far
            let p = ClassicalConfig::from_points(2, &[[20.0, 0.0]]).unwrap();
            let q = ClassicalConfig::from_points(2, &[[20.0 + dx, 5.0]]).unwrap();
            prop_assert_eq!(pair_energy(&a.union(&p), &v), pair_energy(&a.union(&q), &v));
            prop_assert_eq!(cross_energy(&p, &a, &v), cross_energy(&q, &a, &v));
        }
    }

    /// Randomized search for violations of the classical one-point floor
    /// `E({x} || cc) >= -v_bar (R/r)^d` in one dimension with `R = 2r`,
    /// where at most one neighbour fits on each side of `x` inside the range.
    #[test]
    fn one_point_floor_in_one_dimension() {
        use rand::{Rng, SeedableRng};
        let v = PotentialModel::smoothed_well(1.0, 2.0, 1.0).unwrap();
        let c = constants(&v, 0.1, 1.0, 1).unwrap();
        let floor = -c.v_bar * PotentialConstants::range_ratio_pow(&v, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        for _ in 0..20_000 {
            let n = rng.random_range(1..8);
            let pts: Vec<[f64; 1]> = (0..n).map(|_| [rng.random_range(-3.0..3.0)]).collect();
            let cc = ClassicalConfig::from_flat_unchecked(1, pts.iter().flatten().copied().collect());
            if !crate::geometry::hardcore_admissible(&cc, 1.0) {
                continue;
            }
            let x = ClassicalConfig::from_points(1, &[[rng.random_range(-3.0..3.0)]]).unwrap();
            let e = cross_energy(&x, &cc, &v);
            if e.is_finite() {
                checked += 1;
                assert!(e >= floor, "energy {e} below floor {floor}");
            }
        }
        assert!(checked > 1000);
    }
}
