//! Random streams and the samplers behind every Monte Carlo move:
//! Brownian bridges, multiplicities, permutations, Poisson point sets.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{BoxRegion, ClassicalConfig};
use crate::loops::Path;

/// Seeded ChaCha stream. Equal `(seed, stream)` pairs give equal draws;
/// different stream ids give independent sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "StreamState", from = "StreamState")]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

/// Serializable position of a [`RandomStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub stream: u64,
    /// ChaCha word position, kept as a decimal string because it is 128 bits wide.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn state(&self) -> StreamState {
        StreamState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn from_state(state: StreamState) -> Self {
        let mut s = Self::new(state.seed, state.stream);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl From<RandomStream> for StreamState {
    fn from(s: RandomStream) -> Self {
        s.state()
    }
}

impl From<StreamState> for RandomStream {
    fn from(s: StreamState) -> Self {
        RandomStream::from_state(s)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Total mass `(2 pi k beta)^(-d/2) exp(-|x-y|^2 / (2 k beta))` of the bridge measure.
pub fn bridge_mass(x: &[f64], y: &[f64], k: usize, beta: f64, d: usize) -> f64 {
    log_bridge_mass(x, y, k, beta, d).exp()
}

pub fn log_bridge_mass(x: &[f64], y: &[f64], k: usize, beta: f64, d: usize) -> f64 {
    let time = k as f64 * beta;
    log_heat_kernel(crate::geometry::dist2(x, y), time, d)
}

/// `ln[(2 pi t)^(-d/2) exp(-r2 / (2t))]`.
#[inline]
pub fn log_heat_kernel(r2: f64, t: f64, d: usize) -> f64 {
    -0.5 * d as f64 * (2.0 * std::f64::consts::PI * t).ln() - r2 / (2.0 * t)
}

/// Samples a discretized Brownian bridge from `x` to `y` over time `k*beta`
/// with `M` slices per period, by recursive midpoint bisection.
pub fn sample_bridge(
    x: &[f64],
    y: &[f64],
    k: usize,
    beta: f64,
    slices: usize,
    rng: &mut RandomStream,
) -> Path {
    assert!(slices >= 1 && k >= 1);
    let d = x.len();
    let n = k * slices;
    let mut coords = vec![0.0; (n + 1) * d];
    coords[..d].copy_from_slice(x);
    coords[n * d..].copy_from_slice(y);
    let mut path = Path::new(d, k, slices, coords).expect("sizes are consistent");
    let tau = beta / slices as f64;
    fill_bridge(&mut path, 0, n, tau, rng);
    path
}

/// Redraws positions strictly between indices `a` and `b` from the bridge law
/// pinned at `path[a]` and `path[b]`.
pub fn fill_bridge(path: &mut Path, a: usize, b: usize, tau: f64, rng: &mut RandomStream) {
    if b <= a + 1 {
        return;
    }
    let m = (a + b) / 2;
    let (wa, wb) = ((m - a) as f64, (b - m) as f64);
    let span = (b - a) as f64;
    let sd = (tau * wa * wb / span).sqrt();
    for axis in 0..path.dim() {
        let pa = path.position(a)[axis];
        let pb = path.position(b)[axis];
        let mean = pa + (pb - pa) * wa / span;
        path.position_mut(m)[axis] = mean + sd * rng.normal();
    }
    fill_bridge(path, a, m, tau, rng);
    fill_bridge(path, m, b, tau, rng);
}

/// Log density of the free random walk with step variance `tau` over
/// indices `a..b`, conditioned on its two ends (the normalized bridge law).
pub fn log_bridge_density(path: &Path, a: usize, b: usize, tau: f64) -> f64 {
    let d = path.dim();
    let mut s = 0.0;
    for i in a..b {
        let r2 = crate::geometry::dist2(path.position(i), path.position(i + 1));
        s += log_heat_kernel(r2, tau, d);
    }
    let r2 = crate::geometry::dist2(path.position(a), path.position(b));
    s - log_heat_kernel(r2, tau * (b - a) as f64, d)
}

/// Log density of the unnormalized free path measure (product of heat kernels)
/// over the whole path.
pub fn log_free_path_density(path: &Path, tau: f64) -> f64 {
    let d = path.dim();
    (0..path.steps())
        .map(|i| {
            let r2 = crate::geometry::dist2(path.position(i), path.position(i + 1));
            log_heat_kernel(r2, tau, d)
        })
        .sum()
}

/// Truncated law of the loop multiplicity: `P(k) ∝ z^k (2 pi k beta)^(-d/2)`, `k <= k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplicityLaw {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    normalizer: f64,
}

impl MultiplicityLaw {
    pub fn new(z: f64, beta: f64, d: usize, k_max: usize) -> Self {
        assert!(k_max >= 1, "k_max must be at least 1");
        let weights: Vec<f64> = (1..=k_max)
            .map(|k| z.powi(k as i32) * (2.0 * std::f64::consts::PI * k as f64 * beta).powf(-0.5 * d as f64))
            .collect();
        let normalizer: f64 = weights.iter().sum();
        assert!(normalizer > 0.0 && normalizer.is_finite(), "multiplicity weights must be summable");
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / normalizer;
                acc
            })
            .collect();
        Self { weights, cumulative, normalizer }
    }

    pub fn k_max(&self) -> usize {
        self.weights.len()
    }

    /// `sum_k z^k (2 pi k beta)^(-d/2)` over `k <= k_max`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Unnormalized weight `z^k (2 pi k beta)^(-d/2)`.
    pub fn weight(&self, k: usize) -> f64 {
        self.weights.get(k.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.weight(k) / self.normalizer
    }

    pub fn sample(&self, rng: &mut RandomStream) -> usize {
        let u = rng.uniform();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .map_or(self.k_max(), |i| i + 1)
    }

    /// Geometric bound on the neglected tail `sum_{k > k_max} rho^k (2 pi k beta)^(-d/2)`;
    /// `+inf` unless `rho < 1`.
    pub fn tail_bound(k_max: usize, rho_bar: f64, beta: f64, d: usize) -> f64 {
        if rho_bar >= 1.0 {
            return f64::INFINITY;
        }
        let k = (k_max + 1) as f64;
        rho_bar.powf(k) / (1.0 - rho_bar) * (2.0 * std::f64::consts::PI * k * beta).powf(-0.5 * d as f64)
    }
}

/// Draws `k` and returns it with the normalizer, so that `normalizer * f(k)`
/// is unbiased for `sum_{k <= k_max} z^k (2 pi k beta)^(-d/2) f(k)`.
pub fn sample_multiplicity(
    z: f64,
    beta: f64,
    d: usize,
    k_max: usize,
    rng: &mut RandomStream,
) -> (usize, f64) {
    let law = MultiplicityLaw::new(z, beta, d, k_max);
    (law.sample(rng), law.normalizer())
}

/// Poisson number of points, each uniform in `region`.
pub fn sample_lebesgue_poisson(region: &BoxRegion, intensity: f64, rng: &mut RandomStream) -> ClassicalConfig {
    let mean = intensity * region.volume();
    let n = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    sample_uniform_points(region, n, rng)
}

/// `n` independent uniform points in `region`.
pub fn sample_uniform_points(region: &BoxRegion, n: usize, rng: &mut RandomStream) -> ClassicalConfig {
    let d = region.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for a in 0..d {
            coords.push(region.lower(a) + region.side() * rng.uniform());
        }
    }
    ClassicalConfig::from_flat_unchecked(d, coords)
}

pub fn sample_uniform_point(region: &BoxRegion, rng: &mut RandomStream) -> Vec<f64> {
    (0..region.dim())
        .map(|a| region.lower(a) + region.side() * rng.uniform())
        .collect()
}

/// Uniform permutation of `0..n`.
pub fn sample_permutation(n: usize, rng: &mut RandomStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Cycles of a permutation, each as a list of indices.
pub fn permutation_cycles(perm: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; perm.len()];
    let mut cycles = Vec::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            cycle.push(i);
            i = perm[i];
        }
        cycles.push(cycle);
    }
    cycles
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_mass_examples() {
        let m = bridge_mass(&[0.0, 0.0], &[0.0, 0.0], 1, 1.0, 2);
        assert!((m - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((m - 0.1591549).abs() < 1e-7);
        let m = bridge_mass(&[0.0], &[1.0], 2, 0.5, 1);
        let expect = (2.0 * std::f64::consts::PI).powf(-0.5) * (-0.5f64).exp();
        assert!((m - expect).abs() < 1e-15);
        assert!((m - 0.2419707).abs() < 1e-7);
        assert!(bridge_mass(&[0.3], &[0.3], 2, 0.7, 1) > bridge_mass(&[0.3], &[0.5], 2, 0.7, 1));
    }

    #[test]
    fn streams_are_reproducible_and_resumable() {
        let mut a = RandomStream::new(11, 3);
        let mut b = RandomStream::new(11, 3);
        let mut c = RandomStream::new(11, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        let saved = a.state();
        let next: Vec<f64> = (0..5).map(|_| a.normal()).collect();
        let mut r = RandomStream::from_state(saved);
        let again: Vec<f64> = (0..5).map(|_| r.normal()).collect();
        assert_eq!(next, again);
        let json = serde_json::to_string(&saved).unwrap();
        assert_eq!(serde_json::from_str::<StreamState>(&json).unwrap(), saved);
    }

    #[test]
    fn bridge_endpoints_and_trivial_case() {
        let mut rng = RandomStream::new(1, 0);
        let p = sample_bridge(&[0.5], &[1.5], 1, 1.0, 1, &mut rng);
        assert_eq!(p.coords(), &[0.5, 1.5]);
        for k in 1..4 {
            let p = sample_bridge(&[0.1, 0.2], &[-0.4, 0.9], k, 0.7, 5, &mut rng);
            assert_eq!(p.start(), &[0.1, 0.2]);
            assert_eq!(p.end(), &[-0.4, 0.9]);
        }
    }

    #[test]
    fn bridge_marginals() {
        // sample mean and variance of the marginals against the exact bridge law
        let (k, beta, m) = (2usize, 0.5, 4usize);
        let total = k as f64 * beta;
        let (x, y) = (0.0, 1.0);
        let n = 100_000;
        let steps = k * m;
        let mut sum = vec![0.0; steps + 1];
        let mut sum2 = vec![0.0; steps + 1];
        let mut rng = RandomStream::new(5, 0);
        for _ in 0..n {
            let p = sample_bridge(&[x], &[y], k, beta, m, &mut rng);
            for i in 0..=steps {
                let v = p.position(i)[0];
                sum[i] += v;
                sum2[i] += v * v;
            }
        }
        for i in 1..steps {
            let t = i as f64 * beta / m as f64;
            let mean = sum[i] / n as f64;
            let var = sum2[i] / n as f64 - mean * mean;
            let exact_mean = x + t / total * (y - x);
            let exact_var = t * (total - t) / total;
            assert!((mean - exact_mean).abs() < 4.0 * (exact_var / n as f64).sqrt());
            assert!((var / exact_var - 1.0).abs() < 0.03, "slice {i}: {var} vs {exact_var}");
        }
    }

    #[test]
    fn bridge_density_matches_heat_kernel_ratio() {
        // the bisection law is the normalized free walk: density of the whole path
        // equals product of kernels divided by the end-to-end kernel
        let mut rng = RandomStream::new(9, 0);
        let p = sample_bridge(&[0.0, 0.0], &[0.3, -0.2], 2, 1.0, 3, &mut rng);
        let tau = 1.0 / 3.0;
        let lhs = log_bridge_density(&p, 0, p.steps(), tau);
        let rhs = log_free_path_density(&p, tau) - log_bridge_mass(p.start(), p.end(), 2, 1.0, 2);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn multiplicity_examples() {
        let mut rng = RandomStream::new(3, 0);
        let law = MultiplicityLaw::new(0.4, 1.0, 2, 1);
        assert!((law.normalizer() - 0.4 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!((0..100).all(|_| law.sample(&mut rng) == 1));

        let law = MultiplicityLaw::new(0.5, 1.0, 2, 2);
        let ratio = law.prob(1) / law.prob(2);
        assert!((ratio - 4.0).abs() < 1e-12);
        let n = 100_000;
        let ones = (0..n).filter(|_| law.sample(&mut rng) == 1).count() as f64 / n as f64;
        assert!((ones - 0.8).abs() < 4.0 * (0.8f64 * 0.2 / n as f64).sqrt());

        let law = MultiplicityLaw::new(0.9, 0.3, 3, 6);
        for k in 1..6 {
            assert!(law.weight(k + 1) <= law.weight(k));
        }
        let (k, norm) = sample_multiplicity(0.9, 0.3, 3, 6, &mut rng);
        assert!((1..=6).contains(&k));
        assert_eq!(norm, law.normalizer());
        assert!(MultiplicityLaw::tail_bound(6, 1.2, 0.3, 3).is_infinite());
        assert!(MultiplicityLaw::tail_bound(6, 0.5, 0.3, 3) < 0.01);
    }

    #[test]
    fn lebesgue_poisson_statistics() {
        let mut rng = RandomStream::new(8, 0);
        let b = BoxRegion::new(vec![1.0, -2.0], 0.5).unwrap();
        assert!((0..200).all(|_| sample_lebesgue_poisson(&b, 1e-12, &mut rng).is_empty()));
        let n = 100_000;
        let intensity = 3.0;
        let mut count = 0usize;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for _ in 0..n {
            let c = sample_lebesgue_poisson(&b, intensity, &mut rng);
            count += c.len();
            for p in c.points() {
                assert!(b.contains(p));
                sx += p[0];
                sy += p[1];
            }
        }
        let mean = count as f64 / n as f64;
        let expect = intensity * b.volume();
        assert!((mean - expect).abs() < 4.0 * (expect / n as f64).sqrt());
        let se = (1.0 / 12.0 / count as f64).sqrt();
        assert!((sx / count as f64 - 1.0).abs() < 4.0 * se);
        assert!((sy / count as f64 + 2.0).abs() < 4.0 * se);
    }

    #[test]
    fn permutation_examples() {
        let mut rng = RandomStream::new(2, 0);
        assert!(sample_permutation(0, &mut rng).is_empty());
        assert_eq!(sample_permutation(1, &mut rng), vec![0]);
        let n = 100_000;
        let swaps = (0..n).filter(|_| sample_permutation(2, &mut rng) == vec![1, 0]).count() as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((swaps / n as f64 - 0.5).abs() < 3.0 * sigma);
        let p = sample_permutation(7, &mut rng);
        let mut inv = [0; 7];
        for (i, &pi) in p.iter().enumerate() {
            inv[pi] = i;
        }
        assert!((0..7).all(|i| inv[p[i]] == i));
    }

    #[test]
    fn cycles_of_permutations() {
        assert_eq!(permutation_cycles(&[0, 1]), vec![vec![0], vec![1]]);
        assert_eq!(permutation_cycles(&[1, 2, 0, 3]), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn chapman_kolmogorov() {
        // ∫ p_beta(x, u) p_beta(u, y) du = p_{2 beta}(x, y) on a fine 1-d grid
        let (beta, x, y) = (0.4, -0.3, 0.5);
        let h = 1e-3;
        let mut s = 0.0;
        let mut u = -12.0;
        while u <= 12.0 {
            s += bridge_mass(&[x], &[u], 1, beta, 1) * bridge_mass(&[u], &[y], 1, beta, 1) * h;
            u += h;
        }
        let direct = bridge_mass(&[x], &[y], 2, beta, 1);
        assert!((s / direct - 1.0).abs() < 1e-6);
    }
}
