//! Numerical oracles that check the Taylor bound without sharing its code
//! path.
//!
//! * [`oracle_renyi`] integrates
//!   `H_{α,σ}(q) = ∫ (q N₁(θ) + (1−q) N₀(θ))^α N₀(θ)^{1−α} dθ`
//!   (`N₀ = N(0, σ²/4)`, `N₁ = N(1, σ²/4)`) by adaptive Gauss–Kronrod
//!   quadrature on a truncated domain.
//! * [`mc_moment`] estimates `E[(L−1)^k]` by importance-sampled Monte Carlo.
//! * [`taylor_remainder_quadrature`] evaluates the integral form of the Taylor
//!   remainder directly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, MathError};
use crate::math::RenyiOrder;

/// Standard deviations kept beyond each end of the integration domain.
pub const TRUNCATION_SDS: f64 = 40.0;

// Published 21-point Gauss–Kronrod abscissae and weights, kept at full
// printed precision.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_041_290_850,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// 10-point Gauss weights on XGK[1], XGK[3], ..., XGK[9]
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut abs_sum = kronrod.abs();
    let mut values = [0.0f64; 20];
    for i in 0..10 {
        let dx = half * XGK[i];
        let (f1, f2) = (f(center - dx), f(center + dx));
        values[2 * i] = f1;
        values[2 * i + 1] = f2;
        kronrod += WGK[i] * (f1 + f2);
        abs_sum += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for i in 0..10 {
        asc += WGK[i] * ((values[2 * i] - mean).abs() + (values[2 * i + 1] - mean).abs());
    }
    let value = kronrod * half;
    let abs_value = abs_sum * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs_value > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_value);
    }
    Panel { a, b, value, error }
}

/// Result of [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive 21-point Gauss–Kronrod quadrature over the panels
/// delimited by `breakpoints` (sorted). Stops once the summed error
/// estimate is below `max(abs_tol, rel_tol·|value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], abs_tol: f64, rel_tol: f64) -> Result<Integral, MathError> {
    const MAX_PANELS: usize = 200_000;
    let mut heap: BinaryHeap<Panel> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod21(&f, w[0], w[1]))
        .collect();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target {
            let value = neumaier(heap.iter().map(|p| p.value));
            return Ok(Integral { value, error });
        }
        if heap.len() >= MAX_PANELS {
            return Err(MathError::Quadrature { achieved: error, requested: target });
        }
        let Some(worst) = heap.pop() else {
            return Ok(Integral { value: 0.0, error: 0.0 });
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel cannot be split further in f64
            return Err(MathError::Quadrature { achieved: error, requested: target });
        }
        heap.push(kronrod21(&f, worst.a, mid));
        heap.push(kronrod21(&f, mid, worst.b));
    }
}

fn neumaier<I: Iterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Integration domain `[−T·s, max(1, α) + T·s]` with `s = σ/2`.
///
/// The integrand is a mixture of Gaussians centred between 0 and α (the
/// `L^α` tilt moves mass to θ = α), so both ends sit `T` standard deviations
/// outside that range.
pub fn integration_domain(alpha: f64, sigma: f64) -> (f64, f64) {
    let s = 0.5 * sigma;
    (-TRUNCATION_SDS * s, alpha.max(1.0) + TRUNCATION_SDS * s)
}

/// Natural log of an upper bound on the mass of `H_{α,σ}(q)` outside
/// [`integration_domain`], relative to `H` itself.
///
/// Left of the domain `L < 1`, so the integrand is at most `N₀`. Right of it
/// `1 + q(L−1) ≤ L`, and `L^α N₀ = e^{cα(α−1)} N(α, σ²/4)`, while
/// `H ≥ max(1, q^α e^{cα(α−1)})`. Each Gaussian tail is at most `φ(T)/T`.
pub fn log_relative_tail_bound(alpha: f64, q: f64) -> f64 {
    let t = TRUNCATION_SDS;
    let log_tail = -0.5 * t * t - 0.5 * (2.0 * std::f64::consts::PI).ln() - t.ln();
    log_tail + log_add_exp(0.0, -alpha * q.ln())
}

/// `ln H_{α,σ}(q)` by adaptive quadrature (absolute tolerance 1e−12 on `H`
/// near one, relative 1e−13 once `H` is large).
pub fn oracle_log_h(alpha: RenyiOrder, q: f64, sigma: f64) -> Result<f64, MathError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("q", q, "sampling ratio must lie in [0, 1]"));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(invalid("sigma", sigma, "noise multiplier must be finite and > 0"));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let a = alpha.value();
    let s = 0.5 * sigma;
    let c = 2.0 / (sigma * sigma);
    let log_norm = -(s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let ln_keep = (-q).ln_1p();
    let ln_q = q.ln();
    let log_integrand = move |theta: f64| {
        let lambda = c * (2.0 * theta - 1.0);
        let log_mix = if q == 1.0 {
            lambda
        } else if lambda.abs() < 1.0 {
            (q * lambda.exp_m1()).ln_1p()
        } else {
            log_add_exp(ln_keep, ln_q + lambda)
        };
        a * log_mix - theta * theta / (2.0 * s * s) + log_norm
    };

    let (lo, hi) = integration_domain(a, sigma);
    let panels = ((hi - lo) / s).ceil().max(1.0) as usize;
    let breakpoints: Vec<f64> = (0..=panels)
        .map(|i| if i == panels { hi } else { lo + (hi - lo) * i as f64 / panels as f64 })
        .collect();
    let shift = breakpoints
        .windows(2)
        .flat_map(|w| (0..4).map(move |i| w[0] + (w[1] - w[0]) * i as f64 / 4.0))
        .chain([0.0, 1.0, a, hi])
        .map(log_integrand)
        .fold(f64::NEG_INFINITY, f64::max);

    let scaled = |theta: f64| (log_integrand(theta) - shift).exp();
    let abs_tol = 1e-12 * (-shift).exp();
    let integral = integrate(scaled, &breakpoints, abs_tol, 1e-13)?;
    Ok(shift + integral.value.ln())
}

/// `D_α(q N(1,σ²/4) + (1−q) N(0,σ²/4) ‖ N(0,σ²/4)) = ln H_{α,σ}(q) / (α−1)`,
/// clamped at zero. Valid for the whole range `q ∈ [0, 1]`.
pub fn oracle_renyi(alpha: RenyiOrder, q: f64, sigma: f64) -> Result<f64, MathError> {
    let log_h = oracle_log_h(alpha, q, sigma)?;
    Ok((log_h / (alpha.value() - 1.0)).max(0.0))
}

/// Taylor remainder `R_{α,σ,m}(q) = q^m ∫₀¹ (1−s)^{m−1}/(m−1)! H^{(m)}(sq) ds`,
/// with `H^{(m)}(u) = (α)_m ∫ (L−1)^m (1+u(L−1))^{α−m} N₀ dθ`, by nested
/// quadrature. Unscaled, so intended for parameters where `H` fits in `f64`.
pub fn taylor_remainder_quadrature(alpha: RenyiOrder, sigma: f64, m: u32, q: f64) -> Result<f64, MathError> {
    let a = alpha.value();
    let s = 0.5 * sigma;
    let c = 2.0 / (sigma * sigma);
    let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
    let falling: f64 = (0..m).map(|j| a - j as f64).product();
    let (lo, hi) = integration_domain(a, sigma);
    let panels = ((hi - lo) / s).ceil() as usize;
    let breakpoints: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    let fact: f64 = (1..m).map(f64::from).product();

    let derivative = |u: f64| -> Result<f64, MathError> {
        let inner = integrate(
            |theta: f64| {
                let lm1 = (c * (2.0 * theta - 1.0)).exp_m1();
                lm1.powi(m as i32) * (1.0 + u * lm1).powf(a - m as f64) * norm * (-theta * theta / (2.0 * s * s)).exp()
            },
            &breakpoints,
            1e-300,
            1e-11,
        )?;
        Ok(falling * inner.value)
    };

    let failure = std::cell::Cell::new(None);
    let outer = integrate(
        |t: f64| match derivative(t * q) {
            Ok(d) => (1.0 - t).powi(m as i32 - 1) / fact * d,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        },
        &[0.0, 1.0],
        1e-300,
        1e-9,
    )?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(q.powi(m as i32) * outer.value)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64,
        }
    }
}

/// Monte-Carlo estimate of `M_{σ,k} = E_{θ~N(0,σ²/4)}[(L(θ)−1)^k]`,
/// `L = N₁/N₀`.
///
/// Plain sampling from `N₀` never reaches the region near θ = k that carries
/// `E[L^k]` once σ is small, so θ is drawn from the equal-weight mixture of
/// `N(j, σ²/4)`, `j = 0..=k`, and reweighted by `N₀/mixture`. The weighted
/// integrand is bounded, so the reported standard error is meaningful.
/// Deterministic for a given `seed`, independent of the thread count.
pub fn mc_moment(sigma: f64, k: u32, samples: u64, seed: u64) -> Result<McEstimate, MathError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(invalid("sigma", sigma, "noise multiplier must be finite and > 0"));
    }
    if samples < 2 {
        return Err(invalid("samples", samples as f64, "need at least two samples"));
    }
    const CHUNKS: u64 = 64;
    let s = 0.5 * sigma;
    let c = 2.0 / (sigma * sigma);
    let components = k as usize + 1;
    let log_pi = -(components as f64).ln();
    let stats = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = samples / CHUNKS + u64::from(chunk < samples % CHUNKS);
            let mut acc = Welford::default();
            for _ in 0..count {
                let j = rng.random_range(0..components) as f64;
                let z: f64 = rng.sample(StandardNormal);
                let theta = j + s * z;
                // ln(mixture/N₀) = ln Σ_j π_j e^{c j(2θ−j)}
                let mut log_ratio = f64::NEG_INFINITY;
                for i in 0..components {
                    let i = i as f64;
                    log_ratio = log_add_exp(log_ratio, log_pi + c * i * (2.0 * theta - i));
                }
                let lm1 = (c * (2.0 * theta - 1.0)).exp_m1();
                let value = if lm1 == 0.0 {
                    0.0
                } else {
                    let mag = (k as f64 * lm1.abs().ln() - log_ratio).exp();
                    if lm1 < 0.0 && k % 2 == 1 { -mag } else { mag }
                };
                acc.push(value);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Welford::default(), Welford::merge);
    let variance = stats.m2 / (stats.n - 1) as f64;
    Ok(McEstimate {
        mean: stats.mean,
        std_err: (variance / stats.n as f64).sqrt(),
        samples: stats.n,
    })
}
