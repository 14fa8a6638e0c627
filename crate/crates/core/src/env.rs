//! Disorder fields, their prefix sums, the Brownian coupling of a Gaussian
//! field, and the Skorokhod exit-time embedding.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numeric::{brent, erfc, KahanSum};
use crate::rng::{Module, StreamKey};
use crate::stochproc::ProcessPath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum Law {
    Gaussian,
    /// Built from a pair of Brownian paths; see [`env_from_brownian`].
    CoupledGaussian,
    /// `±1` with probability 1/2 each.
    TwoPoint,
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Centered law with pure power tails `p t^{-α}` and `q t^{-α}`.
    Stable { alpha: f64, p: f64, q: f64 },
}

impl Law {
    /// Uniform law with unit variance.
    pub fn uniform_unit() -> Self {
        Law::Uniform {
            half_width: 3f64.sqrt(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Law::Gaussian => "gaussian",
            Law::CoupledGaussian => "coupled_gaussian",
            Law::TwoPoint => "two_point",
            Law::Uniform { .. } => "uniform",
            Law::Stable { .. } => "stable",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("stable index α = {0} outside (1, 2)")]
    InvalidAlpha(f64),
    #[error("tail weights must be nonnegative with p + q = 1 (got p = {p}, q = {q})")]
    InvalidWeights { p: f64, q: f64 },
    #[error("empty window [{lo}, {hi}]")]
    EmptyWindow { lo: i64, hi: i64 },
    #[error("site {0} outside the environment window")]
    OutOfWindow(i64),
    #[error("window must contain the origin")]
    NoOrigin,
    #[error("law {0} cannot be drawn directly")]
    NotDirect(&'static str),
    #[error("grid step mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: f64, found: f64 },
    #[error("paths cover [0, {found}], need [0, {needed}]")]
    ShortPath { found: f64, needed: f64 },
    #[error("law is not centered (mean {0})")]
    NotCentered(f64),
    #[error("half-width must be positive")]
    BadHalfWidth,
}

/// Inclusive integer window `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    /// Smallest symmetric window covering `[-2 c_h n^{1/3}, 2 c_h n^{1/3}]`.
    pub fn for_n(n: u64, h: f64) -> Self {
        let r = (2.0 * crate::rangelaw::c_h(h) * (n as f64).cbrt()).ceil() as i64;
        Self { lo: -r, hi: r }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub window: Window,
    /// `values[i] = ω_{window.lo + i}`.
    pub values: Vec<f64>,
    pub law: Law,
    pub seed: u64,
}

impl Environment {
    pub fn from_values(window: Window, values: Vec<f64>, law: Law, seed: u64) -> Self {
        assert_eq!(window.len(), values.len());
        Self {
            window,
            values,
            law,
            seed,
        }
    }

    pub fn constant(window: Window, c: f64) -> Self {
        Self::from_values(window, vec![c; window.len()], Law::Gaussian, 0)
    }

    pub fn omega(&self, z: i64) -> Result<f64, EnvError> {
        if z < self.window.lo || z > self.window.hi {
            return Err(EnvError::OutOfWindow(z));
        }
        Ok(self.values[(z - self.window.lo) as usize])
    }

    /// Reflected field `z ↦ ω_{-z}`.
    pub fn reflected(&self) -> Self {
        let mut v = self.values.clone();
        v.reverse();
        Self {
            window: Window::new(-self.window.hi, -self.window.lo),
            values: v,
            law: self.law,
            seed: self.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// stable law

/// Parameters of the constructed law: tails `p t^{-α}` (right) and
/// `q t^{-α}` (left) beyond `r`, uniform on `[center - half, center + half]`
/// with the remaining mass `1 - r^{-α}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableParts {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub center: f64,
    pub half: f64,
}

impl StableParts {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self, EnvError> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(EnvError::InvalidAlpha(alpha));
        }
        if p < 0.0 || q < 0.0 || ((p + q) - 1.0).abs() > 1e-12 {
            return Err(EnvError::InvalidWeights { p, q });
        }
        let offset = |r: f64| -> f64 {
            -(p - q) * alpha * r.powf(1.0 - alpha) / ((alpha - 1.0) * (1.0 - r.powf(-alpha)))
        };
        if p == q {
            return Ok(Self {
                alpha,
                p,
                q,
                r: 1.0,
                center: 0.0,
                half: 1.0,
            });
        }
        let r = brent(|r| offset(r).abs() - 0.5 * r, 1.0 + 1e-12, 1e8, 1e-13)
            .expect("offset equation is bracketed");
        let center = offset(r);
        Ok(Self {
            alpha,
            p,
            q,
            r,
            center,
            half: r - center.abs(),
        })
    }

    pub fn uniform_mass(&self) -> f64 {
        1.0 - self.r.powf(-self.alpha)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let a = self.alpha;
        if t <= -self.r {
            return self.q * (-t).powf(-a);
        }
        if t >= self.r {
            return 1.0 - self.p * t.powf(-a);
        }
        let lo = self.q * self.r.powf(-a);
        let u = ((t - (self.center - self.half)) / (2.0 * self.half)).clamp(0.0, 1.0);
        lo + self.uniform_mass() * u
    }

    pub fn mean(&self) -> f64 {
        let a = self.alpha;
        let tails = (self.p - self.q) * a * self.r.powf(1.0 - a) / (a - 1.0);
        tails + self.uniform_mass() * self.center
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        let pr = self.p * self.r.powf(-a);
        let qr = self.q * self.r.powf(-a);
        let u: f64 = rng.random();
        if u < pr {
            let v: f64 = 1.0 - rng.random::<f64>();
            self.r * v.powf(-1.0 / a)
        } else if u < pr + qr {
            let v: f64 = 1.0 - rng.random::<f64>();
            -self.r * v.powf(-1.0 / a)
        } else {
            self.center - self.half + 2.0 * self.half * rng.random::<f64>()
        }
    }
}

// ---------------------------------------------------------------------------
// generation

/// One draw from a directly sampleable law.
pub fn draw<R: Rng + ?Sized>(law: &Law, rng: &mut R) -> Result<f64, EnvError> {
    Ok(match *law {
        Law::Gaussian => StandardNormal.sample(rng),
        Law::TwoPoint => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        Law::Uniform { half_width } => {
            if half_width <= 0.0 {
                return Err(EnvError::BadHalfWidth);
            }
            half_width * (2.0 * rng.random::<f64>() - 1.0)
        }
        Law::Stable { alpha, p, q } => StableParts::new(alpha, p, q)?.sample(rng),
        Law::CoupledGaussian => return Err(EnvError::NotDirect("coupled_gaussian")),
    })
}

pub fn generate_environment(law: &Law, window: Window, seed: u64) -> Result<Environment, EnvError> {
    if window.is_empty() {
        return Err(EnvError::EmptyWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    let stable = match *law {
        Law::Stable { alpha, p, q } => Some(StableParts::new(alpha, p, q)?),
        _ => None,
    };
    let mut rng = StreamKey::new(seed, Module::Env, 0).rng();
    let values = (0..window.len())
        .map(|_| match &stable {
            Some(s) => Ok(s.sample(&mut rng)),
            None => draw(law, &mut rng),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Environment {
        window,
        values,
        law: *law,
        seed,
    })
}

// ---------------------------------------------------------------------------
// prefix sums

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixSums {
    /// `sigma_minus[j] = Σ_{z=1}^{j} ω_{-z}`.
    pub sigma_minus: Vec<f64>,
    /// `sigma_plus[j] = Σ_{z=0}^{j} ω_z`.
    pub sigma_plus: Vec<f64>,
}

impl PrefixSums {
    /// `Σ_{z=-x}^{y} ω_z`.
    pub fn range_sum(&self, x: u64, y: u64) -> Result<f64, EnvError> {
        let a = self
            .sigma_minus
            .get(x as usize)
            .ok_or(EnvError::OutOfWindow(-(x as i64)))?;
        let b = self
            .sigma_plus
            .get(y as usize)
            .ok_or(EnvError::OutOfWindow(y as i64))?;
        Ok(a + b)
    }

    pub fn max_x(&self) -> u64 {
        self.sigma_minus.len() as u64 - 1
    }

    pub fn max_y(&self) -> u64 {
        self.sigma_plus.len() as u64 - 1
    }
}

fn running(values: impl Iterator<Item = f64>, first: f64) -> Vec<f64> {
    let mut acc = KahanSum::new();
    acc.add(first);
    let mut out = vec![acc.value()];
    for v in values {
        acc.add(v);
        out.push(acc.value());
    }
    out
}

pub fn prefix_sums(env: &Environment) -> Result<PrefixSums, EnvError> {
    if env.window.lo > 0 || env.window.hi < 0 {
        return Err(EnvError::NoOrigin);
    }
    let origin = (-env.window.lo) as usize;
    let plus = running(env.values[origin + 1..].iter().copied(), env.values[origin]);
    let minus = running(env.values[..origin].iter().rev().copied(), 0.0);
    Ok(PrefixSums {
        sigma_minus: minus,
        sigma_plus: plus,
    })
}

// ---------------------------------------------------------------------------
// Brownian coupling

/// Gaussian field whose prefix sums reproduce `n^{1/6}` times the given
/// paths on the grid `k n^{-1/3}`: `x2` on the right, `x1` on the left.
/// The site 0 carries `ω_0 = 0`.
pub fn env_from_brownian(n: u64, x1: &ProcessPath, x2: &ProcessPath, c_h: f64, seed: u64) -> Result<Environment, EnvError> {
    let step = (n as f64).powf(-1.0 / 3.0);
    let scale = (n as f64).powf(1.0 / 6.0);
    for p in [x1, x2] {
        for (k, &t) in p.times.iter().enumerate() {
            let expect = k as f64 * step;
            if (t - expect).abs() > 1e-9 * expect.max(1.0) {
                return Err(EnvError::GridMismatch {
                    expected: step,
                    found: if k > 0 { t - p.times[k - 1] } else { t },
                });
            }
        }
        let last = *p.times.last().unwrap_or(&0.0);
        if last + 1e-9 < 2.0 * c_h - step {
            return Err(EnvError::ShortPath {
                found: last,
                needed: 2.0 * c_h,
            });
        }
    }
    let m = x1.values.len().min(x2.values.len()) - 1;
    let mut values = Vec::with_capacity(2 * m + 1);
    for z in (1..=m).rev() {
        values.push(scale * (x1.values[z] - x1.values[z - 1]));
    }
    values.push(0.0);
    for y in 1..=m {
        values.push(scale * (x2.values[y] - x2.values[y - 1]));
    }
    Ok(Environment {
        window: Window::new(-(m as i64), m as i64),
        values,
        law: Law::CoupledGaussian,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Skorokhod embedding

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum TargetLaw {
    /// Point mass at 0.
    Degenerate,
    TwoPoint,
    Uniform { half_width: f64 },
    Gaussian,
}

impl TargetLaw {
    pub fn second_moment(&self) -> f64 {
        match *self {
            TargetLaw::Degenerate => 0.0,
            TargetLaw::TwoPoint | TargetLaw::Gaussian => 1.0,
            TargetLaw::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            TargetLaw::Degenerate => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TargetLaw::TwoPoint => {
                if x >= 1.0 {
                    1.0
                } else if x >= -1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            TargetLaw::Uniform { half_width } => ((x + half_width) / (2.0 * half_width)).clamp(0.0, 1.0),
            TargetLaw::Gaussian => crate::numeric::norm_cdf(x),
        }
    }

    /// Draw from `μ` restricted to `(0, ∞)`, plain or size-biased by `|x|`.
    fn positive_part<R: Rng + ?Sized>(&self, biased: bool, rng: &mut R) -> f64 {
        match *self {
            TargetLaw::TwoPoint => 1.0,
            TargetLaw::Uniform { half_width } => {
                let u: f64 = rng.random();
                if biased {
                    half_width * u.sqrt()
                } else {
                    half_width * u
                }
            }
            TargetLaw::Gaussian => {
                let u: f64 = 1.0 - rng.random::<f64>();
                if biased {
                    (-2.0 * u.ln()).sqrt()
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    z.abs()
                }
            }
            TargetLaw::Degenerate => 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub stop_times: Vec<f64>,
    pub embedded_values: Vec<f64>,
    pub target_law: TargetLaw,
}

/// `P(τ > t)` for the exit time of `(-1, 1)` by standard Brownian motion.
pub fn unit_exit_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 0.5 {
        let mut s = 0.0;
        for k in 0..60 {
            let m = (2 * k + 1) as f64;
            let term = (4.0 / std::f64::consts::PI) / m * (-m * m * std::f64::consts::PI.powi(2) * t / 8.0).exp();
            s += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        s
    } else {
        let mut s = 0.0;
        let sq = (2.0 * t).sqrt();
        for k in 0..60 {
            let m = (2 * k + 1) as f64;
            let term = 2.0 * erfc(m / sq);
            s += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        1.0 - s
    }
}

/// Exact draw of the exit time of `(-1, 1)` by inversion.
pub fn sample_unit_exit_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>();
    if u <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while unit_exit_survival(hi) > u {
        hi *= 2.0;
    }
    brent(|t| unit_exit_survival(t) - u, 0.0, hi, 1e-13).unwrap_or(hi)
}

/// Exit of `(a, b)` from 0 by standard Brownian motion. Chains exits of the
/// largest symmetric interval around the current point; each has side and
/// duration independent, so the result is exact in both coordinates.
pub fn exit_interval<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    debug_assert!(a < 0.0 && b > 0.0);
    let mut x = 0.0;
    let mut time = 0.0;
    loop {
        let dl = x - a;
        let dr = b - x;
        let r = dl.min(dr);
        time += r * r * sample_unit_exit_time(rng);
        let up = rng.random::<bool>();
        if dl <= dr {
            if !up {
                return (a, time);
            }
            x += r;
        } else {
            if up {
                return (b, time);
            }
            x -= r;
        }
        if b - x <= 1e-14 * (b - a) {
            return (b, time);
        }
        if x - a <= 1e-14 * (b - a) {
            return (a, time);
        }
    }
}

pub fn skorokhod_embed(target: &TargetLaw, count: usize, seed: u64) -> Result<EmbeddingRecord, EnvError> {
    if let TargetLaw::Uniform { half_width } = *target {
        if half_width <= 0.0 {
            return Err(EnvError::BadHalfWidth);
        }
    }
    let mut rng = StreamKey::new(seed, Module::Skorokhod, 0).rng();
    let mut stop_times = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        if *target == TargetLaw::Degenerate {
            stop_times.push(0.0);
            values.push(0.0);
            continue;
        }
        // All supported laws are symmetric without an atom at 0, so the
        // (b - a)-biased pair is an even mixture of "size-biased b, plain a"
        // and "plain b, size-biased a".
        let first = rng.random::<bool>();
        let b = target.positive_part(first, &mut rng);
        let a = -target.positive_part(!first, &mut rng);
        let (v, t) = exit_interval(a, b, &mut rng);
        stop_times.push(t);
        values.push(v);
    }
    Ok(EmbeddingRecord {
        stop_times,
        embedded_values: values,
        target_law: *target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_parts_are_centered() {
        for &(a, p) in &[(1.5, 0.5), (1.5, 0.8), (1.2, 0.1), (1.9, 1.0)] {
            let s = StableParts::new(a, p, 1.0 - p).unwrap();
            assert!(s.mean().abs() < 1e-10, "{a} {p}: {}", s.mean());
            assert!(s.half > 0.0);
            assert!((s.cdf(s.r + 1e-9) - s.cdf(s.r - 1e-9)).abs() < 1e-6);
            assert!((s.cdf(-s.r - 1e-9) - s.cdf(-s.r + 1e-9)).abs() < 1e-6);
        }
    }

    #[test]
    fn stable_parameter_errors() {
        assert_eq!(StableParts::new(2.5, 0.5, 0.5).unwrap_err(), EnvError::InvalidAlpha(2.5));
        assert!(matches!(StableParts::new(1.5, 0.5, 0.6), Err(EnvError::InvalidWeights { .. })));
    }

    #[test]
    fn survival_series_agree() {
        // The two series overlap near t = 0.5.
        for &t in &[0.3, 0.5, 0.7] {
            let mut a = 0.0;
            for k in 0..60 {
                let m = (2 * k + 1) as f64;
                let term = (4.0 / std::f64::consts::PI) / m * (-m * m * std::f64::consts::PI.powi(2) * t / 8.0).exp();
                a += if k % 2 == 0 { term } else { -term };
            }
            let mut b = 0.0;
            for k in 0..60 {
                let m = (2 * k + 1) as f64;
                let term = 2.0 * erfc(m / (2.0 * t).sqrt());
                b += if k % 2 == 0 { term } else { -term };
            }
            assert!((a - (1.0 - b)).abs() < 1e-10);
            assert!((unit_exit_survival(t) - a).abs() < 1e-10);
        }
    }
}
