//! Grid samplers for Brownian motion, meander, Bessel-3 and excursion, the
//! meander densities, and the pathwise couplings between them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::numeric::{brent, erf, GaussLegendre, KahanSum};
use crate::rng::{Module, StreamKey};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProcessKind {
    Bm,
    Meander { duration: f64 },
    Bessel3,
    TwoSidedBessel,
    Excursion,
    BmTwoSided,
}

impl ProcessKind {
    pub fn code(&self) -> u8 {
        match self {
            ProcessKind::Bm => 0,
            ProcessKind::Meander { .. } => 1,
            ProcessKind::Bessel3 => 2,
            ProcessKind::TwoSidedBessel => 3,
            ProcessKind::Excursion => 4,
            ProcessKind::BmTwoSided => 5,
        }
    }

    pub fn from_code(code: u8, duration: f64) -> Option<Self> {
        Some(match code {
            0 => ProcessKind::Bm,
            1 => ProcessKind::Meander { duration },
            2 => ProcessKind::Bessel3,
            3 => ProcessKind::TwoSidedBessel,
            4 => ProcessKind::Excursion,
            5 => ProcessKind::BmTwoSided,
            _ => return None,
        })
    }
}

/// Values of a process on a strictly increasing time grid. One-sided kinds
/// start at time 0; two-sided kinds run over `[-L, L]` and pass through 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: ProcessKind,
    pub duration: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProcError {
    #[error("grid is not strictly increasing at index {0}")]
    NonMonotone(usize),
    #[error("grid must start at 0")]
    NotFromZero,
    #[error("time {0} outside the path domain")]
    OutOfDomain(f64),
    #[error("empty grid")]
    Empty,
    #[error("CDF inversion failed at s = {s}, x = {x}, t = {t}, u = {u}")]
    Inversion { s: f64, x: f64, t: f64, u: f64 },
    #[error("path must live on [0, 1]")]
    NotUnit,
    #[error("argmax at the boundary (index {0})")]
    BoundaryArgmax(usize),
}

impl ProcessPath {
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let i = self.times.partition_point(|&s| s < t);
        if i < self.times.len() && self.times[i] == t {
            Some(self.values[i])
        } else {
            None
        }
    }

    /// Linear interpolation inside the grid.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let i = self.times.partition_point(|&s| s < t);
        if self.times[i] == t {
            return Some(self.values[i]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[i - 1] * (1.0 - w) + self.values[i] * w)
    }

    /// Time-rescaled copy on `[0, 1]` with values divided by `√duration`.
    pub fn to_unit_duration(&self) -> ProcessPath {
        let d = self.duration;
        let s = d.sqrt();
        ProcessPath {
            times: self.times.iter().map(|t| t / d).collect(),
            values: self.values.iter().map(|v| v / s).collect(),
            kind: match self.kind {
                ProcessKind::Meander { .. } => ProcessKind::Meander { duration: 1.0 },
                k => k,
            },
            duration: 1.0,
        }
    }
}

pub fn check_grid(grid: &[f64]) -> Result<(), ProcError> {
    if grid.is_empty() {
        return Err(ProcError::Empty);
    }
    for i in 1..grid.len() {
        if grid[i] <= grid[i - 1] {
            return Err(ProcError::NonMonotone(i));
        }
    }
    Ok(())
}

pub fn uniform_grid(duration: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| duration * k as f64 / steps as f64).collect()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------------------
// Brownian motion and bridges

/// Brownian values on `grid` (which must start at 0).
pub fn bm_values<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<Vec<f64>, ProcError> {
    check_grid(grid)?;
    if grid[0] != 0.0 {
        return Err(ProcError::NotFromZero);
    }
    let mut v = Vec::with_capacity(grid.len());
    v.push(0.0);
    for i in 1..grid.len() {
        let dt = grid[i] - grid[i - 1];
        v.push(v[i - 1] + dt.sqrt() * normal(rng));
    }
    Ok(v)
}

pub fn sample_bm_with<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<ProcessPath, ProcError> {
    let values = bm_values(grid, rng)?;
    Ok(ProcessPath {
        duration: *grid.last().unwrap(),
        times: grid.to_vec(),
        values,
        kind: ProcessKind::Bm,
    })
}

pub fn sample_bm(grid: &[f64], seed: u64) -> Result<ProcessPath, ProcError> {
    sample_bm_with(grid, &mut StreamKey::new(seed, Module::Brownian, 0).rng())
}

/// Two-sided Brownian motion on `-grid ∪ grid` from two independent halves.
pub fn sample_two_sided_bm_with<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<ProcessPath, ProcError> {
    let right = bm_values(grid, rng)?;
    let left = bm_values(grid, rng)?;
    Ok(two_sided(grid, &left, &right, ProcessKind::BmTwoSided))
}

pub fn sample_two_sided_bm(grid: &[f64], seed: u64) -> Result<ProcessPath, ProcError> {
    sample_two_sided_bm_with(grid, &mut StreamKey::new(seed, Module::Brownian, 1).rng())
}

fn two_sided(grid: &[f64], left: &[f64], right: &[f64], kind: ProcessKind) -> ProcessPath {
    let mut times = Vec::with_capacity(2 * grid.len() - 1);
    let mut values = Vec::with_capacity(2 * grid.len() - 1);
    for i in (1..grid.len()).rev() {
        times.push(-grid[i]);
        values.push(left[i]);
    }
    times.extend_from_slice(grid);
    values.extend_from_slice(right);
    ProcessPath {
        times,
        values,
        kind,
        duration: *grid.last().unwrap(),
    }
}

/// Insert `new_times` into a Brownian-type path, each value drawn from the
/// bridge law between its current neighbours. Existing values are untouched.
pub fn refine_bridge_with<R: Rng + ?Sized>(path: &ProcessPath, new_times: &[f64], rng: &mut R) -> Result<ProcessPath, ProcError> {
    let (lo, hi) = (path.times[0], *path.times.last().unwrap());
    let mut sorted: Vec<f64> = new_times.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    if let Some(&t) = sorted.iter().find(|&&t| !(t >= lo && t <= hi)) {
        return Err(ProcError::OutOfDomain(t));
    }
    let cap = path.times.len() + sorted.len();
    let mut times = Vec::with_capacity(cap);
    let mut values = Vec::with_capacity(cap);
    times.push(lo);
    values.push(path.values[0]);
    let mut j = 0;
    for i in 1..path.times.len() {
        let (t1, v1) = (path.times[i], path.values[i]);
        while j < sorted.len() && sorted[j] < t1 {
            let t = sorted[j];
            j += 1;
            let (t0, v0) = (*times.last().unwrap(), *values.last().unwrap());
            if t <= t0 {
                continue;
            }
            let w = (t - t0) / (t1 - t0);
            let var = (t - t0) * (t1 - t) / (t1 - t0);
            times.push(t);
            values.push(v0 + w * (v1 - v0) + var.sqrt() * normal(rng));
        }
        times.push(t1);
        values.push(v1);
    }
    Ok(ProcessPath {
        times,
        values,
        kind: path.kind,
        duration: path.duration,
    })
}

pub fn refine_bridge(path: &ProcessPath, new_times: &[f64], seed: u64) -> Result<ProcessPath, ProcError> {
    refine_bridge_with(path, new_times, &mut StreamKey::new(seed, Module::Brownian, 2).rng())
}

/// Values of a Brownian bridge of duration `grid.last()` from `a` to `b`.
pub fn bridge_values<R: Rng + ?Sized>(grid: &[f64], a: f64, b: f64, rng: &mut R) -> Result<Vec<f64>, ProcError> {
    let w = bm_values(grid, rng)?;
    let d = *grid.last().unwrap();
    let wd = *w.last().unwrap();
    Ok(grid
        .iter()
        .zip(&w)
        .map(|(&t, &x)| {
            let r = t / d;
            a + x - r * wd + r * (b - a)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// 3D Brownian motion and Bessel-3

/// Three independent coordinates on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Bm3 {
    pub times: Vec<f64>,
    pub coords: [Vec<f64>; 3],
}

impl Bm3 {
    pub fn sample<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<Self, ProcError> {
        Ok(Self {
            times: grid.to_vec(),
            coords: [bm_values(grid, rng)?, bm_values(grid, rng)?, bm_values(grid, rng)?],
        })
    }

    pub fn modulus(&self) -> Vec<f64> {
        (0..self.times.len()).map(|i| self.norm_at(i)).collect()
    }

    pub fn norm_at(&self, i: usize) -> f64 {
        let [a, b, c] = &self.coords;
        (a[i] * a[i] + b[i] * b[i] + c[i] * c[i]).sqrt()
    }

    pub fn refine<R: Rng + ?Sized>(&self, new_times: &[f64], rng: &mut R) -> Result<Self, ProcError> {
        let mut out: Option<Vec<f64>> = None;
        let mut coords: Vec<Vec<f64>> = Vec::new();
        for c in &self.coords {
            let p = ProcessPath {
                times: self.times.clone(),
                values: c.clone(),
                kind: ProcessKind::Bm,
                duration: *self.times.last().unwrap(),
            };
            let r = refine_bridge_with(&p, new_times, rng)?;
            out = Some(r.times);
            coords.push(r.values);
        }
        let mut it = coords.into_iter();
        Ok(Self {
            times: out.unwrap(),
            coords: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
        })
    }
}

pub fn sample_bessel3_with<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<ProcessPath, ProcError> {
    let w = Bm3::sample(grid, rng)?;
    Ok(ProcessPath {
        times: grid.to_vec(),
        values: w.modulus(),
        kind: ProcessKind::Bessel3,
        duration: *grid.last().unwrap(),
    })
}

pub fn sample_bessel3(grid: &[f64], seed: u64) -> Result<ProcessPath, ProcError> {
    sample_bessel3_with(grid, &mut StreamKey::new(seed, Module::Bessel, 0).rng())
}

pub fn sample_two_sided_bessel_with<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<ProcessPath, ProcError> {
    let right = Bm3::sample(grid, rng)?.modulus();
    let left = Bm3::sample(grid, rng)?.modulus();
    Ok(two_sided(grid, &left, &right, ProcessKind::TwoSidedBessel))
}

pub fn sample_two_sided_bessel(grid: &[f64], seed: u64) -> Result<ProcessPath, ProcError> {
    sample_two_sided_bessel_with(grid, &mut StreamKey::new(seed, Module::Bessel, 1).rng())
}

// ---------------------------------------------------------------------------
// meander densities and kernel sampler

/// `Φ_t(y) = ∫_0^y φ_t`, with `Φ_0(y) = 1/2` for `y > 0`.
pub fn big_phi(t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if t <= 0.0 {
        0.5
    } else {
        0.5 * erf(y / (2.0 * t).sqrt())
    }
}

fn small_phi(t: f64, x: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Density of `M_t` for a meander of duration `duration`.
pub fn meander_marginal_density(t: f64, y: f64, duration: f64) -> Result<f64, ProcError> {
    if !(t > 0.0 && t <= duration) {
        return Err(ProcError::OutOfDomain(t));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    let s = t / duration;
    let z = y / duration.sqrt();
    let f = 2.0 * z * s.powf(-1.5) * (-z * z / (2.0 * s)).exp() * big_phi(1.0 - s, z);
    Ok(f / duration.sqrt())
}

pub fn meander_marginal_cdf(t: f64, y: f64, duration: f64) -> Result<f64, ProcError> {
    if !(t > 0.0 && t <= duration) {
        return Err(ProcError::OutOfDomain(t));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    let gl = GaussLegendre::new(16);
    let pieces = ((y / t.sqrt()) * 8.0).ceil().clamp(4.0, 400.0) as usize;
    Ok(gl
        .integrate_composite(0.0, y, pieces, |v| meander_marginal_density(t, v, duration).unwrap())
        .min(1.0))
}

/// Transition density `p⁺(s, x, t, y)` of the unit-duration meander.
pub fn meander_kernel(s: f64, x: f64, t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if s == 0.0 && x == 0.0 {
        return meander_marginal_density(t, y, 1.0).unwrap_or(0.0);
    }
    let d = t - s;
    (small_phi(d, x - y) - small_phi(d, x + y)) * big_phi(1.0 - t, y) / big_phi(1.0 - s, x)
}

/// Unnormalized kernel in a form without cancellation for small `x y`.
fn kernel_shape(s: f64, x: f64, t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let d = t - s;
    let base = if x == 0.0 {
        y * (-y * y / (2.0 * d)).exp()
    } else {
        (-(y - x) * (y - x) / (2.0 * d)).exp() * -(-2.0 * x * y / d).exp_m1()
    };
    base * big_phi(1.0 - t, y)
}

struct KernelCdf {
    edges: Vec<f64>,
    cum: Vec<f64>,
}

const KERNEL_PANELS: usize = 24;

fn kernel_cdf_table(gl: &GaussLegendre, s: f64, x: f64, t: f64) -> KernelCdf {
    let sd = (t - s).sqrt();
    let lo = (x - 10.0 * sd).max(0.0);
    let hi = x + 10.0 * sd;
    let h = (hi - lo) / KERNEL_PANELS as f64;
    let mut edges = Vec::with_capacity(KERNEL_PANELS + 1);
    let mut cum = Vec::with_capacity(KERNEL_PANELS + 1);
    let mut acc = KahanSum::new();
    edges.push(lo);
    cum.push(0.0);
    for k in 0..KERNEL_PANELS {
        let a = lo + h * k as f64;
        acc.add(gl.integrate(a, a + h, |y| kernel_shape(s, x, t, y)));
        edges.push(a + h);
        cum.push(acc.value());
    }
    KernelCdf { edges, cum }
}

/// One draw of `M_t` given `M_s = x` for the unit meander.
pub fn sample_meander_step<R: Rng + ?Sized>(gl: &GaussLegendre, s: f64, x: f64, t: f64, rng: &mut R) -> Result<f64, ProcError> {
    let tab = kernel_cdf_table(gl, s, x, t);
    let total = *tab.cum.last().unwrap();
    let u: f64 = rng.random();
    let target = u * total;
    let k = tab.cum.partition_point(|&c| c < target).clamp(1, KERNEL_PANELS);
    let (a, b) = (tab.edges[k - 1], tab.edges[k]);
    let base = tab.cum[k - 1];
    let f = |y: f64| base + gl.integrate(a, y, |z| kernel_shape(s, x, t, z)) - target;
    brent(f, a, b, 1e-12 * (1.0 + b)).map_err(|_| ProcError::Inversion { s, x, t, u })
}

/// Markov sampling of a duration-`duration` meander on `grid ⊂ (0, duration]`
/// (a leading 0 is allowed and kept).
pub fn sample_meander_with<R: Rng + ?Sized>(grid: &[f64], duration: f64, rng: &mut R) -> Result<ProcessPath, ProcError> {
    check_grid(grid)?;
    if grid[0] < 0.0 {
        return Err(ProcError::OutOfDomain(grid[0]));
    }
    let values = continue_meander_with(grid, duration, 0.0, 0.0, rng)?;
    Ok(ProcessPath {
        times: grid.to_vec(),
        values,
        kind: ProcessKind::Meander { duration },
        duration,
    })
}

/// Forward values of a duration-`duration` meander on `grid`, given its
/// value `v0` at time `t0 < grid[0]` (grid points equal to `t0` repeat `v0`).
pub fn continue_meander_with<R: Rng + ?Sized>(grid: &[f64], duration: f64, t0: f64, v0: f64, rng: &mut R) -> Result<Vec<f64>, ProcError> {
    check_grid(grid)?;
    if grid[0] < t0 || *grid.last().unwrap() > duration * (1.0 + 1e-15) {
        return Err(ProcError::OutOfDomain(grid[0]));
    }
    let gl = GaussLegendre::new(10);
    let sc = duration.sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let (mut s, mut x) = (t0 / duration, v0 / sc);
    for &t in grid {
        if t == t0 {
            values.push(v0);
            continue;
        }
        let tu = (t / duration).min(1.0);
        x = sample_meander_step(&gl, s, x, tu, rng)?;
        s = tu;
        values.push(x * sc);
    }
    Ok(values)
}

pub fn sample_meander(grid: &[f64], duration: f64, seed: u64) -> Result<ProcessPath, ProcError> {
    sample_meander_with(grid, duration, &mut StreamKey::new(seed, Module::Meander, 0).rng())
}

// ---------------------------------------------------------------------------
// excursion

/// Density `16/√(2π) v² e^{-2v²}` of the excursion midpoint.
pub fn excursion_mid_density(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        16.0 / (2.0 * PI).sqrt() * v * v * (-2.0 * v * v).exp()
    }
}

pub fn excursion_mid_cdf(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        erf(2f64.sqrt() * v) - (2.0 / PI).sqrt() * 2.0 * v * (-2.0 * v * v).exp()
    }
}

pub fn sample_excursion_mid<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    brent(|v| excursion_mid_cdf(v) - u, 0.0, 6.0, 1e-13).unwrap_or(6.0)
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-300 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Coordinates of a 3D Brownian bridge on `grid` from `a` to `b`.
fn bridge3<R: Rng + ?Sized>(grid: &[f64], a: [f64; 3], b: [f64; 3], rng: &mut R) -> Result<[Vec<f64>; 3], ProcError> {
    Ok([
        bridge_values(grid, a[0], b[0], rng)?,
        bridge_values(grid, a[1], b[1], rng)?,
        bridge_values(grid, a[2], b[2], rng)?,
    ])
}

fn norms(c: &[Vec<f64>; 3]) -> Vec<f64> {
    (0..c[0].len())
        .map(|i| (c[0][i] * c[0][i] + c[1][i] * c[1][i] + c[2][i] * c[2][i]).sqrt())
        .collect()
}

/// Excursion on `grid ⊂ [0, 1]` (must contain 0 and 1): two Bessel bridges
/// of duration 1/2 meeting at a midpoint of modulus `V`.
pub fn sample_excursion_with<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<ProcessPath, ProcError> {
    check_grid(grid)?;
    if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
        return Err(ProcError::NotUnit);
    }
    let v = sample_excursion_mid(rng);
    let dir = random_direction(rng);
    let p = [v * dir[0], v * dir[1], v * dir[2]];
    let mut left: Vec<f64> = grid.iter().copied().filter(|&t| t <= 0.5).collect();
    if *left.last().unwrap() != 0.5 {
        left.push(0.5);
    }
    let mut right: Vec<f64> = grid.iter().filter(|&&t| t >= 0.5).map(|t| 1.0 - t).collect();
    right.reverse();
    if *right.last().unwrap() != 0.5 {
        right.push(0.5);
    }
    let l = norms(&bridge3(&left, [0.0; 3], p, rng)?);
    let r = norms(&bridge3(&right, [0.0; 3], p, rng)?);
    let values = grid
        .iter()
        .map(|&t| {
            if t <= 0.5 {
                l[left.partition_point(|&s| s < t)]
            } else {
                r[right.partition_point(|&s| s < 1.0 - t)]
            }
        })
        .collect();
    Ok(ProcessPath {
        times: grid.to_vec(),
        values,
        kind: ProcessKind::Excursion,
        duration: 1.0,
    })
}

pub fn sample_excursion(grid: &[f64], seed: u64) -> Result<ProcessPath, ProcError> {
    sample_excursion_with(grid, &mut StreamKey::new(seed, Module::Excursion, 0).rng())
}

/// `M_t = e_t` for `t ≤ U` and `M_t = e_U + e_{1-(t-U)}` for `t > U`.
/// Excursion values off the grid are linearly interpolated.
pub fn meander_from_excursion(exc: &ProcessPath, u: f64) -> Result<ProcessPath, ProcError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(ProcError::OutOfDomain(u));
    }
    let eu = exc.interpolate(u).ok_or(ProcError::OutOfDomain(u))?;
    let values = exc
        .times
        .iter()
        .zip(&exc.values)
        .map(|(&t, &e)| {
            if t <= u {
                Ok(e)
            } else {
                let s = 1.0 - (t - u);
                let w = exc.value_at(s).or_else(|| exc.interpolate(s)).ok_or(ProcError::OutOfDomain(s))?;
                Ok(eu + w)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProcessPath {
        times: exc.times.clone(),
        values,
        kind: ProcessKind::Meander { duration: 1.0 },
        duration: 1.0,
    })
}

// ---------------------------------------------------------------------------
// Bessel / excursion coupling

#[derive(Clone, Debug)]
pub struct BesselExcursionCoupling {
    pub excursion: ProcessPath,
    pub bessel: ProcessPath,
    /// `1/2 - τ` with `τ` the first grid time at which the moduli cross.
    pub epsilon: f64,
    /// Crossing time refined by bisection on the interpolated difference.
    pub tau_refined: f64,
    pub tau_grid: f64,
    /// Fresh draws needed because no crossing occurred before `1/2 - step`.
    pub resamples: u32,
}

/// Rotation taking unit vector `a` to unit vector `b`.
fn rotation(a: [f64; 3], b: [f64; 3]) -> [[f64; 3]; 3] {
    let v = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let k = [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]];
    let mut r = [[0.0; 3]; 3];
    let f = if (1.0 + c).abs() < 1e-15 { 0.0 } else { 1.0 / (1.0 + c) };
    for i in 0..3 {
        for j in 0..3 {
            let mut kk = 0.0;
            for m in 0..3 {
                kk += k[i][m] * k[m][j];
            }
            r[i][j] = if i == j { 1.0 } else { 0.0 } + k[i][j] + kk * f;
        }
    }
    if f == 0.0 {
        // antipodal: rotate by π around any axis orthogonal to a
        let mut axis = [1.0, 0.0, 0.0];
        if a[0].abs() > 0.9 {
            axis = [0.0, 1.0, 0.0];
        }
        let d = axis[0] * a[0] + axis[1] * a[1] + axis[2] * a[2];
        let mut u = [axis[0] - d * a[0], axis[1] - d * a[1], axis[2] - d * a[2]];
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        u.iter_mut().for_each(|x| *x /= n);
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = 2.0 * u[i] * u[j] - if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    r
}

/// Couples a Bessel-3 path and an excursion on a uniform grid of `steps`
/// intervals over `[0, 1]` (`steps` even) so that they coincide on `[0, ε]`.
///
/// Reversed in time from `1/2`, the Bessel path is the modulus of a 3D bridge
/// from `W_{1/2}` to 0 and the first half of the excursion is the modulus of
/// a 3D bridge from a point of modulus `V` to 0. After their moduli cross,
/// the second bridge is replaced by the rotation of the first.
pub fn couple_bessel_excursion_with<R: Rng + ?Sized>(steps: usize, rng: &mut R) -> Result<BesselExcursionCoupling, ProcError> {
    assert!(steps >= 4 && steps.is_multiple_of(2));
    let grid = uniform_grid(1.0, steps);
    let half = steps / 2;
    let hgrid = uniform_grid(0.5, half);
    let mut resamples = 0;
    loop {
        let x0 = [normal(rng) * 0.5f64.sqrt(), normal(rng) * 0.5f64.sqrt(), normal(rng) * 0.5f64.sqrt()];
        let v = sample_excursion_mid(rng);
        let dir = random_direction(rng);
        let y0 = [v * dir[0], v * dir[1], v * dir[2]];
        let xb = bridge3(&hgrid, x0, [0.0; 3], rng)?;
        let yb = bridge3(&hgrid, y0, [0.0; 3], rng)?;
        let xn = norms(&xb);
        let yn = norms(&yb);
        let sign0 = (xn[0] - yn[0]).signum();
        let cross = (1..half).find(|&k| (xn[k] - yn[k]).signum() != sign0 || xn[k] == yn[k]);
        let Some(k) = cross else {
            resamples += 1;
            continue;
        };
        // refine on the linear interpolation of the difference
        let d = |s: f64| {
            let pos = s / hgrid[1];
            let i = (pos.floor() as usize).min(half - 1);
            let w = pos - i as f64;
            let a = xn[i] - yn[i];
            let b = xn[i + 1] - yn[i + 1];
            a + w * (b - a)
        };
        let tau_refined = brent(d, hgrid[k - 1], hgrid[k], 1e-14).unwrap_or(hgrid[k]);
        let tau_grid = hgrid[k];
        // rotated continuation of X replaces Y after the crossing
        let ax = [xb[0][k] / xn[k], xb[1][k] / xn[k], xb[2][k] / xn[k]];
        let ay = [yb[0][k] / yn[k], yb[1][k] / yn[k], yb[2][k] / yn[k]];
        let rot = rotation(ax, ay);
        let mut y_hat = yb.clone();
        for i in k..=half {
            for r in 0..3 {
                y_hat[r][i] = rot[r][0] * xb[0][i] + rot[r][1] * xb[1][i] + rot[r][2] * xb[2][i];
            }
        }
        let mut yhn = norms(&y_hat);
        // rotation preserves the modulus; keep X's bits on the coupled part
        yhn[k..=half].copy_from_slice(&xn[k..=half]);
        // second half of the excursion and continuation of the Bessel path
        let z = norms(&bridge3(&hgrid, y0, [0.0; 3], rng)?);
        let cont = Bm3::sample(&hgrid, rng)?;
        let mut exc = vec![0.0; steps + 1];
        let mut bes = vec![0.0; steps + 1];
        for i in 0..=half {
            exc[i] = yhn[half - i];
            bes[i] = xn[half - i];
        }
        for i in 1..=half {
            exc[half + i] = z[i];
            let c = [x0[0] + cont.coords[0][i], x0[1] + cont.coords[1][i], x0[2] + cont.coords[2][i]];
            bes[half + i] = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        }
        exc[steps] = 0.0;
        return Ok(BesselExcursionCoupling {
            excursion: ProcessPath {
                times: grid.clone(),
                values: exc,
                kind: ProcessKind::Excursion,
                duration: 1.0,
            },
            bessel: ProcessPath {
                times: grid,
                values: bes,
                kind: ProcessKind::Bessel3,
                duration: 1.0,
            },
            epsilon: 0.5 - tau_grid,
            tau_refined,
            tau_grid,
            resamples,
        });
    }
}

pub fn couple_bessel_excursion(steps: usize, seed: u64) -> Result<BesselExcursionCoupling, ProcError> {
    couple_bessel_excursion_with(steps, &mut StreamKey::new(seed, Module::Coupling, 0).rng())
}

// ---------------------------------------------------------------------------
// decomposition at the maximum

#[derive(Clone, Debug)]
pub struct MaxDecomposition {
    pub sigma: f64,
    /// `s ↦ W_σ - W_{σ-s}` on `[0, σ]`.
    pub left: ProcessPath,
    /// `s ↦ W_σ - W_{σ+s}` on `[0, 1-σ]`.
    pub right: ProcessPath,
}

pub fn decompose_bm_at_max(path: &ProcessPath) -> Result<MaxDecomposition, ProcError> {
    let n = path.times.len();
    if path.times[0] != 0.0 || (path.times[n - 1] - 1.0).abs() > 1e-12 {
        return Err(ProcError::NotUnit);
    }
    let i = crate::numeric::argmax(&path.values);
    if i == 0 || i == n - 1 {
        return Err(ProcError::BoundaryArgmax(i));
    }
    let sigma = path.times[i];
    let m = path.values[i];
    let left = ProcessPath {
        times: (0..=i).map(|k| sigma - path.times[i - k]).collect(),
        values: (0..=i).map(|k| m - path.values[i - k]).collect(),
        kind: ProcessKind::Meander { duration: sigma },
        duration: sigma,
    };
    let right = ProcessPath {
        times: (i..n).map(|k| path.times[k] - sigma).collect(),
        values: (i..n).map(|k| m - path.values[k]).collect(),
        kind: ProcessKind::Meander { duration: 1.0 - sigma },
        duration: 1.0 - sigma,
    };
    Ok(MaxDecomposition { sigma, left, right })
}

// ---------------------------------------------------------------------------
// inequality checks

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub lhs: f64,
    pub rhs: f64,
    /// Monte Carlo standard error of `lhs - rhs`.
    pub se: f64,
    pub holds: bool,
}

fn check(name: &str, params: &[(&str, f64)], lhs: f64, rhs: f64, se: f64) -> BoundCheck {
    BoundCheck {
        name: name.to_string(),
        params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        lhs,
        rhs,
        se,
        holds: lhs <= rhs + 3.0 * se,
    }
}

fn bernoulli_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Grids of parameters for [`meander_bound_checks`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundGrid {
    pub reflexion: Vec<(f64, f64)>,
    pub increment: Vec<(f64, f64, f64)>,
    pub infimum: Vec<(f64, f64, f64, f64)>,
    pub small_ball: Vec<(f64, f64)>,
    pub exp_moment: Vec<(f64, f64)>,
    pub inv_exp_moment: Vec<(f64, f64)>,
}

impl Default for BoundGrid {
    fn default() -> Self {
        Self {
            reflexion: vec![(0.5, 1.0), (0.25, 0.5), (1.0, 1.5), (0.75, 2.0)],
            increment: vec![(0.2, 0.6, 0.5), (0.5, 1.0, 0.8), (0.1, 0.3, 0.3)],
            infimum: vec![(0.1, 0.3, 0.2, 1.5), (0.2, 0.4, 0.3, 2.0), (0.05, 0.45, 0.1, 1.2)],
            small_ball: vec![(0.4, 0.1), (0.4, 0.5), (0.2, 0.3), (0.8, 1.0)],
            exp_moment: vec![(0.5, 0.2), (0.8, 0.3), (0.3, 0.1)],
            inv_exp_moment: vec![(0.5, 0.2), (0.3, 0.1)],
        }
    }
}

/// Empirical checks of the reflection bounds, the small-ball bounds and the
/// exponential moments on unit meander paths sharing a uniform time grid.
pub fn meander_bound_checks(samples: &[ProcessPath], grid: &BoundGrid) -> Vec<BoundCheck> {
    let n = samples.len();
    let times = &samples[0].times;
    let idx = |t: f64| -> usize {
        let i = times.partition_point(|&s| s < t - 1e-12);
        i.min(times.len() - 1)
    };
    let mut out = Vec::new();
    for &(t, b) in &grid.reflexion {
        let it = idx(t);
        let lhs = samples
            .iter()
            .filter(|p| p.values[..=it].iter().any(|&v| v >= b))
            .count() as f64
            / n as f64;
        let pt = samples.iter().filter(|p| p.values[it] >= b).count() as f64 / n as f64;
        let closed = 1.0 - meander_marginal_cdf(t, b, 1.0).unwrap();
        let se = (bernoulli_se(lhs, n).powi(2) + 4.0 * bernoulli_se(pt, n).powi(2)).sqrt();
        out.push(check("reflexion_sup", &[("t", t), ("b", b)], lhs, 2.0 * pt, se));
        out.push(check("reflexion_sup_closed", &[("t", t), ("b", b)], lhs, 2.0 * closed, bernoulli_se(lhs, n)));
    }
    for &(s, t, b) in &grid.increment {
        let (is, it) = (idx(s), idx(t));
        let lhs = samples
            .iter()
            .filter(|p| p.values[is..=it].iter().any(|&v| (v - p.values[is]).abs() >= b))
            .count() as f64
            / n as f64;
        let pt = samples.iter().filter(|p| p.values[it] - p.values[is] >= b).count() as f64 / n as f64;
        let se = (bernoulli_se(lhs, n).powi(2) + 16.0 * bernoulli_se(pt, n).powi(2)).sqrt();
        out.push(check("reflexion_increment", &[("s", s), ("t", t), ("b", b)], lhs, 4.0 * pt, se));
    }
    for &(s, t, a, lambda) in &grid.infimum {
        let (is, it) = (idx(s), idx(t));
        let lhs = samples
            .iter()
            .filter(|p| p.values[is..=it].iter().any(|&v| v <= a))
            .count() as f64
            / n as f64;
        let ps = meander_marginal_cdf(s, lambda * a, 1.0).unwrap();
        let pt = meander_marginal_cdf(t, lambda * a, 1.0).unwrap();
        let d = t - s;
        let extra = 4.0 * a * (2.0 * t).sqrt() / d * (-2.0 / d * a * a * (lambda - 1.0).powi(2)).exp()
            / (1.0 - (-2.0 / d * a * a * lambda * lambda).exp());
        out.push(check(
            "cor_meander_infimum",
            &[("s", s), ("t", t), ("a", a), ("lambda", lambda)],
            lhs,
            ps + pt + extra,
            bernoulli_se(lhs, n),
        ));
    }
    for &(t, a) in &grid.small_ball {
        let lhs = meander_marginal_cdf(t, a, 1.0).unwrap();
        let rhs = 4.0 * a / (PI * t).sqrt() * (a * a / (2.0 * t)).min(1.0);
        out.push(check("cor_meander_small_ball", &[("t", t), ("a", a)], lhs, rhs, 0.0));
        let it = idx(t);
        let emp = samples.iter().filter(|p| p.values[it] <= a).count() as f64 / n as f64;
        out.push(check("cor_meander_small_ball_mc", &[("t", t), ("a", a)], emp, rhs, bernoulli_se(emp, n)));
    }
    for &(r, a) in &grid.exp_moment {
        let ir = idx(r);
        let vals: Vec<f64> = samples.iter().map(|p| (a * p.values[ir].powi(2)).exp()).collect();
        let m = crate::stats::mean(&vals);
        let se = crate::stats::std_error(&vals);
        out.push(check("exp_moment", &[("r", r), ("a", a)], m, (1.0 - 2.0 * r * a).powf(-1.5), se));
    }
    for &(r, a) in &grid.inv_exp_moment {
        let ir = idx(r);
        let vals: Vec<f64> = samples
            .iter()
            .map(|p| (a * p.values[ir].powi(2)).exp() / p.values[ir])
            .collect();
        let m = crate::stats::mean(&vals);
        let se = crate::stats::std_error(&vals);
        let rhs = (2.0 * PI).sqrt() / (r * (1.0 - r)).sqrt() / (1.0 - 2.0 * r * a);
        out.push(check("inv_exp_moment", &[("r", r), ("a", a)], m, rhs, se));
    }
    out
}
