//! Limiting variational problems: the first-order location `u*`, the
//! second-order value `W₂` with its argmax `(𝒰, 𝒱)`, the Chernoff argmax
//! `s*` of the half-line model, and the coupled limit systems that tie the
//! Brownian environment to these limit objects at every `n`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::rangelaw::{c_h as c_h_of, t_max_for};
use crate::rng::{Module, StreamKey};
use crate::stochproc::{self, Bm3, ProcError, ProcessKind, ProcessPath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Argmax {
    Point(f64),
    Pair(f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalSolution {
    pub value: f64,
    pub argmax: Argmax,
    /// Spacing of the finest grid searched.
    pub resolution: f64,
    pub depth: u32,
    /// The coarse argmax sits on the edge of the search domain.
    pub boundary: bool,
    pub stabilized: bool,
}

impl VariationalSolution {
    pub fn point(&self) -> f64 {
        match self.argmax {
            Argmax::Point(u) => u,
            Argmax::Pair(u, _) => u,
        }
    }

    pub fn pair(&self) -> (f64, f64) {
        match self.argmax {
            Argmax::Point(u) => (u, 0.0),
            Argmax::Pair(u, v) => (u, v),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VarError {
    #[error(transparent)]
    Proc(#[from] ProcError),
    #[error("paths cover [0, {found}], need [0, {needed}]")]
    ShortPath { found: f64, needed: f64 },
    #[error("coupling identity off by {0:e}")]
    Construction(f64),
    #[error("grid argmax at index {found}, constructed at {expected}")]
    ArgmaxMismatch { found: usize, expected: usize },
    #[error("invalid parameter: {0}")]
    Param(&'static str),
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn lookup(path: &ProcessPath, t: f64) -> Option<f64> {
    let i = path.times.partition_point(|&s| s < t);
    let tol = 1e-12 * t.abs().max(1.0);
    [i.wrapping_sub(1), i]
        .into_iter()
        .find(|&j| j < path.times.len() && (path.times[j] - t).abs() <= tol)
        .map(|j| path.values[j])
}

/// `t`, or the grid time within round-off of it.
fn snap(grid: &[f64], t: f64) -> f64 {
    let i = grid.partition_point(|&s| s < t);
    let tol = 1e-12 * t.abs().max(1.0);
    [i.wrapping_sub(1), i]
        .into_iter()
        .find(|&j| j < grid.len() && (grid[j] - t).abs() <= tol)
        .map_or(t, |j| grid[j])
}

/// Values of `path` at `ts`; missing times are inserted by Brownian bridge.
fn sample_at<R: Rng + ?Sized>(path: &mut ProcessPath, ts: &[f64], rng: &mut R) -> Result<Vec<f64>, VarError> {
    let missing: Vec<f64> = ts.iter().copied().filter(|&t| lookup(path, t).is_none()).collect();
    if !missing.is_empty() {
        *path = stochproc::refine_bridge_with(path, &missing, rng)?;
    }
    Ok(ts.iter().map(|&t| lookup(path, t).unwrap()).collect())
}

// ---------------------------------------------------------------------------
// first order

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxGrid {
    pub step: f64,
    /// Bisection levels of local refinement around the coarse argmax.
    pub levels: u32,
}

impl Default for ArgmaxGrid {
    fn default() -> Self {
        Self { step: 1e-3, levels: 2 }
    }
}

/// Argmax of `u ↦ X¹_u + X²_{c_h-u}` over `[0, c_h]`, ties to the smallest
/// `u`. Points missing from the paths are filled in by bridges.
pub fn solve_ustar<R: Rng + ?Sized>(
    x1: &ProcessPath,
    x2: &ProcessPath,
    c_h: f64,
    grid: &ArgmaxGrid,
    rng: &mut R,
) -> Result<VariationalSolution, VarError> {
    for p in [x1, x2] {
        let last = *p.times.last().unwrap();
        if p.times[0] != 0.0 || last < c_h - 1e-12 {
            return Err(VarError::ShortPath { found: last, needed: c_h });
        }
    }
    if !(grid.step > 0.0) {
        return Err(VarError::Param("step"));
    }
    let mut p1 = x1.clone();
    let mut p2 = x2.clone();
    let mut eval = |us: &[f64], p1: &mut ProcessPath, p2: &mut ProcessPath| -> Result<Vec<f64>, VarError> {
        let a = sample_at(p1, us, rng)?;
        let rev: Vec<f64> = us.iter().map(|u| (c_h - u).clamp(0.0, c_h)).collect();
        let b = sample_at(p2, &rev, rng)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
    };
    let k = ((c_h / grid.step).round() as usize).max(1);
    let us: Vec<f64> = (0..=k).map(|i| c_h * i as f64 / k as f64).collect();
    let vals = eval(&us, &mut p1, &mut p2)?;
    let i = crate::numeric::argmax(&vals);
    let (mut bu, mut bv) = (us[i], vals[i]);
    let mut h = c_h / k as f64;
    for _ in 0..grid.levels {
        let cand: Vec<f64> = [bu - 0.5 * h, bu + 0.5 * h]
            .into_iter()
            .filter(|&u| (0.0..=c_h).contains(&u))
            .collect();
        let v = eval(&cand, &mut p1, &mut p2)?;
        for (&u, &val) in cand.iter().zip(&v) {
            if val > bv || (val == bv && u < bu) {
                bu = u;
                bv = val;
            }
        }
        h *= 0.5;
    }
    Ok(VariationalSolution {
        value: bv,
        argmax: Argmax::Point(bu),
        resolution: h,
        depth: grid.levels,
        boundary: i == 0 || i == k,
        stabilized: true,
    })
}

// ---------------------------------------------------------------------------
// coupled limit system

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingOptions {
    pub h: f64,
    /// Half-width of the zoomed window carrying the limit processes.
    pub k_max: f64,
    /// Step of the grid on which the limit processes are drawn.
    pub base_step: f64,
    /// `u*` is redrawn while closer than this to `{0, c_h}`. The default is
    /// one grid cell at `n = 10³`, so that one draw serves every `n ≥ 10³`.
    pub edge_margin: f64,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            h: 1.0,
            k_max: 8.0,
            base_step: 1.0 / 512.0,
            edge_margin: 0.1,
        }
    }
}

/// The `n`-independent part of a coupled system: `u*`, `χ`, the two-sided
/// Bessel-3 process `𝐁` and the two-sided Brownian motion `𝐘`.
#[derive(Clone, Debug)]
pub struct LimitDraw {
    pub c_h: f64,
    pub u_star: f64,
    pub chi_plus: f64,
    pub chi_minus: f64,
    pub resamples: u32,
    pub key: StreamKey,
    grid: Vec<f64>,
    right3: Bm3,
    left3: Bm3,
    y_right: ProcessPath,
    y_left: ProcessPath,
}

impl LimitDraw {
    pub fn new(seed: u64, replica: u64, opts: &CouplingOptions) -> Result<Self, VarError> {
        if !(opts.h > 0.0 && opts.k_max > 0.0 && opts.base_step > 0.0) {
            return Err(VarError::Param("coupling options"));
        }
        let c_h = c_h_of(opts.h);
        if 2.0 * opts.edge_margin >= c_h {
            return Err(VarError::Param("edge_margin"));
        }
        let key = StreamKey::new(seed, Module::Coupling, replica);
        let mut rng = key.child(0).rng();
        let mut resamples = 0;
        let u_star = loop {
            let s = (0.5 * PI * rng.random::<f64>()).sin();
            let u = c_h * s * s;
            if u >= opts.edge_margin && c_h - u >= opts.edge_margin {
                break u;
            }
            resamples += 1;
        };
        let steps = (opts.k_max / opts.base_step).round() as usize;
        let grid = stochproc::uniform_grid(opts.k_max, steps);
        let right3 = Bm3::sample(&grid, &mut rng)?;
        let left3 = Bm3::sample(&grid, &mut rng)?;
        let y_right = stochproc::sample_bm_with(&grid, &mut rng)?;
        let y_left = stochproc::sample_bm_with(&grid, &mut rng)?;
        Ok(Self {
            c_h,
            u_star,
            chi_plus: 1.0 / (c_h - u_star).sqrt(),
            chi_minus: 1.0 / u_star.sqrt(),
            resamples,
            key,
            grid,
            right3,
            left3,
            y_right,
            y_left,
        })
    }

    pub fn chi(&self, u: f64) -> f64 {
        if u >= 0.0 {
            self.chi_plus
        } else {
            self.chi_minus
        }
    }

    pub fn bessel(&self) -> ProcessPath {
        join(&self.grid, &self.left3.modulus(), &self.right3.modulus(), ProcessKind::TwoSidedBessel)
    }

    pub fn ybm(&self) -> ProcessPath {
        join(&self.grid, &self.y_left.values, &self.y_right.values, ProcessKind::BmTwoSided)
    }
}

fn join(grid: &[f64], left: &[f64], right: &[f64], kind: ProcessKind) -> ProcessPath {
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

/// Brownian pair `(X¹, X²)` on the grid `k n^{-1/3}` built around a limit
/// draw: near `u*` the profile `X_u = X¹_u + X²_{c̃-u}` is
/// `X_{u*} - n^{-1/18} √2 χ 𝐁_{(u-u*) n^{1/9}}` and `Y_u = X¹_u - X²_{c̃-u}`
/// is `Y_{u*} + n^{-1/18} √2 𝐘_{(u-u*) n^{1/9}}`; outside the radius
/// `delta0` the profile is completed by meanders started from the pasted
/// values. `c̃ = N n^{-1/3}` is `c_h` rounded to the grid.
#[derive(Clone, Debug)]
pub struct CoupledLimitSystem {
    pub n: u64,
    pub c_h: f64,
    pub c_tilde: f64,
    pub step: f64,
    /// Index `N` with `c̃ = N · step`.
    pub big_n: usize,
    /// Continuum draw of `u*`, used by `χ` and by the limit problems.
    pub u_star: f64,
    /// Grid index of `u*` at this `n`.
    pub star_index: usize,
    pub chi_plus: f64,
    pub chi_minus: f64,
    /// Limit processes on their base grid (identical for every `n`).
    pub bessel: ProcessPath,
    pub ybm: ProcessPath,
    /// The same processes with the zoomed grid points of this `n` inserted.
    pub bessel_zoom: ProcessPath,
    pub ybm_zoom: ProcessPath,
    pub x1: ProcessPath,
    pub x2: ProcessPath,
    pub delta0: f64,
    /// Number of grid cells on each side of `u*` inside the pasted piece.
    pub pasted: usize,
    pub resamples: u32,
}

pub fn build_coupled_system(n: u64, seed: u64, replica: u64, opts: &CouplingOptions) -> Result<CoupledLimitSystem, VarError> {
    let lim = LimitDraw::new(seed, replica, opts)?;
    couple_at(&lim, n, opts)
}

/// Coupled system at a given `n` from an existing limit draw. Randomness
/// beyond the draw comes from a stream keyed by `n`.
pub fn couple_at(lim: &LimitDraw, n: u64, opts: &CouplingOptions) -> Result<CoupledLimitSystem, VarError> {
    let nf = n as f64;
    let step = nf.powf(-1.0 / 3.0);
    let zoom = nf.powf(1.0 / 9.0);
    let amp = nf.powf(-1.0 / 18.0);
    let c_h = lim.c_h;
    let big_n = (c_h / step).round() as usize;
    if big_n < 4 {
        return Err(VarError::Param("n too small for the grid"));
    }
    let ks = ((lim.u_star / step).round() as usize).clamp(1, big_n - 1);
    let right_len = big_n - ks;
    let d_l = ks as f64 * step;
    let d_r = right_len as f64 * step;
    let r = (opts.k_max / zoom).min(0.5 * d_l).min(0.5 * d_r);
    let delta0 = 2f64.powf(r.log2().floor());
    let pasted = ((delta0 / step + 1e-9).floor() as usize).min(ks - 1).min(right_len - 1);
    let mut rng = lim.key.child(n).rng();

    let mut zs: Vec<f64> = (1..=pasted)
        .map(|j| snap(&lim.grid, (j as f64 * step * zoom).min(opts.k_max)))
        .collect();
    let zd = snap(&zs, snap(&lim.grid, (delta0 * zoom).min(opts.k_max)));
    zs.push(zd);
    let right3 = lim.right3.refine(&zs, &mut rng)?;
    let left3 = lim.left3.refine(&zs, &mut rng)?;
    let y_right = stochproc::refine_bridge_with(&lim.y_right, &zs, &mut rng)?;
    let y_left = stochproc::refine_bridge_with(&lim.y_left, &zs, &mut rng)?;
    let modulus_at = |w: &Bm3, z: f64| -> f64 {
        let i = w.times.partition_point(|&s| s < z);
        w.norm_at(i)
    };
    let at = |p: &ProcessPath, z: f64| -> f64 { p.values[p.times.partition_point(|&s| s < z)] };

    // m[j + ks] = W_{u*} - W_{u* + j step}, j ∈ [-ks, right_len]
    let total = big_n + 1;
    let mut m = vec![0.0; total];
    for (j, &z) in (1..=pasted).zip(&zs) {
        m[ks + j] = amp * lim.chi_plus * modulus_at(&right3, z);
        m[ks - j] = amp * lim.chi_minus * modulus_at(&left3, z);
    }
    let right_grid: Vec<f64> = (pasted + 1..=right_len).map(|j| j as f64 * step).collect();
    let right_vals = stochproc::continue_meander_with(&right_grid, d_r, delta0, amp * lim.chi_plus * modulus_at(&right3, zd), &mut rng)?;
    for (i, v) in right_vals.into_iter().enumerate() {
        m[ks + pasted + 1 + i] = v;
    }
    let left_grid: Vec<f64> = (pasted + 1..=ks).map(|j| j as f64 * step).collect();
    let left_vals = stochproc::continue_meander_with(&left_grid, d_l, delta0, amp * lim.chi_minus * modulus_at(&left3, zd), &mut rng)?;
    for (i, v) in left_vals.into_iter().enumerate() {
        m[ks - pasted - 1 - i] = v;
    }
    let w_star = m[0];
    let xt: Vec<f64> = m.iter().map(|v| SQRT_2 * (w_star - v)).collect();

    let mut yt = vec![0.0; total];
    // y_left holds 𝐘_{-z} at time z
    for (j, &z) in (1..=pasted).zip(&zs) {
        yt[ks + j] = SQRT_2 * amp * at(&y_right, z);
        yt[ks - j] = SQRT_2 * amp * at(&y_left, z);
    }
    let sd = (2.0 * step).sqrt();
    for k in ks + pasted + 1..total {
        yt[k] = yt[k - 1] + sd * normal(&mut rng);
    }
    for k in (0..ks - pasted).rev() {
        yt[k] = yt[k + 1] + sd * normal(&mut rng);
    }
    let y0 = yt[0];
    yt.iter_mut().for_each(|v| *v -= y0);

    let x2p: Vec<f64> = xt.iter().zip(&yt).map(|(a, b)| 0.5 * (a - b)).collect();
    let mut v1: Vec<f64> = xt.iter().zip(&yt).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut v2: Vec<f64> = (0..total).map(|mm| x2p[big_n - mm] - x2p[big_n]).collect();
    let len = (t_max_for(n, opts.h) as usize).max((2.0 * c_h / step).ceil() as usize) + 1;
    let sd1 = step.sqrt();
    for v in [&mut v1, &mut v2] {
        while v.len() <= len {
            let last = *v.last().unwrap();
            v.push(last + sd1 * normal(&mut rng));
        }
    }
    let path = |values: Vec<f64>| ProcessPath {
        times: (0..values.len()).map(|k| k as f64 * step).collect(),
        duration: (values.len() - 1) as f64 * step,
        values,
        kind: ProcessKind::Bm,
    };
    let sys = CoupledLimitSystem {
        n,
        c_h,
        c_tilde: big_n as f64 * step,
        step,
        big_n,
        u_star: lim.u_star,
        star_index: ks,
        chi_plus: lim.chi_plus,
        chi_minus: lim.chi_minus,
        bessel: lim.bessel(),
        ybm: lim.ybm(),
        bessel_zoom: join(&right3.times, &left3.modulus(), &right3.modulus(), ProcessKind::TwoSidedBessel),
        ybm_zoom: join(&y_right.times, &y_left.values, &y_right.values, ProcessKind::BmTwoSided),
        x1: path(v1),
        x2: path(v2),
        delta0,
        pasted,
        resamples: lim.resamples,
    };
    let defect = sys.coupling_defect();
    if defect > 1e-9 {
        return Err(VarError::Construction(defect));
    }
    let profile = sys.profile();
    let found = crate::numeric::argmax(&profile);
    if found != ks {
        return Err(VarError::ArgmaxMismatch { found, expected: ks });
    }
    Ok(sys)
}

impl CoupledLimitSystem {
    /// `X_{k step} = X¹_{k step} + X²_{c̃ - k step}` for `k = 0..=N`.
    pub fn profile(&self) -> Vec<f64> {
        (0..=self.big_n)
            .map(|k| self.x1.values[k] + self.x2.values[self.big_n - k])
            .collect()
    }

    /// `X_{u*}`, the grid maximum of the profile.
    pub fn x_star(&self) -> f64 {
        self.x1.values[self.star_index] + self.x2.values[self.big_n - self.star_index]
    }

    pub fn u_star_grid(&self) -> f64 {
        self.star_index as f64 * self.step
    }

    /// `X¹_{x n^{-1/3}} + X²_{y n^{-1/3}} - X_{u*}`.
    pub fn omega(&self, x: usize, y: usize) -> Option<f64> {
        Some(self.x1.values.get(x)? + self.x2.values.get(y)? - self.x_star())
    }

    fn chi_at(&self, j: i64) -> f64 {
        if j >= 0 {
            self.chi_plus
        } else {
            self.chi_minus
        }
    }

    /// Largest deviation from the pasting identities over the pasted cells.
    pub fn coupling_defect(&self) -> f64 {
        let nf = self.n as f64;
        let scale = nf.powf(1.0 / 18.0);
        let zoom = nf.powf(1.0 / 9.0);
        let ks = self.star_index as i64;
        let bn = self.big_n as i64;
        let xv = |k: i64| self.x1.values[k as usize] + self.x2.values[(bn - k) as usize];
        let yv = |k: i64| self.x1.values[k as usize] - self.x2.values[(bn - k) as usize];
        let mut worst: f64 = 0.0;
        for j in -(self.pasted as i64)..=self.pasted as i64 {
            let z = j as f64 * self.step * zoom;
            let b = lookup(&self.bessel_zoom, z).unwrap_or(f64::NAN);
            let y = lookup(&self.ybm_zoom, z).unwrap_or(f64::NAN);
            let lhs_x = scale * (xv(ks) - xv(ks + j));
            let lhs_y = scale * (yv(ks + j) - yv(ks));
            worst = worst
                .max((lhs_x - SQRT_2 * self.chi_at(j) * b).abs())
                .max((lhs_y - SQRT_2 * y).abs());
        }
        if worst.is_nan() {
            f64::INFINITY
        } else {
            worst
        }
    }
}

// ---------------------------------------------------------------------------
// second order

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGrid {
    /// Coarse stride in base-grid cells; halved at every refinement level.
    pub stride: usize,
    pub levels: u32,
}

impl Default for PairGrid {
    fn default() -> Self {
        Self { stride: 4, levels: 2 }
    }
}

/// `3π² / (β c_h⁴ √2)`.
pub fn w2_drift(beta: f64, h: f64) -> f64 {
    3.0 * PI * PI / (beta * c_h_of(h).powi(4) * SQRT_2)
}

/// `3π² / (2 β c_h⁴)`.
pub fn chernoff_drift(beta: f64, h: f64) -> f64 {
    3.0 * PI * PI / (2.0 * beta * c_h_of(h).powi(4))
}

/// `max` over `(u, v) ∈ [-K, K]²` on the uniform grid of the two-sided paths
/// of `𝐘_u - 𝐘_{-v} - χ(u) 𝐁_u - χ(-v) 𝐁_{-v} - drift (u+v)²`. Ties go to
/// the smallest `|u| + |v|`, then the smallest `u`, then `v`.
pub fn solve_w2_paths(
    bessel: &ProcessPath,
    ybm: &ProcessPath,
    chi_minus: f64,
    chi_plus: f64,
    drift: f64,
    k: f64,
    grid: &PairGrid,
) -> Result<VariationalSolution, VarError> {
    let mid = bessel.times.partition_point(|&t| t < 0.0);
    if bessel.times.len() != ybm.times.len() || bessel.times.get(mid) != Some(&0.0) || mid + 1 >= bessel.times.len() {
        return Err(VarError::Param("paths must share a symmetric grid through 0"));
    }
    let h = bessel.times[mid + 1];
    let half = mid.min(bessel.times.len() - 1 - mid);
    let m = ((k / h).round() as usize).min(half) as i64;
    let chi = |i: i64| if i >= 0 { chi_plus } else { chi_minus };
    let idx = |i: i64| (mid as i64 + i) as usize;
    let a = |i: i64| ybm.values[idx(i)] - chi(i) * bessel.values[idx(i)];
    let b = |j: i64| -ybm.values[idx(-j)] - chi(-j) * bessel.values[idx(-j)];
    let f = |i: i64, j: i64| {
        let s = (i + j) as f64 * h;
        a(i) + b(j) - drift * s * s
    };
    let better = |v: f64, i: i64, j: i64, bv: f64, bi: i64, bj: i64| {
        v > bv || (v == bv && (i.abs() + j.abs(), i, j) < (bi.abs() + bj.abs(), bi, bj))
    };
    let stride = grid.stride.max(1) as i64;
    let (mut bv, mut bi, mut bj) = (f(0, 0), 0i64, 0i64);
    let lo = -(m / stride) * stride;
    let mut i = lo;
    while i <= m {
        let mut j = lo;
        while j <= m {
            let v = f(i, j);
            if better(v, i, j, bv, bi, bj) {
                (bv, bi, bj) = (v, i, j);
            }
            j += stride;
        }
        i += stride;
    }
    let coarse = (bi, bj);
    let mut s = stride;
    for _ in 0..grid.levels {
        let ns = (s / 2).max(1);
        let (ci, cj) = (bi, bj);
        let mut i = ci - s;
        while i <= ci + s {
            let mut j = cj - s;
            while j <= cj + s {
                if i.abs() <= m && j.abs() <= m {
                    let v = f(i, j);
                    if better(v, i, j, bv, bi, bj) {
                        (bv, bi, bj) = (v, i, j);
                    }
                }
                j += ns;
            }
            i += ns;
        }
        s = ns;
    }
    Ok(VariationalSolution {
        value: bv,
        argmax: Argmax::Pair(bi as f64 * h, bj as f64 * h),
        resolution: s as f64 * h,
        depth: grid.levels,
        boundary: coarse.0.abs() + stride > m || coarse.1.abs() + stride > m,
        stabilized: true,
    })
}

/// `W₂^K` for a coupled system.
pub fn solve_w2(sys: &CoupledLimitSystem, beta: f64, h: f64, k: f64, grid: &PairGrid) -> Result<VariationalSolution, VarError> {
    if !(k > 0.0 && beta > 0.0) {
        return Err(VarError::Param("K and beta must be positive"));
    }
    solve_w2_paths(&sys.bessel, &sys.ybm, sys.chi_minus, sys.chi_plus, w2_drift(beta, h), k, grid)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct W2Sweep {
    /// `(K, W₂^K)`, nondecreasing in `K`.
    pub values: Vec<(f64, f64)>,
    pub solution: VariationalSolution,
    pub stabilized: bool,
}

/// `W₂^K` over increasing `K`. A smaller window's optimum is kept when the
/// local search on the larger window misses it, so values are nondecreasing.
pub fn w2_sweep(sys: &CoupledLimitSystem, beta: f64, h: f64, ks: &[f64], grid: &PairGrid, tol: f64) -> Result<W2Sweep, VarError> {
    let mut values = Vec::new();
    let mut best: Option<VariationalSolution> = None;
    for &k in ks {
        let mut s = solve_w2(sys, beta, h, k, grid)?;
        if let Some(b) = &best {
            if b.value >= s.value {
                s = VariationalSolution {
                    boundary: s.boundary,
                    ..b.clone()
                };
            }
        }
        values.push((k, s.value));
        best = Some(s);
    }
    let mut solution = best.ok_or(VarError::Param("empty K list"))?;
    let stabilized = values.len() >= 2 && (values[values.len() - 1].1 - values[values.len() - 2].1).abs() <= tol;
    solution.stabilized = stabilized;
    Ok(W2Sweep {
        values,
        solution,
        stabilized,
    })
}

// ---------------------------------------------------------------------------
// Chernoff problem

fn chernoff_best(path: &ProcessPath, drift: f64, l: f64) -> (f64, f64, usize) {
    let (mut bv, mut bs, mut bi) = (f64::NEG_INFINITY, 0.0f64, 0usize);
    for (i, (&t, &w)) in path.times.iter().zip(&path.values).enumerate() {
        if t.abs() > l {
            continue;
        }
        let v = w - drift * t * t;
        if v > bv || (v == bv && (t.abs(), t) < (bs.abs(), bs)) {
            (bv, bs, bi) = (v, t, i);
        }
    }
    (bv, bs, bi)
}

/// `argmax_s {W_s - drift s²}` on a two-sided path, over windows `[-L, L]`
/// doubled from `window0` until the optimum repeats.
pub fn solve_chernoff(path: &ProcessPath, drift: f64, window0: f64) -> VariationalSolution {
    let extent = (-path.times[0]).min(*path.times.last().unwrap());
    let mut l = window0.min(extent);
    let mut prev: Option<(f64, f64)> = None;
    let mut stabilized = false;
    let mut depth = 0;
    let (v, s, i) = loop {
        let (v, s, i) = chernoff_best(path, drift, l);
        if prev == Some((v, s)) {
            stabilized = true;
            break (v, s, i);
        }
        prev = Some((v, s));
        if l >= extent {
            break (v, s, i);
        }
        l = (2.0 * l).min(extent);
        depth += 1;
    };
    let cell = |j: usize| {
        let a = if j > 0 { path.times[j] - path.times[j - 1] } else { 0.0 };
        let b = if j + 1 < path.times.len() { path.times[j + 1] - path.times[j] } else { 0.0 };
        a.max(b)
    };
    VariationalSolution {
        value: v,
        argmax: Argmax::Point(s),
        resolution: cell(i),
        depth,
        boundary: s.abs() + cell(i) > l,
        stabilized,
    }
}

/// Subdivides into `factor` pieces, by Brownian bridges, every cell whose
/// endpoints come within `4√(cell)` of the grid optimum of `W_s - drift s²`.
pub fn refine_chernoff_path<R: Rng + ?Sized>(path: &ProcessPath, drift: f64, factor: usize, rng: &mut R) -> Result<ProcessPath, VarError> {
    let (best, _, _) = chernoff_best(path, drift, f64::INFINITY);
    let y = |i: usize| path.values[i] - drift * path.times[i] * path.times[i];
    let mut new_times = Vec::new();
    for i in 0..path.times.len() - 1 {
        let (t0, t1) = (path.times[i], path.times[i + 1]);
        if y(i).max(y(i + 1)) >= best - 4.0 * (t1 - t0).sqrt() {
            for k in 1..factor {
                new_times.push(t0 + (t1 - t0) * k as f64 / factor as f64);
            }
        }
    }
    Ok(stochproc::refine_bridge_with(path, &new_times, rng)?)
}

// ---------------------------------------------------------------------------
// half-line coupled system

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalflineOptions {
    pub h: f64,
    pub beta: f64,
    /// Half-width of the window of `W` in zoomed units.
    pub window: f64,
    pub base_step: f64,
}

impl Default for HalflineOptions {
    fn default() -> Self {
        Self {
            h: 1.0,
            beta: 1.0,
            window: 8.0,
            base_step: 1e-3,
        }
    }
}

/// Brownian path `X` on the grid `k n^{-1/3}` with
/// `X_{c̃ + s n^{-1/9}} - X_{c̃} = n^{-1/18} W_s` on the zoomed window, and the
/// Chernoff solution of `W`.
#[derive(Clone, Debug)]
pub struct HalflineSystem {
    pub n: u64,
    pub c_h: f64,
    pub step: f64,
    pub big_n: usize,
    pub drift: f64,
    /// `W` on its base grid (identical for every `n`).
    pub w: ProcessPath,
    /// `W` with the zoomed sites of this `n` inserted.
    pub w_zoom: ProcessPath,
    pub x: ProcessPath,
    pub s_star: VariationalSolution,
}

impl HalflineSystem {
    pub fn new(n: u64, seed: u64, replica: u64, opts: &HalflineOptions) -> Result<Self, VarError> {
        let c_h = c_h_of(opts.h);
        let key = StreamKey::new(seed, Module::Chernoff, replica);
        let mut rng = key.child(0).rng();
        let steps = (opts.window / opts.base_step).round() as usize;
        let w = stochproc::sample_two_sided_bm_with(&stochproc::uniform_grid(opts.window, steps), &mut rng)?;
        let drift = chernoff_drift(opts.beta, opts.h);
        let s_star = solve_chernoff(&w, drift, 1.0);

        let nf = n as f64;
        let step = nf.powf(-1.0 / 3.0);
        let amp = nf.powf(-1.0 / 18.0);
        let site = nf.powf(-2.0 / 9.0);
        let big_n = (c_h / step).round() as usize;
        let len = t_max_for(n, opts.h) as usize + 1;
        let reach = ((opts.window / site + 1e-9).floor() as usize).min(big_n);
        let mut rng = key.child(n).rng();
        let zs: Vec<f64> = (1..=reach)
            .flat_map(|j| {
                let z = (j as f64 * site).min(opts.window);
                [snap(&w.times, -z), snap(&w.times, z)]
            })
            .collect();
        let w_zoom = stochproc::refine_bridge_with(&w, &zs, &mut rng)?;
        let mut v = vec![0.0; len.max(big_n + reach) + 1];
        for t in big_n - reach..=big_n + reach {
            let z = (t as f64 - big_n as f64) * site;
            let z = z.clamp(-opts.window, opts.window);
            v[t] = amp * lookup(&w_zoom, z).ok_or(VarError::Param("zoom lookup"))?;
        }
        let sd = step.sqrt();
        for t in big_n + reach + 1..v.len() {
            v[t] = v[t - 1] + sd * normal(&mut rng);
        }
        for t in (0..big_n - reach).rev() {
            v[t] = v[t + 1] + sd * normal(&mut rng);
        }
        let v0 = v[0];
        v.iter_mut().for_each(|x| *x -= v0);
        Ok(Self {
            n,
            c_h,
            step,
            big_n,
            drift,
            w,
            w_zoom,
            x: ProcessPath {
                times: (0..v.len()).map(|k| k as f64 * step).collect(),
                duration: (v.len() - 1) as f64 * step,
                values: v,
                kind: ProcessKind::Bm,
            },
            s_star,
        })
    }

    /// `n^{1/9} (Y_{s*} - Y_s)` at the zoomed position of site `t`, where
    /// `Y_s = W_s - drift s²`.
    pub fn gap(&self, t: usize) -> Option<f64> {
        let nf = self.n as f64;
        let z = (t as f64 - self.big_n as f64) * nf.powf(-2.0 / 9.0);
        let w = lookup(&self.w_zoom, z)?;
        Some(nf.powf(1.0 / 9.0) * (self.s_star.value - (w - self.drift * z * z)))
    }
}
