//! Law of the range endpoints of simple random walk.
//!
//! Stay probabilities in an interval of `K` sites come from the spectral
//! decomposition of the killed walk: eigenvalues `cos(jπ/(K+1))` with sine
//! eigenvectors. Modes `j` and `K+1-j` have opposite eigenvalues, so they are
//! summed in pairs and only `j ≤ (K+1)/2` are visited. Everything is carried
//! in log scale relative to the leading eigenvalue.
//!
//! The law of the range `R_n = [-x, y]` is the inclusion–exclusion of four
//! stay probabilities. A flag dynamic program (hit-left / hit-right) gives the
//! same quantity without subtraction and is used for `n ≤ 1000` and as the
//! fallback when the spectral combination loses too many digits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::numeric::KahanSum;

/// Largest `n` for which tables are built with the flag DP by default.
pub const DP_MAX_N: u64 = 1000;

/// Relative level below which a combined spectral sum counts as cancelled.
const CANCEL_REL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExactSpectral,
    ExactDp,
    Enumeration,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RangeError {
    #[error("x = {x} lies on the boundary of [0, {t}], where the asymptotic form vanishes")]
    Boundary { x: u64, t: u64 },
    #[error("T = {0} is too small for the asymptotic form (need T ≥ 3)")]
    SmallRange(u64),
    #[error("asymptotic form is not positive at x = {x}, T = {t}")]
    NonPositive { x: u64, t: u64 },
}

// ---------------------------------------------------------------------------
// spectral building blocks

/// Paired mode sum for the stay probability of a walk started at site index
/// `i0` of an interval of `k` sites. Returns `(Σ terms, Σ |terms|)`, both
/// scaled by `exp(-lref)`.
fn stay_modes(n: u64, k: usize, i0: usize, lref: f64) -> (f64, f64) {
    if i0 >= k {
        return (0.0, 0.0);
    }
    if k == 1 {
        // single site: the only eigenvalue is exactly 0
        let v = if n == 0 { (-lref).exp() } else { 0.0 };
        return (v, v);
    }
    let kp1 = (k + 1) as f64;
    let nf = n as f64;
    let parity = if (n + i0 as u64).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut acc = KahanSum::new();
    let mut abs = 0.0;
    let top = k.div_ceil(2);
    for j in 1..=top {
        let theta = j as f64 * PI / kp1;
        let lam = if 2 * j == k + 1 { 0.0 } else { theta.cos() };
        let pair = 2 * j != k + 1;
        let mut c = 0.0;
        if j % 2 == 1 {
            c += 1.0 / (theta / 2.0).tan();
        }
        if pair && (k + 1 - j) % 2 == 1 {
            c += parity * (theta / 2.0).tan();
        }
        if c == 0.0 {
            continue;
        }
        let scale = if n == 0 {
            (-lref).exp()
        } else if lam <= 0.0 {
            0.0
        } else {
            (nf * lam.ln() - lref).exp()
        };
        if scale == 0.0 {
            // |λ_j| decreases with j, so every later mode vanishes too.
            break;
        }
        let term = scale * (2.0 / kp1) * (theta * (i0 + 1) as f64).sin() * c;
        acc.add(term);
        abs += term.abs();
        if n > 0 && j > 1 {
            let next = ((j + 1) as f64 * PI / kp1).cos().abs();
            let bound = 4.0 * k as f64 * scale_bound(nf, next, lref);
            if bound < 1e-18 * acc.value().abs() {
                break;
            }
        }
    }
    (acc.value(), abs)
}

fn scale_bound(nf: f64, lam_abs: f64, lref: f64) -> f64 {
    if lam_abs <= 0.0 {
        0.0
    } else {
        (nf * lam_abs.ln() - lref).exp()
    }
}

fn lead_log(n: u64, k: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * (PI / (k + 1) as f64).cos().ln()
    }
}

/// `log P(-x ≤ min S_k, max S_k ≤ y, k ≤ n)` by the spectral sum.
pub fn stay_probability(n: u64, x: u64, y: u64) -> f64 {
    let k = (x + y + 1) as usize;
    let lref = lead_log(n, k);
    let (s, _) = stay_modes(n, k, x as usize, lref);
    if s <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (lref + s.ln()).min(0.0)
    }
}

/// Same quantity by direct vector iteration (log-scaled).
pub fn stay_probability_dp(n: u64, x: u64, y: u64) -> f64 {
    let k = (x + y + 1) as usize;
    let mut v = vec![1.0f64; k];
    let mut w = vec![0.0f64; k];
    let mut log_scale = 0.0;
    for _ in 0..n {
        for p in 0..k {
            let l = if p > 0 { v[p - 1] } else { 0.0 };
            let r = if p + 1 < k { v[p + 1] } else { 0.0 };
            w[p] = 0.5 * (l + r);
        }
        std::mem::swap(&mut v, &mut w);
        let m = v.iter().copied().fold(0.0, f64::max);
        if m == 0.0 {
            return f64::NEG_INFINITY;
        }
        if m < 1e-200 {
            v.iter_mut().for_each(|a| *a /= m);
            log_scale += m.ln();
        }
    }
    let q = v[x as usize];
    if q == 0.0 {
        f64::NEG_INFINITY
    } else {
        log_scale + q.ln()
    }
}

// ---------------------------------------------------------------------------
// feasibility

/// Minimal number of steps for a walk started at site `x` of `[0, t]` to
/// visit both ends, by breadth-first search on (site, flags).
pub fn min_steps_to_cover(x: u64, t: u64) -> Option<u64> {
    let t = t as usize;
    let x = x as usize;
    if x > t {
        return None;
    }
    let flags = |p: usize, f: u8| -> u8 {
        let mut f = f;
        if p == 0 {
            f |= 1;
        }
        if p == t {
            f |= 2;
        }
        f
    };
    let mut dist = vec![[u64::MAX; 4]; t + 1];
    let f0 = flags(x, 0);
    dist[x][f0 as usize] = 0;
    let mut q = VecDeque::from([(x, f0)]);
    while let Some((p, f)) = q.pop_front() {
        let d = dist[p][f as usize];
        if f == 3 {
            return Some(d);
        }
        let mut nb = [None, None];
        if p > 0 {
            nb[0] = Some(p - 1);
        }
        if p < t {
            nb[1] = Some(p + 1);
        }
        for r in nb.into_iter().flatten() {
            let g = flags(r, f);
            if dist[r][g as usize] == u64::MAX {
                dist[r][g as usize] = d + 1;
                q.push_back((r, g));
            }
        }
    }
    None
}

pub fn feasible(n: u64, x: u64, y: u64) -> bool {
    match min_steps_to_cover(x, x + y) {
        Some(m) => m <= n && !(n > 0 && x + y == 0),
        None => false,
    }
}

// ---------------------------------------------------------------------------
// flag DP

/// For a fixed width `t`, returns `log P(R_n = [-x, t-x])` for `x = 0..=t`.
pub fn range_row_dp(n: u64, t: u64) -> Vec<f64> {
    let sites = t as usize + 1;
    // layers: 0 none needed, 1 need left, 2 need right, 3 need both
    let mut v = vec![[0.0f64; 4]; sites];
    for p in 0..sites {
        v[p][0] = 1.0;
    }
    let clear = |s: usize, q: usize| -> usize {
        let mut s = s;
        if q == 0 {
            s &= !1;
        }
        if q == sites - 1 {
            s &= !2;
        }
        s
    };
    let mut w = vec![[0.0f64; 4]; sites];
    let mut log_scale = 0.0;
    for _ in 0..n {
        for p in 0..sites {
            for s in 0..4 {
                let mut a = 0.0;
                if p > 0 {
                    a += v[p - 1][clear(s, p - 1)];
                }
                if p + 1 < sites {
                    a += v[p + 1][clear(s, p + 1)];
                }
                w[p][s] = 0.5 * a;
            }
        }
        std::mem::swap(&mut v, &mut w);
        let m = v.iter().flat_map(|r| r.iter()).copied().fold(0.0, f64::max);
        if m == 0.0 {
            return vec![f64::NEG_INFINITY; sites];
        }
        if m < 1e-200 {
            v.iter_mut().flat_map(|r| r.iter_mut()).for_each(|a| *a /= m);
            log_scale += m.ln();
        }
    }
    (0..sites)
        .map(|x| {
            let val = v[x][clear(3, x)];
            if val > 0.0 && feasible(n, x as u64, t - x as u64) {
                log_scale + val.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// range law

/// Spectral inclusion–exclusion. Returns `None` when the combination has
/// cancelled below the working precision.
fn range_law_spectral(n: u64, x: u64, y: u64) -> Option<f64> {
    let t = (x + y) as usize;
    let lref = lead_log(n, t + 1);
    let mut acc = KahanSum::new();
    let mut abs = 0.0;
    let mut push = |sign: f64, k: usize, i0: i64| {
        if k == 0 || i0 < 0 {
            return;
        }
        let (s, a) = stay_modes(n, k, i0 as usize, lref);
        acc.add(sign * s);
        abs += a;
    };
    push(1.0, t + 1, x as i64);
    push(-1.0, t, x as i64 - 1);
    push(-1.0, t, x as i64);
    if t >= 1 {
        push(1.0, t - 1, x as i64 - 1);
    }
    let s = acc.value();
    if s <= CANCEL_REL * abs {
        None
    } else {
        Some((lref + s.ln()).min(0.0))
    }
}

/// `log P(R_n = [-x, y])`.
pub fn exact_range_law(n: u64, x: u64, y: u64) -> f64 {
    if !feasible(n, x, y) {
        return f64::NEG_INFINITY;
    }
    if n == 0 {
        return 0.0;
    }
    match range_law_spectral(n, x, y) {
        Some(v) => v,
        None => range_row_dp(n, x + y)[x as usize],
    }
}

/// `log P(S_k ≥ 0 for k ≤ n, max S_k = t)`.
pub fn halfline_range_law(n: u64, t: u64) -> f64 {
    if t == 0 || t > n {
        return f64::NEG_INFINITY;
    }
    let k = t as usize + 1;
    let lref = lead_log(n, k);
    let (a, aa) = stay_modes(n, k, 0, lref);
    let (b, bb) = stay_modes(n, k - 1, 0, lref);
    let s = a - b;
    if s > CANCEL_REL * (aa + bb) {
        (lref + s.ln()).min(0.0)
    } else {
        halfline_range_law_dp(n, t)
    }
}

/// Half-line law by DP: stay in `[0, t]` from 0 and touch `t`.
pub fn halfline_range_law_dp(n: u64, t: u64) -> f64 {
    if t == 0 || t > n {
        return f64::NEG_INFINITY;
    }
    let sites = t as usize + 1;
    // forward mass: (position, touched top)
    let mut v = vec![[0.0f64; 2]; sites];
    v[0][0] = 1.0;
    let mut w = vec![[0.0f64; 2]; sites];
    let mut log_scale = 0.0;
    for _ in 0..n {
        w.iter_mut().for_each(|r| *r = [0.0; 2]);
        for p in 0..sites {
            for f in 0..2 {
                let m = v[p][f];
                if m == 0.0 {
                    continue;
                }
                for q in [p.wrapping_sub(1), p + 1] {
                    if q < sites {
                        let g = if q == sites - 1 { 1 } else { f };
                        w[q][g] += 0.5 * m;
                    }
                }
            }
        }
        std::mem::swap(&mut v, &mut w);
        let m = v.iter().flat_map(|r| r.iter()).copied().fold(0.0, f64::max);
        if m < 1e-200 && m > 0.0 {
            v.iter_mut().flat_map(|r| r.iter_mut()).for_each(|a| *a /= m);
            log_scale += m.ln();
        }
    }
    let total: f64 = v.iter().map(|r| r[1]).sum();
    if total > 0.0 {
        log_scale + total.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// All `2^n` paths; returns `P(R_n = [-x, y])` indexed by `(x, y)`.
pub fn enumerate_range_law(n: u32) -> Vec<Vec<f64>> {
    assert!(n <= 24, "enumeration limited to n ≤ 24");
    let size = n as usize + 1;
    let mut counts = vec![vec![0u64; size]; size];
    for bits in 0u64..(1u64 << n) {
        let (mut s, mut lo, mut hi) = (0i64, 0i64, 0i64);
        for k in 0..n {
            s += if bits >> k & 1 == 1 { 1 } else { -1 };
            lo = lo.min(s);
            hi = hi.max(s);
        }
        counts[(-lo) as usize][hi as usize] += 1;
    }
    let total = (1u64 << n) as f64;
    counts
        .into_iter()
        .map(|r| r.into_iter().map(|c| c as f64 / total).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// asymptotic kernel

/// Closed-form objects of the large-`n` analysis for penalty `h`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AsymptoticKernel {
    pub h: f64,
    pub n: f64,
}

impl AsymptoticKernel {
    pub fn new(n: f64, h: f64) -> Self {
        Self { h, n }
    }

    pub fn c_h(&self) -> f64 {
        c_h(self.h)
    }

    pub fn t_star(&self) -> f64 {
        self.c_h() * self.n.cbrt()
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.h * t + self.n * PI * PI / (2.0 * t * t)
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        self.h - self.n * PI * PI / (t * t * t)
    }

    pub fn psi_h(&self) -> f64 {
        (4.0 / PI) * (-self.h).exp() * self.h.exp_m1().powi(2)
    }
}

pub fn c_h(h: f64) -> f64 {
    (PI * PI / h).cbrt()
}

/// Largest range kept in disordered tables: `2 c_h n^{1/3} + 80/h`, capped
/// at `n`. Beyond it the weight `e^{-hT}` is at least 80 e-folds below the
/// optimum.
pub fn t_max_for(n: u64, h: f64) -> u64 {
    let t = 2.0 * c_h(h) * (n as f64).cbrt() + 80.0 / h;
    (t.ceil() as u64).min(n).max(1)
}

/// `-log cos(π/T)`.
pub fn g(t: f64) -> f64 {
    -(PI / t).cos().ln()
}

/// `log[(4/π)(e^h − 1)(e^h sin(π(x+1)/T) − sin(πx/T))] − n g(T)` with `T = x + y`.
pub fn theta_asymptotic(n: u64, h: f64, x: u64, y: u64) -> Result<f64, RangeError> {
    let t = x + y;
    if t < 3 {
        return Err(RangeError::SmallRange(t));
    }
    if x == 0 || x >= t {
        return Err(RangeError::Boundary { x, t });
    }
    let tf = t as f64;
    let xf = x as f64;
    let inner = h.exp() * (PI * (xf + 1.0) / tf).sin() - (PI * xf / tf).sin();
    let pre = 4.0 / PI * h.exp_m1() * inner;
    if pre <= 0.0 {
        return Err(RangeError::NonPositive { x, t });
    }
    Ok(pre.ln() - g(tf) * n as f64)
}

// ---------------------------------------------------------------------------
// tables

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WindowPolicy {
    /// Every feasible `T ≤ n`.
    Full,
    /// Explicit inclusive range of `T = x + y`.
    Range { t_min: u64, t_max: u64 },
    /// Grow a window around `c_h n^{1/3}` until the outside mass, measured
    /// under the tilt `e^{-h(T+1)}`, is at most `tol` relative to the inside.
    Centered { h: f64, tol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Auto,
    Spectral,
    Dp,
    Enumerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeLawTable {
    pub n: u64,
    pub t_min: u64,
    pub t_max: u64,
    /// `rows[T - t_min][x] = log P(R_n = [-x, T-x])`.
    pub rows: Vec<Vec<f64>>,
    /// Upper bound on the mass outside the window. Raw probability unless
    /// `tilt` is set, in which case it is relative mass under `e^{-h(T+1)}`.
    pub truncation_error: f64,
    pub tilt: Option<f64>,
    pub mode: Mode,
    /// Entries whose spectral combination was recomputed by DP.
    pub dp_fallbacks: u64,
}

impl RangeLawTable {
    pub fn get(&self, x: u64, y: u64) -> f64 {
        let t = x + y;
        if t < self.t_min || t > self.t_max {
            return f64::NEG_INFINITY;
        }
        self.rows[(t - self.t_min) as usize][x as usize]
    }

    pub fn row(&self, t: u64) -> Option<&[f64]> {
        if t < self.t_min || t > self.t_max {
            None
        } else {
            Some(&self.rows[(t - self.t_min) as usize])
        }
    }

    /// `(x, y, logp)` over the window, in order of increasing `T` then `x`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(i, r)| {
            let t = self.t_min + i as u64;
            r.iter().enumerate().map(move |(x, &lp)| (x as u64, t - x as u64, lp))
        })
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (_, _, lp) in self.iter() {
            acc.add(lp.exp());
        }
        acc.value()
    }
}

fn row(n: u64, t: u64, method: Method) -> (Vec<f64>, u64) {
    match method {
        Method::Dp => (range_row_dp(n, t), 0),
        Method::Spectral | Method::Auto => {
            let mut fallbacks = 0;
            let mut dp: Option<Vec<f64>> = None;
            let r = (0..=t)
                .map(|x| {
                    if !feasible(n, x, t - x) {
                        return f64::NEG_INFINITY;
                    }
                    match range_law_spectral(n, x, t - x) {
                        Some(v) => v,
                        None => {
                            fallbacks += 1;
                            dp.get_or_insert_with(|| range_row_dp(n, t))[x as usize]
                        }
                    }
                })
                .collect();
            (r, fallbacks)
        }
        Method::Enumerate => unreachable!(),
    }
}

fn resolve(n: u64, method: Method) -> Method {
    match method {
        Method::Auto if n <= DP_MAX_N => Method::Dp,
        Method::Auto => Method::Spectral,
        m => m,
    }
}

fn rows_for(n: u64, ts: &[u64], method: Method) -> (Vec<Vec<f64>>, u64) {
    let out: Vec<(Vec<f64>, u64)> = ts.par_iter().map(|&t| row(n, t, method)).collect();
    let fb = out.iter().map(|r| r.1).sum();
    (out.into_iter().map(|r| r.0).collect(), fb)
}

/// `log` of an upper bound on `P(T_n = t)` from the leading eigenvalue.
fn log_width_bound(n: u64, t: u64) -> f64 {
    let k = (t + 1) as f64;
    (1.5 * k.ln() + lead_log(n, t as usize + 1)).min(0.0)
}

pub fn build_table(n: u64, policy: &WindowPolicy) -> RangeLawTable {
    build_table_with(n, policy, Method::Auto)
}

pub fn build_table_with(n: u64, policy: &WindowPolicy, method: Method) -> RangeLawTable {
    assert!(n >= 1);
    if method == Method::Enumerate {
        return enumeration_table(n as u32);
    }
    let m = resolve(n, method);
    let mode = if m == Method::Dp { Mode::ExactDp } else { Mode::ExactSpectral };
    match *policy {
        WindowPolicy::Full => {
            let ts: Vec<u64> = (1..=n).collect();
            let (rows, fb) = rows_for(n, &ts, m);
            RangeLawTable {
                n,
                t_min: 1,
                t_max: n,
                rows,
                truncation_error: 0.0,
                tilt: None,
                mode,
                dp_fallbacks: fb,
            }
        }
        WindowPolicy::Range { t_min, t_max } => {
            let t_min = t_min.max(1);
            let t_max = t_max.min(n).max(t_min);
            let ts: Vec<u64> = (t_min..=t_max).collect();
            let (rows, fb) = rows_for(n, &ts, m);
            let lower: f64 = (1..t_min).map(|t| log_width_bound(n, t).exp()).sum();
            let upper = if t_max >= n {
                0.0
            } else {
                let a = (t_max + 1) as f64;
                (4.0 * (-a * a / (8.0 * n as f64)).exp()).min(1.0)
            };
            RangeLawTable {
                n,
                t_min,
                t_max,
                rows,
                truncation_error: (lower + upper).min(1.0),
                tilt: None,
                mode,
                dp_fallbacks: fb,
            }
        }
        WindowPolicy::Centered { h, tol } => centered(n, h, tol, m, mode),
    }
}

fn centered(n: u64, h: f64, tol: f64, m: Method, mode: Mode) -> RangeLawTable {
    let center = (c_h(h) * (n as f64).cbrt()).round().clamp(1.0, n as f64) as u64;
    let mut w = ((n as f64).powf(2.0 / 9.0).ceil() as u64).max(2);
    let tilted_row = |r: &[f64], t: u64| -> f64 {
        let lw = -h * (t + 1) as f64;
        crate::numeric::log_sum_exp(&r.iter().map(|lp| lp + lw).collect::<Vec<_>>())
    };
    let mut cache: std::collections::BTreeMap<u64, (Vec<f64>, u64, f64)> = Default::default();
    loop {
        let t_min = center.saturating_sub(w).max(1);
        let t_max = (center + w).min(n);
        let missing: Vec<u64> = (t_min..=t_max).filter(|t| !cache.contains_key(t)).collect();
        let fresh: Vec<(u64, Vec<f64>, u64)> = missing
            .par_iter()
            .map(|&t| {
                let (r, fb) = row(n, t, m);
                (t, r, fb)
            })
            .collect();
        for (t, r, fb) in fresh {
            let lz = tilted_row(&r, t);
            cache.insert(t, (r, fb, lz));
        }
        let inside = crate::numeric::log_sum_exp(
            &(t_min..=t_max).map(|t| cache[&t].2).collect::<Vec<_>>(),
        );
        let lower = crate::numeric::log_sum_exp(
            &(1..t_min)
                .map(|t| log_width_bound(n, t) - h * (t + 1) as f64)
                .collect::<Vec<_>>(),
        );
        let upper = if t_max >= n {
            f64::NEG_INFINITY
        } else if h > 0.0 {
            -h * (t_max + 2) as f64 - (-(-h).exp_m1()).ln()
        } else {
            let a = (t_max + 1) as f64;
            (4.0f64).ln() - a * a / (8.0 * n as f64)
        };
        let outside = crate::numeric::log_sum_exp(&[lower, upper]);
        let rel = (outside - inside).exp();
        let exhausted = t_min == 1 && t_max == n;
        if rel <= tol || exhausted {
            let mut rows = Vec::new();
            let mut fb = 0;
            for t in t_min..=t_max {
                let (r, f, _) = cache.remove(&t).unwrap();
                rows.push(r);
                fb += f;
            }
            return RangeLawTable {
                n,
                t_min,
                t_max,
                rows,
                truncation_error: if exhausted { 0.0 } else { rel },
                tilt: Some(h),
                mode,
                dp_fallbacks: fb,
            };
        }
        w = w + w / 2 + 1;
    }
}

fn enumeration_table(n: u32) -> RangeLawTable {
    let e = enumerate_range_law(n);
    let n64 = n as u64;
    let rows = (1..=n64)
        .map(|t| {
            (0..=t)
                .map(|x| {
                    let p = e[x as usize][(t - x) as usize];
                    if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }
                })
                .collect()
        })
        .collect();
    RangeLawTable {
        n: n64,
        t_min: 1,
        t_max: n64,
        rows,
        truncation_error: 0.0,
        tilt: None,
        mode: Mode::Enumeration,
        dp_fallbacks: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            return a == b;
        }
        (a - b).abs() <= tol
    }

    #[test]
    fn stay_small_cases() {
        assert!(close(stay_probability(1, 1, 1), 0.0, 1e-14));
        assert!(close(stay_probability(2, 0, 1), 0.25f64.ln(), 1e-13));
        assert!(close(stay_probability(4, 1, 1), 0.25f64.ln(), 1e-13));
        assert!(close(stay_probability(0, 0, 0), 0.0, 1e-14));
        assert_eq!(stay_probability(1, 0, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn range_small_cases() {
        assert!(close(exact_range_law(4, 0, 1), (1.0f64 / 16.0).ln(), 1e-13));
        assert!(close(exact_range_law(1, 1, 0), 0.5f64.ln(), 1e-14));
        assert_eq!(exact_range_law(2, 0, 0), f64::NEG_INFINITY);
        assert_eq!(exact_range_law(3, 2, 2), f64::NEG_INFINITY);
    }

    #[test]
    fn halfline_small_cases() {
        assert!(close(halfline_range_law(1, 1), 0.5f64.ln(), 1e-14));
        assert!(close(halfline_range_law(2, 1), 0.25f64.ln(), 1e-14));
        assert!(close(halfline_range_law(3, 1), 0.125f64.ln(), 1e-14));
        assert_eq!(halfline_range_law(2, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn min_steps_matches_closed_form() {
        for t in 0..12 {
            for x in 0..=t {
                let y = t - x;
                let expect = if t == 0 { 0 } else { t + x.min(y) };
                assert_eq!(min_steps_to_cover(x, t), Some(expect));
            }
        }
    }

    #[test]
    fn kernel_identities() {
        assert!((g(3.0) - 2f64.ln()).abs() < 1e-15);
        assert!((c_h(1.0) - 2.145029397111026).abs() < 1e-12);
        let k = AsymptoticKernel::new(1e6, 1.0);
        let ts = k.t_star();
        assert!((k.phi(ts) - 1.5 * ts).abs() / ts < 1e-12);
        assert!(k.phi_prime(ts).abs() < 1e-12);
        for t in 2..200 {
            let t = t as f64;
            assert!(g(t) >= PI * PI / (2.0 * t * t));
        }
    }

    #[test]
    fn theta_rejects_boundary() {
        assert!(matches!(theta_asymptotic(10, 1.0, 0, 5), Err(RangeError::Boundary { .. })));
        assert!(theta_asymptotic(10, 1.0, 2, 3).is_ok());
    }
}
