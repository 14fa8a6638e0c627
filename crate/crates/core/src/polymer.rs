//! Quenched partition functions and exact endpoint marginals of the free and
//! half-line polymers, with the expansion of `log Z` at scales `n^{1/3}`,
//! `n^{1/6}` and `n^{1/9}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::env::{prefix_sums, EnvError, Environment, PrefixSums};
use crate::numeric::{KahanSum, LogSumExp};
use crate::rangelaw::{self, c_h, RangeLawTable, WindowPolicy};
use crate::stats;
use crate::varprob::{CoupledLimitSystem, HalflineSystem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolymerParams {
    pub n: u64,
    pub h: f64,
    pub beta: f64,
}

impl PolymerParams {
    pub fn new(n: u64, h: f64, beta: f64) -> Result<Self, PolymerError> {
        let p = Self { n, h, beta };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), PolymerError> {
        if self.n == 0 {
            return Err(PolymerError::Params("n must be at least 1"));
        }
        if !(self.h > 0.0) {
            return Err(PolymerError::Params("h must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(PolymerError::Params("beta must be nonnegative"));
        }
        Ok(())
    }

    pub fn t_star(&self) -> f64 {
        c_h(self.h) * (self.n as f64).cbrt()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolymerError {
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("environment covers [-{have_x}, {have_y}], table needs [-{need}, {need}]")]
    Coverage { need: u64, have_x: u64, have_y: u64 },
    #[error("table built for n = {table}, parameters ask n = {params}")]
    TableMismatch { table: u64, params: u64 },
}

/// Table window used for a polymer at `(n, h)`: the whole law for small `n`,
/// a certified window around `c_h n^{1/3}` without disorder, and
/// `[1, t_max_for(n, h)]` with disorder.
pub fn default_policy(params: &PolymerParams) -> WindowPolicy {
    if params.n <= 200 {
        WindowPolicy::Full
    } else if params.beta == 0.0 {
        WindowPolicy::Centered { h: params.h, tol: 1e-12 }
    } else {
        WindowPolicy::Range {
            t_min: 1,
            t_max: rangelaw::t_max_for(params.n, params.h),
        }
    }
}

pub fn table_for(params: &PolymerParams) -> RangeLawTable {
    rangelaw::build_table(params.n, &default_policy(params))
}

/// Prefix sums of the zero field, long enough for ranges up to `t_max`.
pub fn zero_sums(t_max: u64) -> PrefixSums {
    let m = t_max as usize + 1;
    PrefixSums {
        sigma_minus: vec![0.0; m],
        sigma_plus: vec![0.0; m],
    }
}

fn check_inputs(table: &RangeLawTable, sums: &PrefixSums, params: &PolymerParams) -> Result<(), PolymerError> {
    params.check()?;
    if table.n != params.n {
        return Err(PolymerError::TableMismatch {
            table: table.n,
            params: params.n,
        });
    }
    if sums.max_x() < table.t_max || sums.max_y() < table.t_max {
        return Err(PolymerError::Coverage {
            need: table.t_max,
            have_x: sums.max_x(),
            have_y: sums.max_y(),
        });
    }
    Ok(())
}

/// `β Σ_{z=-x}^{y} ω_z - h(x+y+1) + log P(R_n = [-x, y])`.
#[inline]
fn log_weight(sums: &PrefixSums, params: &PolymerParams, x: u64, y: u64, logp: f64) -> f64 {
    if logp == f64::NEG_INFINITY {
        return logp;
    }
    let s = sums.sigma_minus[x as usize] + sums.sigma_plus[y as usize];
    params.beta * s - params.h * (x + y + 1) as f64 + logp
}

/// `log Z(A)` for the restriction `A = {(x, y) : restrict(x, y)}`.
pub fn log_partition<F: Fn(u64, u64) -> bool>(
    table: &RangeLawTable,
    sums: &PrefixSums,
    params: &PolymerParams,
    restrict: F,
) -> Result<f64, PolymerError> {
    check_inputs(table, sums, params)?;
    let mut acc = LogSumExp::new();
    for (x, y, lp) in table.iter() {
        if restrict(x, y) {
            acc.add(log_weight(sums, params, x, y, lp));
        }
    }
    Ok(acc.value())
}

/// `log Z` of a polymer in `env`, with the default table.
pub fn log_partition_env(env: &Environment, params: &PolymerParams) -> Result<f64, PolymerError> {
    let table = table_for(params);
    log_partition(&table, &prefix_sums(env)?, params, |_, _| true)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndpointMarginal {
    pub params: PolymerParams,
    pub t_min: u64,
    pub t_max: u64,
    /// `probs[T - t_min][x] = P(M_n^- = -x, M_n^+ = T - x)`.
    pub probs: Vec<Vec<f64>>,
    pub log_z: f64,
    /// Truncation certificate of the underlying table.
    pub truncation: f64,
    /// Marginal mass on the five largest ranges of the window, a direct
    /// check that the upper cut is negligible in this environment.
    pub edge_mass: f64,
}

pub fn endpoint_marginal(table: &RangeLawTable, sums: &PrefixSums, params: &PolymerParams) -> Result<EndpointMarginal, PolymerError> {
    let log_z = log_partition(table, sums, params, |_, _| true)?;
    let probs: Vec<Vec<f64>> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let t = table.t_min + i as u64;
            r.iter()
                .enumerate()
                .map(|(x, &lp)| (log_weight(sums, params, x as u64, t - x as u64, lp) - log_z).exp())
                .collect()
        })
        .collect();
    let mut edge = KahanSum::new();
    for r in probs.iter().rev().take(5) {
        r.iter().for_each(|&p| edge.add(p));
    }
    let edge_mass = if table.t_max >= params.n { 0.0 } else { edge.value() };
    Ok(EndpointMarginal {
        params: *params,
        t_min: table.t_min,
        t_max: table.t_max,
        probs,
        log_z,
        truncation: table.truncation_error,
        edge_mass,
    })
}

impl EndpointMarginal {
    pub fn prob(&self, x: u64, y: u64) -> f64 {
        let t = x + y;
        if t < self.t_min || t > self.t_max {
            return 0.0;
        }
        self.probs[(t - self.t_min) as usize][x as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.probs.iter().enumerate().flat_map(move |(i, r)| {
            let t = self.t_min + i as u64;
            r.iter().enumerate().map(move |(x, &p)| (x as u64, t - x as u64, p))
        })
    }

    pub fn mass<F: Fn(u64, u64) -> bool>(&self, pred: F) -> f64 {
        let mut acc = KahanSum::new();
        for (x, y, p) in self.iter() {
            if pred(x, y) {
                acc.add(p);
            }
        }
        acc.value()
    }

    pub fn total(&self) -> f64 {
        self.mass(|_, _| true)
    }

    /// `(T, P(T_n = T))` over the window.
    pub fn t_law(&self) -> Vec<(u64, f64)> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut acc = KahanSum::new();
                r.iter().for_each(|&p| acc.add(p));
                (self.t_min + i as u64, acc.value())
            })
            .collect()
    }

    /// `P(M_n^- = -x)` indexed by `x`.
    pub fn minus_law(&self) -> Vec<f64> {
        let mut out = vec![KahanSum::new(); self.t_max as usize + 1];
        for (x, _, p) in self.iter() {
            out[x as usize].add(p);
        }
        out.iter().map(|a| a.value()).collect()
    }

    /// `P(M_n^+ = y)` indexed by `y`.
    pub fn plus_law(&self) -> Vec<f64> {
        let mut out = vec![KahanSum::new(); self.t_max as usize + 1];
        for (_, y, p) in self.iter() {
            out[y as usize].add(p);
        }
        out.iter().map(|a| a.value()).collect()
    }

    /// `(Δ, P(Δ_n = Δ))` with `Δ = T - T_n*`.
    pub fn delta_law(&self) -> Vec<(f64, f64)> {
        let ts = self.params.t_star();
        self.t_law().into_iter().map(|(t, p)| (t as f64 - ts, p)).collect()
    }

    pub fn mean_t(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (t, p) in self.t_law() {
            acc.add(t as f64 * p);
        }
        acc.value() / self.total()
    }

    /// Smallest `T` with `P(T_n ≤ T) ≥ q`.
    pub fn quantile_t(&self, q: f64) -> u64 {
        let total = self.total();
        let mut acc = 0.0;
        for (t, p) in self.t_law() {
            acc += p;
            if acc >= q * total {
                return t;
            }
        }
        self.t_max
    }

    /// Most likely `(x, y)`, ties to the smallest `T` then `x`.
    pub fn mode(&self) -> (u64, u64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (x, y, p) in self.iter() {
            if p > best.2 {
                best = (x, y, p);
            }
        }
        (best.0, best.1)
    }

    /// Mass of the box `|x - xc| ≤ r`, `|y - yc| ≤ r`.
    pub fn mass_near(&self, xc: f64, yc: f64, r: f64) -> f64 {
        self.mass(|x, y| (x as f64 - xc).abs() <= r && (y as f64 - yc).abs() <= r)
    }
}

/// `P(|M_n^- + u* n^{1/3}| ≤ ε n^{1/3}, |Δ_n| ≤ ε n^{1/3})`.
pub fn endpoint_localization(m: &EndpointMarginal, u_star: f64, eps: f64) -> f64 {
    let s = (m.params.n as f64).cbrt();
    let ts = m.params.t_star();
    m.mass(|x, y| (x as f64 - u_star * s).abs() <= eps * s && ((x + y) as f64 - ts).abs() <= eps * s)
}

// ---------------------------------------------------------------------------
// homogeneous model

/// `(1/√3) (π² n / h⁴)^{1/6}`.
pub fn a_n(n: u64, h: f64) -> f64 {
    (PI * PI * n as f64 / h.powi(4)).powf(1.0 / 6.0) / 3f64.sqrt()
}

/// Total variation between the lattice law `p[x] = P(|M| = x)` scaled by
/// `t_star` and the density `(π/2) sin(πv)` on `[0, 1]`, comparing each atom
/// with the mass of `[(x-½)/t_star, (x+½)/t_star] ∩ [0, 1]`.
pub fn tv_to_sine(p: &[f64], t_star: f64) -> f64 {
    let cdf = |v: f64| 0.5 * (1.0 - (PI * v.clamp(0.0, 1.0)).cos());
    let mut acc = KahanSum::new();
    let mut covered = 0.0;
    for (x, &px) in p.iter().enumerate() {
        let a = (x as f64 - 0.5) / t_star;
        let b = (x as f64 + 0.5) / t_star;
        let q = cdf(b) - cdf(a);
        covered = cdf(b);
        acc.add((px - q).abs());
    }
    0.5 * (acc.value() + (1.0 - covered))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogeneousReport {
    pub n: u64,
    pub h: f64,
    pub t_star: f64,
    pub a_n: f64,
    pub mean_t: f64,
    /// KS distance between the law of `Δ_n / a_n` and `N(0, 1)`.
    pub ks_delta: f64,
    /// Total variation of `|M_n^-| / T_n*` against `(π/2) sin(πv) dv`.
    pub tv_minus: f64,
    pub log_z: f64,
    pub f1: f64,
    pub truncation: f64,
}

pub fn homogeneous_fluctuations(n: u64, h: f64) -> Result<HomogeneousReport, PolymerError> {
    let params = PolymerParams::new(n, h, 0.0)?;
    let table = table_for(&params);
    let m = endpoint_marginal(&table, &zero_sums(table.t_max), &params)?;
    Ok(homogeneous_from(&m))
}

pub fn homogeneous_from(m: &EndpointMarginal) -> HomogeneousReport {
    let p = m.params;
    let an = a_n(p.n, p.h);
    let atoms: Vec<(f64, f64)> = m.delta_law().into_iter().map(|(d, q)| (d / an, q)).collect();
    HomogeneousReport {
        n: p.n,
        h: p.h,
        t_star: p.t_star(),
        a_n: an,
        mean_t: m.mean_t(),
        ks_delta: stats::ks_discrete(&atoms, crate::numeric::norm_cdf),
        tv_minus: tv_to_sine(&m.minus_law(), p.t_star()),
        log_z: m.log_z,
        f1: m.log_z / (p.n as f64).cbrt(),
        truncation: m.truncation,
    }
}

// ---------------------------------------------------------------------------
// expansion

/// `-(3/2) (π h)^{2/3}`, the first-order constant.
pub fn f1_limit(h: f64) -> f64 {
    -1.5 * (PI * h).powf(2.0 / 3.0)
}

fn beta_or_one(beta: f64) -> f64 {
    if beta > 0.0 {
        beta
    } else {
        1.0
    }
}

/// `(log Z + (3/2) h c_h n^{1/3}) / (β n^{1/6})`; without disorder the
/// division is by `n^{1/6}` alone.
pub fn residual2(log_z: f64, n: u64, h: f64, beta: f64) -> f64 {
    let nf = n as f64;
    (log_z + 1.5 * h * c_h(h) * nf.cbrt()) / (beta_or_one(beta) * nf.powf(1.0 / 6.0))
}

/// `√2 (log Z + (3/2) h c_h n^{1/3} - β n^{1/6} X_{u*}) / (β n^{1/9})`.
pub fn residual3(log_z: f64, n: u64, h: f64, beta: f64, x_star: f64) -> f64 {
    let nf = n as f64;
    2f64.sqrt() * (log_z + 1.5 * h * c_h(h) * nf.cbrt() - beta * nf.powf(1.0 / 6.0) * x_star)
        / (beta_or_one(beta) * nf.powf(1.0 / 9.0))
}

/// Window schedule `ε_n = max(n^{-1/9} log n, 20 n^{-1/3})`.
pub fn eps_n(n: u64) -> f64 {
    let nf = n as f64;
    (nf.powf(-1.0 / 9.0) * nf.ln()).max(20.0 * nf.powf(-1.0 / 3.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub n: u64,
    pub replica: u64,
    pub log_z: f64,
    pub residual2: f64,
    pub residual3: f64,
    /// `X_{u*}`, the grid maximum of the first-order profile.
    pub ref_sup: f64,
    pub ref_w2: Option<f64>,
    pub u_star: f64,
    pub eps_n: f64,
    /// `Z(window) / Z` for the `ε_n` window around `(u*, c_h - u*) n^{1/3}`.
    pub window_mass: f64,
    pub edge_mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub h: f64,
    pub beta: f64,
    pub rows: Vec<ExpansionRow>,
}

impl ExpansionReport {
    /// `(n, mean over replicas of n^{-1/3} log Z)`.
    pub fn f1_sequence(&self) -> Vec<(u64, f64)> {
        let mut ns: Vec<u64> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.into_iter()
            .map(|n| {
                let v: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.log_z / (n as f64).cbrt())
                    .collect();
                (n, stats::mean(&v))
            })
            .collect()
    }

    pub fn rows_at(&self, n: u64) -> Vec<&ExpansionRow> {
        self.rows.iter().filter(|r| r.n == n).collect()
    }
}

/// One row of the expansion for a coupled environment: `log Z`, both
/// residuals and their references.
pub fn expansion_row(
    table: &RangeLawTable,
    sys: &CoupledLimitSystem,
    env: &Environment,
    params: &PolymerParams,
    w2: Option<f64>,
    replica: u64,
) -> Result<ExpansionRow, PolymerError> {
    let m = endpoint_marginal(table, &prefix_sums(env)?, params)?;
    Ok(expansion_row_from(&m, sys, w2, replica))
}

pub fn expansion_row_from(m: &EndpointMarginal, sys: &CoupledLimitSystem, w2: Option<f64>, replica: u64) -> ExpansionRow {
    let p = m.params;
    let s = (p.n as f64).cbrt();
    let eps = eps_n(p.n);
    let xc = sys.u_star_grid() * s;
    let yc = (sys.c_tilde - sys.u_star_grid()) * s;
    let window_mass = m.mass(|x, y| (x as f64 - xc).abs() <= eps * s && (y as f64 - yc).abs() <= eps * s);
    let x_star = sys.x_star();
    ExpansionRow {
        n: p.n,
        replica,
        log_z: m.log_z,
        residual2: residual2(m.log_z, p.n, p.h, p.beta),
        residual3: residual3(m.log_z, p.n, p.h, p.beta, x_star),
        ref_sup: x_star,
        ref_w2: w2,
        u_star: sys.u_star_grid(),
        eps_n: eps,
        window_mass,
        edge_mass: m.edge_mass,
    }
}

// ---------------------------------------------------------------------------
// heavy-tailed fields

/// Range tables at `T_max = t_0 2^k`, built on first use and shared across
/// replicas.
pub struct TableLadder {
    pub n: u64,
    pub reach: u64,
    base: u64,
    levels: Vec<std::sync::OnceLock<RangeLawTable>>,
}

impl TableLadder {
    pub fn new(params: &PolymerParams, reach: u64) -> Self {
        let base = rangelaw::t_max_for(params.n, params.h);
        let reach = reach.min(params.n).max(base);
        let mut k = 1;
        while base << (k - 1) < reach {
            k += 1;
        }
        Self {
            n: params.n,
            reach,
            base,
            levels: (0..k).map(|_| std::sync::OnceLock::new()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, k: usize) -> &RangeLawTable {
        self.levels[k].get_or_init(|| {
            let t_max = (self.base << k).min(self.reach);
            rangelaw::build_table(self.n, &WindowPolicy::Range { t_min: 1, t_max })
        })
    }
}

/// Endpoint marginal on the first ladder table whose edge mass is at most
/// `tol`. A single large site far from the origin can pull the whole polymer
/// out, so the default window is not enough for heavy-tailed fields.
pub fn adaptive_marginal(ladder: &TableLadder, sums: &PrefixSums, params: &PolymerParams, tol: f64) -> Result<EndpointMarginal, PolymerError> {
    let mut k = 0;
    loop {
        let m = endpoint_marginal(ladder.level(k), sums, params)?;
        if m.edge_mass <= tol || k + 1 == ladder.len() {
            return Ok(m);
        }
        k += 1;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentRow {
    pub n: u64,
    pub replica: u64,
    pub seed: u64,
    pub log_z: f64,
    /// `log Z + (3/2) h c_h n^{1/3}`.
    pub centered: f64,
    pub t_max: u64,
    pub edge_mass: f64,
}

/// Half-width of the field drawn for a heavy-tailed run at `n`.
pub fn heavy_window(n: u64, h: f64) -> u64 {
    (4 * rangelaw::t_max_for(n, h)).min(n)
}

pub fn exponent_row(ladder: &TableLadder, env: &Environment, params: &PolymerParams, replica: u64) -> Result<ExponentRow, PolymerError> {
    let m = adaptive_marginal(ladder, &prefix_sums(env)?, params, 1e-9)?;
    Ok(exponent_row_from(&m, env.seed, replica))
}

pub fn exponent_row_from(m: &EndpointMarginal, seed: u64, replica: u64) -> ExponentRow {
    let p = m.params;
    ExponentRow {
        n: p.n,
        replica,
        seed,
        log_z: m.log_z,
        centered: m.log_z + 1.5 * p.h * c_h(p.h) * (p.n as f64).cbrt(),
        t_max: m.t_max,
        edge_mass: m.edge_mass,
    }
}

/// Slope of `log IQR(centered)` against `log n`, one group per `n`.
pub fn iqr_slope(rows: &[ExponentRow]) -> stats::LinearFit {
    let mut ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let (lx, ly): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.centered).collect();
            let iqr = stats::quantile(&v, 0.75) - stats::quantile(&v, 0.25);
            ((n as f64).ln(), iqr.ln())
        })
        .unzip();
    stats::linear_fit(&lx, &ly)
}

// ---------------------------------------------------------------------------
// half-line model

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalflineTable {
    pub n: u64,
    pub t_max: u64,
    /// `logp[T - 1] = log P(S ≥ 0 up to n, max S = T)`.
    pub logp: Vec<f64>,
}

pub fn halfline_table(n: u64, t_max: u64) -> HalflineTable {
    use rayon::prelude::*;
    let t_max = t_max.min(n).max(1);
    let logp = (1..=t_max).into_par_iter().map(|t| rangelaw::halfline_range_law(n, t)).collect();
    HalflineTable { n, t_max, logp }
}

pub fn halfline_table_for(params: &PolymerParams) -> HalflineTable {
    halfline_table(params.n, rangelaw::t_max_for(params.n, params.h))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalflineMarginal {
    pub params: PolymerParams,
    /// `probs[T - 1] = P(M_n^+ = T)`.
    pub probs: Vec<f64>,
    pub log_z: f64,
    /// Bound on the mass above the window under the tilt `e^{-hT}`, ignoring
    /// the field.
    pub truncation: f64,
    pub edge_mass: f64,
}

/// `-h T + β Σ_{i=0}^{T} ω_i + log P(...)`.
fn halfline_weights(table: &HalflineTable, sums: &PrefixSums, params: &PolymerParams) -> Result<Vec<f64>, PolymerError> {
    params.check()?;
    if table.n != params.n {
        return Err(PolymerError::TableMismatch {
            table: table.n,
            params: params.n,
        });
    }
    if sums.max_y() < table.t_max {
        return Err(PolymerError::Coverage {
            need: table.t_max,
            have_x: sums.max_x(),
            have_y: sums.max_y(),
        });
    }
    Ok(table
        .logp
        .iter()
        .enumerate()
        .map(|(i, &lp)| {
            let t = i + 1;
            if lp == f64::NEG_INFINITY {
                lp
            } else {
                params.beta * sums.sigma_plus[t] - params.h * t as f64 + lp
            }
        })
        .collect())
}

pub fn halfline_partition(table: &HalflineTable, sums: &PrefixSums, params: &PolymerParams) -> Result<f64, PolymerError> {
    Ok(crate::numeric::log_sum_exp(&halfline_weights(table, sums, params)?))
}

pub fn halfline_marginal(table: &HalflineTable, sums: &PrefixSums, params: &PolymerParams) -> Result<HalflineMarginal, PolymerError> {
    let w = halfline_weights(table, sums, params)?;
    let log_z = crate::numeric::log_sum_exp(&w);
    let probs: Vec<f64> = w.iter().map(|v| (v - log_z).exp()).collect();
    let full = table.t_max >= params.n;
    let truncation = if full {
        0.0
    } else {
        let h = params.h;
        ((-h * (table.t_max + 1) as f64 - (-(-h).exp_m1()).ln()) - log_z).exp().min(1.0)
    };
    let edge_mass = if full { 0.0 } else { probs.iter().rev().take(5).sum() };
    Ok(HalflineMarginal {
        params: *params,
        probs,
        log_z,
        truncation,
        edge_mass,
    })
}

impl HalflineMarginal {
    pub fn prob(&self, t: u64) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.probs.get(t as usize - 1).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalLimitRow {
    pub k: i64,
    pub t: u64,
    pub pmf: f64,
    /// `n^{1/9} (Y_{s*} - Y_s)` at the site.
    pub gap: f64,
    /// `e^{-β gap} / θ`.
    pub predicted: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalLimitReport {
    pub n: u64,
    pub s_star: f64,
    /// `⌊s* n^{2/9}⌋`.
    pub shift: i64,
    pub theta: f64,
    pub rows: Vec<LocalLimitRow>,
    /// Mass of the marginal outside the reported window.
    pub tail_mass: f64,
    /// Pearson correlation of `log pmf` with `-β gap`.
    pub correlation: f64,
}

/// Exact pmf of `M_n^+` around `N + ⌊s* n^{2/9}⌋` next to the profile
/// `e^{-β gap}/θ` predicted from the zoomed path. Report only.
pub fn local_limit_probe(m: &HalflineMarginal, sys: &HalflineSystem, half_width: i64) -> LocalLimitReport {
    let n = m.params.n;
    let shift = (sys.s_star.point() * (n as f64).powf(2.0 / 9.0)).floor() as i64;
    let center = sys.big_n as i64 + shift;
    let mut rows = Vec::new();
    for k in -half_width..=half_width {
        let t = center + k;
        if t < 1 || t as u64 > m.probs.len() as u64 {
            continue;
        }
        let Some(gap) = sys.gap(t as usize) else { continue };
        rows.push(LocalLimitRow {
            k,
            t: t as u64,
            pmf: m.prob(t as u64),
            gap,
            predicted: 0.0,
        });
    }
    let beta = m.params.beta;
    let mut theta = KahanSum::new();
    rows.iter().for_each(|r| theta.add((-beta * r.gap).exp()));
    let theta = theta.value();
    rows.iter_mut().for_each(|r| r.predicted = (-beta * r.gap).exp() / theta);
    let inside: f64 = rows.iter().map(|r| r.pmf).sum();
    let (lp, g): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.pmf > 0.0)
        .map(|r| (r.pmf.ln(), -beta * r.gap))
        .unzip();
    LocalLimitReport {
        n,
        s_star: sys.s_star.point(),
        shift,
        theta,
        rows,
        tail_mass: (1.0 - inside).max(0.0),
        correlation: if lp.len() >= 3 { stats::pearson(&lp, &g) } else { f64::NAN },
    }
}
