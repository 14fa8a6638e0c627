//! The acceptance table: eleven criteria evaluated from seeded runs against
//! thresholds kept in a versioned defaults file.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::experiments::{self, ChernoffConfig, CoupledConfig, CouplingConfig, ExperimentError, HalflineConfig, ProcessConfig, StableConfig};
use crate::polymer::{self, PolymerParams};
use crate::rangelaw;
use crate::stats;

pub const DEFAULTS: &str = include_str!("../data/acceptance-defaults.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub exact_n_max: u32,
    pub exact_tol: f64,
    pub first_order_n: u64,
    pub first_order_rel_tol: f64,
    pub homogeneous_n: u64,
    pub homogeneous_tv_max: f64,
    pub homogeneous_ks_max: f64,
    pub second_corr_min: f64,
    pub second_slope_target: f64,
    pub second_slope_halfwidth: f64,
    pub third_corr_min: f64,
    pub third_positive_min: f64,
    pub localization_mass_min: f64,
    pub localization_replicas_min: f64,
    pub rayleigh_ks_max: f64,
    pub two_sample_p_min: f64,
    pub excursion_mid_ks_max: f64,
    pub tau_rel_tol: f64,
    pub epsilon_positive_min: f64,
    pub stable_slope_halfwidth: f64,
    pub chernoff_mean_se_max: f64,
    pub chernoff_drift_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceConfig {
    pub version: u32,
    pub thresholds: Thresholds,
    pub h: f64,
    pub coupled: CoupledConfig,
    pub stable: StableConfig,
    pub chernoff: ChernoffConfig,
    pub halfline: HalflineConfig,
    pub processes: ProcessConfig,
    pub couplings: CouplingConfig,
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

impl AcceptanceConfig {
    pub fn defaults() -> Self {
        serde_json::from_str(DEFAULTS).expect("bundled acceptance defaults parse")
    }

    /// Defaults with `patch` merged key by key. Unknown keys are rejected.
    pub fn with_overrides(patch: &Value) -> Result<Self, serde_json::Error> {
        let mut v: Value = serde_json::from_str(DEFAULTS)?;
        merge(&mut v, patch);
        serde_json::from_value(v)
    }

    /// Every master seed in the config, by run.
    pub fn seeds(&self) -> BTreeMap<&'static str, u64> {
        BTreeMap::from([
            ("coupled", self.coupled.seed),
            ("stable", self.stable.seed),
            ("chernoff", self.chernoff.seed),
            ("halfline", self.halfline.seed),
            ("processes", self.processes.seed),
            ("couplings", self.couplings.seed),
        ])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    /// `None` for report-only criteria.
    pub pass: Option<bool>,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CriterionResult {
    pub fn verdict(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "REPORT",
        }
    }

    pub fn line(&self) -> String {
        format!("criterion {:>2} {:<22} {}  {}", self.id, self.name, self.verdict(), self.summary)
    }
}

fn result(id: u8, name: &str, pass: Option<bool>, summary: String, metrics: &[(&str, f64)]) -> CriterionResult {
    CriterionResult {
        id,
        name: name.to_string(),
        pass,
        summary,
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

pub fn exact_law(t: &Thresholds) -> CriterionResult {
    let mut worst = 0f64;
    let mut cells = 0u64;
    for n in 1..=t.exact_n_max {
        let e = rangelaw::enumerate_range_law(n);
        for (x, row) in e.iter().enumerate() {
            for (y, &p) in row.iter().enumerate() {
                let q = rangelaw::exact_range_law(n as u64, x as u64, y as u64).exp();
                worst = worst.max((p - q).abs());
                cells += 1;
            }
        }
    }
    result(
        1,
        "exact range law",
        Some(worst <= t.exact_tol),
        format!("max |exact - enumeration| = {worst:.2e} over {cells} cells, n <= {}", t.exact_n_max),
        &[("max_abs_diff", worst), ("cells", cells as f64)],
    )
}

pub fn first_order(t: &Thresholds, h: f64) -> Result<CriterionResult, ExperimentError> {
    let params = PolymerParams::new(t.first_order_n, h, 0.0)?;
    let table = polymer::table_for(&params);
    let log_z = polymer::log_partition(&table, &polymer::zero_sums(table.t_max), &params, |_, _| true)?;
    let f1 = log_z / (t.first_order_n as f64).cbrt();
    let target = -1.5 * (PI * h).powf(2.0 / 3.0);
    let rel = ((f1 - target) / target).abs();
    Ok(result(
        2,
        "first order",
        Some(rel <= t.first_order_rel_tol),
        format!("n^(-1/3) log Z = {f1:.5} vs {target:.5} (rel {rel:.4})"),
        &[("f1", f1), ("target", target), ("rel_err", rel)],
    ))
}

pub fn homogeneous(t: &Thresholds, h: f64) -> Result<CriterionResult, ExperimentError> {
    let r = polymer::homogeneous_fluctuations(t.homogeneous_n, h)?;
    let pass = r.tv_minus <= t.homogeneous_tv_max && r.ks_delta <= t.homogeneous_ks_max;
    Ok(result(
        3,
        "homogeneous endpoints",
        Some(pass),
        format!("TV(|M-|/T*, sine) = {:.4}, KS(Delta/a_n, N(0,1)) = {:.4}", r.tv_minus, r.ks_delta),
        &[("tv_minus", r.tv_minus), ("ks_delta", r.ks_delta), ("a_n", r.a_n)],
    ))
}

fn col(rows: &[&polymer::ExpansionRow], f: impl Fn(&polymer::ExpansionRow) -> f64) -> Vec<f64> {
    rows.iter().map(|r| f(r)).collect()
}

pub fn second_order(t: &Thresholds, run: &experiments::CoupledRun) -> CriterionResult {
    let ex = &run.expansion;
    let mut ns: Vec<u64> = ex.rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let mut ln = Vec::new();
    let mut lmed = Vec::new();
    let mut meds = Vec::new();
    for &n in &ns {
        let rows = ex.rows_at(n);
        let d: Vec<f64> = rows.iter().map(|r| (r.residual2 - r.ref_sup).abs()).collect();
        let m = stats::median(&d);
        meds.push(m);
        ln.push((n as f64).ln());
        lmed.push(m.ln());
    }
    let top = ex.rows_at(*ns.last().unwrap());
    let corr = stats::pearson(&col(&top, |r| r.residual2), &col(&top, |r| r.ref_sup));
    let fit = stats::linear_fit(&ln, &lmed);
    let decreasing = meds.windows(2).all(|w| w[1] < w[0]);
    let (lo, hi) = (t.second_slope_target - t.second_slope_halfwidth, t.second_slope_target + t.second_slope_halfwidth);
    let slope_ok = fit.slope + fit.slope_ci95 >= lo && fit.slope - fit.slope_ci95 <= hi;
    let meds_s: Vec<String> = meds.iter().map(|m| format!("{m:.3}")).collect();
    result(
        4,
        "second order",
        Some(corr >= t.second_corr_min && decreasing && slope_ok),
        format!(
            "corr = {corr:.4}; median |r2 - sup| = [{}]; slope = {:.4} +- {:.4} vs [{lo:.4}, {hi:.4}]",
            meds_s.join(", "),
            fit.slope,
            fit.slope_ci95
        ),
        &[("corr", corr), ("slope", fit.slope), ("slope_ci95", fit.slope_ci95)],
    )
}

pub fn third_order(t: &Thresholds, run: &experiments::CoupledRun) -> CriterionResult {
    let ex = &run.expansion;
    let n = ex.rows.iter().map(|r| r.n).max().unwrap();
    let top = ex.rows_at(n);
    let w2: Vec<f64> = top
        .iter()
        .map(|r| run.w2.iter().find(|w| w.replica == r.replica).map_or(f64::NAN, |w| w.value))
        .collect();
    let corr = stats::pearson(&col(&top, |r| r.residual3), &w2);
    let k = run.w2.len() as f64;
    let positive = run.w2.iter().filter(|w| w.value > 0.0).count() as f64 / k;
    let stable = run.w2.iter().filter(|w| w.stabilized).count() as f64 / k;
    result(
        5,
        "third order",
        Some(corr >= t.third_corr_min && positive >= t.third_positive_min),
        format!("corr(r3, W2) = {corr:.4} at n = {n}; W2 > 0 in {:.1}%; stabilized in {:.1}%", 100.0 * positive, 100.0 * stable),
        &[("corr", corr), ("positive", positive), ("stabilized", stable)],
    )
}

pub fn localization(t: &Thresholds, run: &experiments::CoupledRun) -> CriterionResult {
    let n = run.localization.iter().map(|r| r.n).max().unwrap();
    let top: Vec<_> = run.localization.iter().filter(|r| r.n == n).collect();
    let frac = top.iter().filter(|r| r.mass_eps >= t.localization_mass_min).count() as f64 / top.len() as f64;
    let mono = run.localization.iter().filter(|r| r.mass_k.windows(2).all(|w| w[1] >= w[0])).count();
    let all = run.localization.len();
    let med = stats::median(&top.iter().map(|r| r.mass_eps).collect::<Vec<_>>());
    result(
        6,
        "endpoint localization",
        Some(frac >= t.localization_replicas_min && mono == all),
        format!(
            "mass >= {} in {:.0}% of replicas at n = {n} (median mass {med:.3}); monotone in K in {mono}/{all}",
            t.localization_mass_min,
            100.0 * frac
        ),
        &[("fraction", frac), ("median_mass", med), ("monotone", mono as f64)],
    )
}

pub fn processes(t: &Thresholds, r: &experiments::ProcessReport) -> CriterionResult {
    let p_min = r.kernel_vs_excursion.iter().map(|s| s.p_value).fold(f64::INFINITY, f64::min);
    let failed: Vec<&str> = r.bounds.iter().filter(|b| !b.holds).map(|b| b.name.as_str()).collect();
    let pass = r.rayleigh_ks <= t.rayleigh_ks_max
        && p_min >= t.two_sample_p_min
        && r.excursion_mid_ks <= t.excursion_mid_ks_max
        && failed.is_empty();
    result(
        7,
        "process toolkit",
        Some(pass),
        format!(
            "Rayleigh KS = {:.4}; kernel vs excursion min p = {p_min:.3}; midpoint KS = {:.4}; bounds {}/{} hold{}",
            r.rayleigh_ks,
            r.excursion_mid_ks,
            r.bounds.len() - failed.len(),
            r.bounds.len(),
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) }
        ),
        &[("rayleigh_ks", r.rayleigh_ks), ("min_p", p_min), ("mid_ks", r.excursion_mid_ks), ("bounds_failed", failed.len() as f64)],
    )
}

pub fn couplings(t: &Thresholds, r: &experiments::CouplingReport) -> CriterionResult {
    let rels: Vec<f64> = r.embeddings.iter().map(|e| (e.mean_tau / e.second_moment - 1.0).abs()).collect();
    let frac = r.positive as f64 / r.runs as f64;
    let pass = rels.iter().all(|&x| x <= t.tau_rel_tol) && frac >= t.epsilon_positive_min;
    let parts: Vec<String> = r
        .embeddings
        .iter()
        .zip(&rels)
        .map(|(e, rel)| format!("{}: E[tau] = {:.5} vs {:.5} (rel {rel:.4})", tag(&e.law), e.mean_tau, e.second_moment))
        .collect();
    result(
        8,
        "couplings",
        Some(pass),
        format!("{}; eps > 0 in {}/{} runs", parts.join("; "), r.positive, r.runs),
        &[("two_point_rel", rels[0]), ("uniform_rel", rels[1]), ("eps_positive", frac)],
    )
}

fn tag(law: &crate::env::TargetLaw) -> &'static str {
    match law {
        crate::env::TargetLaw::Degenerate => "degenerate",
        crate::env::TargetLaw::TwoPoint => "two-point",
        crate::env::TargetLaw::Uniform { .. } => "uniform",
        crate::env::TargetLaw::Gaussian => "gaussian",
    }
}

pub fn stable_scaling(t: &Thresholds, cfg: &StableConfig, rows: &[polymer::ExponentRow]) -> CriterionResult {
    let fit = polymer::iqr_slope(rows);
    let target = 1.0 / (3.0 * cfg.alpha);
    let extended = rows.iter().filter(|r| r.t_max > rangelaw::t_max_for(r.n, cfg.h)).count();
    let worst_edge = rows.iter().map(|r| r.edge_mass).fold(0.0, f64::max);
    result(
        9,
        "stable scaling",
        Some((fit.slope - target).abs() <= t.stable_slope_halfwidth),
        format!(
            "slope of log IQR = {:.4} (CI +- {:.4}) vs {target:.4} +- {}; {extended} windows widened; max edge mass {worst_edge:.1e}",
            fit.slope, fit.slope_ci95, t.stable_slope_halfwidth
        ),
        &[("slope", fit.slope), ("slope_ci95", fit.slope_ci95), ("target", target), ("max_edge_mass", worst_edge)],
    )
}

pub fn chernoff(t: &Thresholds, rows: &[experiments::ChernoffRow]) -> CriterionResult {
    let a: Vec<f64> = rows.iter().map(|r| r.s_star).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.s_star_fine).collect();
    let (mean, se) = (stats::mean(&a), stats::std_error(&a));
    let (mean_f, se_f) = (stats::mean(&b), stats::std_error(&b));
    let m2 = |v: &[f64]| stats::mean(&v.iter().map(|x| x * x).collect::<Vec<_>>());
    let (m2a, m2b) = (m2(&a), m2(&b));
    let drift = (m2b / m2a - 1.0).abs();
    let pass = mean.abs() <= t.chernoff_mean_se_max * se && mean_f.abs() <= t.chernoff_mean_se_max * se_f && drift < t.chernoff_drift_max;
    result(
        10,
        "Chernoff argmax",
        Some(pass),
        format!("mean s* = {mean:.5} (s.e. {se:.5}); E[s*^2] = {m2a:.5} -> {m2b:.5} refined (drift {drift:.4})"),
        &[("mean", mean), ("se", se), ("m2", m2a), ("m2_fine", m2b), ("drift", drift)],
    )
}

pub fn local_limit(rows: &[experiments::HalflineRow]) -> CriterionResult {
    let mut ns: Vec<u64> = rows.iter().map(|r| r.report.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut metrics = Vec::new();
    let parts: Vec<String> = ns
        .iter()
        .map(|&n| {
            let c: Vec<f64> = rows.iter().filter(|r| r.report.n == n && r.report.correlation.is_finite()).map(|r| r.report.correlation).collect();
            let m = stats::mean(&c);
            metrics.push((n, m));
            format!("n = {n}: mean corr {m:.3}")
        })
        .collect();
    let names: Vec<String> = metrics.iter().map(|(n, _)| format!("corr_{n}")).collect();
    let kv: Vec<(&str, f64)> = names.iter().zip(&metrics).map(|(k, (_, m))| (k.as_str(), *m)).collect();
    result(11, "local-limit probe", None, parts.join("; "), &kv)
}

/// Runs the criteria in `ids` (all when empty), in order.
pub fn run(cfg: &AcceptanceConfig, ids: &[u8]) -> Result<Vec<CriterionResult>, ExperimentError> {
    let want = |i: u8| ids.is_empty() || ids.contains(&i);
    let t = &cfg.thresholds;
    let mut out = Vec::new();
    if want(1) {
        out.push(exact_law(t));
    }
    if want(2) {
        out.push(first_order(t, cfg.h)?);
    }
    if want(3) {
        out.push(homogeneous(t, cfg.h)?);
    }
    if want(4) || want(5) || want(6) {
        let run = experiments::run_coupled(&cfg.coupled)?;
        if want(4) {
            out.push(second_order(t, &run));
        }
        if want(5) {
            out.push(third_order(t, &run));
        }
        if want(6) {
            out.push(localization(t, &run));
        }
    }
    if want(7) {
        out.push(processes(t, &experiments::run_processes(&cfg.processes)?));
    }
    if want(8) {
        out.push(couplings(t, &experiments::run_couplings(&cfg.couplings)?));
    }
    if want(9) {
        out.push(stable_scaling(t, &cfg.stable, &experiments::run_stable(&cfg.stable)?));
    }
    if want(10) {
        out.push(chernoff(t, &experiments::run_chernoff(&cfg.chernoff)?));
    }
    if want(11) {
        out.push(local_limit(&experiments::run_halfline(&cfg.halfline)?));
    }
    Ok(out)
}
