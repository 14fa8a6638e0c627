//! One function per subcommand. Each resolves its config (defaults, then
//! `--config`, then flags), runs, and records artifacts in the manifest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

use rpl_core::acceptance::{self, AcceptanceConfig};
use rpl_core::env::{self, Law, Window};
use rpl_core::experiments::{self, replica_seed, ChernoffConfig, CoupledConfig, HalflineConfig, ProcessConfig, StableConfig};
use rpl_core::polymer::{self, EndpointMarginal, PolymerParams, TableLadder};
use rpl_core::rangelaw::{self, Method, WindowPolicy};
use rpl_core::{io, stats, stochproc};

use crate::config::{self, Run};
use crate::plot::{self, PlotSpec};
use crate::*;

fn cfg_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

fn resolve_law(f: &LawFlags, base: Law) -> Result<Law, CliError> {
    let law = match f.law {
        None => base,
        Some(LawArg::Gaussian) => Law::Gaussian,
        Some(LawArg::TwoPoint) => Law::TwoPoint,
        Some(LawArg::Uniform) => Law::uniform_unit(),
        Some(LawArg::Stable) => Law::Stable { alpha: 1.5, p: 0.5, q: 0.5 },
    };
    Ok(match law {
        Law::Stable { alpha, p, q } if f.half_width.is_none() => Law::Stable {
            alpha: f.alpha.unwrap_or(alpha),
            p: f.p.unwrap_or(p),
            q: f.q.unwrap_or(q),
        },
        Law::Uniform { half_width } if f.alpha.is_none() && f.p.is_none() && f.q.is_none() => Law::Uniform {
            half_width: f.half_width.unwrap_or(half_width),
        },
        l if f.alpha.is_none() && f.p.is_none() && f.q.is_none() && f.half_width.is_none() => l,
        l => return Err(CliError::Config(format!("law parameters do not apply to the {} law", l.tag()))),
    })
}

fn stable(law: &Law) -> bool {
    matches!(law, Law::Stable { .. })
}

fn write_csv(run: &mut Run, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    run.write(name, |w| io::rows_csv(w, header, rows))
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenEnvConfig {
    pub law: Law,
    pub lo: i64,
    pub hi: i64,
    pub seed: u64,
}

impl Default for GenEnvConfig {
    fn default() -> Self {
        Self { law: Law::Gaussian, lo: -1000, hi: 1000, seed: 7 }
    }
}

pub fn gen_env(g: &Global, a: &GenEnvArgs) -> Result<Status, CliError> {
    let mut cfg: GenEnvConfig = config::load(g.config.as_deref(), "gen-env")?;
    cfg.law = resolve_law(&a.law, cfg.law)?;
    cfg.lo = a.lo.unwrap_or(cfg.lo);
    cfg.hi = a.hi.unwrap_or(cfg.hi);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    if cfg.hi < cfg.lo {
        return Err(CliError::Config(format!("empty window [{}, {}]", cfg.lo, cfg.hi)));
    }
    let e = env::generate_environment(&cfg.law, Window::new(cfg.lo, cfg.hi), cfg.seed).map_err(cfg_err)?;
    let mut run = Run::new(&g.out, "gen-env", &cfg)?;
    run.write("env.rplenv", |w| io::write_env(w, &e))?;
    run.write("env.csv", |w| io::env_csv(w, &e))?;
    run.seeds(json!([{ "seed": cfg.seed }]));
    let (m, v) = (stats::mean(&e.values), stats::variance(&e.values));
    run.summary(json!({ "sites": e.values.len(), "mean": m, "variance": v }));
    run.finish()?;
    println!("wrote {} sites of {} field to {}", e.values.len(), cfg.law.tag(), g.out.display());
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangeLawConfig {
    pub ns: Vec<u64>,
    pub oracle: Oracle,
    /// Largest absolute difference in probability accepted by the oracle.
    pub tol: f64,
    /// Restrict the table to `T ≤ t_max`.
    pub t_max: Option<u64>,
    pub cache: Option<String>,
}

impl Default for RangeLawConfig {
    fn default() -> Self {
        Self { ns: vec![12], oracle: Oracle::None, tol: 1e-12, t_max: None, cache: None }
    }
}

pub fn range_law(g: &Global, a: &RangeLawArgs) -> Result<Status, CliError> {
    let mut cfg: RangeLawConfig = config::load(g.config.as_deref(), "range-law")?;
    if let Some(n) = &a.n {
        cfg.ns = n.clone();
    }
    cfg.oracle = a.oracle.unwrap_or(cfg.oracle);
    if let Some(c) = &a.cache {
        cfg.cache = Some(c.display().to_string());
    }
    if cfg.ns.is_empty() || cfg.ns.contains(&0) {
        return Err(CliError::Config("range-law needs n >= 1".into()));
    }
    if cfg.oracle == Oracle::Enumerate && cfg.ns.iter().any(|&n| n > 24) {
        return Err(CliError::Config("enumeration oracle limited to n <= 24".into()));
    }
    let mut run = Run::new(&g.out, "range-law", &cfg)?;
    let mut ok = true;
    let mut summary = Vec::new();
    for &n in &cfg.ns {
        let policy = match cfg.t_max {
            Some(t) => WindowPolicy::Range { t_min: 1, t_max: t },
            None => WindowPolicy::Full,
        };
        let build = || rangelaw::build_table_with(n, &policy, Method::Spectral);
        let table = match &cfg.cache {
            Some(dir) => io::cached_table(std::path::Path::new(dir), n, 1, cfg.t_max.unwrap_or(n).min(n), None, build).map_err(run_err)?,
            None => build(),
        };
        run.write(&format!("range-law-n{n}.csv"), |w| io::table_csv(w, &table))?;
        let diff = match cfg.oracle {
            Oracle::None => None,
            Oracle::Enumerate => {
                let e = rangelaw::enumerate_range_law(n as u32);
                let mut worst = 0f64;
                for (x, row) in e.iter().enumerate() {
                    for (y, &p) in row.iter().enumerate() {
                        if (x + y) as u64 <= table.t_max {
                            worst = worst.max((p - table.get(x as u64, y as u64).exp()).abs());
                        }
                    }
                }
                Some(worst)
            }
            Oracle::Dp => {
                let mut worst = 0f64;
                for t in table.t_min..=table.t_max {
                    let dp = rangelaw::range_row_dp(n, t);
                    for (a, b) in dp.iter().zip(table.row(t).unwrap_or(&[])) {
                        worst = worst.max((a.exp() - b.exp()).abs());
                    }
                }
                Some(worst)
            }
        };
        let pass = diff.map(|d| d <= cfg.tol);
        if pass == Some(false) {
            ok = false;
        }
        match diff {
            Some(d) => println!("n = {n}: max |spectral - oracle| = {d:.3e} ({})", if d <= cfg.tol { "match" } else { "MISMATCH" }),
            None => println!("n = {n}: {} cells, total mass {:.15}", table.iter().count(), table.total_mass()),
        }
        summary.push(json!({
            "n": n, "t_min": table.t_min, "t_max": table.t_max,
            "truncation_error": table.truncation_error, "dp_fallbacks": table.dp_fallbacks,
            "total_mass": table.total_mass(), "oracle_max_diff": diff, "pass": pass,
        }));
    }
    run.seeds(json!([]));
    run.summary(Value::Array(summary));
    run.finish()?;
    Ok(if ok { Status::Ok } else { Status::CriterionFailed })
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub ns: Vec<u64>,
    pub h: f64,
    pub beta: f64,
    pub law: Law,
    pub replicas: u64,
    pub seed: u64,
    /// Edge mass below which the window stops growing.
    pub edge_tol: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { ns: vec![1_000, 10_000], h: 1.0, beta: 1.0, law: Law::Gaussian, replicas: 20, seed: 7, edge_tol: 1e-9 }
    }
}

fn apply_poly(p: &PolymerFlags, ns: &mut Vec<u64>, h: &mut f64, beta: &mut f64, replicas: &mut u64) {
    if let Some(n) = &p.n {
        *ns = n.clone();
    }
    *h = p.h.unwrap_or(*h);
    *beta = p.beta.unwrap_or(*beta);
    *replicas = p.replicas.unwrap_or(*replicas);
}

/// Field window and table ladder for one `n`: the field covers everything
/// the ladder can reach, and heavy tails get room to widen.
fn ladder_for(params: &PolymerParams, law: &Law) -> TableLadder {
    let reach = if stable(law) {
        polymer::heavy_window(params.n, params.h)
    } else {
        rangelaw::t_max_for(params.n, params.h)
    };
    TableLadder::new(params, reach)
}

fn disordered_marginal(ladder: &TableLadder, law: &Law, params: &PolymerParams, seed: u64, tol: f64) -> Result<EndpointMarginal, CliError> {
    let r = ladder.reach as i64;
    let e = env::generate_environment(law, Window::new(-r, r), seed).map_err(cfg_err)?;
    let sums = env::prefix_sums(&e).map_err(run_err)?;
    polymer::adaptive_marginal(ladder, &sums, params, tol).map_err(run_err)
}

pub fn partition(g: &Global, a: &PartitionArgs) -> Result<Status, CliError> {
    let mut cfg: PartitionConfig = config::load(g.config.as_deref(), "partition")?;
    apply_poly(&a.poly, &mut cfg.ns, &mut cfg.h, &mut cfg.beta, &mut cfg.replicas);
    cfg.law = resolve_law(&a.law, cfg.law)?;
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    let mut run = Run::new(&g.out, "partition", &cfg)?;
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    let mut summary = Vec::new();
    for &n in &cfg.ns {
        let params = PolymerParams::new(n, cfg.h, cfg.beta).map_err(cfg_err)?;
        let ladder = ladder_for(&params, &cfg.law);
        let ms: Vec<(u64, EndpointMarginal)> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let s = replica_seed(cfg.seed, n, r);
                disordered_marginal(&ladder, &cfg.law, &params, s, cfg.edge_tol).map(|m| (s, m))
            })
            .collect::<Result<_, _>>()?;
        let mut f1 = Vec::new();
        for (r, (s, m)) in ms.iter().enumerate() {
            seeds.push(json!({ "n": n, "replica": r, "seed": s }));
            f1.push(m.log_z / (n as f64).cbrt());
            rows.push(vec![n as f64, r as f64, m.log_z, m.log_z / (n as f64).cbrt(), m.t_max as f64, m.truncation, m.edge_mass]);
        }
        summary.push(json!({
            "n": n, "field_window": [-(ladder.reach as i64), ladder.reach],
            "mean_f1": stats::mean(&f1),
            "max_t_max": ms.iter().map(|m| m.1.t_max).max(),
            "max_truncation": ms.iter().map(|m| m.1.truncation).fold(0.0, f64::max),
            "max_edge_mass": ms.iter().map(|m| m.1.edge_mass).fold(0.0, f64::max),
        }));
        println!("n = {n}: mean n^(-1/3) log Z = {:.6} over {} replicas", stats::mean(&f1), cfg.replicas);
    }
    write_csv(&mut run, "partition.csv", &["n", "replica", "logZ", "f1", "t_max", "truncation", "edge_mass"], &rows)?;
    run.seeds(Value::Array(seeds));
    run.summary(Value::Array(summary));
    run.finish()?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

fn stream_seeds(master: u64, replicas: u64) -> Value {
    // Replica r draws from the streams keyed by (master, module, r).
    Value::Array((0..replicas).map(|r| json!({ "replica": r, "stream": [master, r] })).collect())
}

pub fn expansion(g: &Global, a: &ExpansionArgs) -> Result<Status, CliError> {
    let mut cfg: CoupledConfig = config::load(g.config.as_deref(), "expansion")?;
    apply_poly(&a.poly, &mut cfg.ns, &mut cfg.h, &mut cfg.beta, &mut cfg.replicas);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    let out = experiments::run_coupled(&cfg)?;
    let mut run = Run::new(&g.out, "expansion", &cfg)?;
    run.write("expansion.csv", |w| io::expansion_csv(w, &out.expansion.rows))?;
    let w2: Vec<Vec<f64>> = out
        .w2
        .iter()
        .map(|r| vec![r.replica as f64, r.u_star, r.resamples as f64, r.value, r.u, r.v, f64::from(u8::from(r.stabilized))])
        .collect();
    write_csv(&mut run, "w2.csv", &["replica", "u_star", "resamples", "w2", "u", "v", "stabilized"], &w2)?;
    let mut header = vec!["n".to_string(), "replica".into(), "mass_eps".into()];
    header.extend(cfg.radii.iter().map(|k| format!("mass_k{k}")));
    let loc: Vec<Vec<f64>> = out
        .localization
        .iter()
        .map(|r| [r.n as f64, r.replica as f64, r.mass_eps].into_iter().chain(r.mass_k.iter().copied()).collect())
        .collect();
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&mut run, "localization.csv", &hdr, &loc)?;
    let mut per_n = Vec::new();
    for &n in &cfg.ns {
        let rs: Vec<_> = out.expansion.rows.iter().filter(|r| r.n == n).collect();
        let f1: Vec<f64> = rs.iter().map(|r| r.log_z / (n as f64).cbrt()).collect();
        per_n.push(json!({
            "n": n, "eps_n": polymer::eps_n(n), "mean_f1": stats::mean(&f1),
            "min_window_mass": rs.iter().map(|r| r.window_mass).fold(1.0, f64::min),
            "max_edge_mass": rs.iter().map(|r| r.edge_mass).fold(0.0, f64::max),
        }));
        println!("n = {n}: mean n^(-1/3) log Z = {:.6}", stats::mean(&f1));
    }
    run.seeds(stream_seeds(cfg.seed, cfg.replicas));
    run.summary(json!({ "per_n": per_n, "max_coupling_defect": out.max_coupling_defect }));
    run.finish()?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    pub n: u64,
    pub h: f64,
    /// `0` gives the homogeneous polymer.
    pub beta: f64,
    pub law: Law,
    pub seed: u64,
    pub edge_tol: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self { n: 100_000, h: 1.0, beta: 0.0, law: Law::Gaussian, seed: 7, edge_tol: 1e-9 }
    }
}

pub fn endpoint_law(g: &Global, a: &EndpointArgs) -> Result<Status, CliError> {
    let mut cfg: EndpointConfig = config::load(g.config.as_deref(), "endpoint-law")?;
    let mut ns = vec![cfg.n];
    let mut reps = 1;
    apply_poly(&a.poly, &mut ns, &mut cfg.h, &mut cfg.beta, &mut reps);
    if ns.len() != 1 {
        return Err(CliError::Config("endpoint-law takes a single n".into()));
    }
    cfg.n = ns[0];
    cfg.law = resolve_law(&a.law, cfg.law)?;
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    let params = PolymerParams::new(cfg.n, cfg.h, cfg.beta).map_err(cfg_err)?;
    let m = if cfg.beta == 0.0 {
        let table = polymer::table_for(&params);
        polymer::endpoint_marginal(&table, &polymer::zero_sums(table.t_max), &params).map_err(run_err)?
    } else {
        disordered_marginal(&ladder_for(&params, &cfg.law), &cfg.law, &params, cfg.seed, cfg.edge_tol)?
    };
    let mut run = Run::new(&g.out, "endpoint-law", &cfg)?;
    run.write("marginal.csv", |w| io::marginal_csv(w, &m))?;
    let ts = params.t_star();
    let rows: Vec<Vec<f64>> = m.minus_law().iter().enumerate().map(|(x, &p)| vec![x as f64 / ts, p, p * ts]).collect();
    write_csv(&mut run, "endpoint-law.csv", &["v", "prob", "density"], &rows)?;
    let hom = polymer::homogeneous_from(&m);
    println!(
        "n = {}: log Z = {:.6}, T* = {ts:.3}, TV(|M-|/T*, sine) = {:.4}, KS(Delta/a_n, N(0,1)) = {:.4}",
        cfg.n, m.log_z, hom.tv_minus, hom.ks_delta
    );
    run.seeds(if cfg.beta == 0.0 { json!([]) } else { json!([{ "seed": cfg.seed }]) });
    run.summary(json!({
        "log_z": m.log_z, "t_min": m.t_min, "t_max": m.t_max, "truncation": m.truncation,
        "edge_mass": m.edge_mass, "t_star": ts, "tv_minus_sine": hom.tv_minus, "ks_delta": hom.ks_delta,
    }));
    run.finish()?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

pub fn processes(g: &Global, a: &ProcessesArgs) -> Result<Status, CliError> {
    let mut cfg: ProcessConfig = config::load(g.config.as_deref(), "processes")?;
    cfg.samples = a.samples.map(|s| s as usize).unwrap_or(cfg.samples);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    let rep = experiments::run_processes(&cfg)?;
    let mut run = Run::new(&g.out, "processes", &cfg)?;
    run.write_json("processes.json", &rep)?;
    let grid = stochproc::uniform_grid(1.0, cfg.steps);
    let paths = [
        ("meander", stochproc::sample_meander(&grid, 1.0, cfg.seed)),
        ("excursion", stochproc::sample_excursion(&grid, cfg.seed)),
        ("bessel3", stochproc::sample_bessel3(&grid, cfg.seed)),
    ];
    for (name, p) in paths {
        let p = p.map_err(run_err)?;
        run.write(&format!("{name}.rplpath"), |w| io::write_path(w, &p))?;
        run.write(&format!("{name}.csv"), |w| io::path_csv(w, &p))?;
    }
    let held = rep.bounds.iter().filter(|b| b.holds).count();
    println!("Rayleigh KS = {:.4}; midpoint KS = {:.4}; bounds {held}/{} hold", rep.rayleigh_ks, rep.excursion_mid_ks, rep.bounds.len());
    run.seeds(stream_seeds(cfg.seed, 1));
    run.summary(json!({ "rayleigh_ks": rep.rayleigh_ks, "excursion_mid_ks": rep.excursion_mid_ks, "bounds_held": held, "bounds": rep.bounds.len() }));
    run.finish()?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarprobConfig {
    pub kind: VarKind,
    pub chernoff: ChernoffConfig,
    /// Only the first `n` is used: `W₂` does not depend on it.
    pub coupled: CoupledConfig,
}

impl Default for VarprobConfig {
    fn default() -> Self {
        Self {
            kind: VarKind::Chernoff,
            chernoff: ChernoffConfig::default(),
            coupled: CoupledConfig { ns: vec![1_000], ..CoupledConfig::default() },
        }
    }
}

pub fn varprob(g: &Global, a: &VarprobArgs) -> Result<Status, CliError> {
    let mut cfg: VarprobConfig = config::load(g.config.as_deref(), "varprob")?;
    cfg.kind = a.kind.unwrap_or(cfg.kind);
    if let Some(s) = g.seed {
        cfg.chernoff.seed = s;
        cfg.coupled.seed = s;
    }
    if let Some(r) = a.replicas {
        cfg.chernoff.replicas = r;
        cfg.coupled.replicas = r;
    }
    cfg.coupled.ns.truncate(1);
    let mut run = Run::new(&g.out, "varprob", &cfg)?;
    match cfg.kind {
        VarKind::Chernoff => {
            let rows = experiments::run_chernoff(&cfg.chernoff)?;
            let csv: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![r.replica as f64, r.s_star, r.value, r.s_star_fine, r.value_fine, f64::from(u8::from(r.stabilized))])
                .collect();
            write_csv(&mut run, "chernoff.csv", &["replica", "s_star", "value", "s_star_fine", "value_fine", "stabilized"], &csv)?;
            let s: Vec<f64> = rows.iter().map(|r| r.s_star_fine).collect();
            let s2: Vec<f64> = s.iter().map(|v| v * v).collect();
            let stab = rows.iter().filter(|r| r.stabilized).count();
            println!("mean s* = {:.5}; E[s*^2] = {:.5}; stabilized {stab}/{}", stats::mean(&s), stats::mean(&s2), rows.len());
            run.seeds(stream_seeds(cfg.chernoff.seed, cfg.chernoff.replicas));
            run.summary(json!({ "mean_s_star": stats::mean(&s), "mean_s_star_sq": stats::mean(&s2), "stabilized": stab }));
        }
        VarKind::W2 => {
            let out = experiments::run_coupled(&cfg.coupled)?;
            let csv: Vec<Vec<f64>> = out
                .w2
                .iter()
                .map(|r| vec![r.replica as f64, r.u_star, r.value, r.u, r.v, f64::from(u8::from(r.stabilized))])
                .collect();
            write_csv(&mut run, "w2.csv", &["replica", "u_star", "w2", "u", "v", "stabilized"], &csv)?;
            let pos = out.w2.iter().filter(|r| r.value > 0.0).count();
            let stab = out.w2.iter().filter(|r| r.stabilized).count();
            println!("W2 > 0 in {pos}/{}; stabilized in {stab}/{}", out.w2.len(), out.w2.len());
            run.seeds(stream_seeds(cfg.coupled.seed, cfg.coupled.replicas));
            run.summary(json!({ "positive": pos, "stabilized": stab, "replicas": out.w2.len() }));
        }
    }
    run.finish()?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

fn halfline_cfg(g: &Global, p: &PolymerFlags, mut cfg: HalflineConfig) -> HalflineConfig {
    apply_poly(p, &mut cfg.ns, &mut cfg.options.h, &mut cfg.options.beta, &mut cfg.replicas);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    cfg
}

pub fn halfline(g: &Global, a: &ReplicaArgs) -> Result<Status, CliError> {
    let cfg = halfline_cfg(g, &a.poly, config::load(g.config.as_deref(), "halfline")?);
    let rows = experiments::run_halfline(&cfg)?;
    let mut run = Run::new(&g.out, "halfline", &cfg)?;
    let csv: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.report.n as f64, r.replica as f64, r.log_z, r.edge_mass, r.report.s_star, r.report.correlation])
        .collect();
    write_csv(&mut run, "halfline.csv", &["n", "replica", "logZ", "edge_mass", "s_star", "correlation"], &csv)?;
    for &n in &cfg.ns {
        let lz: Vec<f64> = rows.iter().filter(|r| r.report.n == n).map(|r| r.log_z / (n as f64).cbrt()).collect();
        println!("n = {n}: mean n^(-1/3) log Z~ = {:.6}", stats::mean(&lz));
    }
    run.seeds(stream_seeds(cfg.seed, cfg.replicas));
    run.summary(json!({ "max_edge_mass": rows.iter().map(|r| r.edge_mass).fold(0.0, f64::max) }));
    run.finish()?;
    Ok(Status::Ok)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub halfline: HalflineConfig,
    pub stable: StableConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { kind: ProbeKind::LocalLimit, halfline: HalflineConfig::default(), stable: StableConfig::default() }
    }
}

pub fn probe(g: &Global, a: &ProbeArgs) -> Result<Status, CliError> {
    let mut cfg: ProbeConfig = config::load(g.config.as_deref(), "probe")?;
    cfg.kind = a.kind.unwrap_or(cfg.kind);
    match cfg.kind {
        ProbeKind::LocalLimit => cfg.halfline = halfline_cfg(g, &a.poly, cfg.halfline),
        ProbeKind::StableExponent => {
            let s = &mut cfg.stable;
            apply_poly(&a.poly, &mut s.ns, &mut s.h, &mut s.beta, &mut s.replicas);
            s.seed = g.seed.unwrap_or(s.seed);
        }
    }
    let mut run = Run::new(&g.out, "probe", &cfg)?;
    match cfg.kind {
        ProbeKind::LocalLimit => {
            let rows = experiments::run_halfline(&cfg.halfline)?;
            let mut csv = Vec::new();
            for r in &rows {
                for l in &r.report.rows {
                    csv.push(vec![r.report.n as f64, r.replica as f64, l.k as f64, l.t as f64, l.pmf, l.gap, l.predicted]);
                }
            }
            write_csv(&mut run, "local-limit.csv", &["n", "replica", "k", "t", "pmf", "gap", "predicted"], &csv)?;
            let mut per_n = BTreeMap::new();
            for &n in &cfg.halfline.ns {
                let c: Vec<f64> = rows.iter().filter(|r| r.report.n == n).map(|r| r.report.correlation).collect();
                println!("n = {n}: mean correlation {:.4}", stats::mean(&c));
                per_n.insert(n.to_string(), stats::mean(&c));
            }
            run.seeds(stream_seeds(cfg.halfline.seed, cfg.halfline.replicas));
            run.summary(json!({ "mean_correlation": per_n }));
        }
        ProbeKind::StableExponent => {
            let rows = experiments::run_stable(&cfg.stable)?;
            let csv: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![r.n as f64, r.replica as f64, r.log_z, r.centered, r.t_max as f64, r.edge_mass])
                .collect();
            write_csv(&mut run, "stable.csv", &["n", "replica", "logZ", "centered", "t_max", "edge_mass"], &csv)?;
            let fit = polymer::iqr_slope(&rows);
            let reference = 1.0 / (3.0 * cfg.stable.alpha);
            println!("slope of log IQR vs log n = {:.4} (CI +- {:.4}); reference 1/(3 alpha) = {reference:.4}", fit.slope, fit.slope_ci95);
            run.seeds(Value::Array(rows.iter().map(|r| json!({ "n": r.n, "replica": r.replica, "seed": r.seed })).collect()));
            run.summary(json!({ "slope": fit.slope, "ci95": fit.slope_ci95, "reference": reference }));
        }
    }
    run.finish()?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------

pub fn accept(g: &Global, a: &AcceptArgs) -> Result<Status, CliError> {
    let patch: Value = config::load(g.config.as_deref(), "accept")?;
    let patch = if patch.is_null() { json!({}) } else { patch };
    let mut cfg = AcceptanceConfig::with_overrides(&patch).map_err(cfg_err)?;
    if let Some(s) = g.seed {
        cfg.coupled.seed = s;
        cfg.stable.seed = s;
        cfg.chernoff.seed = s;
        cfg.halfline.seed = s;
        cfg.processes.seed = s;
        cfg.couplings.seed = s;
    }
    if let Some(bad) = a.only.iter().find(|&&i| !(1..=11).contains(&i)) {
        return Err(CliError::Config(format!("no criterion {bad}")));
    }
    let results = acceptance::run(&cfg, &a.only)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| r.pass == Some(false)).count();
    let mut run = Run::new(&g.out, "accept", &cfg)?;
    run.write_json("acceptance.json", &results)?;
    run.seeds(json!(cfg.seeds()));
    run.summary(json!({ "failed": failed, "evaluated": results.len() }));
    run.finish()?;
    Ok(if failed == 0 { Status::Ok } else { Status::CriterionFailed })
}

// ---------------------------------------------------------------------------

pub fn plot(g: &Global, a: &PlotArgs) -> Result<Status, CliError> {
    let f = std::fs::File::open(&a.input).map_err(|e| CliError::Config(format!("{}: {e}", a.input.display())))?;
    let (header, cols) = io::read_numeric_csv(f).map_err(cfg_err)?;
    let spec = PlotSpec {
        x: a.x.clone(),
        ys: a.y.clone(),
        logx: a.logx,
        logy: a.logy,
        scatter: a.scatter,
        hist: a.hist.clone(),
        weight: a.weight.clone(),
        bins: a.bins,
        sine: a.sine,
        title: a.title.clone(),
    };
    if spec.hist.is_none() && spec.ys.is_empty() {
        return Err(CliError::Config("plot needs --y or --hist".into()));
    }
    let svg = plot::render(&header, &cols, &spec).map_err(cfg_err)?;
    std::fs::create_dir_all(&g.out).map_err(|e| CliError::Io(e.to_string()))?;
    let name = a.name.clone().unwrap_or_else(|| {
        let stem = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
        format!("{stem}.svg")
    });
    let path = g.out.join(name);
    std::fs::write(&path, svg).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(Status::Ok)
}
