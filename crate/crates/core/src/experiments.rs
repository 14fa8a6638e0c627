//! Seeded replica runners shared by the acceptance checks and the CLI. Every
//! runner is a pure function of its config.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvError, Law, TargetLaw, Window};
use crate::polymer::{self, ExpansionReport, ExpansionRow, ExponentRow, LocalLimitReport, PolymerError, PolymerParams, TableLadder};
use crate::rangelaw::RangeLawTable;
use crate::rng::{splitmix64, Module, StreamKey};
use crate::stats;
use crate::stochproc::{self, BoundCheck, BoundGrid, ProcError};
use crate::varprob::{self, CouplingOptions, HalflineOptions, HalflineSystem, LimitDraw, PairGrid, VarError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Proc(#[from] ProcError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Polymer(#[from] PolymerError),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Seed of the `replica`-th draw of sub-task `tag` under `master`.
pub fn replica_seed(master: u64, tag: u64, replica: u64) -> u64 {
    let k = StreamKey::new(master, Module::Experiment, replica).child(tag);
    splitmix64(k.seed ^ splitmix64(replica ^ ((k.module as u64) << 48)))
}

// ---------------------------------------------------------------------------
// coupled Gaussian environments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoupledConfig {
    pub ns: Vec<u64>,
    pub replicas: u64,
    pub seed: u64,
    pub h: f64,
    pub beta: f64,
    pub coupling: CouplingOptions,
    pub pair_grid: PairGrid,
    /// Windows `K` of the `W₂` sweep, increasing.
    pub ks: Vec<f64>,
    pub stab_tol: f64,
    /// `ε` of the localization probe.
    pub eps: f64,
    /// Box radii, in units of `n^{2/9}`, around the second-order centers.
    pub radii: Vec<f64>,
}

impl Default for CoupledConfig {
    fn default() -> Self {
        Self {
            ns: vec![1_000, 10_000, 100_000, 1_000_000],
            replicas: 100,
            seed: 7,
            h: 1.0,
            beta: 1.0,
            coupling: CouplingOptions::default(),
            pair_grid: PairGrid::default(),
            ks: vec![1.0, 2.0, 4.0, 8.0],
            stab_tol: 1e-12,
            eps: 0.2,
            radii: vec![1.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct W2Row {
    pub replica: u64,
    pub u_star: f64,
    pub resamples: u32,
    pub value: f64,
    pub u: f64,
    pub v: f64,
    /// `W₂^K` for each `K` of the sweep.
    pub sweep: Vec<f64>,
    pub stabilized: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub n: u64,
    pub replica: u64,
    /// Mass of the `ε n^{1/3}` neighbourhood of the first-order endpoints.
    pub mass_eps: f64,
    /// Mass within `K n^{2/9}` of the second-order centers, per radius.
    pub mass_k: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledRun {
    pub expansion: ExpansionReport,
    pub w2: Vec<W2Row>,
    pub localization: Vec<LocalizationRow>,
    pub max_coupling_defect: f64,
}

struct ReplicaOut {
    rows: Vec<ExpansionRow>,
    w2: W2Row,
    loc: Vec<LocalizationRow>,
    defect: f64,
}

fn coupled_replica(cfg: &CoupledConfig, tables: &[RangeLawTable], r: u64) -> Result<ReplicaOut, ExperimentError> {
    let lim = LimitDraw::new(cfg.seed, r, &cfg.coupling)?;
    let mut rows = Vec::new();
    let mut loc = Vec::new();
    let mut w2: Option<W2Row> = None;
    let mut defect = 0f64;
    for (i, &n) in cfg.ns.iter().enumerate() {
        let sys = varprob::couple_at(&lim, n, &cfg.coupling)?;
        defect = defect.max(sys.coupling_defect());
        if w2.is_none() {
            let sw = varprob::w2_sweep(&sys, cfg.beta, cfg.h, &cfg.ks, &cfg.pair_grid, cfg.stab_tol)?;
            let (u, v) = sw.solution.pair();
            w2 = Some(W2Row {
                replica: r,
                u_star: lim.u_star,
                resamples: lim.resamples,
                value: sw.solution.value,
                u,
                v,
                sweep: sw.values.iter().map(|x| x.1).collect(),
                stabilized: sw.stabilized,
            });
        }
        let w = w2.as_ref().unwrap();
        let params = PolymerParams::new(n, cfg.h, cfg.beta)?;
        let e = env::env_from_brownian(n, &sys.x1, &sys.x2, sys.c_h, cfg.seed)?;
        let sums = env::prefix_sums(&e)?;
        let m = polymer::endpoint_marginal(&tables[i], &sums, &params)?;
        rows.push(polymer::expansion_row_from(&m, &sys, Some(w.value), r));
        let s = (n as f64).cbrt();
        let z = (n as f64).powf(2.0 / 9.0);
        let xc = sys.u_star_grid() * s + w.u * z;
        let yc = (sys.c_tilde - sys.u_star_grid()) * s + w.v * z;
        loc.push(LocalizationRow {
            n,
            replica: r,
            mass_eps: polymer::endpoint_localization(&m, sys.u_star_grid(), cfg.eps),
            mass_k: cfg.radii.iter().map(|k| m.mass_near(xc, yc, k * z)).collect(),
        });
    }
    Ok(ReplicaOut {
        rows,
        w2: w2.ok_or_else(|| ExperimentError::Config("empty n list".into()))?,
        loc,
        defect,
    })
}

/// Coupled Gaussian environments built from one limit draw per replica,
/// evaluated at every `n`.
pub fn run_coupled(cfg: &CoupledConfig) -> Result<CoupledRun, ExperimentError> {
    if cfg.ns.is_empty() || cfg.ks.is_empty() || cfg.beta <= 0.0 {
        return Err(ExperimentError::Config("coupled run needs n values, K values and beta > 0".into()));
    }
    let tables: Vec<RangeLawTable> = cfg
        .ns
        .iter()
        .map(|&n| PolymerParams::new(n, cfg.h, cfg.beta).map(|p| polymer::table_for(&p)))
        .collect::<Result<_, _>>()?;
    let outs: Vec<ReplicaOut> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| coupled_replica(cfg, &tables, r))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut w2 = Vec::new();
    let mut localization = Vec::new();
    let mut max_coupling_defect = 0f64;
    for o in outs {
        rows.extend(o.rows);
        w2.push(o.w2);
        localization.extend(o.loc);
        max_coupling_defect = max_coupling_defect.max(o.defect);
    }
    rows.sort_by_key(|r| (r.n, r.replica));
    localization.sort_by_key(|r| (r.n, r.replica));
    Ok(CoupledRun {
        expansion: ExpansionReport {
            h: cfg.h,
            beta: cfg.beta,
            rows,
        },
        w2,
        localization,
        max_coupling_defect,
    })
}

// ---------------------------------------------------------------------------
// heavy-tailed fields

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StableConfig {
    pub ns: Vec<u64>,
    pub replicas: u64,
    pub seed: u64,
    pub h: f64,
    pub beta: f64,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    /// Edge mass below which the adaptive window stops growing.
    pub edge_tol: f64,
}

impl Default for StableConfig {
    fn default() -> Self {
        Self {
            ns: vec![10_000, 100_000, 1_000_000],
            replicas: 200,
            seed: 7,
            h: 1.0,
            beta: 1.0,
            alpha: 1.5,
            p: 0.5,
            q: 0.5,
            edge_tol: 1e-9,
        }
    }
}

pub fn run_stable(cfg: &StableConfig) -> Result<Vec<ExponentRow>, ExperimentError> {
    let law = Law::Stable {
        alpha: cfg.alpha,
        p: cfg.p,
        q: cfg.q,
    };
    env::StableParts::new(cfg.alpha, cfg.p, cfg.q)?;
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let params = PolymerParams::new(n, cfg.h, cfg.beta)?;
        let l = polymer::heavy_window(n, cfg.h);
        let ladder = TableLadder::new(&params, l);
        let window = Window::new(-(l as i64), l as i64);
        let part: Vec<ExponentRow> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| -> Result<ExponentRow, ExperimentError> {
                let e = env::generate_environment(&law, window, replica_seed(cfg.seed, n, r))?;
                let m = polymer::adaptive_marginal(&ladder, &env::prefix_sums(&e)?, &params, cfg.edge_tol)?;
                Ok(polymer::exponent_row_from(&m, e.seed, r))
            })
            .collect::<Result<_, _>>()?;
        rows.extend(part);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Chernoff argmax

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChernoffConfig {
    pub replicas: u64,
    pub seed: u64,
    pub h: f64,
    pub beta: f64,
    /// Half-width of the two-sided path.
    pub window: f64,
    pub step: f64,
    /// Subdivision factor of the near-optimal cells.
    pub refine: usize,
}

impl Default for ChernoffConfig {
    fn default() -> Self {
        Self {
            replicas: 10_000,
            seed: 7,
            h: 1.0,
            beta: 1.0,
            window: 8.0,
            step: 1e-3,
            refine: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChernoffRow {
    pub replica: u64,
    pub s_star: f64,
    pub value: f64,
    pub s_star_fine: f64,
    pub value_fine: f64,
    pub stabilized: bool,
}

pub fn run_chernoff(cfg: &ChernoffConfig) -> Result<Vec<ChernoffRow>, ExperimentError> {
    if !(cfg.step > 0.0 && cfg.window > 0.0 && cfg.refine >= 2) {
        return Err(ExperimentError::Config("chernoff grid".into()));
    }
    let drift = varprob::chernoff_drift(cfg.beta, cfg.h);
    let steps = (cfg.window / cfg.step).round() as usize;
    let grid = stochproc::uniform_grid(cfg.window, steps);
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(cfg.seed, Module::Chernoff, r);
            let w = stochproc::sample_two_sided_bm_with(&grid, &mut key.child(0).rng())?;
            let a = varprob::solve_chernoff(&w, drift, 1.0);
            let fine = varprob::refine_chernoff_path(&w, drift, cfg.refine, &mut key.child(1).rng())?;
            let b = varprob::solve_chernoff(&fine, drift, 1.0);
            Ok(ChernoffRow {
                replica: r,
                s_star: a.point(),
                value: a.value,
                s_star_fine: b.point(),
                value_fine: b.value,
                stabilized: a.stabilized && b.stabilized,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// half-line local limit

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HalflineConfig {
    pub ns: Vec<u64>,
    pub replicas: u64,
    pub seed: u64,
    pub options: HalflineOptions,
    pub half_width: i64,
}

impl Default for HalflineConfig {
    fn default() -> Self {
        Self {
            ns: vec![10_000, 100_000, 1_000_000],
            replicas: 20,
            seed: 7,
            options: HalflineOptions::default(),
            half_width: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalflineRow {
    pub replica: u64,
    pub log_z: f64,
    pub edge_mass: f64,
    pub report: LocalLimitReport,
}

pub fn run_halfline(cfg: &HalflineConfig) -> Result<Vec<HalflineRow>, ExperimentError> {
    let o = &cfg.options;
    let mut out = Vec::new();
    for &n in &cfg.ns {
        let params = PolymerParams::new(n, o.h, o.beta)?;
        let table = polymer::halfline_table_for(&params);
        let part: Vec<HalflineRow> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| -> Result<HalflineRow, ExperimentError> {
                let sys = HalflineSystem::new(n, cfg.seed, r, o)?;
                let e = env::env_from_brownian(n, &sys.x, &sys.x, sys.c_h, cfg.seed)?;
                let m = polymer::halfline_marginal(&table, &env::prefix_sums(&e)?, &params)?;
                Ok(HalflineRow {
                    replica: r,
                    log_z: m.log_z,
                    edge_mass: m.edge_mass,
                    report: polymer::local_limit_probe(&m, &sys, cfg.half_width),
                })
            })
            .collect::<Result<_, _>>()?;
        out.extend(part);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// process toolkit

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessConfig {
    pub samples: usize,
    pub seed: u64,
    /// Steps of the `[0, 1]` grid of the excursion-built meanders.
    pub steps: usize,
    /// Interior grid indices where kernel and excursion meanders are compared.
    pub compare_at: Vec<usize>,
    pub bounds: BoundGrid,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 7,
            steps: 100,
            compare_at: vec![30, 50, 70],
            bounds: BoundGrid::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoSample {
    pub t: f64,
    pub ks: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProcessReport {
    /// KS of the kernel-sampled meander endpoint against Rayleigh.
    pub rayleigh_ks: f64,
    pub kernel_vs_excursion: Vec<TwoSample>,
    /// KS of the excursion midpoint against its density.
    pub excursion_mid_ks: f64,
    pub bounds: Vec<BoundCheck>,
}

fn rayleigh_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        -(-0.5 * y * y).exp_m1()
    }
}

pub fn run_processes(cfg: &ProcessConfig) -> Result<ProcessReport, ExperimentError> {
    if cfg.steps < 2 || cfg.steps % 2 == 1 || cfg.compare_at.iter().any(|&i| i == 0 || i >= cfg.steps) {
        return Err(ExperimentError::Config("process grid".into()));
    }
    let unit = stochproc::uniform_grid(1.0, cfg.steps);
    let mut kernel_grid: Vec<f64> = cfg.compare_at.iter().map(|&i| unit[i]).collect();
    kernel_grid.push(1.0);
    let mut rng = StreamKey::new(cfg.seed, Module::Meander, 0).rng();
    let mut kernel = vec![Vec::with_capacity(cfg.samples); kernel_grid.len()];
    for _ in 0..cfg.samples {
        let p = stochproc::sample_meander_with(&kernel_grid, 1.0, &mut rng)?;
        for (k, v) in p.values.iter().enumerate() {
            kernel[k].push(*v);
        }
    }
    let rayleigh_ks = stats::ks_statistic(kernel.last().unwrap(), rayleigh_cdf);

    let mut rng = StreamKey::new(cfg.seed, Module::Excursion, 0).rng();
    let mut mids = Vec::with_capacity(cfg.samples);
    let mut meanders = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let e = stochproc::sample_excursion_with(&unit, &mut rng)?;
        mids.push(e.values[cfg.steps / 2]);
        let u = rng.random_range(0..=cfg.steps) as f64 / cfg.steps as f64;
        meanders.push(stochproc::meander_from_excursion(&e, u)?);
    }
    let excursion_mid_ks = stats::ks_statistic(&mids, stochproc::excursion_mid_cdf);
    let kernel_vs_excursion = cfg
        .compare_at
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let b: Vec<f64> = meanders.iter().map(|p| p.values[i]).collect();
            let d = stats::ks_two_sample(&kernel[k], &b);
            TwoSample {
                t: unit[i],
                ks: d,
                p_value: stats::ks_two_sample_pvalue(d, kernel[k].len(), b.len()),
            }
        })
        .collect();
    let bounds = stochproc::meander_bound_checks(&meanders, &cfg.bounds);
    Ok(ProcessReport {
        rayleigh_ks,
        kernel_vs_excursion,
        excursion_mid_ks,
        bounds,
    })
}

// ---------------------------------------------------------------------------
// couplings

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub embed_count: usize,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            embed_count: 1_000_000,
            runs: 10_000,
            steps: 10_000,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub law: TargetLaw,
    pub mean_tau: f64,
    pub se_tau: f64,
    pub second_moment: f64,
    pub value_ks: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingReport {
    pub embeddings: Vec<EmbedSummary>,
    pub runs: usize,
    /// Runs with `ε > 0` on the first attempt.
    pub positive: usize,
    pub resamples: u64,
    pub mean_epsilon: f64,
}

pub fn run_couplings(cfg: &CouplingConfig) -> Result<CouplingReport, ExperimentError> {
    let mut embeddings = Vec::new();
    for (i, law) in [TargetLaw::TwoPoint, TargetLaw::Uniform { half_width: 1.0 }].into_iter().enumerate() {
        let rec = env::skorokhod_embed(&law, cfg.embed_count, replica_seed(cfg.seed, 0, i as u64))?;
        embeddings.push(EmbedSummary {
            law,
            mean_tau: stats::mean(&rec.stop_times),
            se_tau: stats::std_error(&rec.stop_times),
            second_moment: law.second_moment(),
            value_ks: stats::ks_statistic(&rec.embedded_values, |x| law.cdf(x)),
        });
    }
    let mut rng = StreamKey::new(cfg.seed, Module::Coupling, u64::MAX).rng();
    let (mut positive, mut resamples, mut eps) = (0, 0u64, Vec::with_capacity(cfg.runs));
    for _ in 0..cfg.runs {
        let c = stochproc::couple_bessel_excursion_with(cfg.steps, &mut rng)?;
        if c.epsilon > 0.0 && c.resamples == 0 {
            positive += 1;
        }
        resamples += c.resamples as u64;
        eps.push(c.epsilon);
    }
    Ok(CouplingReport {
        embeddings,
        runs: cfg.runs,
        positive,
        resamples,
        mean_epsilon: stats::mean(&eps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|r| replica_seed(7, 10_000, r)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(replica_seed(7, 1, 0), replica_seed(7, 2, 0));
        assert_eq!(replica_seed(3, 4, 5), replica_seed(3, 4, 5));
    }
}
