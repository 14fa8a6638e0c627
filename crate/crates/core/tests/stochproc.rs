use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rpl_core::stats;
use rpl_core::stochproc::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf;
use std::f64::consts::PI;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn phi(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / 2f64.sqrt()))
}

/// Unit meander at time `t`: killed-BM density from 0+ times the survival
/// of the remaining `1 - t`, normalized.
fn meander_density_oracle(t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let surv = if t >= 1.0 { 1.0 } else { 2.0 * phi(y / (1.0 - t).sqrt()) - 1.0 };
    y / t.powf(1.5) * (-y * y / (2.0 * t)).exp() * surv
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn meander_cdf_oracle(t: f64, y: f64) -> f64 {
    simpson(|v| meander_density_oracle(t, v), 0.0, y.max(0.0), 2000)
}

fn rayleigh_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        1.0 - (-0.5 * y * y).exp()
    }
}

/// CDF of `16/√(2π) v² e^{-2v²}`.
fn excursion_mid_oracle(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    erf(2f64.sqrt() * v) - 4.0 * v / (2.0 * PI).sqrt() * (-2.0 * v * v).exp()
}

#[test]
fn bm_starts_at_zero_with_unit_rate_increments() {
    let dt = 0.01;
    let grid = uniform_grid(1000.0, 100_000);
    let p = sample_bm(&grid, 1).unwrap();
    assert_eq!(p.values[0], 0.0);
    let q: f64 = p.values.windows(2).map(|w| (w[1] - w[0]).powi(2) / dt).sum();
    let chi = ChiSquared::new(100_000.0).unwrap();
    let pv = 2.0 * chi.cdf(q).min(1.0 - chi.cdf(q));
    assert!(pv >= 0.01, "sum of squares {q}, p = {pv}");
}

#[test]
fn bm_rejects_bad_grids() {
    assert!(sample_bm(&[0.0, 0.5, 0.5], 1).is_err());
    assert!(sample_bm(&[0.1, 0.5], 1).is_err());
}

#[test]
fn refinement_keeps_coarse_values() {
    let coarse = uniform_grid(1.0, 16);
    let p = sample_bm(&coarse, 2).unwrap();
    let fine: Vec<f64> = (0..=1024).map(|i| i as f64 / 1024.0).collect();
    let r = refine_bridge(&p, &fine, 3).unwrap();
    for (t, v) in p.times.iter().zip(&p.values) {
        let i = r.times.iter().position(|s| s == t).expect("coarse time kept");
        assert_eq!(r.values[i].to_bits(), v.to_bits());
    }
    assert_eq!(r.times.len(), 1025);
}

#[test]
fn meander_density_closed_forms() {
    for y in [0.1, 0.7, 1.3, 2.5, 4.0] {
        let d = meander_marginal_density(1.0, y, 1.0).unwrap();
        assert!((d - y * (-y * y / 2.0).exp()).abs() < 1e-10, "t = 1, y = {y}");
        for t in [0.2, 0.5, 0.9] {
            let d = meander_marginal_density(t, y, 1.0).unwrap();
            assert!((d - meander_density_oracle(t, y)).abs() < 1e-9, "t = {t}, y = {y}");
        }
    }
    assert_eq!(meander_marginal_density(0.5, 0.0, 1.0).unwrap(), 0.0);
    assert_eq!(meander_marginal_density(0.3, 0.0, 2.0).unwrap(), 0.0);
    let total = simpson(|y| meander_marginal_density(0.5, y, 1.0).unwrap(), 0.0, 12.0, 4000);
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn meander_endpoint_is_rayleigh() {
    let mut r = rng(4);
    let ends: Vec<f64> = (0..100_000)
        .map(|_| *sample_meander_with(&[0.0, 1.0], 1.0, &mut r).unwrap().values.last().unwrap())
        .collect();
    let ks = stats::ks_statistic(&ends, rayleigh_cdf);
    assert!(ks <= 0.02, "KS {ks}");
}

#[test]
fn meander_paths_stay_positive() {
    let grid = uniform_grid(1.0, 50);
    let mut r = rng(5);
    for _ in 0..200 {
        let p = sample_meander_with(&grid, 1.0, &mut r).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert!(p.values[1..].iter().all(|&v| v > 0.0));
    }
}

#[test]
fn meander_marginal_chi_square() {
    let mut r = rng(6);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| sample_meander_with(&[0.0, 0.3, 1.0], 1.0, &mut r).unwrap().values[1])
        .collect();
    let edges: Vec<f64> = (0..=24).map(|i| i as f64 * 0.1).collect();
    let mut obs = vec![0.0; edges.len()];
    for &x in &xs {
        let k = edges.partition_point(|&e| e <= x) - 1;
        obs[k] += 1.0;
    }
    let mut exp: Vec<f64> = edges.windows(2).map(|w| meander_cdf_oracle(0.3, w[1]) - meander_cdf_oracle(0.3, w[0])).collect();
    exp.push(1.0 - meander_cdf_oracle(0.3, *edges.last().unwrap()));
    let exp: Vec<f64> = exp.iter().map(|p| p * xs.len() as f64).collect();
    let (_, p) = stats::chi_square(&obs, &exp, 0);
    assert!(p >= 0.01, "p = {p}");
}

#[test]
fn meander_of_other_durations_scales() {
    // M on [0, T] at time t has the law of √T M on [0, 1] at time t/T
    let mut r = rng(7);
    let a: Vec<f64> = (0..20_000).map(|_| sample_meander_with(&[0.0, 1.0, 4.0], 4.0, &mut r).unwrap().values[1]).collect();
    let b: Vec<f64> = (0..20_000).map(|_| 2.0 * sample_meander_with(&[0.0, 0.25, 1.0], 1.0, &mut r).unwrap().values[1]).collect();
    let d = stats::ks_two_sample(&a, &b);
    assert!(stats::ks_two_sample_pvalue(d, a.len(), b.len()) > 0.01, "KS {d}");
}

#[test]
fn bessel3_moments_and_scaling() {
    let mut r = rng(8);
    let mut sq = Vec::new();
    let mut at_1 = Vec::new();
    let mut at_4 = Vec::new();
    for _ in 0..100_000 {
        let p = sample_bessel3_with(&[0.0, 0.5, 1.0, 4.0], &mut r).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert!(p.values[1..].iter().all(|&v| v > 0.0));
        sq.push(p.values[1].powi(2));
        at_1.push(p.values[2]);
        at_4.push(p.values[3] / 2.0);
    }
    let m = stats::mean(&sq);
    assert!((m - 1.5).abs() <= 0.02 * 1.5, "E[B^2] at t = 1/2: {m}");
    // independent draws for the scaling comparison
    let at_4: Vec<f64> = at_4.into_iter().step_by(2).collect();
    let at_1: Vec<f64> = at_1.into_iter().skip(1).step_by(2).collect();
    let d = stats::ks_two_sample(&at_1, &at_4);
    assert!(stats::ks_two_sample_pvalue(d, at_1.len(), at_4.len()) > 0.01, "KS {d}");
}

#[test]
fn excursion_endpoints_midpoint_and_max() {
    let grid = uniform_grid(1.0, 100);
    let mut r = rng(9);
    let mut mids = Vec::new();
    for _ in 0..100_000 {
        let e = sample_excursion_with(&grid, &mut r).unwrap();
        assert_eq!(e.values[0], 0.0);
        assert_eq!(*e.values.last().unwrap(), 0.0);
        assert!(e.values.iter().cloned().fold(f64::MIN, f64::max) > 0.0);
        mids.push(e.values[50]);
    }
    let ks = stats::ks_statistic(&mids, excursion_mid_oracle);
    assert!(ks <= 0.02, "KS {ks}");
    for v in [0.2, 0.6, 1.1] {
        assert!((excursion_mid_cdf(v) - excursion_mid_oracle(v)).abs() < 1e-9);
    }
}

#[test]
fn meander_from_excursion_formula_and_marginal() {
    let steps = 100;
    let grid = uniform_grid(1.0, steps);
    let mut r = rng(10);
    let mut at_07 = Vec::new();
    for i in 0..100_000 {
        let e = sample_excursion_with(&grid, &mut r).unwrap();
        let k = r.random_range(0..=steps);
        let u = grid[k];
        let m = meander_from_excursion(&e, u).unwrap();
        if i < 500 {
            for j in 0..=k {
                assert_eq!(m.values[j], e.values[j]);
            }
            // literal endpoint e_U + e_{1-(1-U)}
            assert!((m.values[steps] - 2.0 * e.values[k]).abs() < 1e-12);
        }
        at_07.push(m.values[70]);
    }
    let ks = stats::ks_statistic(&at_07, |y| meander_cdf_oracle(0.7, y));
    assert!(ks <= 0.02, "KS {ks}");
    assert!(meander_from_excursion(&sample_excursion(&grid, 1).unwrap(), 1.5).is_err());
}

#[test]
fn bessel_excursion_coupling() {
    let runs = 2000;
    let steps = 10_000;
    let mut r = rng(11);
    let mut positive = 0;
    let mut exc_mid = Vec::new();
    let mut bes_mid = Vec::new();
    for _ in 0..runs {
        let c = couple_bessel_excursion_with(steps, &mut r).unwrap();
        if c.epsilon > 0.0 {
            positive += 1;
        }
        for (i, &t) in c.excursion.times.iter().enumerate() {
            if t > c.epsilon {
                break;
            }
            assert_eq!(c.excursion.values[i].to_bits(), c.bessel.values[i].to_bits());
        }
        exc_mid.push(c.excursion.values[steps / 2]);
        bes_mid.push(c.bessel.values[steps / 2]);
    }
    assert!(positive as f64 >= 0.99 * runs as f64, "{positive}/{runs}");
    // the splice leaves both marginals at 1/2 unchanged
    let ks = stats::ks_statistic(&exc_mid, excursion_mid_oracle);
    assert!(stats::ks_pvalue(ks, runs as f64) > 0.01, "excursion KS {ks}");
    // |W_{1/2}| for 3D BM: Maxwell with scale 1/√2
    let maxwell = |v: f64| {
        let x = v * 2f64.sqrt();
        erf(x / 2f64.sqrt()) - (2.0 / PI).sqrt() * x * (-x * x / 2.0).exp()
    };
    let ks = stats::ks_statistic(&bes_mid, maxwell);
    assert!(stats::ks_pvalue(ks, runs as f64) > 0.01, "Bessel KS {ks}");
}

#[test]
fn decomposition_at_the_maximum() {
    let grid = uniform_grid(1.0, 10_000);
    let mut r = rng(12);
    let mut right_end = Vec::new();
    let mut left_f = Vec::new();
    let mut right_f = Vec::new();
    let mut k = 0;
    while right_end.len() < 10_000 {
        let p = sample_bm_with(&grid, &mut r).unwrap();
        let Ok(d) = decompose_bm_at_max(&p) else { continue };
        k += 1;
        assert_eq!(d.left.values[0], 0.0);
        assert_eq!(d.right.values[0], 0.0);
        assert!(d.left.values.iter().chain(&d.right.values).all(|&v| v >= 0.0));
        let rs = 1.0 - d.sigma;
        let ls = d.sigma;
        right_end.push(d.right.values.last().unwrap() / rs.sqrt());
        left_f.push(d.left.values.last().unwrap() / ls.sqrt());
        right_f.push(d.right.values[d.right.values.len() / 2] / rs.sqrt());
    }
    assert!(k >= 10_000);
    let ks = stats::ks_statistic(&right_end, rayleigh_cdf);
    assert!(ks <= 0.03, "KS {ks}");
    let c = stats::pearson(&left_f, &right_f);
    assert!(c.abs() <= 0.05, "correlation {c}");
}

#[test]
fn meander_inequalities() {
    let grid = BoundGrid {
        reflexion: vec![(0.5, 1.0)],
        increment: vec![],
        infimum: vec![],
        small_ball: vec![(0.4, 0.1)],
        exp_moment: vec![(0.5, 0.2)],
        inv_exp_moment: vec![],
    };
    let unit = uniform_grid(1.0, 100);
    let mut r = rng(13);
    let samples: Vec<ProcessPath> = (0..20_000)
        .map(|_| {
            let e = sample_excursion_with(&unit, &mut r).unwrap();
            let u = unit[r.random_range(0..=100)];
            meander_from_excursion(&e, u).unwrap()
        })
        .collect();
    let checks = meander_bound_checks(&samples, &grid);
    for c in &checks {
        assert!(c.holds, "{c:?}");
    }
    let exp = checks.iter().find(|c| c.name == "exp_moment").unwrap();
    assert!((exp.rhs - 0.8f64.powf(-1.5)).abs() < 1e-12);
    let sb = checks.iter().find(|c| c.name == "cor_meander_small_ball").unwrap();
    assert!((sb.lhs - meander_cdf_oracle(0.4, 0.1)).abs() < 1e-6);
    assert!((sb.rhs - 0.4 / (0.4 * PI).sqrt() * (0.01f64 / 0.8).min(1.0)).abs() < 1e-12, "{}", sb.rhs);
}
