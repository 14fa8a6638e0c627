use rpl_core::env::*;
use rpl_core::stats;
use rpl_core::stochproc::{sample_bm, uniform_grid, ProcessKind, ProcessPath};

#[test]
fn gaussian_window_and_moments() {
    let e = generate_environment(&Law::Gaussian, Window::new(-10, 10), 1).unwrap();
    assert_eq!(e.values.len(), 21);
    assert_eq!(e.omega(-10).unwrap(), e.values[0]);
    assert!(e.omega(11).is_err());

    let big = generate_environment(&Law::Gaussian, Window::new(0, 999_999), 1).unwrap();
    let m = stats::mean(&big.values);
    let v = stats::variance(&big.values);
    assert!(m.abs() <= 4.0 / 1e3, "mean {m}");
    assert!((v - 1.0).abs() <= 0.01, "variance {v}");
}

#[test]
fn same_seed_same_field() {
    let a = generate_environment(&Law::Gaussian, Window::new(-50, 50), 9).unwrap();
    let b = generate_environment(&Law::Gaussian, Window::new(-50, 50), 9).unwrap();
    let c = generate_environment(&Law::Gaussian, Window::new(-50, 50), 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.values, c.values);
}

#[test]
fn two_point_support() {
    let e = generate_environment(&Law::TwoPoint, Window::new(-500, 500), 3).unwrap();
    assert!(e.values.iter().all(|&v| v == 1.0 || v == -1.0));
    let plus = e.values.iter().filter(|&&v| v == 1.0).count();
    assert!(plus > 400 && plus < 600);
}

#[test]
fn uniform_support_and_variance() {
    let e = generate_environment(&Law::uniform_unit(), Window::new(0, 199_999), 4).unwrap();
    let h = 3f64.sqrt();
    assert!(e.values.iter().all(|v| v.abs() <= h));
    assert!((stats::variance(&e.values) - 1.0).abs() < 0.02);
}

#[test]
fn stable_tail_frequency() {
    let (alpha, p) = (1.5, 0.5);
    let n = 10_000_000i64;
    let e = generate_environment(&Law::Stable { alpha, p, q: 0.5 }, Window::new(0, n - 1), 5).unwrap();
    let hits = e.values.iter().filter(|&&v| v > 10.0).count() as f64 / n as f64;
    // density α p t^{-α-1} on t ≥ 1 integrates to p 10^{-α} above 10
    let exact = p * 10f64.powf(-alpha);
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((hits - exact).abs() <= 3.0 * se, "{hits} vs {exact} (se {se})");
    let below = e.values.iter().filter(|&&v| v < -10.0).count() as f64 / n as f64;
    assert!((below - exact).abs() <= 3.0 * se, "{below} vs {exact}");
}

#[test]
fn stable_law_is_centered_with_pure_tails() {
    let s = StableParts::new(1.7, 0.3, 0.7).unwrap();
    assert!(s.mean().abs() < 1e-12);
    assert!(s.r >= 1.0);
    // the power tails start where the centering uniform part ends
    for t in [s.r, 2.0 * s.r, 5.0 * s.r, 40.0] {
        assert!((1.0 - s.cdf(t) - 0.3 * t.powf(-1.7)).abs() < 1e-12);
        assert!((s.cdf(-t) - 0.7 * t.powf(-1.7)).abs() < 1e-12);
    }
    assert!(StableParts::new(1.0, 0.5, 0.5).is_err());
    assert!(StableParts::new(2.5, 0.5, 0.5).is_err());
}

#[test]
fn prefix_sums_of_zero_and_constant_fields() {
    let z = Environment::constant(Window::new(-20, 20), 0.0);
    let s = prefix_sums(&z).unwrap();
    assert!(s.sigma_plus.iter().chain(&s.sigma_minus).all(|&v| v == 0.0));

    let one = Environment::constant(Window::new(-20, 20), 1.0);
    let s = prefix_sums(&one).unwrap();
    for j in 0..=20 {
        assert_eq!(s.sigma_plus[j], (j + 1) as f64);
        assert_eq!(s.sigma_minus[j], j as f64);
    }
    assert_eq!(s.range_sum(3, 4).unwrap(), 8.0);
    assert!(s.range_sum(21, 0).is_err());
}

#[test]
fn prefix_sums_match_direct_summation() {
    let e = generate_environment(&Law::Gaussian, Window::new(-30, 30), 12).unwrap();
    let s = prefix_sums(&e).unwrap();
    let direct: f64 = (0..=5).map(|z| e.omega(z).unwrap()).sum();
    assert!((s.sigma_plus[5] - direct).abs() < 1e-12);
    let left: f64 = (1..=7).map(|z| e.omega(-z).unwrap()).sum();
    assert!((s.sigma_minus[7] - left).abs() < 1e-12);
    let r: f64 = (-7..=5).map(|z| e.omega(z).unwrap()).sum();
    assert!((s.range_sum(7, 5).unwrap() - r).abs() < 1e-12);
}

#[test]
fn prefix_sums_need_the_origin() {
    let e = Environment::constant(Window::new(1, 5), 1.0);
    assert!(prefix_sums(&e).is_err());
}

fn zero_path(duration: f64, steps: usize) -> ProcessPath {
    let times = uniform_grid(duration, steps);
    ProcessPath { values: vec![0.0; times.len()], times, kind: ProcessKind::Bm, duration }
}

#[test]
fn brownian_field_from_zero_paths_is_zero() {
    let n = 1000;
    let p = zero_path(5.0, 50);
    let e = env_from_brownian(n, &p, &p, 2.145, 0).unwrap();
    assert!(e.values.iter().all(|&v| v == 0.0));
}

#[test]
fn brownian_field_has_unit_increments_and_telescopes() {
    let n = 1000u64;
    let (duration, steps) = (2000.0, 20_000);
    let x1 = sample_bm(&uniform_grid(duration, steps), 21).unwrap();
    let x2 = sample_bm(&uniform_grid(duration, steps), 22).unwrap();
    let e = env_from_brownian(n, &x1, &x2, 2.145, 0).unwrap();
    assert_eq!(e.omega(0).unwrap(), 0.0);
    let right: Vec<f64> = (1..=steps as i64).map(|z| e.omega(z).unwrap()).collect();
    let v = stats::variance(&right);
    assert!((v - 1.0).abs() < 0.04, "increment variance {v}");

    let s = prefix_sums(&e).unwrap();
    let scale = (n as f64).powf(1.0 / 6.0);
    for y in [1usize, 10, 500, 19_999] {
        let lhs = s.sigma_plus[y] / scale;
        let rhs = x2.values[y];
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0), "y = {y}: {lhs} vs {rhs}");
        let lhs = s.sigma_minus[y] / scale;
        assert!((lhs - x1.values[y]).abs() <= 1e-10 * x1.values[y].abs().max(1.0));
    }
}

#[test]
fn brownian_field_rejects_wrong_grids() {
    let p = zero_path(5.0, 40);
    assert!(matches!(env_from_brownian(1000, &p, &p, 2.145, 0), Err(EnvError::GridMismatch { .. })));
    let short = zero_path(1.0, 10);
    assert!(matches!(env_from_brownian(1000, &short, &short, 2.145, 0), Err(EnvError::ShortPath { .. })));
}

#[test]
fn skorokhod_two_point() {
    let r = skorokhod_embed(&TargetLaw::TwoPoint, 1_000_000, 3).unwrap();
    assert!(r.embedded_values.iter().all(|&v| v == 1.0 || v == -1.0));
    let plus = r.embedded_values.iter().filter(|&&v| v == 1.0).count() as f64 / 1e6;
    assert!((plus - 0.5).abs() < 4.0 * (0.25f64 / 1e6).sqrt());
    let tau = stats::mean(&r.stop_times);
    assert!((tau - 1.0).abs() <= 0.01, "E[tau] = {tau}");
}

#[test]
fn skorokhod_degenerate() {
    let r = skorokhod_embed(&TargetLaw::Degenerate, 100, 3).unwrap();
    assert!(r.stop_times.iter().all(|&t| t == 0.0));
    assert!(r.embedded_values.iter().all(|&v| v == 0.0));
}

#[test]
fn skorokhod_uniform_law_and_moment() {
    let r = skorokhod_embed(&TargetLaw::Uniform { half_width: 1.0 }, 100_000, 1).unwrap();
    let ks = stats::ks_statistic(&r.embedded_values, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
    assert!(ks <= 0.005, "KS {ks}");
    let tau = stats::mean(&r.stop_times);
    assert!((tau - 1.0 / 3.0).abs() < 4.0 * stats::std_error(&r.stop_times), "E[tau] = {tau}");
    assert!(skorokhod_embed(&TargetLaw::Uniform { half_width: 0.0 }, 1, 0).is_err());
}

#[test]
fn skorokhod_gaussian_moment() {
    let r = skorokhod_embed(&TargetLaw::Gaussian, 200_000, 6).unwrap();
    let tau = stats::mean(&r.stop_times);
    assert!((tau - 1.0).abs() < 4.0 * stats::std_error(&r.stop_times), "E[tau] = {tau}");
    let ks = stats::ks_statistic(&r.embedded_values, rpl_core::numeric::norm_cdf);
    assert!(ks < 0.005);
}

#[test]
fn exit_interval_hits_an_endpoint() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
    let n = 200_000;
    let mut hits_b = 0;
    let mut times = Vec::with_capacity(n);
    for _ in 0..n {
        let (v, t) = exit_interval(-1.0, 3.0, &mut rng);
        assert!(v == -1.0 || v == 3.0);
        hits_b += usize::from(v == 3.0);
        times.push(t);
    }
    // gambler's ruin: P(hit b) = |a| / (b - a); E[τ] = |a| b
    let pb = hits_b as f64 / n as f64;
    assert!((pb - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    assert!((stats::mean(&times) - 3.0).abs() < 4.0 * stats::std_error(&times));
}
