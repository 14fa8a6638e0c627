use rpl_core::env::{generate_environment, prefix_sums, Environment, Law, Window};
use rpl_core::polymer::*;
use rpl_core::rangelaw::c_h;
use rpl_core::varprob::HalflineOptions;
use std::collections::HashMap;
use std::f64::consts::PI;

fn gaussian(half: i64, seed: u64) -> Environment {
    generate_environment(&Law::Gaussian, Window::new(-half, half), seed).unwrap()
}

/// All 2^n walks: `Z` and the law of `(x, y) = (-min, max)` under the polymer.
fn brute_force(n: u32, env: &Environment, h: f64, beta: f64) -> (f64, HashMap<(u64, u64), f64>) {
    let mut w: HashMap<(u64, u64), f64> = HashMap::new();
    for bits in 0u64..1 << n {
        let (mut s, mut lo, mut hi) = (0i64, 0i64, 0i64);
        for k in 0..n {
            s += if bits >> k & 1 == 1 { 1 } else { -1 };
            lo = lo.min(s);
            hi = hi.max(s);
        }
        let field: f64 = (lo..=hi).map(|z| env.omega(z).unwrap()).sum();
        let weight = (beta * field - h * (hi - lo + 1) as f64).exp() / 2f64.powi(n as i32);
        *w.entry(((-lo) as u64, hi as u64)).or_default() += weight;
    }
    let z: f64 = w.values().sum();
    w.values_mut().for_each(|v| *v /= z);
    (z, w)
}

fn brute_force_halfline(n: u32, env: &Environment, h: f64, beta: f64) -> (f64, Vec<f64>) {
    let mut w = vec![0.0; n as usize + 1];
    for bits in 0u64..1 << n {
        let (mut s, mut hi, mut ok) = (0i64, 0i64, true);
        for k in 0..n {
            s += if bits >> k & 1 == 1 { 1 } else { -1 };
            ok &= s >= 0;
            hi = hi.max(s);
        }
        if ok {
            let field: f64 = (0..=hi).map(|z| env.omega(z).unwrap()).sum();
            w[hi as usize] += (beta * field - h * hi as f64).exp() / 2f64.powi(n as i32);
        }
    }
    let z: f64 = w.iter().sum();
    (z, w.iter().map(|v| v / z).collect())
}

fn log_z(env: &Environment, n: u64, h: f64, beta: f64) -> f64 {
    log_partition_env(env, &PolymerParams::new(n, h, beta).unwrap()).unwrap()
}

#[test]
fn free_energy_of_one_and_two_steps() {
    let h = 0.7;
    let p = PolymerParams::new(1, h, 0.0).unwrap();
    let t = table_for(&p);
    let lz = log_partition(&t, &zero_sums(t.t_max), &p, |_, _| true).unwrap();
    assert!((lz + 2.0 * h).abs() < 1e-14);

    let p = PolymerParams::new(2, h, 0.0).unwrap();
    let t = table_for(&p);
    let m = endpoint_marginal(&t, &zero_sums(t.t_max), &p).unwrap();
    let z = 0.5 * (-2.0 * h).exp() + 0.5 * (-3.0 * h).exp();
    assert!((m.log_z - z.ln()).abs() < 1e-14);
    for (x, y, e) in [(0, 1, -2.0), (1, 0, -2.0), (0, 2, -3.0), (2, 0, -3.0)] {
        assert!((m.prob(x, y) - 0.25 * (e * h).exp() / z).abs() < 1e-14, "({x}, {y})");
    }
    assert_eq!(m.prob(1, 1), 0.0);
}

#[test]
fn partition_and_marginal_match_enumeration() {
    let n = 14;
    let env = gaussian(n as i64, 3);
    let (h, beta) = (0.6, 0.7);
    let (z, law) = brute_force(n, &env, h, beta);
    let p = PolymerParams::new(n as u64, h, beta).unwrap();
    let m = endpoint_marginal(&table_for(&p), &prefix_sums(&env).unwrap(), &p).unwrap();
    assert!((m.log_z - z.ln()).abs() < 1e-12, "{} vs {}", m.log_z, z.ln());
    for (x, y, q) in m.iter() {
        let b = law.get(&(x, y)).copied().unwrap_or(0.0);
        assert!((q - b).abs() < 1e-12, "({x}, {y}): {q} vs {b}");
    }
    assert!((m.total() - 1.0).abs() < 1e-12);
}

#[test]
fn constant_field_shifts_the_penalty() {
    let (n, h, beta, c) = (150, 1.3, 0.5, 0.8);
    let env = Environment::constant(Window::new(-150, 150), c);
    let zero = Environment::constant(Window::new(-150, 150), 0.0);
    let a = log_z(&env, n, h, beta);
    let b = log_z(&zero, n, h - beta * c, 0.0);
    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
}

#[test]
fn reflected_field_gives_the_same_polymer() {
    let n = 180;
    let env = gaussian(n as i64, 8);
    let refl = env.reflected();
    assert_eq!(refl.omega(5).unwrap(), env.omega(-5).unwrap());
    let p = PolymerParams::new(n, 1.0, 1.0).unwrap();
    let t = table_for(&p);
    let a = endpoint_marginal(&t, &prefix_sums(&env).unwrap(), &p).unwrap();
    let b = endpoint_marginal(&t, &prefix_sums(&refl).unwrap(), &p).unwrap();
    assert!((a.log_z - b.log_z).abs() < 1e-10);
    for (x, y, q) in a.iter() {
        assert!((q - b.prob(y, x)).abs() < 1e-12);
    }
}

#[test]
fn log_z_decreases_in_h() {
    let n = 10_000;
    let env = gaussian(n as i64, 4);
    let vals: Vec<f64> = [0.5, 0.8, 1.0, 1.5, 2.0].iter().map(|&h| log_z(&env, n, h, 1.0)).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}

#[test]
fn first_order_constants() {
    // -(3/2) (π h)^{2/3} at h = 1
    assert!((f1_limit(1.0) + 3.21754).abs() < 5e-6, "{}", f1_limit(1.0));
    for h in [0.5, 1.0, 2.0] {
        assert!((1.5 * h * c_h(h) + f1_limit(h)).abs() < 1e-12);
        assert!((c_h(h) - (PI * PI / h).cbrt()).abs() < 1e-12);
    }
    let a = (PI * PI * 1e6f64).powf(1.0 / 6.0) / 3f64.sqrt();
    assert!((a_n(1_000_000, 1.0) - a).abs() < 1e-12);
    assert!((a - 8.46).abs() < 5e-3);
}

#[test]
fn homogeneous_polymer_converges() {
    let reps: Vec<HomogeneousReport> = [10_000u64, 100_000, 1_000_000]
        .iter()
        .map(|&n| homogeneous_fluctuations(n, 1.0).unwrap())
        .collect();
    let last = reps.last().unwrap();
    assert!(last.tv_minus <= 0.05, "TV {}", last.tv_minus);
    assert!(last.truncation < 1e-10);
    let gaps: Vec<f64> = reps.iter().map(|r| (r.f1 - f1_limit(1.0)).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[2] <= 0.05 * f1_limit(1.0).abs());
    let r2: Vec<f64> = reps.iter().map(|r| residual2(r.log_z, r.n, 1.0, 0.0).abs()).collect();
    assert!(r2.windows(2).all(|w| w[1] < w[0]), "{r2:?}");
    // |M-| / T* fills [0, 1] symmetrically
    let p = PolymerParams::new(1_000_000, 1.0, 0.0).unwrap();
    let t = table_for(&p);
    let m = endpoint_marginal(&t, &zero_sums(t.t_max), &p).unwrap();
    let mean_minus: f64 = m.minus_law().iter().enumerate().map(|(x, q)| x as f64 * q).sum();
    assert!((mean_minus / m.mean_t() - 0.5).abs() < 1e-9);
}

#[test]
fn wide_windows_hold_all_the_mass() {
    let n = 100_000;
    let env = gaussian(rpl_core::rangelaw::t_max_for(n, 1.0) as i64, 5);
    let p = PolymerParams::new(n, 1.0, 1.0).unwrap();
    let m = endpoint_marginal(&table_for(&p), &prefix_sums(&env).unwrap(), &p).unwrap();
    let c = c_h(1.0);
    let all = endpoint_localization(&m, 0.5 * c, c);
    assert!((all - m.total()).abs() < 1e-9, "{all}");
    let narrow = endpoint_localization(&m, 0.5 * c, 0.05);
    assert!(narrow < all);
}

#[test]
fn adaptive_windows_only_add_mass() {
    let n = 20_000;
    let p = PolymerParams::new(n, 1.0, 1.0).unwrap();
    let ladder = TableLadder::new(&p, heavy_window(n, 1.0));
    let law = Law::Stable { alpha: 1.2, p: 0.5, q: 0.5 };
    let half = heavy_window(n, 1.0) as i64;
    let env = generate_environment(&law, Window::new(-half, half), 17).unwrap();
    let sums = prefix_sums(&env).unwrap();
    let zs: Vec<f64> = (0..ladder.len()).map(|k| endpoint_marginal(ladder.level(k), &sums, &p).unwrap().log_z).collect();
    assert!(zs.windows(2).all(|w| w[1] >= w[0]), "{zs:?}");
    let m = adaptive_marginal(&ladder, &sums, &p, 1e-9).unwrap();
    assert!(m.edge_mass <= 1e-9 || m.t_max == ladder.reach);
}

#[test]
fn halfline_small_cases() {
    let h = 0.9;
    let t = halfline_table(1, 1);
    let p = PolymerParams::new(1, h, 0.0).unwrap();
    let lz = halfline_partition(&t, &zero_sums(1), &p).unwrap();
    assert!((lz - (0.5 * (-h).exp()).ln()).abs() < 1e-14);

    let n = 16;
    let env = gaussian(n as i64, 6);
    let (z, law) = brute_force_halfline(n, &env, h, 0.8);
    let p = PolymerParams::new(n as u64, h, 0.8).unwrap();
    let m = halfline_marginal(&halfline_table(n as u64, n as u64), &prefix_sums(&env).unwrap(), &p).unwrap();
    assert!((m.log_z - z.ln()).abs() < 1e-12);
    for t in 1..=n as u64 {
        assert!((m.prob(t) - law[t as usize]).abs() < 1e-12, "T = {t}");
    }
    assert_eq!(m.truncation, 0.0);
}

#[test]
fn halfline_first_order_and_normalization() {
    let n = 1_000_000;
    let p = PolymerParams::new(n, 1.0, 0.0).unwrap();
    let t = halfline_table_for(&p);
    let m = halfline_marginal(&t, &zero_sums(t.t_max), &p).unwrap();
    let f1 = m.log_z / (n as f64).cbrt();
    assert!((f1 - f1_limit(1.0)).abs() <= 0.05 * f1_limit(1.0).abs(), "{f1}");
    let total: f64 = m.probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(m.truncation < 1e-10);
}

#[test]
fn local_limit_profile_is_normalized() {
    let n = 10_000;
    let opts = HalflineOptions::default();
    let p = PolymerParams::new(n, opts.h, opts.beta).unwrap();
    let r = rpl_core::experiments::run_halfline(&rpl_core::experiments::HalflineConfig {
        ns: vec![n],
        replicas: 1,
        seed: 9,
        options: opts,
        half_width: 10,
    })
    .unwrap();
    let rep = &r[0].report;
    let theta: f64 = rep.rows.iter().map(|row| (-p.beta * row.gap).exp()).sum();
    assert!((theta - rep.theta).abs() <= 1e-12 * theta);
    let predicted: f64 = rep.rows.iter().map(|row| row.predicted).sum();
    assert!((predicted - 1.0).abs() < 1e-12);
    assert!(rep.rows.iter().all(|row| row.pmf >= 0.0 && row.gap.is_finite()));
    assert!((0.0..=1.0).contains(&rep.tail_mass));
}
