use rpl_core::rangelaw::*;

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        assert_eq!(a, b, "{what}");
    } else {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }
}

#[test]
fn range_law_equals_enumeration_up_to_14() {
    for n in 1..=14u32 {
        let e = enumerate_range_law(n);
        for x in 0..=n as u64 {
            for y in 0..=n as u64 {
                let p = exact_range_law(n as u64, x, y).exp();
                let q = if x + y <= n as u64 { e[x as usize][y as usize] } else { 0.0 };
                assert!((p - q).abs() <= 1e-12, "n={n} x={x} y={y}: {p} vs {q}");
                if q == 0.0 {
                    assert_eq!(exact_range_law(n as u64, x, y), f64::NEG_INFINITY);
                }
            }
        }
    }
}

#[test]
fn dp_rows_equal_enumeration() {
    for n in 1..=12u32 {
        let e = enumerate_range_law(n);
        for t in 1..=n as u64 {
            let row = range_row_dp(n as u64, t);
            for x in 0..=t {
                let q = e[x as usize][(t - x) as usize];
                assert!((row[x as usize].exp() - q).abs() <= 1e-14);
            }
        }
    }
}

#[test]
fn halfline_matches_dp_and_enumeration() {
    for n in 1..=12u64 {
        let mut counts = vec![0u64; n as usize + 1];
        for bits in 0u64..(1 << n) {
            let (mut s, mut hi, mut ok) = (0i64, 0i64, true);
            for k in 0..n {
                s += if bits >> k & 1 == 1 { 1 } else { -1 };
                ok &= s >= 0;
                hi = hi.max(s);
            }
            if ok {
                counts[hi as usize] += 1;
            }
        }
        for t in 1..=n {
            let q = counts[t as usize] as f64 / (1u64 << n) as f64;
            assert!((halfline_range_law(n, t).exp() - q).abs() < 1e-14, "n={n} t={t}");
            assert!((halfline_range_law_dp(n, t).exp() - q).abs() < 1e-14);
        }
    }
    for &(n, t) in &[(500u64, 20u64), (1000, 35), (1000, 60)] {
        let a = halfline_range_law(n, t);
        let b = halfline_range_law_dp(n, t);
        assert!(((a - b) / b).abs() < 1e-10);
    }
}

#[test]
fn spectral_stay_agrees_with_dp() {
    for &n in &[0u64, 1, 7, 50, 333, 1000] {
        for t in [0u64, 1, 2, 5, 13, 30, 60] {
            for x in [0, t / 3, t / 2, t] {
                let a = stay_probability(n, x, t - x);
                let b = stay_probability_dp(n, x, t - x);
                if b == f64::NEG_INFINITY {
                    assert_eq!(a, b, "n={n} t={t} x={x}");
                } else {
                    assert!((a.exp() - b.exp()).abs() <= 1e-10 * b.exp() || (a - b).abs() <= 1e-10,
                        "n={n} t={t} x={x}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn spectral_range_agrees_with_dp_at_moderate_n() {
    for &n in &[200u64, 1000] {
        for t in [4u64, 10, 25, 40, 60] {
            let row = range_row_dp(n, t);
            for x in 0..=t {
                let s = exact_range_law(n, x, t - x);
                if row[x as usize] == f64::NEG_INFINITY {
                    assert_eq!(s, f64::NEG_INFINITY);
                } else {
                    assert!((s - row[x as usize]).abs() < 1e-9, "n={n} t={t} x={x}: {s} vs {}", row[x as usize]);
                }
            }
        }
    }
}

#[test]
fn stay_probability_decreases_in_n_and_is_dominated() {
    let (x, y) = (3u64, 5u64);
    let lam = (std::f64::consts::PI / (x + y + 2) as f64).cos();
    let mut prev = 0.0;
    for n in 0..200u64 {
        let q = stay_probability(n, x, y);
        assert!(q <= prev + 1e-15);
        assert!(q <= 0.5 * ((x + y + 1) as f64).ln() + n as f64 * lam.ln() + 1e-12);
        prev = q;
    }
}

#[test]
fn symmetry() {
    for &n in &[15u64, 400, 5000] {
        for t in 1..30u64 {
            for x in 0..=t {
                let a = exact_range_law(n, x, t - x);
                let b = exact_range_law(n, t - x, x);
                assert_close(a, b, 1e-10, "symmetry");
            }
        }
    }
}

#[test]
fn full_table_is_normalized() {
    let t = build_table(10, &WindowPolicy::Full);
    assert!((t.total_mass() - 1.0).abs() < 1e-12);
    assert_eq!(t.truncation_error, 0.0);
    let t = build_table_with(200, &WindowPolicy::Full, Method::Spectral);
    assert!((t.total_mass() - 1.0).abs() < 1e-10);
}

#[test]
fn table_n12_equals_enumeration() {
    let e = enumerate_range_law(12);
    for method in [Method::Auto, Method::Spectral, Method::Dp] {
        let t = build_table_with(12, &WindowPolicy::Full, method);
        for (x, y, lp) in t.iter() {
            assert!((lp.exp() - e[x as usize][y as usize]).abs() < 1e-13);
        }
    }
    let t = build_table_with(12, &WindowPolicy::Full, Method::Enumerate);
    assert_eq!(t.mode, Mode::Enumeration);
}

#[test]
fn range_window_mass_is_bounded() {
    let t = build_table(400, &WindowPolicy::Range { t_min: 10, t_max: 120 });
    let m = t.total_mass();
    assert!(m <= 1.0 + 1e-12);
    assert!(m + t.truncation_error >= 1.0);
}

#[test]
fn centered_table_at_one_million() {
    let n = 1_000_000;
    let h = 1.0;
    let t = build_table(n, &WindowPolicy::Centered { h, tol: 1e-10 });
    assert!(t.truncation_error <= 1e-10);
    let mid = (t.t_min + t.t_max) / 2;
    let w = t.t_max - t.t_min;
    let wide = build_table(
        n,
        &WindowPolicy::Range { t_min: mid.saturating_sub(3 * w / 2).max(1), t_max: mid + 3 * w / 2 },
    );
    let tilted = |tab: &RangeLawTable| {
        let v: Vec<f64> = tab.iter().map(|(x, y, lp)| lp - h * (x + y + 1) as f64).collect();
        rpl_core::numeric::log_sum_exp(&v)
    };
    let a = tilted(&t);
    let b = tilted(&wide);
    assert!(b >= a);
    assert!((b - a).exp_m1() <= 1e-10);
}

#[test]
fn theta_is_finite_in_the_interior() {
    let n = 10_000;
    for x in 1..39u64 {
        let v = theta_asymptotic(n, 1.0, x, 40 - x).unwrap();
        assert!(v.is_finite());
    }
    // at x = T-1 the printed form is e^h·sin(π) − sin(π(T−1)/T) < 0
    assert!(matches!(theta_asymptotic(n, 1.0, 39, 1), Err(RangeError::NonPositive { .. })));
}
