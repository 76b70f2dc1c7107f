//! Incomplete beta and F tail against quadrature and closed forms that do
//! not share code with the continued-fraction implementation.

use moldloop::stats::{beta_inc, f_sf};

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

fn beta_by_quadrature(a: f64, b: f64, x: f64) -> f64 {
    let density = |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
    let n = 200_000;
    simpson(density, 0.0, x, n) / simpson(density, 0.0, 1.0, n)
}

#[test]
fn beta_inc_matches_quadrature() {
    let shapes = [2.0, 2.5, 3.0, 4.5, 7.0, 11.5];
    let xs = [0.05, 0.2, 0.37, 0.5, 0.81, 0.97];
    for &a in &shapes {
        for &b in &shapes {
            for &x in &xs {
                let want = beta_by_quadrature(a, b, x);
                let got = beta_inc(a, b, x);
                assert!((got - want).abs() < 1e-10, "I_{x}({a}, {b}) = {got}, quadrature {want}");
            }
        }
    }
}

#[test]
fn f_tail_with_one_numerator_df_matches_t_distribution() {
    // F(1, ν) is the square of Student t with ν df.
    for &t in &[0.1f64, 0.5, 1.0, 2.0, 4.0, 10.0] {
        let cauchy = 1.0 - 2.0 / std::f64::consts::PI * t.atan();
        assert!((f_sf(t * t, 1.0, 1.0) - cauchy).abs() < 1e-12, "nu=1 t={t}");
        let two = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((f_sf(t * t, 1.0, 2.0) - two).abs() < 1e-12, "nu=2 t={t}");
    }
}

#[test]
fn f_tail_with_two_numerator_df_is_closed_form() {
    // With d1 = 2 the survival function is (1 + 2f/d2)^(-d2/2).
    for &d2 in &[1.0f64, 3.0, 8.0, 24.0] {
        for &f in &[0.0, 0.3, 1.0, 3.5, 20.0] {
            let want = (1.0 + 2.0 * f / d2).powf(-d2 / 2.0);
            assert!((f_sf(f, 2.0, d2) - want).abs() < 1e-12, "d2={d2} f={f}");
        }
    }
}
