//! Numerical quadrature shared by the oracle tests.

use std::f64::consts::{PI, SQRT_2};

pub fn e(k: usize, x: f64) -> f64 {
    SQRT_2 * (k as f64 * PI * x).sin()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson with Richardson correction.
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Integral over `(0, 1)` split into panels so every panel is well resolved.
pub fn integrate(f: &dyn Fn(f64) -> f64) -> f64 {
    let panels = 16;
    (0..panels)
        .map(|i| adaptive(f, i as f64 / panels as f64, (i + 1) as f64 / panels as f64, 1e-15, 40))
        .sum()
}
