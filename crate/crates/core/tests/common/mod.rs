//! Test-only oracles that share no code path with the crate under test.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Double-exponential (tanh-sinh) quadrature of `f(x, x - a, b - x)` on
/// `[a, b]`. Distances to the endpoints are passed separately so that
/// algebraic endpoint singularities are evaluated without cancellation.
pub fn tanh_sinh<F: Fn(f64, f64, f64) -> f64>(a: f64, b: f64, tol: f64, f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let node = |u: f64| -> Option<f64> {
        let s = 0.5 * PI * u.sinh();
        let c = 0.5 * PI * u.cosh();
        // 1 - tanh(|s|) computed stably
        let e = (-2.0 * s.abs()).exp();
        let one_minus = 2.0 * e / (1.0 + e);
        let w = c * 4.0 * e / ((1.0 + e) * (1.0 + e));
        let (da, db) = if s >= 0.0 {
            (half * (2.0 - one_minus), half * one_minus)
        } else {
            (half * one_minus, half * (2.0 - one_minus))
        };
        if da <= 0.0 || db <= 0.0 {
            return None;
        }
        let x = if s >= 0.0 { b - db } else { a + da };
        let _ = mid;
        Some(half * w * f(x, da, db))
    };
    let mut step = 0.5;
    let mut prev = f64::NAN;
    for _level in 0..12 {
        let mut sum = 0.0;
        let mut k: i64 = 0;
        loop {
            let u = k as f64 * step;
            if u > 6.5 {
                break;
            }
            if let Some(v) = node(u) {
                sum += v;
            }
            if k > 0 {
                if let Some(v) = node(-u) {
                    sum += v;
                }
            }
            k += 1;
        }
        let est = sum * step;
        if (est - prev).abs() <= tol * est.abs().max(1.0) {
            return est;
        }
        prev = est;
        step *= 0.5;
    }
    prev
}

pub fn beta(a: f64, b: f64) -> f64 {
    statrs::function::beta::beta(a, b)
}

/// Normalization constant with the standard beta function.
pub fn constant(h: f64) -> f64 {
    if h < 0.5 {
        (2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt()
    } else {
        (h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt()
    }
}

/// Volterra kernel from its defining integral.
pub fn kernel(t: f64, s: f64, h: f64) -> f64 {
    let a = h - 0.5;
    if h == 0.5 {
        return 1.0;
    }
    let c = constant(h);
    if h > 0.5 {
        let i = tanh_sinh(s, t, 1e-12, |u, du, _| du.powf(a - 1.0) * u.powf(a));
        c * s.powf(-a) * i
    } else {
        let i = tanh_sinh(s, t, 1e-12, |u, du, _| du.powf(a) * u.powf(a - 1.0));
        c * ((t * (t - s) / s).powf(a) - a * s.powf(-a) * i)
    }
}

pub fn covariance(t: f64, s: f64, h: f64) -> f64 {
    0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}
