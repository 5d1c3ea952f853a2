//! Integer-order Bessel functions of the first kind and their positive zeros.

use std::f64::consts::PI;

/// `J_m(x)` from the periodic integral `(1/2π)∫ cos(mτ - x sin τ) dτ`.
///
/// The trapezoid rule on a full period is exact up to aliased terms of order
/// `J_{M-m}(x)`, negligible once the node count `M` exceeds `m + |x|` by a margin.
pub fn bessel_j(m: usize, x: f64) -> f64 {
    let nodes = 2 * (x.abs().ceil() as usize + m + 40);
    let h = 2.0 * PI / nodes as f64;
    let mf = m as f64;
    let mut acc = 0.0;
    for k in 0..nodes {
        let t = k as f64 * h;
        acc += (mf * t - x * t.sin()).cos();
    }
    acc / nodes as f64
}

/// Positive zeros of `J_m` not exceeding `upper`, ascending.
pub fn bessel_zeros(m: usize, upper: f64) -> Vec<f64> {
    // consecutive zeros are more than 3 apart, and j_{m,1} > m
    let step = 0.5;
    let mut zeros = Vec::new();
    let mut a = (m as f64).max(step);
    let mut fa = bessel_j(m, a);
    while a < upper {
        let b = (a + step).min(upper);
        let fb = bessel_j(m, b);
        if fa == 0.0 {
            zeros.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            zeros.push(bisect(m, a, b, fa));
        }
        if b >= upper {
            if fb == 0.0 {
                zeros.push(b);
            }
            break;
        }
        a = b;
        fa = fb;
    }
    zeros
}

fn bisect(m: usize, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let fm = bessel_j(m, mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
    }
    0.5 * (a + b)
}
