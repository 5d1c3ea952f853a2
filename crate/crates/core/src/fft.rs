//! Centered 2D DFT on odd square grids.
//!
//! "Centered" means index `j` along an axis represents coordinate `j - c`
//! with `c = (n - 1) / 2`, in both the spatial and the frequency domain.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("side", &self.side).finish()
    }
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Centered layout -> standard (DC at index 0) layout.
    fn uncenter(&self, data: &[Complex64]) -> Vec<Complex64> {
        let n = self.side;
        let c = (n - 1) / 2;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for k in 0..n {
            let src_r = (k + c) % n;
            for l in 0..n {
                out[k * n + l] = data[src_r * n + (l + c) % n];
            }
        }
        out
    }

    fn center(&self, data: &[Complex64]) -> Vec<Complex64> {
        let n = self.side;
        let c = (n - 1) / 2;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let src_r = (j + n - c) % n;
            for i in 0..n {
                out[j * n + i] = data[src_r * n + (i + n - c) % n];
            }
        }
        out
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.side;
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }

    /// Unnormalized forward DFT, centered in and out.
    pub fn forward(&self, data: &[Complex64]) -> Vec<Complex64> {
        let mut buf = self.uncenter(data);
        self.transform(&mut buf, &self.forward);
        self.center(&buf)
    }

    /// Inverse DFT with `1/n²` normalization, centered in and out.
    pub fn inverse(&self, data: &[Complex64]) -> Vec<Complex64> {
        let mut buf = self.uncenter(data);
        self.transform(&mut buf, &self.inverse);
        let scale = 1.0 / (self.side * self.side) as f64;
        for v in &mut buf {
            *v *= scale;
        }
        self.center(&buf)
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&buf)
    }

    /// Pointwise Fourier multiplier applied to a (possibly complex) grid.
    pub fn filter(&self, data: &[Complex64], multiplier: &[f64]) -> Vec<Complex64> {
        let mut spec = self.forward(data);
        for (v, m) in spec.iter_mut().zip(multiplier) {
            *v *= *m;
        }
        self.inverse(&spec)
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft() {
        let n = 5;
        let c = 2isize;
        let data: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let fast = Fft2::new(n).forward(&data);
        for ku in 0..n {
            for kv in 0..n {
                let (u, v) = (kv as isize - c, ku as isize - c);
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    for col in 0..n {
                        let (x, y) = (col as isize - c, r as isize - c);
                        let ph = -2.0 * std::f64::consts::PI * ((u * x + v * y) as f64) / n as f64;
                        acc += data[r * n + col] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - fast[ku * n + kv]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let n = 7;
        let data: Vec<Complex64> = (0..n * n).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let f = Fft2::new(n);
        let back = f.inverse(&f.forward(&data));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
