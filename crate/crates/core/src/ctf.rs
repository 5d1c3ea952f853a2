//! Contrast transfer function on the centered Fourier grid.
//!
//! In generalized coordinates `k̂ = (Cs·λ³)^{1/4}·k` and `Δẑ = Δz/(Cs·λ)^{1/2}`
//! the transfer function is
//!
//! ```text
//! CTF(k̂) = exp(-B·k̂²) · sin(-π·Δẑ·k̂² + (π/2)·k̂⁴ + φ),   φ = atan(α/√(1-α²))
//! ```
//!
//! where `α` is the amplitude contrast (`φ = 0` when `α = 0`).

use num_complex::Complex64;

use crate::fft::Fft2;
use crate::image::Image;
use crate::{Error, Result};

const UM_TO_ANG: f64 = 1e4;
const MM_TO_ANG: f64 = 1e7;
const PM_TO_ANG: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtfParams {
    /// Defocus in µm.
    pub defocus_um: f64,
    /// Spherical aberration in mm.
    pub cs_mm: f64,
    /// Electron wavelength in pm.
    pub lambda_pm: f64,
    /// Envelope decay applied to the generalized frequency.
    pub b_factor: f64,
    pub amp_contrast: f64,
    /// Å per pixel.
    pub pixel_size: f64,
}

impl CtfParams {
    /// Microscope settings used for the reference CTF plots (200 kV, Cs 2 mm).
    pub fn reference(defocus_um: f64) -> Self {
        CtfParams {
            defocus_um,
            cs_mm: 2.0,
            lambda_pm: 2.51,
            b_factor: 10.0,
            amp_contrast: 0.07,
            pixel_size: 2.82,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.cs_mm > 0.0
            && self.lambda_pm > 0.0
            && self.pixel_size > 0.0
            && self.b_factor >= 0.0
            && (0.0..1.0).contains(&self.amp_contrast)
            && self.defocus_um.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid CTF parameters {self:?}")))
        }
    }

    /// Scale from spatial frequency (1/Å) to generalized frequency.
    pub fn freq_scale(&self) -> f64 {
        let cs = self.cs_mm * MM_TO_ANG;
        let lambda = self.lambda_pm * PM_TO_ANG;
        (cs * lambda.powi(3)).powf(0.25)
    }

    pub fn generalized_defocus(&self) -> f64 {
        let cs = self.cs_mm * MM_TO_ANG;
        let lambda = self.lambda_pm * PM_TO_ANG;
        self.defocus_um * UM_TO_ANG / (cs * lambda).sqrt()
    }

    fn phase_shift(&self) -> f64 {
        let a = self.amp_contrast;
        if a == 0.0 {
            0.0
        } else {
            (a / (1.0 - a * a).sqrt()).atan()
        }
    }

    /// CTF at spatial frequency magnitude `k` (1/Å); only `k²` enters, so the sign of `k` is irrelevant.
    pub fn eval(&self, k: f64) -> Result<f64> {
        if !k.is_finite() {
            return Err(Error::Domain(format!("non-finite spatial frequency {k}")));
        }
        Ok(self.eval_unchecked(k))
    }

    fn eval_unchecked(&self, k: f64) -> f64 {
        let kh2 = (self.freq_scale() * k).powi(2);
        let dz = self.generalized_defocus();
        let gamma = -std::f64::consts::PI * dz * kh2
            + std::f64::consts::FRAC_PI_2 * kh2 * kh2
            + self.phase_shift();
        (-self.b_factor * kh2).exp() * gamma.sin()
    }

    /// Envelope `exp(-B k̂²)` at `k`.
    pub fn envelope(&self, k: f64) -> f64 {
        (-self.b_factor * (self.freq_scale() * k).powi(2)).exp()
    }
}

pub fn ctf_eval(params: &CtfParams, k: f64) -> Result<f64> {
    params.eval(k)
}

/// CTF sampled on the centered `p×p` frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfGrid {
    side: usize,
    values: Vec<f64>,
    params: Option<CtfParams>,
}

impl CtfGrid {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params(&self) -> Option<&CtfParams> {
        self.params.as_ref()
    }

    /// A grid with the same value everywhere (identity and null operators in tests).
    pub fn constant(side: usize, value: f64) -> Result<Self> {
        check_odd(side)?;
        Ok(CtfGrid {
            side,
            values: vec![value; side * side],
            params: None,
        })
    }

    /// Arbitrary radial profile `f(|k| in grid units)`, used for synthetic operators.
    pub fn from_radial(side: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_odd(side)?;
        let c = ((side - 1) / 2) as f64;
        let mut values = Vec::with_capacity(side * side);
        for r in 0..side {
            for col in 0..side {
                let (u, v) = (col as f64 - c, r as f64 - c);
                values.push(f((u * u + v * v).sqrt()));
            }
        }
        Ok(CtfGrid {
            side,
            values,
            params: None,
        })
    }

    /// Explicit values in row-major centered layout.
    pub fn from_values(side: usize, values: Vec<f64>) -> Result<Self> {
        check_odd(side)?;
        if values.len() != side * side {
            return Err(Error::shape(side * side, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite CTF grid value".into()));
        }
        Ok(CtfGrid {
            side,
            values,
            params: None,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }
}

fn check_odd(side: usize) -> Result<()> {
    if side == 0 || side % 2 == 0 {
        return Err(Error::Precondition(format!(
            "grid side must be odd, got {side}"
        )));
    }
    Ok(())
}

/// Samples the CTF at integer frequencies `(u, v)`, `|k| = √(u²+v²)/(p·pixel_size)`.
pub fn ctf_grid(params: &CtfParams, side: usize) -> Result<CtfGrid> {
    check_odd(side)?;
    params.validate()?;
    let c = ((side - 1) / 2) as f64;
    let scale = 1.0 / (side as f64 * params.pixel_size);
    let mut values = Vec::with_capacity(side * side);
    for r in 0..side {
        for col in 0..side {
            let (u, v) = (col as f64 - c, r as f64 - c);
            values.push(params.eval_unchecked((u * u + v * v).sqrt() * scale));
        }
    }
    Ok(CtfGrid {
        side,
        values,
        params: Some(*params),
    })
}

fn check_grid(image: &Image, grid: &CtfGrid) -> Result<()> {
    if image.side() != grid.side {
        return Err(Error::shape(
            format!("{0}x{0} image", grid.side),
            format!("{0}x{0}", image.side()),
        ));
    }
    Ok(())
}

fn filter_real(image: &Image, multiplier: &[f64], fft: &Fft2) -> Image {
    let out: Vec<f64> = fft
        .filter(
            &image
                .pixels()
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect::<Vec<_>>(),
            multiplier,
        )
        .into_iter()
        .map(|z| z.re)
        .collect();
    Image::from_parts(image.side(), image.pixel_size(), out)
}

/// Side of the zero-padded grid used for linear (non-circular) convolution.
pub fn padded_side(side: usize) -> usize {
    2 * side + 1
}

impl CtfGrid {
    /// The same transfer function sampled on a grid of another odd side with
    /// the same pixel size. Only grids built from parameters or holding a
    /// single constant value can be resampled.
    pub fn resampled(&self, side: usize) -> Result<CtfGrid> {
        if side == self.side {
            return Ok(self.clone());
        }
        if let Some(p) = &self.params {
            return ctf_grid(p, side);
        }
        let first = self.values[0];
        if self.values.iter().all(|&v| v == first) {
            return CtfGrid::constant(side, first);
        }
        Err(Error::Precondition(
            "only parametric or constant CTF grids can be resampled".into(),
        ))
    }
}

/// CTF applied as a linear convolution: the image is zero-padded to
/// [`padded_side`], filtered with the finer frequency grid and cropped back,
/// so nothing wraps around the box edges.
#[derive(Debug, Clone)]
pub struct LinearCtf {
    side: usize,
    big: CtfGrid,
    fft: Fft2,
}

impl LinearCtf {
    pub fn new(grid: &CtfGrid) -> Result<Self> {
        let big_side = padded_side(grid.side);
        Ok(LinearCtf {
            side: grid.side,
            big: grid.resampled(big_side)?,
            fft: Fft2::new(big_side),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn padded_grid(&self) -> &CtfGrid {
        &self.big
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn apply(&self, image: &Image) -> Result<Image> {
        if image.side() != self.side {
            return Err(Error::shape(
                format!("{0}x{0} image", self.side),
                format!("{0}x{0}", image.side()),
            ));
        }
        let (p, big) = (self.side, self.big.side);
        let off = (big - p) / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); big * big];
        for r in 0..p {
            for c in 0..p {
                buf[(r + off) * big + c + off] = Complex64::new(image.get(r, c), 0.0);
            }
        }
        let out = self.fft.filter(&buf, &self.big.values);
        let mut data = Vec::with_capacity(p * p);
        for r in 0..p {
            for c in 0..p {
                data.push(out[(r + off) * big + c + off].re);
            }
        }
        Ok(Image::from_parts(p, image.pixel_size(), data))
    }
}

/// Multiplies the centered Fourier transform of `image` by the grid.
pub fn apply_ctf(image: &Image, grid: &CtfGrid) -> Result<Image> {
    check_grid(image, grid)?;
    Ok(filter_real(image, &grid.values, &Fft2::new(grid.side)))
}

/// [`apply_ctf`] with a caller-supplied FFT plan, for batch use.
pub fn apply_ctf_with(image: &Image, grid: &CtfGrid, fft: &Fft2) -> Result<Image> {
    check_grid(image, grid)?;
    Ok(filter_real(image, &grid.values, fft))
}

/// Multiplies Fourier coefficients by `sign(CTF)`, with `sign(0) = 0`.
pub fn phase_flip(image: &Image, grid: &CtfGrid) -> Result<Image> {
    phase_flip_with(image, grid, &Fft2::new(grid.side))
}

pub fn phase_flip_with(image: &Image, grid: &CtfGrid, fft: &Fft2) -> Result<Image> {
    check_grid(image, grid)?;
    let signs: Vec<f64> = grid
        .values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(filter_real(image, &signs, fft))
}

/// First positive frequency (1/Å) where the CTF changes sign, searched up to `k_max`.
pub fn first_zero(params: &CtfParams, k_max: f64) -> Option<f64> {
    let steps = 20_000;
    let h = k_max / steps as f64;
    let f = |k: f64| params.eval_unchecked(k);
    let mut prev_k = h * 1e-3;
    let mut prev = f(prev_k);
    for i in 1..=steps {
        let k = i as f64 * h;
        let cur = f(k);
        if prev == 0.0 {
            return Some(prev_k);
        }
        if prev.signum() != cur.signum() {
            let (mut a, mut b, mut fa) = (prev_k, k, prev);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
                if b - a < 1e-16 {
                    break;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev_k = k;
        prev = cur;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_amp(defocus: f64) -> CtfParams {
        CtfParams {
            amp_contrast: 0.0,
            ..CtfParams::reference(defocus)
        }
    }

    #[test]
    fn zero_at_dc_without_amplitude_contrast() {
        assert_eq!(ctf_eval(&no_amp(1.0), 0.0).unwrap(), 0.0);
        let g = ctf_grid(&no_amp(1.0), 33).unwrap();
        assert_eq!(g.get(16, 16), 0.0);
    }

    #[test]
    fn even_in_k_and_rejects_nan() {
        let p = CtfParams::reference(1.3);
        for k in [0.01, 0.05, 0.13] {
            assert_eq!(p.eval(k).unwrap(), p.eval(-k).unwrap());
        }
        assert!(matches!(p.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(p.eval(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_symmetries_and_pointwise_match() {
        let p = CtfParams::reference(1.6);
        let n = 33;
        let g = ctf_grid(&p, n).unwrap();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(g.get(r, c), g.get(c, r));
                assert_eq!(g.get(r, c), g.get(n - 1 - r, n - 1 - c));
            }
        }
        for (u, v) in [(3i32, -7i32), (0, 16), (-16, -16), (5, 5), (-1, 2)] {
            let k = ((u * u + v * v) as f64).sqrt() / (n as f64 * p.pixel_size);
            let (r, c) = ((v + 16) as usize, (u + 16) as usize);
            let expect = p.eval(k).unwrap();
            assert!((g.get(r, c) - expect).abs() <= 1e-12 * expect.abs().max(1e-3));
        }
        assert!(ctf_grid(&p, 32).is_err());
    }

    #[test]
    fn radial_values_depend_only_on_radius() {
        let g = ctf_grid(&CtfParams::reference(1.0), 33).unwrap();
        // (3,4) and (5,0) share |k| = 5
        assert!((g.get(16 + 4, 16 + 3) - g.get(16, 16 + 5)).abs() < 1e-12);
    }

    #[test]
    fn identity_and_null_grids() {
        let img = Image::from_fn(9, 1.0, |r, c| ((r * 9 + c) as f64).sin()).unwrap();
        let ones = CtfGrid::constant(9, 1.0).unwrap();
        let out = apply_ctf(&img, &ones).unwrap();
        let err: f64 = img
            .pixels()
            .iter()
            .zip(out.pixels())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-12 * img.norm());
        let zeros = CtfGrid::constant(9, 0.0).unwrap();
        assert!(apply_ctf(&img, &zeros).unwrap().pixels().iter().all(|&v| v == 0.0));
        let flipped = phase_flip(&img, &ones).unwrap();
        for (a, b) in img.pixels().iter().zip(flipped.pixels()) {
            assert!((a - b).abs() <= 1e-12 * img.norm());
        }
        assert!(apply_ctf(&img, &CtfGrid::constant(7, 1.0).unwrap()).is_err());
    }

    #[test]
    fn phase_flip_idempotent_on_sign_pattern() {
        let img = Image::from_fn(15, 2.82, |r, c| ((r * 3 + c * 7) as f64 * 0.31).cos()).unwrap();
        let g = ctf_grid(&CtfParams::reference(1.0), 15).unwrap();
        let signs = CtfGrid::from_values(15, g.values().iter().map(|v| v.signum() * (*v != 0.0) as i32 as f64).collect()).unwrap();
        let once = phase_flip(&img, &g).unwrap();
        let via_signs = phase_flip(&img, &signs).unwrap();
        for (a, b) in once.pixels().iter().zip(via_signs.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        // flipping twice restores everything except the exact zeros
        let twice = phase_flip(&once, &g).unwrap();
        let mask: Vec<f64> = g.values().iter().map(|v| (*v != 0.0) as i32 as f64).collect();
        let masked = crate::fft::Fft2::new(15).filter(
            &img.pixels().iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>(),
            &mask,
        );
        for (a, b) in twice.pixels().iter().zip(&masked) {
            assert!((a - b.re).abs() < 1e-10);
        }
    }
}
