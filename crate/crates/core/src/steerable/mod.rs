//! Fourier–Bessel expansion on the disk.
//!
//! Basis functions are `b_{m,q}(r, φ) = J_m(R_{m,q} r / ρ) e^{-imφ}` on the disk
//! of radius `ρ`, each scaled to unit norm over the disk pixels, where
//! `R_{m,q}` is the q-th positive zero of `J_m`. A pair `(m, q)` is kept when
//! `R_{m,q} ≤ πρ`. Only `m ≥ 0` is stored; a real image is
//!
//! ```text
//! x = Σ_q c_{0,q} b_{0,q} + Σ_{m>0} Σ_q (c_{m,q} b_{m,q} + conj(c_{m,q} b_{m,q}))
//! ```
//!
//! so rotating the image content by `θ` multiplies block `m` by `e^{imθ}` and
//! mirroring `y → -y` conjugates every block. Inner products between real
//! images become `Σ_m w_m Re⟨c_m, d_m⟩` with `w_0 = 1`, `w_m = 2`.

pub mod bessel;

use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::ctf::{padded_side, CtfGrid};
use crate::fft::Fft2;
use crate::image::Image;
use crate::{Error, Result};

use bessel::{bessel_j, bessel_zeros};

/// Angular frequency of each block and the offsets of its entries in a flat coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    ms: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(blocks: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0];
        for &(_, len) in blocks {
            offsets.push(offsets.last().unwrap() + len);
        }
        BlockLayout {
            ms: blocks.iter().map(|b| b.0).collect(),
            offsets,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.ms.len()
    }

    pub fn m(&self, b: usize) -> usize {
        self.ms[b]
    }

    pub fn len(&self, b: usize) -> usize {
        self.offsets[b + 1] - self.offsets[b]
    }

    pub fn range(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Number of real degrees of freedom (`m > 0` entries count twice).
    pub fn real_dim(&self) -> usize {
        (0..self.n_blocks())
            .map(|b| self.len(b) * if self.ms[b] == 0 { 1 } else { 2 })
            .sum()
    }

    /// Multiplicity of block `b` in real-space quadratic forms.
    pub fn weight(&self, b: usize) -> f64 {
        if self.ms[b] == 0 {
            1.0
        } else {
            2.0
        }
    }

    pub fn max_m(&self) -> usize {
        self.ms.iter().copied().max().unwrap_or(0)
    }
}

/// Complex expansion coefficients grouped by angular frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerableCoeffs {
    layout: Arc<BlockLayout>,
    data: Vec<Complex64>,
}

impl SteerableCoeffs {
    pub fn new(layout: Arc<BlockLayout>, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::shape(layout.total_dim(), data.len()));
        }
        Ok(SteerableCoeffs { layout, data })
    }

    pub fn zeros(layout: Arc<BlockLayout>) -> Self {
        let n = layout.total_dim();
        SteerableCoeffs {
            layout,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn block(&self, b: usize) -> &[Complex64] {
        &self.data[self.layout.range(b)]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut [Complex64] {
        let r = self.layout.range(b);
        &mut self.data[r]
    }

    pub fn check_layout(&self, other: &SteerableCoeffs) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{} coefficients in {} blocks", self.layout.total_dim(), self.layout.n_blocks()),
                format!("{} coefficients in {} blocks", other.layout.total_dim(), other.layout.n_blocks()),
            ))
        }
    }

    /// Real-space inner product `Σ_m w_m Re⟨self_m, other_m⟩`.
    pub fn dot(&self, other: &SteerableCoeffs) -> f64 {
        (0..self.layout.n_blocks())
            .map(|b| {
                let w = self.layout.weight(b);
                w * self
                    .block(b)
                    .iter()
                    .zip(other.block(b))
                    .map(|(a, c)| (a.conj() * c).re)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    pub fn sub(&self, other: &SteerableCoeffs) -> SteerableCoeffs {
        SteerableCoeffs {
            layout: self.layout.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &SteerableCoeffs) -> SteerableCoeffs {
        SteerableCoeffs {
            layout: self.layout.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SteerableCoeffs {
        SteerableCoeffs {
            layout: self.layout.clone(),
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Block `m` multiplied by `e^{imθ}`: rotates the image content by `θ`.
    pub fn rotated(&self, theta: f64) -> SteerableCoeffs {
        let mut out = self.clone();
        for b in 0..self.layout.n_blocks() {
            let ph = Complex64::from_polar(1.0, self.layout.m(b) as f64 * theta);
            for v in out.block_mut(b) {
                *v *= ph;
            }
        }
        out
    }

    /// Every block conjugated: the mirror image `y → -y`.
    pub fn reflected(&self) -> SteerableCoeffs {
        SteerableCoeffs {
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    /// Optional mirror, then rotation by `alignment.theta`.
    pub fn aligned(&self, alignment: Alignment) -> SteerableCoeffs {
        if alignment.reflected {
            self.reflected().rotated(alignment.theta)
        } else {
            self.rotated(alignment.theta)
        }
    }
}

/// In-plane transform applied to one image to match another: optional
/// mirror `y → -y` first, then counterclockwise rotation by `theta` radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Alignment {
    pub theta: f64,
    pub reflected: bool,
}

impl Alignment {
    pub const IDENTITY: Alignment = Alignment {
        theta: 0.0,
        reflected: false,
    };

    pub fn new(theta: f64, reflected: bool) -> Self {
        Alignment { theta, reflected }
    }

    /// The transform mapping the aligned image back onto the original.
    pub fn inverse(&self) -> Alignment {
        if self.reflected {
            // (R_θ F)⁻¹ = F R_{-θ} = R_θ F
            *self
        } else {
            Alignment::new(-self.theta, false)
        }
    }
}

pub fn rotate_coeffs(coeffs: &SteerableCoeffs, theta: f64) -> SteerableCoeffs {
    coeffs.rotated(theta)
}

pub fn reflect_coeffs(coeffs: &SteerableCoeffs) -> SteerableCoeffs {
    coeffs.reflected()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    FourierBessel,
    /// One real block holding every disk pixel; the dense reference representation.
    Pixel,
}

/// A sampled basis on the disk together with its least-squares projector.
pub struct BasisSpec {
    side: usize,
    radius: f64,
    kind: BasisKind,
    disk: Vec<usize>,
    layout: Arc<BlockLayout>,
    roots: Vec<Vec<f64>>,
    /// `npix × total_dim`, basis functions sampled on disk pixels.
    functions: DMatrix<Complex64>,
    /// `npix × real_dim` real design matrix.
    design: DMatrix<f64>,
    /// Cholesky factor of `DᵀD + ridge`.
    normal: Cholesky<f64, nalgebra::Dyn>,
    spectra: OnceLock<DMatrix<Complex64>>,
}

impl std::fmt::Debug for BasisSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasisSpec")
            .field("side", &self.side)
            .field("radius", &self.radius)
            .field("kind", &self.kind)
            .field("disk_pixels", &self.disk.len())
            .field("total_dim", &self.layout.total_dim())
            .finish()
    }
}

fn check_geometry(side: usize, radius: f64) -> Result<()> {
    if side % 2 == 0 {
        return Err(Error::Precondition(format!("image side must be odd, got {side}")));
    }
    let max_r = ((side - 1) / 2) as f64;
    if !(radius >= 1.0 && radius <= max_r) {
        return Err(Error::Precondition(format!(
            "radius {radius} outside [1, {max_r}] for side {side}"
        )));
    }
    Ok(())
}

fn disk_pixels(side: usize, radius: f64) -> Vec<usize> {
    let c = ((side - 1) / 2) as f64;
    let mut out = Vec::new();
    for r in 0..side {
        for col in 0..side {
            let (x, y) = (col as f64 - c, r as f64 - c);
            if x * x + y * y <= radius * radius + 1e-9 {
                out.push(r * side + col);
            }
        }
    }
    out
}

/// Fourier–Bessel basis for `side × side` images on the disk of `radius` pixels.
pub fn build_basis(side: usize, radius: f64) -> Result<BasisSpec> {
    build_basis_with_cutoff(side, radius, 1.0)
}

/// Like [`build_basis`] but keeps `(m, q)` only when `R_{m,q} ≤ factor·πρ`.
pub fn build_basis_with_cutoff(side: usize, radius: f64, factor: f64) -> Result<BasisSpec> {
    check_geometry(side, radius)?;
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Precondition(format!("cutoff factor {factor} outside (0, 1]")));
    }
    let disk = disk_pixels(side, radius);
    let c = ((side - 1) / 2) as f64;
    let cutoff = factor * std::f64::consts::PI * radius;

    let mut roots = Vec::new();
    for m in 0.. {
        let z = bessel_zeros(m, cutoff);
        if z.is_empty() {
            break;
        }
        roots.push(z);
    }
    let blocks: Vec<(usize, usize)> = roots.iter().enumerate().map(|(m, z)| (m, z.len())).collect();
    let layout = Arc::new(BlockLayout::new(&blocks));

    // radius and angle of every disk pixel; radial samples are shared by
    // pixels on the same ring
    let polar: Vec<(f64, f64, i64)> = disk
        .iter()
        .map(|&idx| {
            let (x, y) = ((idx % side) as f64 - c, (idx / side) as f64 - c);
            let r2 = (x * x + y * y).round() as i64;
            ((r2 as f64).sqrt(), y.atan2(x), r2)
        })
        .collect();
    let mut rings: Vec<i64> = polar.iter().map(|p| p.2).collect();
    rings.sort_unstable();
    rings.dedup();

    let npix = disk.len();
    let mut functions = DMatrix::<Complex64>::zeros(npix, layout.total_dim());
    for (m, zs) in roots.iter().enumerate() {
        let b = m;
        for (q, &root) in zs.iter().enumerate() {
            let col = layout.range(b).start + q;
            let radial: Vec<f64> = rings
                .iter()
                .map(|&r2| bessel_j(m, root * (r2 as f64).sqrt() / radius))
                .collect();
            let mut norm2 = 0.0;
            for (k, &(_, phi, r2)) in polar.iter().enumerate() {
                let j = radial[rings.binary_search(&r2).unwrap()];
                let v = Complex64::from_polar(j, -(m as f64) * phi);
                norm2 += j * j;
                functions[(k, col)] = v;
            }
            let s = 1.0 / norm2.sqrt();
            for k in 0..npix {
                functions[(k, col)] *= s;
            }
        }
    }
    finish_basis(side, radius, BasisKind::FourierBessel, disk, layout, roots, functions)
}

/// Dense pixel basis: identity on every disk pixel, a single `m = 0` block.
pub fn build_pixel_basis(side: usize, radius: f64) -> Result<BasisSpec> {
    check_geometry(side, radius)?;
    let disk = disk_pixels(side, radius);
    let npix = disk.len();
    let layout = Arc::new(BlockLayout::new(&[(0, npix)]));
    let functions = DMatrix::<Complex64>::identity(npix, npix);
    finish_basis(side, radius, BasisKind::Pixel, disk, layout, vec![], functions)
}

fn finish_basis(
    side: usize,
    radius: f64,
    kind: BasisKind,
    disk: Vec<usize>,
    layout: Arc<BlockLayout>,
    roots: Vec<Vec<f64>>,
    functions: DMatrix<Complex64>,
) -> Result<BasisSpec> {
    let npix = disk.len();
    let real_dim = layout.real_dim();
    let mut design = DMatrix::<f64>::zeros(npix, real_dim);
    let mut col = 0;
    for b in 0..layout.n_blocks() {
        for j in layout.range(b) {
            if layout.m(b) == 0 {
                for k in 0..npix {
                    design[(k, col)] = functions[(k, j)].re;
                }
                col += 1;
            } else {
                for k in 0..npix {
                    design[(k, col)] = 2.0 * functions[(k, j)].re;
                    design[(k, col + 1)] = -2.0 * functions[(k, j)].im;
                }
                col += 2;
            }
        }
    }
    let mut normal = design.transpose() * &design;
    let ridge = 1e-10 * normal.trace() / real_dim.max(1) as f64;
    for i in 0..real_dim {
        normal[(i, i)] += ridge;
    }
    let normal = Cholesky::new(normal)
        .ok_or_else(|| Error::Numerical("basis normal matrix is not positive definite".into()))?;
    Ok(BasisSpec {
        side,
        radius,
        kind,
        disk,
        layout,
        roots,
        functions,
        design,
        normal,
        spectra: OnceLock::new(),
    })
}

impl BasisSpec {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn total_dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// Radial function counts `r_m` per block.
    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.layout.n_blocks()).map(|b| self.layout.len(b)).collect()
    }

    /// Bessel zeros `R_{m,q}` per angular frequency (empty for the pixel basis).
    pub fn roots(&self) -> &[Vec<f64>] {
        &self.roots
    }

    pub fn disk(&self) -> &[usize] {
        &self.disk
    }

    /// Basis function `(block, q)` sampled on the full grid (zero outside the disk).
    pub fn function_image(&self, block: usize, q: usize) -> Vec<Complex64> {
        let col = self.layout.range(block).start + q;
        let mut out = vec![Complex64::new(0.0, 0.0); self.side * self.side];
        for (k, &idx) in self.disk.iter().enumerate() {
            out[idx] = self.functions[(k, col)];
        }
        out
    }

    pub fn function_image_by_col(&self, col: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.side * self.side];
        for (k, &idx) in self.disk.iter().enumerate() {
            out[idx] = self.functions[(k, col)];
        }
        out
    }

    pub fn functions(&self) -> &DMatrix<Complex64> {
        &self.functions
    }

    /// Gram matrix `⟨b_a, b_b⟩` of the complex basis functions over disk pixels.
    pub fn gram(&self) -> DMatrix<Complex64> {
        self.functions.adjoint() * &self.functions
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.side() != self.side {
            return Err(Error::shape(
                format!("{0}x{0} image", self.side),
                format!("{0}x{0}", image.side()),
            ));
        }
        Ok(())
    }

    fn from_real_params(&self, params: &[f64]) -> SteerableCoeffs {
        let mut data = Vec::with_capacity(self.layout.total_dim());
        let mut k = 0;
        for b in 0..self.layout.n_blocks() {
            for _ in self.layout.range(b) {
                if self.layout.m(b) == 0 {
                    data.push(Complex64::new(params[k], 0.0));
                    k += 1;
                } else {
                    data.push(Complex64::new(params[k], params[k + 1]));
                    k += 2;
                }
            }
        }
        SteerableCoeffs {
            layout: self.layout.clone(),
            data,
        }
    }

    fn to_real_params(&self, coeffs: &SteerableCoeffs) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout.real_dim());
        for b in 0..self.layout.n_blocks() {
            for v in coeffs.block(b) {
                out.push(v.re);
                if self.layout.m(b) != 0 {
                    out.push(v.im);
                }
            }
        }
        out
    }

    /// Least-squares coefficients of the disk-masked image.
    pub fn expand(&self, image: &Image) -> Result<SteerableCoeffs> {
        self.check_image(image)?;
        let px = image.pixels();
        let x = nalgebra::DVector::from_iterator(self.disk.len(), self.disk.iter().map(|&i| px[i]));
        let params = self.normal.solve(&(self.design.tr_mul(&x)));
        Ok(self.from_real_params(params.as_slice()))
    }

    /// Expands many images with one matrix product.
    pub fn expand_all(&self, images: &[Image]) -> Result<Vec<SteerableCoeffs>> {
        for img in images {
            self.check_image(img)?;
        }
        let npix = self.disk.len();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(256) {
            let x = DMatrix::from_fn(npix, chunk.len(), |k, j| chunk[j].pixels()[self.disk[k]]);
            let params = self.normal.solve(&self.design.tr_mul(&x));
            for j in 0..chunk.len() {
                out.push(self.from_real_params(params.column(j).as_slice()));
            }
        }
        Ok(out)
    }

    /// Real image from coefficients; zero outside the disk.
    pub fn evaluate(&self, coeffs: &SteerableCoeffs, pixel_size: f64) -> Result<Image> {
        if coeffs.layout.as_ref() != self.layout.as_ref() {
            return Err(Error::shape(self.layout.total_dim(), coeffs.data.len()));
        }
        let params = nalgebra::DVector::from_vec(self.to_real_params(coeffs));
        let values = &self.design * params;
        let mut out = vec![0.0; self.side * self.side];
        for (k, &idx) in self.disk.iter().enumerate() {
            out[idx] = values[k];
        }
        Image::new(self.side, pixel_size, out)
    }

    /// Spectra of the basis functions zero-padded to `padded_side(side)`.
    fn spectra(&self) -> &DMatrix<Complex64> {
        self.spectra.get_or_init(|| {
            let big = padded_side(self.side);
            let off = (big - self.side) / 2;
            let fft = Fft2::new(big);
            let dim = self.layout.total_dim();
            let mut out = DMatrix::<Complex64>::zeros(big * big, dim);
            for j in 0..dim {
                let mut grid = vec![Complex64::new(0.0, 0.0); big * big];
                for (k, &idx) in self.disk.iter().enumerate() {
                    let (r, c) = (idx / self.side, idx % self.side);
                    grid[(r + off) * big + c + off] = self.functions[(k, j)];
                }
                let spec = fft.forward(&grid);
                out.column_mut(j).copy_from_slice(&spec);
            }
            out
        })
    }
}

/// Per-block real matrices of a radially symmetric Fourier multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfOperator {
    blocks: Vec<DMatrix<f64>>,
}

impl CtfOperator {
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Self {
        CtfOperator { blocks }
    }

    pub fn identity(layout: &BlockLayout) -> Self {
        CtfOperator {
            blocks: (0..layout.n_blocks())
                .map(|b| DMatrix::identity(layout.len(b), layout.len(b)))
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &DMatrix<f64> {
        &self.blocks[b]
    }

    /// Blockwise `A x`.
    pub fn apply(&self, coeffs: &SteerableCoeffs) -> SteerableCoeffs {
        let mut out = SteerableCoeffs::zeros(coeffs.layout.clone());
        for (b, a) in self.blocks.iter().enumerate() {
            let x = coeffs.block(b);
            let y = out.block_mut(b);
            for r in 0..a.nrows() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, xv) in x.iter().enumerate() {
                    acc += xv * a[(r, k)];
                }
                y[r] = acc;
            }
        }
        out
    }
}

/// `A^{(m)}[q, q'] = ⟨b_{m,q}, CTF ∘ b_{m,q'}⟩` where `CTF ∘` is the linear
/// convolution of [`LinearCtf`](crate::ctf::LinearCtf), evaluated in the
/// Fourier domain of the padded grid.
pub fn ctf_block_operator(grid: &CtfGrid, basis: &BasisSpec) -> Result<CtfOperator> {
    if grid.side() != basis.side {
        return Err(Error::shape(
            format!("{0}x{0} grid", basis.side),
            format!("{0}x{0}", grid.side()),
        ));
    }
    let big = grid.resampled(padded_side(basis.side))?;
    let spectra = basis.spectra();
    let n = (big.side() * big.side()) as f64;
    let ctf = big.values();
    let layout = &basis.layout;
    let blocks = (0..layout.n_blocks())
        .map(|b| {
            let range = layout.range(b);
            let len = range.len();
            let mut a = DMatrix::<f64>::zeros(len, len);
            for i in 0..len {
                let si = spectra.column(range.start + i);
                for j in i..len {
                    let sj = spectra.column(range.start + j);
                    let mut acc = 0.0;
                    for k in 0..ctf.len() {
                        acc += ctf[k] * (si[k].conj() * sj[k]).re;
                    }
                    a[(i, j)] = acc / n;
                    a[(j, i)] = acc / n;
                }
            }
            a
        })
        .collect();
    Ok(CtfOperator { blocks })
}
