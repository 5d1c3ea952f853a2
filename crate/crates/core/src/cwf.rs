//! Covariance Wiener filtering in the steerable basis.
//!
//! Observations follow `y_i = A_{g(i)} x_i + n_i` blockwise with
//! `x_i ~ N(μ, Σ)` and white noise of variance `σ²` per coefficient. Each
//! block of every quantity is independent, so all solves are per angular
//! frequency. Complex blocks use the conjugate transpose.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{Image, ImageStack};
use crate::linalg::{c, eigh, from_eig, hermitize, to_complex, CMat, CVec};
use crate::steerable::{BasisSpec, BlockLayout, CtfOperator, SteerableCoeffs};
use crate::{Error, Result};

/// Relative ridge on every normal system, scaled by the mean diagonal entry.
pub const RIDGE: f64 = 1e-8;

/// Pooled sample variance of the pixels outside the disk of `radius` pixels.
pub fn estimate_noise_var(stack: &ImageStack, radius: f64) -> Result<f64> {
    let side = stack.side();
    let c = ((side - 1) / 2) as f64;
    if !(radius >= 0.0 && radius < c) {
        return Err(Error::Precondition(format!(
            "noise annulus needs radius < {c}, got {radius}"
        )));
    }
    let outside: Vec<usize> = (0..side * side)
        .filter(|&i| {
            let (x, y) = ((i % side) as f64 - c, (i / side) as f64 - c);
            x * x + y * y > radius * radius + 1e-9
        })
        .collect();
    let count = (outside.len() * stack.len()) as f64;
    if count < 2.0 {
        return Err(Error::Precondition("not enough pixels outside the disk".into()));
    }
    let mut sum = 0.0;
    for img in stack.images() {
        let px = img.pixels();
        sum += outside.iter().map(|&i| px[i]).sum::<f64>();
    }
    let mean = sum / count;
    let mut ss = 0.0;
    for img in stack.images() {
        let px = img.pixels();
        ss += outside.iter().map(|&i| (px[i] - mean).powi(2)).sum::<f64>();
    }
    Ok(ss / (count - 1.0))
}

fn check_inputs(coeffs: &[SteerableCoeffs], ops: &[CtfOperator], group_of: &[usize]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::Precondition("no coefficient vectors".into()));
    }
    if coeffs.len() != group_of.len() {
        return Err(Error::shape(coeffs.len(), group_of.len()));
    }
    let layout = coeffs[0].layout();
    for (k, x) in coeffs.iter().enumerate() {
        coeffs[0].check_layout(x).map_err(|e| match e {
            Error::Shape { expected, got } => Error::Shape {
                expected,
                got: format!("{got} (image {k})"),
            },
            other => other,
        })?;
    }
    if let Some(&g) = group_of.iter().find(|&&g| g >= ops.len()) {
        return Err(Error::Precondition(format!(
            "group {g} has no CTF operator ({} given)",
            ops.len()
        )));
    }
    for op in ops {
        if op.blocks().len() != layout.n_blocks() {
            return Err(Error::shape(layout.n_blocks(), op.blocks().len()));
        }
        for (b, a) in op.blocks().iter().enumerate() {
            if a.nrows() != layout.len(b) || a.ncols() != layout.len(b) {
                return Err(Error::shape(
                    format!("{0}x{0} operator block {b}", layout.len(b)),
                    format!("{}x{}", a.nrows(), a.ncols()),
                ));
            }
        }
    }
    Ok(())
}

fn group_counts(group_of: &[usize], n_groups: usize) -> Vec<usize> {
    let mut n = vec![0; n_groups];
    for &g in group_of {
        n[g] += 1;
    }
    n
}

fn add_ridge(m: &mut DMatrix<f64>, rel: f64) {
    let dim = m.nrows().max(1);
    let ridge = rel * m.trace().abs() / dim as f64;
    for i in 0..m.nrows() {
        m[(i, i)] += ridge;
    }
}

/// `argmin_μ Σ_i ‖y_i − A_{g(i)} μ‖²`, solved per block.
pub fn estimate_mean(
    coeffs: &[SteerableCoeffs],
    ops: &[CtfOperator],
    group_of: &[usize],
) -> Result<SteerableCoeffs> {
    check_inputs(coeffs, ops, group_of)?;
    let layout = coeffs[0].layout().clone();
    let counts = group_counts(group_of, ops.len());
    let blocks: Vec<Result<Vec<Complex64>>> = (0..layout.n_blocks())
        .into_par_iter()
        .map(|b| {
            let r = layout.len(b);
            let mut normal = DMatrix::<f64>::zeros(r, r);
            let mut sums = vec![CVec::zeros(r); ops.len()];
            for (x, &g) in coeffs.iter().zip(group_of) {
                for (s, v) in sums[g].iter_mut().zip(x.block(b)) {
                    *s += v;
                }
            }
            let mut rhs = CVec::zeros(r);
            for (g, op) in ops.iter().enumerate() {
                if counts[g] == 0 {
                    continue;
                }
                let a = op.block(b);
                normal += (a.transpose() * a) * counts[g] as f64;
                rhs += to_complex(&a.transpose()) * &sums[g];
            }
            add_ridge(&mut normal, RIDGE);
            let chol = Cholesky::new(to_complex(&normal)).ok_or_else(|| {
                Error::Numerical(format!(
                    "mean normal matrix of block {b} (m = {}) is singular",
                    layout.m(b)
                ))
            })?;
            Ok(chol.solve(&rhs).iter().copied().collect())
        })
        .collect();
    let mut mu = SteerableCoeffs::zeros(layout.clone());
    for (b, blk) in blocks.into_iter().enumerate() {
        mu.block_mut(b).copy_from_slice(&blk?);
    }
    Ok(mu)
}

/// Mean, covariance and noise level of the clean coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    mu: SteerableCoeffs,
    noise_var: f64,
    shrink_tau: f64,
    /// Per block: ascending eigenvalues (truncated ones set to 0) and eigenvectors.
    eig: Vec<(Vec<f64>, CMat)>,
    sigma: Vec<CMat>,
}

impl CovarianceModel {
    /// Builds a model from explicit Hermitian blocks; eigenvalues are floored
    /// at 0 and those below `shrink_tau` times the largest one are dropped.
    pub fn new(mu: SteerableCoeffs, sigma: Vec<CMat>, noise_var: f64, shrink_tau: f64) -> Result<Self> {
        let layout = mu.layout().clone();
        if sigma.len() != layout.n_blocks() {
            return Err(Error::shape(layout.n_blocks(), sigma.len()));
        }
        for (b, s) in sigma.iter().enumerate() {
            if s.nrows() != layout.len(b) || s.ncols() != layout.len(b) {
                return Err(Error::shape(
                    format!("{0}x{0} covariance block {b}", layout.len(b)),
                    format!("{}x{}", s.nrows(), s.ncols()),
                ));
            }
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::Precondition(format!("noise variance {noise_var} must be finite and ≥ 0")));
        }
        if !(0.0..1.0).contains(&shrink_tau) {
            return Err(Error::Precondition(format!("shrinkage τ {shrink_tau} outside [0, 1)")));
        }
        let mut eig: Vec<(Vec<f64>, CMat)> = sigma.iter().map(eigh).collect();
        let top = eig
            .iter()
            .flat_map(|(v, _)| v.iter().copied())
            .fold(0.0f64, f64::max);
        let cut = shrink_tau * top;
        for (vals, _) in &mut eig {
            for v in vals.iter_mut() {
                if *v <= 0.0 || *v < cut {
                    *v = 0.0;
                }
            }
        }
        let sigma = eig.iter().map(|(v, u)| from_eig(v, u)).collect();
        Ok(CovarianceModel {
            mu,
            noise_var,
            shrink_tau,
            eig,
            sigma,
        })
    }

    pub fn mu(&self) -> &SteerableCoeffs {
        &self.mu
    }

    pub fn layout(&self) -> &std::sync::Arc<BlockLayout> {
        self.mu.layout()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn shrink_tau(&self) -> f64 {
        self.shrink_tau
    }

    pub fn sigma_blocks(&self) -> &[CMat] {
        &self.sigma
    }

    pub fn sigma(&self, b: usize) -> &CMat {
        &self.sigma[b]
    }

    /// Retained eigenvalues of block `b`, ascending (zeros included).
    pub fn eigenvalues(&self, b: usize) -> &[f64] {
        &self.eig[b].0
    }

    /// Orthonormal columns spanning the retained principal components of block `b`.
    pub fn principal_subspace(&self, b: usize) -> CMat {
        let (vals, vecs) = &self.eig[b];
        let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 0.0).collect();
        CMat::from_fn(vecs.nrows(), keep.len(), |r, k| vecs[(r, keep[k])])
    }

    /// Number of retained real dimensions (`m > 0` components count twice).
    pub fn rank(&self) -> usize {
        let layout = self.layout();
        (0..layout.n_blocks())
            .map(|b| {
                let k = self.eig[b].0.iter().filter(|&&v| v > 0.0).count();
                k * layout.weight(b) as usize
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        let layout = self.layout();
        let stored = StoredModel {
            blocks: (0..layout.n_blocks()).map(|b| (layout.m(b), layout.len(b))).collect(),
            mu: self.mu.data().iter().map(|z| [z.re, z.im]).collect(),
            noise_var: self.noise_var,
            shrink_tau: self.shrink_tau,
            sigma: self
                .sigma
                .iter()
                .map(|s| s.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            eigenvalues: self.eig.iter().map(|(v, _)| v.clone()).collect(),
            eigenvectors: self
                .eig
                .iter()
                .map(|(_, u)| u.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        };
        serde_json::to_string(&stored).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: StoredModel = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid model file: {e}")))?;
        let layout = std::sync::Arc::new(BlockLayout::new(&stored.blocks));
        let cplx = |v: &[f64; 2]| Complex64::new(v[0], v[1]);
        let mu = SteerableCoeffs::new(layout.clone(), stored.mu.iter().map(cplx).collect())?;
        if stored.sigma.len() != layout.n_blocks() {
            return Err(Error::shape(layout.n_blocks(), stored.sigma.len()));
        }
        if stored.eigenvalues.len() != layout.n_blocks() || stored.eigenvectors.len() != layout.n_blocks() {
            return Err(Error::shape(layout.n_blocks(), stored.eigenvalues.len()));
        }
        let square = |b: usize, v: &[[f64; 2]]| -> Result<CMat> {
            let r = layout.len(b);
            if v.len() != r * r {
                return Err(Error::shape(r * r, v.len()));
            }
            Ok(CMat::from_iterator(r, r, v.iter().map(cplx)))
        };
        let mut sigma = Vec::with_capacity(layout.n_blocks());
        let mut eig = Vec::with_capacity(layout.n_blocks());
        for b in 0..layout.n_blocks() {
            sigma.push(square(b, &stored.sigma[b])?);
            let vals = stored.eigenvalues[b].clone();
            if vals.len() != layout.len(b) || vals.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("invalid eigenvalues for block {b}")));
            }
            eig.push((vals, square(b, &stored.eigenvectors[b])?));
        }
        if !(stored.noise_var >= 0.0 && stored.noise_var.is_finite()) || !(0.0..1.0).contains(&stored.shrink_tau) {
            return Err(Error::Config("invalid noise variance or shrinkage in model file".into()));
        }
        // restored verbatim so a reloaded model is bit-identical
        Ok(CovarianceModel {
            mu,
            noise_var: stored.noise_var,
            shrink_tau: stored.shrink_tau,
            eig,
            sigma,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    blocks: Vec<(usize, usize)>,
    mu: Vec<[f64; 2]>,
    noise_var: f64,
    shrink_tau: f64,
    sigma: Vec<Vec<[f64; 2]>>,
    eigenvalues: Vec<Vec<f64>>,
    eigenvectors: Vec<Vec<[f64; 2]>>,
}

/// Least-squares covariance: per block solves
/// `Σ_g n_g M_g Σ M_g = Σ_g A_gᵀ (S_g − n_g σ² I) A_g` with `M_g = A_gᵀA_g`,
/// where `S_g` is the scatter of `y_i − A_g μ` within group `g`. The result
/// is Hermitized, floored at 0 and shrunk with relative threshold `shrink_tau`.
pub fn estimate_covariance(
    coeffs: &[SteerableCoeffs],
    ops: &[CtfOperator],
    group_of: &[usize],
    mu: &SteerableCoeffs,
    noise_var: f64,
    shrink_tau: f64,
) -> Result<CovarianceModel> {
    check_inputs(coeffs, ops, group_of)?;
    if coeffs.len() < 2 {
        return Err(Error::Precondition("covariance needs at least 2 images".into()));
    }
    coeffs[0].check_layout(mu)?;
    let layout = coeffs[0].layout().clone();
    let counts = group_counts(group_of, ops.len());
    let blocks: Vec<Result<CMat>> = (0..layout.n_blocks())
        .into_par_iter()
        .map(|b| {
            let r = layout.len(b);
            let mu_b = CVec::from_column_slice(mu.block(b));
            let residual_means: Vec<CVec> = ops
                .iter()
                .map(|op| to_complex(op.block(b)) * &mu_b)
                .collect();
            let mut scatter = vec![CMat::zeros(r, r); ops.len()];
            for (x, &g) in coeffs.iter().zip(group_of) {
                let d = CVec::from_column_slice(x.block(b)) - &residual_means[g];
                scatter[g] += &d * d.adjoint();
            }
            let mut system = DMatrix::<f64>::zeros(r * r, r * r);
            let mut rhs = CMat::zeros(r, r);
            for (g, op) in ops.iter().enumerate() {
                let n = counts[g] as f64;
                if n == 0.0 {
                    continue;
                }
                let a = op.block(b);
                let m = a.transpose() * a;
                system += m.kronecker(&m) * n;
                let mut s = scatter[g].clone();
                for i in 0..r {
                    s[(i, i)] -= c(n * noise_var);
                }
                let ac = to_complex(a);
                rhs += ac.transpose() * s * ac;
            }
            add_ridge(&mut system, RIDGE);
            let chol = Cholesky::new(system).ok_or_else(|| {
                Error::Numerical(format!(
                    "covariance system of block {b} (m = {}) is singular",
                    layout.m(b)
                ))
            })?;
            // column-major vec; real and imaginary parts decouple since M_g is real
            let re = DMatrix::from_iterator(r * r, 1, rhs.iter().map(|z| z.re));
            let im = DMatrix::from_iterator(r * r, 1, rhs.iter().map(|z| z.im));
            let (sr, si) = (chol.solve(&re), chol.solve(&im));
            let sigma = CMat::from_fn(r, r, |i, j| Complex64::new(sr[j * r + i], si[j * r + i]));
            Ok(hermitize(&sigma))
        })
        .collect();
    let sigma = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    CovarianceModel::new(mu.clone(), sigma, noise_var, shrink_tau)
}

/// Gaussian posterior of one block: returns the gain `K = ΣAᴴ(AΣAᴴ + σ²I)⁻¹`
/// and the posterior covariance `L = Σ − KAΣ`, via a Cholesky factorization.
pub fn posterior_block(sigma: &CMat, a: &DMatrix<f64>, noise_var: f64) -> Result<(CMat, CMat)> {
    let r = sigma.nrows();
    let ac = to_complex(a);
    let a_sigma = &ac * sigma;
    let mut cov = &a_sigma * ac.adjoint();
    for i in 0..r {
        cov[(i, i)] += c(noise_var);
    }
    let chol = Cholesky::new(hermitize(&cov)).ok_or_else(|| {
        Error::Numerical("observation covariance AΣAᴴ + σ²I is not positive definite".into())
    })?;
    let x = chol.solve(&a_sigma);
    let gain = x.adjoint();
    let post = hermitize(&(sigma - &gain * &a_sigma));
    Ok((gain, post))
}

/// Posterior means per image and posterior covariances per defocus group.
#[derive(Debug, Clone)]
pub struct ConditionalMoments {
    alpha: Vec<SteerableCoeffs>,
    /// `[group][block]`
    post_cov: Vec<Vec<CMat>>,
    gain: Vec<Vec<CMat>>,
    group_of: Vec<usize>,
}

impl ConditionalMoments {
    pub fn alpha(&self) -> &[SteerableCoeffs] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.post_cov.len()
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    /// Posterior covariance blocks `L_g`.
    pub fn l_blocks(&self, group: usize) -> &[CMat] {
        &self.post_cov[group]
    }

    /// Wiener gain blocks `K_g`.
    pub fn gain(&self, group: usize) -> &[CMat] {
        &self.gain[group]
    }

    pub fn layout(&self) -> &std::sync::Arc<BlockLayout> {
        self.alpha[0].layout()
    }
}

/// `α_i = μ + K_g (y_i − A_g μ)` and `L_g = Σ − K_g A_g Σ` for every image and group.
pub fn conditional_moments(
    coeffs: &[SteerableCoeffs],
    ops: &[CtfOperator],
    group_of: &[usize],
    model: &CovarianceModel,
) -> Result<ConditionalMoments> {
    check_inputs(coeffs, ops, group_of)?;
    coeffs[0].check_layout(model.mu())?;
    let layout = model.layout().clone();
    let per_group: Vec<Vec<(CMat, CMat)>> = ops
        .par_iter()
        .map(|op| {
            (0..layout.n_blocks())
                .map(|b| posterior_block(model.sigma(b), op.block(b), model.noise_var()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // A μ per group and block, then α per image
    let a_mu: Vec<SteerableCoeffs> = ops.iter().map(|op| op.apply(model.mu())).collect();
    let alpha: Vec<SteerableCoeffs> = coeffs
        .par_iter()
        .zip(group_of.par_iter())
        .map(|(y, &g)| {
            let mut out = model.mu().clone();
            for b in 0..layout.n_blocks() {
                let d = CVec::from_column_slice(y.block(b)) - CVec::from_column_slice(a_mu[g].block(b));
                let upd = &per_group[g][b].0 * d;
                for (o, u) in out.block_mut(b).iter_mut().zip(upd.iter()) {
                    *o += u;
                }
            }
            out
        })
        .collect();
    let (gain, post_cov) = per_group
        .into_iter()
        .map(|blocks| blocks.into_iter().unzip())
        .unzip();
    Ok(ConditionalMoments {
        alpha,
        post_cov,
        gain,
        group_of: group_of.to_vec(),
    })
}

/// Wiener-filtered images `evaluate(α_i)`.
pub fn denoise(moments: &ConditionalMoments, basis: &BasisSpec, pixel_size: f64) -> Result<ImageStack> {
    let images = moments
        .alpha
        .par_iter()
        .map(|a| basis.evaluate(a, pixel_size))
        .collect::<Result<Vec<Image>>>()?;
    ImageStack::new(images, moments.group_of.clone())?.with_group_count(moments.n_groups())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn real_layout(d: usize) -> Arc<BlockLayout> {
        Arc::new(BlockLayout::new(&[(0, d)]))
    }

    fn coeffs(layout: &Arc<BlockLayout>, v: &[f64]) -> SteerableCoeffs {
        SteerableCoeffs::new(layout.clone(), v.iter().map(|&x| c(x)).collect()).unwrap()
    }

    #[test]
    fn scalar_wiener_gain_is_half() {
        let layout = real_layout(2);
        let model = CovarianceModel::new(
            coeffs(&layout, &[0.0, 0.0]),
            vec![CMat::identity(2, 2)],
            1.0,
            0.0,
        )
        .unwrap();
        let ops = vec![CtfOperator::identity(&layout)];
        let m = conditional_moments(&[coeffs(&layout, &[2.0, 2.0])], &ops, &[0], &model).unwrap();
        assert!(m.alpha()[0].data().iter().all(|v| (v - c(1.0)).norm() < 1e-15));
        let l = &m.l_blocks(0)[0];
        assert!((l - CMat::identity(2, 2) * c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn identity_operator_gives_sample_moments() {
        let layout = real_layout(2);
        let ys: Vec<SteerableCoeffs> = [[1.0, 2.0], [3.0, -1.0], [0.0, 5.0], [2.0, 2.0]]
            .iter()
            .map(|v| coeffs(&layout, v))
            .collect();
        let ops = vec![CtfOperator::identity(&layout)];
        let groups = vec![0; 4];
        let mu = estimate_mean(&ys, &ops, &groups).unwrap();
        assert!((mu.data()[0].re - 1.5).abs() < 1e-7 && (mu.data()[1].re - 2.0).abs() < 1e-7);
        let model = estimate_covariance(&ys, &ops, &groups, &mu, 0.01, 0.0).unwrap();
        // sample covariance (1/n) minus σ²
        let s = model.sigma(0);
        assert!((s[(0, 0)].re - (1.25 - 0.01)).abs() < 1e-6);
        assert!((s[(1, 1)].re - (4.5 - 0.01)).abs() < 1e-6);
        assert!((s[(0, 1)].re - (-2.25)).abs() < 1e-6);
    }

    #[test]
    fn overstated_noise_stays_psd() {
        let layout = real_layout(2);
        let ys: Vec<SteerableCoeffs> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.1], [0.0, -0.1]]
            .iter()
            .map(|v| coeffs(&layout, v))
            .collect();
        let ops = vec![CtfOperator::identity(&layout)];
        let mu = estimate_mean(&ys, &ops, &[0; 4]).unwrap();
        let model = estimate_covariance(&ys, &ops, &[0; 4], &mu, 0.3, 0.0).unwrap();
        assert!(model.eigenvalues(0).iter().all(|&v| v >= 0.0));
        assert_eq!(model.principal_subspace(0).ncols(), 1);
        assert_eq!(model.rank(), 1);
    }

    #[test]
    fn null_group_is_ignored_by_mean() {
        let layout = real_layout(1);
        let ys = vec![coeffs(&layout, &[2.0]), coeffs(&layout, &[7.0]), coeffs(&layout, &[4.0])];
        let ops = vec![
            CtfOperator::identity(&layout),
            CtfOperator::from_blocks(vec![DMatrix::zeros(1, 1)]),
        ];
        let mu = estimate_mean(&ys, &ops, &[0, 1, 0]).unwrap();
        assert!((mu.data()[0].re - 3.0).abs() < 1e-7);
        let all_null = vec![CtfOperator::from_blocks(vec![DMatrix::zeros(1, 1)])];
        assert!(matches!(estimate_mean(&ys, &all_null, &[0, 0, 0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn model_json_roundtrip() {
        let layout = Arc::new(BlockLayout::new(&[(0, 2), (1, 1)]));
        let mu = SteerableCoeffs::new(layout.clone(), vec![c(1.0), c(-2.0), Complex64::new(0.5, 0.25)]).unwrap();
        let s0 = crate::linalg::to_complex(&DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let s1 = CMat::from_element(1, 1, c(0.7));
        let model = CovarianceModel::new(mu, vec![s0, s1], 0.4, 0.05).unwrap();
        let back = CovarianceModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back.mu(), model.mu());
        for b in 0..2 {
            assert!((back.sigma(b) - model.sigma(b)).norm() < 1e-14);
        }
        assert!(CovarianceModel::from_json("{").is_err());
    }
}
