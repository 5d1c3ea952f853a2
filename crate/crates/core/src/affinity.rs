//! Anisotropic affinity between posterior image distributions.
//!
//! For images `i, j` in defocus groups `g, h` with posterior means `α` and
//! covariances `L`, the affinity is
//!
//! ```text
//! -½ log|L_g + L_h| - ½ (α_i - α_j)ᴴ (L_g + L_h)⁻¹ (α_i - α_j)
//! ```
//!
//! evaluated on the principal subspace of the covariance model. Blocks with
//! `m > 0` stand for a ±m pair of real dimensions and are counted twice.
//! `L_g + L_h` is factored once per unordered group pair.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cwf::{ConditionalMoments, CovarianceModel};
use crate::linalg::{chol_logdet, cholesky_ridged, CMat, CVec};
use crate::steerable::{Alignment, SteerableCoeffs};
use crate::{Error, Result};

/// Ridge (relative to the trace) retried when `L_g + L_h` is numerically semidefinite.
pub const PAIR_RIDGE: f64 = 1e-10;

/// Cholesky factors of `Uᴴ(L_g + L_h)U` for every block, and the weighted log-determinant.
#[derive(Debug, Clone)]
pub struct GroupPairFactor {
    groups: (usize, usize),
    chol: Vec<Option<Cholesky<Complex64, Dyn>>>,
    logdet: f64,
}

impl GroupPairFactor {
    pub fn groups(&self) -> (usize, usize) {
        self.groups
    }

    /// `log|L_g + L_h|` over the retained subspace, `m > 0` blocks counted twice.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn chol_blocks(&self) -> &[Option<Cholesky<Complex64, Dyn>>] {
        &self.chol
    }
}

/// Every group-pair factor, the projection onto the principal subspace and
/// the projected posterior means.
#[derive(Debug, Clone)]
pub struct PairFactors {
    n_groups: usize,
    weights: Vec<f64>,
    ms: Vec<usize>,
    subspace: Vec<CMat>,
    factors: Vec<GroupPairFactor>,
}

fn tri_index(g: usize, h: usize, n: usize) -> usize {
    let (g, h) = if g <= h { (g, h) } else { (h, g) };
    // rows g' < g hold n - g' entries each
    g * n - g * g.saturating_sub(1) / 2 + (h - g)
}

/// Factors `L_g + L_h` for all `g ≤ h` on the principal subspace of `model`.
pub fn build_pair_factors(moments: &ConditionalMoments, model: &CovarianceModel) -> Result<PairFactors> {
    let layout = moments.layout().clone();
    if layout.as_ref() != model.layout().as_ref() {
        return Err(Error::shape(model.layout().total_dim(), layout.total_dim()));
    }
    let n_groups = moments.n_groups();
    if n_groups == 0 {
        return Err(Error::Precondition("no defocus groups".into()));
    }
    let subspace: Vec<CMat> = (0..layout.n_blocks()).map(|b| model.principal_subspace(b)).collect();
    let projected: Vec<Vec<CMat>> = (0..n_groups)
        .map(|g| {
            moments
                .l_blocks(g)
                .iter()
                .zip(&subspace)
                .map(|(l, u)| u.adjoint() * l * u)
                .collect()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n_groups)
        .flat_map(|g| (g..n_groups).map(move |h| (g, h)))
        .collect();
    let factors = pairs
        .par_iter()
        .map(|&(g, h)| {
            let mut logdet = 0.0;
            let mut chol = Vec::with_capacity(layout.n_blocks());
            for b in 0..layout.n_blocks() {
                let sum = &projected[g][b] + &projected[h][b];
                if sum.nrows() == 0 {
                    chol.push(None);
                    continue;
                }
                let ch = cholesky_ridged(&sum, PAIR_RIDGE).ok_or_else(|| {
                    Error::Numerical(format!(
                        "L_{g} + L_{h} is not positive definite in block {b} (m = {})",
                        layout.m(b)
                    ))
                })?;
                let ld = chol_logdet(&ch);
                if !ld.is_finite() {
                    return Err(Error::Numerical(format!(
                        "log-determinant of L_{g} + L_{h} block {b} is not finite"
                    )));
                }
                logdet += layout.weight(b) * ld;
                chol.push(Some(ch));
            }
            Ok(GroupPairFactor {
                groups: (g, h),
                chol,
                logdet,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairFactors {
        n_groups,
        weights: (0..layout.n_blocks()).map(|b| layout.weight(b)).collect(),
        ms: (0..layout.n_blocks()).map(|b| layout.m(b)).collect(),
        subspace,
        factors,
    })
}

impl PairFactors {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn factors(&self) -> &[GroupPairFactor] {
        &self.factors
    }

    pub fn factor(&self, g: usize, h: usize) -> &GroupPairFactor {
        &self.factors[tri_index(g, h, self.n_groups)]
    }

    pub fn subspace(&self, b: usize) -> &CMat {
        &self.subspace[b]
    }

    /// `Uᴴ α` per block.
    pub fn project(&self, alpha: &SteerableCoeffs) -> Vec<CVec> {
        self.subspace
            .iter()
            .enumerate()
            .map(|(b, u)| u.adjoint() * CVec::from_column_slice(alpha.block(b)))
            .collect()
    }

    /// Weighted quadratic form `Σ_b w_b ‖L_b⁻¹ d_b‖²` for projected differences `d`.
    fn quadratic(&self, factor: &GroupPairFactor, diff: &[CVec]) -> f64 {
        let mut q = 0.0;
        for (b, d) in diff.iter().enumerate() {
            if let Some(ch) = &factor.chol[b] {
                let z = ch
                    .l_dirty()
                    .solve_lower_triangular(d)
                    .expect("Cholesky factor has a nonzero diagonal");
                q += self.weights[b] * z.norm_squared();
            }
        }
        q
    }

    /// Affinity between `α_i` (group `g`) and an already aligned `α_j` (group `h`).
    pub fn affinity(
        &self,
        alpha_i: &SteerableCoeffs,
        alpha_j: &SteerableCoeffs,
        g: usize,
        h: usize,
    ) -> Result<f64> {
        alpha_i.check_layout(alpha_j)?;
        if alpha_i.layout().n_blocks() != self.subspace.len() {
            return Err(Error::shape(self.subspace.len(), alpha_i.layout().n_blocks()));
        }
        if g >= self.n_groups || h >= self.n_groups {
            return Err(Error::Precondition(format!(
                "group pair ({g}, {h}) outside 0..{}",
                self.n_groups
            )));
        }
        let diff: Vec<CVec> = self
            .project(alpha_i)
            .into_iter()
            .zip(self.project(alpha_j))
            .map(|(a, b)| a - b)
            .collect();
        let factor = self.factor(g, h);
        Ok(-0.5 * factor.logdet - 0.5 * self.quadratic(factor, &diff))
    }
}

/// One scored candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityScore {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub alignment: Alignment,
}

/// Pair factors plus projected posterior means for fast scoring of many pairs.
#[derive(Debug, Clone)]
pub struct AffinityContext {
    factors: PairFactors,
    group_of: Vec<usize>,
    /// `Uᴴ α_i` per image and block.
    beta: Vec<Vec<CVec>>,
    /// `Uᴴ conj(α_i)`, the projection of the mirrored image.
    beta_mirror: Vec<Vec<CVec>>,
}

impl AffinityContext {
    pub fn new(moments: &ConditionalMoments, model: &CovarianceModel) -> Result<Self> {
        let factors = build_pair_factors(moments, model)?;
        let beta = moments.alpha().par_iter().map(|a| factors.project(a)).collect();
        let beta_mirror = moments
            .alpha()
            .par_iter()
            .map(|a| factors.project(&a.reflected()))
            .collect();
        Ok(AffinityContext {
            factors,
            group_of: moments.group_of().to_vec(),
            beta,
            beta_mirror,
        })
    }

    pub fn factors(&self) -> &PairFactors {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Affinity of `i` with `j` transformed by `alignment`.
    pub fn score(&self, i: usize, j: usize, alignment: Alignment) -> f64 {
        let src = if alignment.reflected { &self.beta_mirror[j] } else { &self.beta[j] };
        let diff: Vec<CVec> = self.beta[i]
            .iter()
            .zip(src)
            .zip(&self.factors.ms)
            .map(|((a, b), &m)| a - b * Complex64::from_polar(1.0, m as f64 * alignment.theta))
            .collect();
        let factor = self.factors.factor(self.group_of[i], self.group_of[j]);
        -0.5 * factor.logdet - 0.5 * self.factors.quadratic(factor, &diff)
    }

    /// Scores for every candidate of `i`, sorted by descending value, ties by ascending `j`.
    pub fn affinity_row(&self, i: usize, candidates: &[(usize, Alignment)]) -> Vec<AffinityScore> {
        let mut out: Vec<AffinityScore> = candidates
            .iter()
            .map(|&(j, alignment)| AffinityScore {
                i,
                j,
                value: self.score(i, j, alignment),
                alignment,
            })
            .collect();
        out.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.j.cmp(&b.j)));
        out
    }
}

/// Norm used for the ε-ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallNorm {
    L1,
    L2,
    LInf,
}

impl BallNorm {
    fn norm(self, x: &[f64]) -> f64 {
        match self {
            BallNorm::L1 => x.iter().map(|v| v.abs()).sum(),
            BallNorm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            BallNorm::LInf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Volume of the unit ball in `d` dimensions.
    pub fn unit_volume(self, d: usize) -> f64 {
        let df = d as f64;
        match self {
            BallNorm::L1 => 2f64.powi(d as i32) / (1..=d).map(|k| k as f64).product::<f64>(),
            BallNorm::LInf => 2f64.powi(d as i32),
            BallNorm::L2 => {
                let half = df / 2.0;
                // π^{d/2} / Γ(d/2 + 1) for d ≤ 3
                let gamma = match d {
                    1 => std::f64::consts::PI.sqrt() / 2.0,
                    2 => 1.0,
                    3 => 3.0 * std::f64::consts::PI.sqrt() / 4.0,
                    _ => f64::NAN,
                };
                std::f64::consts::PI.powf(half) / gamma
            }
        }
    }
}

/// Monte Carlo estimate and small-ball approximation of `P(‖X‖ < ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallCheck {
    pub epsilon: f64,
    pub monte_carlo: f64,
    pub closed_form: f64,
    pub samples: usize,
}

impl BallCheck {
    pub fn ratio(&self) -> f64 {
        self.monte_carlo / self.closed_form
    }

    /// Binomial standard error of the ratio.
    pub fn ratio_std_err(&self) -> f64 {
        let p = self.monte_carlo;
        (p * (1.0 - p) / self.samples as f64).sqrt() / self.closed_form
    }
}

/// `P(‖X‖_p < ε)` for `X ~ N(mean, cov)`, estimated by sampling and by
/// `ε^d Vol(B_p) (2π)^{-d/2} |L|^{-1/2} exp(-½ αᵀL⁻¹α)`.
pub fn validate_ball_probability(
    mean: &[f64],
    cov: &DMatrix<f64>,
    epsilon: f64,
    norm: BallNorm,
    samples: usize,
    seed: u64,
) -> Result<BallCheck> {
    Ok(ball_probabilities(mean, cov, &[epsilon], norm, samples, seed)?[0])
}

/// [`validate_ball_probability`] for several radii sharing one sample set.
pub fn ball_probabilities(
    mean: &[f64],
    cov: &DMatrix<f64>,
    epsilons: &[f64],
    norm: BallNorm,
    samples: usize,
    seed: u64,
) -> Result<Vec<BallCheck>> {
    let d = mean.len();
    if !(1..=3).contains(&d) {
        return Err(Error::Precondition(format!("ball check supports d ≤ 3, got {d}")));
    }
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::shape(format!("{d}x{d} covariance"), format!("{}x{}", cov.nrows(), cov.ncols())));
    }
    if samples == 0 || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Precondition("need samples > 0 and ε > 0".into()));
    }
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::Precondition("covariance is not positive definite".into()))?;
    let l = chol.l();
    let det: f64 = l.diagonal().iter().map(|v| v * v).product();
    let alpha = nalgebra::DVector::from_column_slice(mean);
    let maha = alpha.dot(&chol.solve(&alpha));
    let density = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * det.powf(-0.5) * (-0.5 * maha).exp();
    let closed: Vec<f64> = epsilons
        .iter()
        .map(|e| e.powi(d as i32) * norm.unit_volume(d) * density)
        .collect();
    if let Some(c) = closed.iter().find(|&&c| c >= 0.5) {
        return Err(Error::Precondition(format!(
            "ε too large for the small-ball approximation (closed form {c:.3} ≥ 0.5)"
        )));
    }

    const CHUNK: usize = 1 << 16;
    let n_chunks = samples.div_ceil(CHUNK);
    let hits = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut h = vec![0usize; epsilons.len()];
            let mut z = [0.0f64; 3];
            let mut x = [0.0f64; 3];
            for _ in 0..count {
                for v in z.iter_mut().take(d) {
                    *v = StandardNormal.sample(&mut rng);
                }
                for r in 0..d {
                    x[r] = mean[r] + (0..=r).map(|k| l[(r, k)] * z[k]).sum::<f64>();
                }
                let n = norm.norm(&x[..d]);
                for (hk, &e) in h.iter_mut().zip(epsilons) {
                    if n < e {
                        *hk += 1;
                    }
                }
            }
            h
        })
        .reduce(
            || vec![0usize; epsilons.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    Ok(epsilons
        .iter()
        .zip(hits)
        .zip(closed)
        .map(|((&epsilon, h), closed_form)| BallCheck {
            epsilon,
            monte_carlo: h as f64 / samples as f64,
            closed_form,
            samples,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_index_is_dense() {
        for n in 1..7 {
            let mut seen = vec![false; n * (n + 1) / 2];
            for g in 0..n {
                for h in g..n {
                    let k = tri_index(g, h, n);
                    assert!(!seen[k]);
                    seen[k] = true;
                    assert_eq!(k, tri_index(h, g, n));
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((BallNorm::L2.unit_volume(1) - 2.0).abs() < 1e-12);
        assert!((BallNorm::L2.unit_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((BallNorm::L2.unit_volume(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        assert_eq!(BallNorm::L1.unit_volume(2), 2.0);
        assert_eq!(BallNorm::LInf.unit_volume(3), 8.0);
    }

    #[test]
    fn one_dimensional_standard_case() {
        let chk = validate_ball_probability(&[0.0], &DMatrix::from_element(1, 1, 1.0), 0.01, BallNorm::L2, 1_000_000, 1)
            .unwrap();
        assert!((chk.closed_form - 0.02 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((chk.ratio() - 1.0).abs() < 4.0 * chk.ratio_std_err());
        assert!(validate_ball_probability(&[0.0], &DMatrix::from_element(1, 1, 1.0), 1.0, BallNorm::L2, 10, 1).is_err());
    }
}
