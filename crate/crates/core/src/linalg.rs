//! Small dense Hermitian helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

pub fn real_trace(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Hermitian eigendecomposition; eigenvalues ascending, columns of the second
/// matrix are the matching eigenvectors.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn from_eig(values: &[f64], vectors: &CMat) -> CMat {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (k, &v) in values.iter().enumerate() {
        for r in 0..n {
            scaled[(r, k)] *= v;
        }
    }
    hermitize(&(scaled * vectors.adjoint()))
}

/// Smallest eigenvalue of the Hermitian part (`+inf` for empty matrices).
pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(m).0.first().copied().unwrap_or(f64::INFINITY)
}

/// Cholesky of a Hermitian matrix, retrying once with `ridge_rel * trace` on the diagonal.
pub fn cholesky_ridged(m: &CMat, ridge_rel: f64) -> Option<Cholesky<Complex64, Dyn>> {
    let h = hermitize(m);
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Some(ch);
    }
    let tr = real_trace(&h).abs();
    let ridge = if tr > 0.0 { ridge_rel * tr } else { ridge_rel };
    let mut r = h;
    for i in 0..r.nrows() {
        r[(i, i)] += c(ridge);
    }
    Cholesky::new(r)
}

pub fn chol_logdet(ch: &Cholesky<Complex64, Dyn>) -> f64 {
    ch.l_dirty()
        .diagonal()
        .iter()
        .map(|z| 2.0 * z.re.ln())
        .sum()
}

/// Solves `A x = b` for real SPD `A` with a relative ridge; `None` when singular.
pub fn solve_spd_ridged(a: &DMatrix<f64>, ridge_rel: f64, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut m = a.clone();
    let tr: f64 = m.diagonal().iter().sum();
    let ridge = ridge_rel * tr.abs();
    for i in 0..m.nrows() {
        m[(i, i)] += ridge;
    }
    let ch = Cholesky::new(m)?;
    Some(ch.solve(b))
}
