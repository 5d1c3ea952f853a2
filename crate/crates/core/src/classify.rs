//! Rotational alignment, candidate neighbor lists, re-ranking and class averages.

use std::cell::RefCell;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::affinity::AffinityContext;
use crate::image::Image;
use crate::steerable::{Alignment, SteerableCoeffs};
use crate::{Error, Result};

/// Best in-plane transform of one image onto another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignResult {
    /// Rotation on the angle grid in degrees, in (-180, 180].
    pub theta_deg: f64,
    pub reflected: bool,
    /// Normalized correlation at the optimum.
    pub corr: f64,
}

impl AlignResult {
    pub fn alignment(&self) -> Alignment {
        Alignment::new(self.theta_deg.to_radians(), self.reflected)
    }
}

/// Reusable FFT plan for correlation over `angles` rotations.
#[derive(Clone)]
pub struct Aligner {
    angles: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Aligner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Aligner").field("angles", &self.angles).finish()
    }
}

thread_local! {
    static BUFFERS: RefCell<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> =
        const { RefCell::new((Vec::new(), Vec::new(), Vec::new())) };
}

fn grid_degrees(k: usize, angles: usize) -> f64 {
    let signed = if 2 * k <= angles { k as f64 } else { k as f64 - angles as f64 };
    signed * 360.0 / angles as f64
}

impl Aligner {
    pub fn new(angles: usize) -> Result<Self> {
        if angles < 8 {
            return Err(Error::Precondition(format!("need at least 8 angles, got {angles}")));
        }
        Ok(Aligner {
            angles,
            plan: FftPlanner::new().plan_fft_inverse(angles),
        })
    }

    pub fn angles(&self) -> usize {
        self.angles
    }

    /// Maximizes `Re⟨a, R_θ F^r b⟩ / (‖a‖‖b‖)` over the angle grid and `r ∈ {0, 1}`.
    ///
    /// For each `θ_k = 2πk/L` the correlation is `Re Σ_m w_m h_m e^{imθ_k}`,
    /// a length-`L` inverse DFT of the per-frequency products `h_m`.
    /// Ties go to the smallest `k`, unreflected first.
    pub fn align(&self, a: &SteerableCoeffs, b: &SteerableCoeffs) -> Result<AlignResult> {
        a.check_layout(b)?;
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Precondition("cannot align a zero-norm image".into()));
        }
        Ok(self.align_scaled(a, b, 1.0 / (na * nb)))
    }

    fn align_scaled(&self, a: &SteerableCoeffs, b: &SteerableCoeffs, scale: f64) -> AlignResult {
        let layout = a.layout();
        let l = self.angles;
        BUFFERS.with(|cell| {
            let mut guard = cell.borrow_mut();
            let (direct, mirror, scratch) = &mut *guard;
            direct.clear();
            direct.resize(l, Complex64::new(0.0, 0.0));
            mirror.clear();
            mirror.resize(l, Complex64::new(0.0, 0.0));
            scratch.resize(self.plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            for blk in 0..layout.n_blocks() {
                let w = layout.weight(blk);
                let (mut h, mut hr) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                for (x, y) in a.block(blk).iter().zip(b.block(blk)) {
                    h += x.conj() * y;
                    hr += x.conj() * y.conj();
                }
                let slot = layout.m(blk) % l;
                direct[slot] += h * w;
                mirror[slot] += hr * w;
            }
            self.plan.process_with_scratch(direct, scratch);
            self.plan.process_with_scratch(mirror, scratch);
            let mut best = (f64::NEG_INFINITY, 0usize, false);
            for (reflected, buf) in [(false, &*direct), (true, &*mirror)] {
                for (k, v) in buf.iter().enumerate() {
                    if v.re > best.0 {
                        best = (v.re, k, reflected);
                    }
                }
            }
            AlignResult {
                theta_deg: grid_degrees(best.1, l),
                reflected: best.2,
                corr: best.0 * scale,
            }
        })
    }
}

/// [`Aligner::align`] with a one-off plan.
pub fn align_pair(a: &SteerableCoeffs, b: &SteerableCoeffs, angles: usize) -> Result<AlignResult> {
    Aligner::new(angles)?.align(a, b)
}

/// Alignment of `i` onto `j` given the alignment of `j` onto `i`.
pub fn invert_alignment(r: &AlignResult) -> AlignResult {
    let theta_deg = if r.reflected || r.theta_deg == 0.0 {
        r.theta_deg
    } else if r.theta_deg == 180.0 {
        180.0
    } else {
        -r.theta_deg
    };
    AlignResult { theta_deg, ..*r }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub j: usize,
    /// Rotation applied to `j` (after the optional mirror) to match the center, in degrees.
    pub theta_deg: f64,
    pub reflected: bool,
    pub score: f64,
}

impl Neighbor {
    pub fn alignment(&self) -> Alignment {
        Alignment::new(self.theta_deg.to_radians(), self.reflected)
    }
}

/// Ordered neighbor lists, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    s_initial: usize,
    k_final: usize,
    rows: Vec<Vec<Neighbor>>,
}

impl NeighborTable {
    pub fn new(rows: Vec<Vec<Neighbor>>, s_initial: usize, k_final: usize) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() > s_initial {
                return Err(Error::Precondition(format!(
                    "row {i} has {} entries, more than S = {s_initial}",
                    row.len()
                )));
            }
            let mut seen = std::collections::BTreeSet::new();
            for nb in row {
                if nb.j == i {
                    return Err(Error::Precondition(format!("row {i} lists itself")));
                }
                if nb.j >= n {
                    return Err(Error::Precondition(format!("row {i} references image {} of {n}", nb.j)));
                }
                if !seen.insert(nb.j) {
                    return Err(Error::Precondition(format!("row {i} lists image {} twice", nb.j)));
                }
            }
        }
        Ok(NeighborTable {
            s_initial,
            k_final,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn s_initial(&self) -> usize {
        self.s_initial
    }

    pub fn k_final(&self) -> usize {
        self.k_final
    }

    pub fn rows(&self) -> &[Vec<Neighbor>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Neighbor] {
        &self.rows[i]
    }

    /// Smallest row length.
    pub fn width(&self) -> usize {
        self.rows.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// First `k` entries of every row.
    pub fn truncated(&self, k: usize) -> NeighborTable {
        NeighborTable {
            s_initial: self.s_initial,
            k_final: k,
            rows: self.rows.iter().map(|r| r[..k.min(r.len())].to_vec()).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut body = String::from("i,j,rank,theta_deg,reflected,score\n");
        for (i, row) in self.rows.iter().enumerate() {
            for (rank, nb) in row.iter().enumerate() {
                body.push_str(&format!(
                    "{i},{},{rank},{},{},{}\n",
                    nb.j, nb.theta_deg, nb.reflected as u8, nb.score
                ));
            }
        }
        w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a table written by [`write_csv`](Self::write_csv); `n` is the image count.
    pub fn read_csv(path: &Path, n: usize, s_initial: usize, k_final: usize) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = std::io::BufReader::new(file);
        let mut rows: Vec<Vec<(usize, Neighbor)>> = vec![Vec::new(); n];
        let bad = |line: usize, message: String| Error::Metadata {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (k, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if k == 0 {
                if line.trim() != "i,j,rank,theta_deg,reflected,score" {
                    return Err(bad(1, format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(k + 1, format!("expected 6 fields, got {}", f.len())));
            }
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(k + 1, format!("{s:?}: {e}")));
            let float = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(k + 1, format!("{s:?}: {e}")));
            let (i, j, rank) = (int(f[0])?, int(f[1])?, int(f[2])?);
            let reflected = match f[4].trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad(k + 1, format!("reflected flag {other:?}"))),
            };
            if i >= n {
                return Err(bad(k + 1, format!("image {i} out of range 0..{n}")));
            }
            rows[i].push((
                rank,
                Neighbor {
                    j,
                    theta_deg: float(f[3])?,
                    reflected,
                    score: float(f[5])?,
                },
            ));
        }
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.sort_by_key(|(rank, _)| *rank);
                r.into_iter().map(|(_, nb)| nb).collect()
            })
            .collect();
        NeighborTable::new(rows, s_initial, k_final)
    }
}

/// For each image, the `s` images with the highest aligned correlation.
///
/// Every unordered pair is aligned once; the reverse direction uses the
/// inverse transform. Rows are sorted by descending correlation, ties by ascending `j`.
pub fn initial_candidates(coeffs: &[SteerableCoeffs], s: usize, angles: usize) -> Result<NeighborTable> {
    let n = coeffs.len();
    if s == 0 || s >= n {
        return Err(Error::Precondition(format!("need 0 < S < n, got S = {s}, n = {n}")));
    }
    let aligner = Aligner::new(angles)?;
    let inv_norm: Vec<f64> = coeffs
        .iter()
        .map(|c| {
            let nrm = c.norm();
            if nrm > 0.0 {
                Ok(1.0 / nrm)
            } else {
                Err(Error::Precondition("cannot align a zero-norm image".into()))
            }
        })
        .collect::<Result<_>>()?;
    for c in coeffs {
        coeffs[0].check_layout(c)?;
    }
    // upper[i][j - i - 1] aligns j onto i
    let upper: Vec<Vec<AlignResult>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| aligner.align_scaled(&coeffs[i], &coeffs[j], inv_norm[i] * inv_norm[j]))
                .collect()
        })
        .collect();
    let rows: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut all: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let r = if j > i {
                        upper[i][j - i - 1]
                    } else {
                        invert_alignment(&upper[j][i - j - 1])
                    };
                    Neighbor {
                        j,
                        theta_deg: r.theta_deg,
                        reflected: r.reflected,
                        score: r.corr,
                    }
                })
                .collect();
            all.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.j.cmp(&b.j)));
            all.truncate(s);
            all
        })
        .collect();
    NeighborTable::new(rows, s, s)
}

/// Rescores each row with the anisotropic affinity and keeps the best `k`.
/// Alignments are carried over unchanged.
pub fn rerank(table: &NeighborTable, ctx: &AffinityContext, k: usize) -> Result<NeighborTable> {
    if table.len() != ctx.len() {
        return Err(Error::shape(ctx.len(), table.len()));
    }
    if k == 0 || k > table.width() {
        return Err(Error::Precondition(format!(
            "K = {k} must be in 1..={} (candidate list width)",
            table.width()
        )));
    }
    let rows = (0..table.len())
        .into_par_iter()
        .map(|i| {
            let cands: Vec<(usize, Alignment)> = table.row(i).iter().map(|nb| (nb.j, nb.alignment())).collect();
            let by_j: std::collections::HashMap<usize, &Neighbor> =
                table.row(i).iter().map(|nb| (nb.j, nb)).collect();
            ctx.affinity_row(i, &cands)
                .into_iter()
                .take(k)
                .map(|sc| {
                    let nb = by_j[&sc.j];
                    Neighbor {
                        score: sc.value,
                        ..*nb
                    }
                })
                .collect()
        })
        .collect();
    NeighborTable::new(rows, table.s_initial(), k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAverage {
    pub center: usize,
    pub average: Image,
    /// `(j, theta_deg, reflected)`, the center first with the identity transform.
    pub members: Vec<(usize, f64, bool)>,
}

/// Mean of the center image and its aligned neighbors.
pub fn class_average(center: usize, table: &NeighborTable, images: &[Image]) -> Result<ClassAverage> {
    if center >= table.len() || table.len() != images.len() {
        return Err(Error::Precondition(format!(
            "center {center} outside a table of {} rows for {} images",
            table.len(),
            images.len()
        )));
    }
    let mut members = vec![(center, 0.0, false)];
    members.extend(table.row(center).iter().map(|nb| (nb.j, nb.theta_deg, nb.reflected)));
    let base = &images[center];
    let mut acc = vec![0.0; base.pixels().len()];
    for &(j, theta_deg, reflected) in &members {
        let img = if j == center {
            images[j].clone()
        } else {
            images[j].aligned(theta_deg.to_radians(), reflected)
        };
        for (a, v) in acc.iter_mut().zip(img.pixels()) {
            *a += v;
        }
    }
    let k = members.len() as f64;
    for a in &mut acc {
        *a /= k;
    }
    Ok(ClassAverage {
        center,
        average: Image::new(base.side(), base.pixel_size(), acc)?,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steerable::BlockLayout;

    fn sample(seed: u64) -> SteerableCoeffs {
        let layout = Arc::new(BlockLayout::new(&[(0, 3), (1, 3), (2, 2), (3, 2), (4, 1)]));
        let mut x = SteerableCoeffs::zeros(layout.clone());
        let mut s = seed;
        for b in 0..layout.n_blocks() {
            let real = layout.m(b) == 0;
            for v in x.block_mut(b) {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let re = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let im = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                *v = Complex64::new(re, if real { 0.0 } else { im });
            }
        }
        x
    }

    #[test]
    fn self_alignment_is_identity() {
        let a = sample(1);
        let r = align_pair(&a, &a, 360).unwrap();
        assert_eq!((r.theta_deg, r.reflected), (0.0, false));
        assert!((r.corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planted_rotation_and_reflection() {
        let a = sample(2);
        let b = a.rotated(-(30f64.to_radians()));
        let r = align_pair(&a, &b, 360).unwrap();
        assert_eq!((r.theta_deg, r.reflected), (30.0, false));
        assert!(r.corr > 0.999);
        // b = R_{-50°} F a, so R_{50°}... F b = a needs the mirrored branch
        let c = a.reflected().rotated(-(50f64.to_radians()));
        let r = align_pair(&a, &c, 360).unwrap();
        assert!(r.reflected);
        let back = c.aligned(r.alignment());
        assert!(back.sub(&a).norm() < 1e-9 * a.norm());
    }

    #[test]
    fn inverse_alignment_maps_back() {
        let a = sample(3);
        let b = a.reflected().rotated(1.0);
        let r = align_pair(&a, &b, 360).unwrap();
        let inv = invert_alignment(&r);
        let r2 = align_pair(&b, &a, 360).unwrap();
        assert_eq!((inv.theta_deg, inv.reflected), (r2.theta_deg, r2.reflected));
        assert!(align_pair(&a, &SteerableCoeffs::zeros(a.layout().clone()), 360).is_err());
        assert!(Aligner::new(7).is_err());
    }

    #[test]
    fn angle_grid_wraps_to_half_open_interval() {
        assert_eq!(grid_degrees(0, 360), 0.0);
        assert_eq!(grid_degrees(180, 360), 180.0);
        assert_eq!(grid_degrees(181, 360), -179.0);
        assert_eq!(grid_degrees(359, 360), -1.0);
    }
}
