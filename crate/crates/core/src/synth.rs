//! Synthetic projection datasets: Gaussian-blob phantoms seen from uniformly
//! random orientations, corrupted by a per-group CTF and white Gaussian noise.
//!
//! Object coordinates are scaled so that the unit ball spans the image: one
//! object unit is `(p - 1) / 2` pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ctf::{ctf_grid, CtfParams, LinearCtf};
use crate::image::{GroundTruth, Image, ImageStack, Quaternion};
use crate::mrc::Volume;
use crate::{Error, Result};

const ROTATION_STREAM: u64 = u64::MAX;

/// One isotropic 3D Gaussian; its line integral is a 2D Gaussian of the same
/// width with peak `weight * √(2π)σ / (2πσ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: [f64; 3],
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    blobs: Vec<Blob>,
}

impl Phantom {
    pub fn new(blobs: Vec<Blob>) -> Result<Self> {
        if blobs.is_empty() {
            return Err(Error::Precondition("phantom needs at least one blob".into()));
        }
        for (i, b) in blobs.iter().enumerate() {
            let r2: f64 = b.center.iter().map(|v| v * v).sum();
            if !(b.sigma > 0.0) || r2 > 1.0 || !b.weight.is_finite() {
                return Err(Error::Precondition(format!("invalid blob {i}: {b:?}")));
            }
        }
        Ok(Phantom { blobs })
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    /// Ten-blob asymmetric test particle with no rotational or mirror symmetry.
    pub fn asymmetric() -> Self {
        const BLOBS: [([f64; 3], f64, f64); 10] = [
            ([0.30, 0.10, -0.05], 0.14, 1.0),
            ([-0.25, 0.20, 0.10], 0.12, 0.8),
            ([0.05, -0.30, 0.20], 0.10, 1.2),
            ([-0.10, -0.05, -0.30], 0.16, 0.9),
            ([0.20, 0.28, 0.22], 0.09, 0.7),
            ([-0.32, -0.22, -0.05], 0.11, 1.1),
            ([0.00, 0.05, 0.05], 0.18, 0.6),
            ([0.15, -0.12, -0.25], 0.08, 1.3),
            ([-0.05, 0.35, -0.18], 0.10, 0.9),
            ([0.35, -0.25, 0.08], 0.09, 0.8),
        ];
        Phantom {
            blobs: BLOBS
                .iter()
                .map(|&(center, sigma, weight)| Blob {
                    center,
                    sigma,
                    weight,
                })
                .collect(),
        }
    }

    /// `count` blobs with centers uniform in the ball of radius `spread`,
    /// widths uniform in `sigma` and weights uniform in [0.6, 1.4).
    pub fn random(count: usize, spread: f64, sigma: (f64, f64), seed: u64) -> Result<Self> {
        if !(spread > 0.0 && spread <= 1.0) || !(sigma.0 > 0.0 && sigma.0 < sigma.1) {
            return Err(Error::Precondition(format!(
                "random phantom needs spread in (0, 1] and 0 < sigma.0 < sigma.1, got {spread}, {sigma:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs = (0..count)
            .map(|_| {
                let c = loop {
                    let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                    if v.iter().map(|x| x * x).sum::<f64>() < 1.0 {
                        break v;
                    }
                };
                Blob {
                    center: c.map(|x| x * spread),
                    sigma: rng.random_range(sigma.0..sigma.1),
                    weight: rng.random_range(0.6..1.4),
                }
            })
            .collect();
        Phantom::new(blobs)
    }

    pub fn union(&self, other: &Phantom) -> Phantom {
        Phantom {
            blobs: self.blobs.iter().chain(&other.blobs).copied().collect(),
        }
    }
}

/// Source of the clean 3D density.
#[derive(Debug, Clone)]
pub enum Particle {
    Blobs(Phantom),
    Volume(Volume),
}

impl Particle {
    pub fn project(&self, rotation: &Quaternion, side: usize, pixel_size: f64) -> Result<Image> {
        match self {
            Particle::Blobs(p) => project_phantom(p, rotation, side, pixel_size),
            Particle::Volume(v) => project_volume(v, rotation, side, pixel_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub side: usize,
    /// Signal-to-noise power ratio.
    pub snr: f64,
    pub groups: Vec<CtfParams>,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.n < self.groups.len() {
            return Err(Error::Precondition(format!(
                "need n >= G >= 1, got n = {}, G = {}",
                self.n,
                self.groups.len()
            )));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Precondition(format!("snr must be positive, got {}", self.snr)));
        }
        if self.side % 2 == 0 {
            return Err(Error::Precondition(format!("image side must be odd, got {}", self.side)));
        }
        let ps = self.groups[0].pixel_size;
        for g in &self.groups {
            g.validate()?;
            if g.pixel_size != ps {
                return Err(Error::Precondition("all groups must share one pixel size".into()));
            }
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Haar-uniform rotations from normalized 4D Gaussian draws.
pub fn random_rotations(count: usize, seed: u64) -> Vec<Quaternion> {
    let mut rng = stream_rng(seed, ROTATION_STREAM);
    (0..count)
        .map(|_| loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            if let Ok(q) = Quaternion::normalized(q) {
                break q;
            }
        })
        .collect()
}

/// Exact line-integral projection along z of the rotated phantom.
pub fn project_phantom(
    phantom: &Phantom,
    rotation: &Quaternion,
    side: usize,
    pixel_size: f64,
) -> Result<Image> {
    if side % 2 == 0 {
        return Err(Error::Precondition(format!("image side must be odd, got {side}")));
    }
    let c = ((side - 1) / 2) as f64;
    let scale = c.max(1.0);
    let projected: Vec<([f64; 2], f64, f64)> = phantom
        .blobs
        .iter()
        .map(|b| {
            let rc = rotation.rotate(b.center);
            let two_pi = 2.0 * std::f64::consts::PI;
            let amp = b.weight * two_pi.sqrt() * b.sigma / (two_pi * b.sigma * b.sigma);
            ([rc[0], rc[1]], amp, -0.5 / (b.sigma * b.sigma))
        })
        .collect();
    Image::from_fn(side, pixel_size, |row, col| {
        let x = (col as f64 - c) / scale;
        let y = (row as f64 - c) / scale;
        projected
            .iter()
            .map(|(ctr, amp, k)| {
                let (dx, dy) = (x - ctr[0], y - ctr[1]);
                amp * (k * (dx * dx + dy * dy)).exp()
            })
            .sum()
    })
}

/// Ray-sum projection of a density map with trilinear sampling.
///
/// The cube of side `N` voxels spans `[-1, 1]³` in object units, matching
/// the phantom convention.
pub fn project_volume(vol: &Volume, rotation: &Quaternion, side: usize, pixel_size: f64) -> Result<Image> {
    if side % 2 == 0 {
        return Err(Error::Precondition(format!("image side must be odd, got {side}")));
    }
    let n = vol.side;
    if n < 2 || vol.data.len() != n * n * n {
        return Err(Error::shape(format!("{n}^3 voxels"), vol.data.len()));
    }
    let r = rotation.rotation_matrix();
    let half = (n - 1) as f64 / 2.0;
    let c = ((side - 1) / 2) as f64;
    let scale = c.max(1.0);
    let dz = 1.0 / half;
    let steps = n as isize;
    let sample = |p: [f64; 3]| -> f64 {
        let f = [p[0] * half + half, p[1] * half + half, p[2] * half + half];
        let i0 = [f[0].floor(), f[1].floor(), f[2].floor()];
        let t = [f[0] - i0[0], f[1] - i0[1], f[2] - i0[2]];
        let mut acc = 0.0;
        for corner in 0..8 {
            let d = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let idx: [isize; 3] = std::array::from_fn(|a| i0[a] as isize + d[a] as isize);
            if idx.iter().any(|&v| v < 0 || v >= n as isize) {
                continue;
            }
            let w: f64 = (0..3)
                .map(|a| if d[a] == 1 { t[a] } else { 1.0 - t[a] })
                .product();
            let (x, y, z) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
            acc += w * vol.data[(z * n + y) * n + x];
        }
        acc
    };
    Image::from_fn(side, pixel_size, |row, col| {
        let x = (col as f64 - c) / scale;
        let y = (row as f64 - c) / scale;
        let mut total = 0.0;
        for s in -steps..=steps {
            let z = s as f64 * dz;
            // object point = Rᵀ (x, y, z)
            let p = [
                r[0][0] * x + r[1][0] * y + r[2][0] * z,
                r[0][1] * x + r[1][1] * y + r[2][1] * z,
                r[0][2] * x + r[1][2] * y + r[2][2] * z,
            ];
            total += sample(p);
        }
        total * dz
    })
}

/// Per-image outputs of [`simulate`] before noise, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub stack: ImageStack,
    /// CTF-affected clean images (no noise).
    pub ctf_clean: Vec<Image>,
    pub noise_var: f64,
}

/// Generates a noisy CTF-affected stack with ground truth.
///
/// The CTF acts as a linear convolution ([`LinearCtf`]).
/// Groups are assigned round-robin (`i mod G`); the noise variance is the mean
/// per-image pixel variance of the CTF-affected clean images divided by `snr`.
/// Noise for image `i` comes from its own RNG stream, so results do not depend
/// on scheduling. Pixels are rounded to `f32` so the stack survives MRC I/O exactly.
pub fn simulate(particle: &Particle, cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let ps = cfg.groups[0].pixel_size;
    let grids = cfg
        .groups
        .iter()
        .map(|g| LinearCtf::new(&ctf_grid(g, cfg.side)?))
        .collect::<Result<Vec<_>>>()?;
    let n_groups = cfg.groups.len();
    let rotations = random_rotations(cfg.n, cfg.seed);

    let pairs: Vec<(Image, Image)> = rotations
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let mut clean = particle.project(q, cfg.side, ps)?;
            clean.quantize_f32();
            let ctf = grids[i % n_groups].apply(&clean)?;
            Ok((clean, ctf))
        })
        .collect::<Result<Vec<_>>>()?;

    let signal_var = pairs.iter().map(|(_, c)| pixel_variance(c.pixels())).sum::<f64>() / cfg.n as f64;
    let noise_var = signal_var / cfg.snr;
    let sigma = noise_var.sqrt();

    let noisy: Vec<Image> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (_, ctf))| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let mut img = ctf.clone();
            for v in img.pixels_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
            img.quantize_f32();
            img
        })
        .collect();

    let (truth, ctf_clean): (Vec<GroundTruth>, Vec<Image>) = pairs
        .into_iter()
        .zip(rotations)
        .map(|((clean, ctf), rotation)| {
            (
                GroundTruth {
                    rotation,
                    clean: Some(clean),
                },
                ctf,
            )
        })
        .unzip();
    let group_of: Vec<usize> = (0..cfg.n).map(|i| i % n_groups).collect();
    let defocus: Vec<f64> = group_of.iter().map(|&g| cfg.groups[g].defocus_um).collect();
    let stack = ImageStack::new(noisy, group_of)?
        .with_group_count(n_groups)?
        .with_truth(truth)?
        .with_defocus(defocus)?;
    Ok(Simulation {
        stack,
        ctf_clean,
        noise_var,
    })
}

pub(crate) fn pixel_variance(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_are_deterministic_unit_quaternions() {
        let a = random_rotations(50, 7);
        assert_eq!(a, random_rotations(50, 7));
        assert_ne!(a, random_rotations(50, 8));
        for q in &a {
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_blob_closed_form() {
        let ph = Phantom::new(vec![Blob {
            center: [0.0; 3],
            sigma: 0.2,
            weight: 1.5,
        }])
        .unwrap();
        let img = project_phantom(&ph, &Quaternion::IDENTITY, 33, 1.0).unwrap();
        let s: f64 = 0.2;
        let expect = 1.5 * (2.0 * std::f64::consts::PI).sqrt() * s / (2.0 * std::f64::consts::PI * s * s);
        assert!((img.get(16, 16) - expect).abs() < 1e-12);
    }

    #[test]
    fn antipodal_blobs_are_point_symmetric() {
        let b = |c: [f64; 3]| Blob {
            center: c,
            sigma: 0.1,
            weight: 1.0,
        };
        let ph = Phantom::new(vec![b([0.3, -0.2, 0.1]), b([-0.3, 0.2, -0.1])]).unwrap();
        let img = project_phantom(&ph, &Quaternion::IDENTITY, 21, 1.0).unwrap();
        let n = 21;
        for r in 0..n {
            for c in 0..n {
                assert!((img.get(r, c) - img.get(n - 1 - r, n - 1 - c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_linear_in_blobs() {
        let a = Phantom::asymmetric();
        let b = Phantom::new(vec![Blob {
            center: [0.1, 0.2, -0.4],
            sigma: 0.07,
            weight: 2.0,
        }])
        .unwrap();
        let q = Quaternion::normalized([0.2, 0.5, -0.3, 0.7]).unwrap();
        let ab = project_phantom(&a.union(&b), &q, 17, 1.0).unwrap();
        let pa = project_phantom(&a, &q, 17, 1.0).unwrap();
        let pb = project_phantom(&b, &q, 17, 1.0).unwrap();
        for i in 0..17 * 17 {
            assert!((ab.pixels()[i] - pa.pixels()[i] - pb.pixels()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SimConfig {
            n: 3,
            side: 9,
            snr: 1.0,
            groups: vec![CtfParams::reference(1.0); 4],
            seed: 0,
        };
        assert!(cfg.validate().is_err());
        cfg.groups.truncate(2);
        cfg.snr = 0.0;
        assert!(cfg.validate().is_err());
        cfg.snr = 1.0;
        cfg.side = 10;
        assert!(cfg.validate().is_err());
        assert!(Phantom::new(vec![]).is_err());
    }
}
