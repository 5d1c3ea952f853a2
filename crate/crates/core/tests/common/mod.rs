#![allow(dead_code)]

use std::sync::Arc;

use cryoclass::linalg::{c, CMat};
use cryoclass::steerable::{BlockLayout, CtfOperator, SteerableCoeffs};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Symmetric, well-conditioned operator blocks.
pub fn random_op(layout: &BlockLayout, rng: &mut ChaCha8Rng) -> CtfOperator {
    CtfOperator::from_blocks(
        (0..layout.n_blocks())
            .map(|b| {
                let r = layout.len(b);
                let m = DMatrix::from_fn(r, r, |_, _| 0.3 * gauss(rng));
                let mut a = (&m + m.transpose()) * 0.5;
                for i in 0..r {
                    a[(i, i)] += if i % 2 == 0 { 1.0 } else { -0.8 };
                }
                a
            })
            .collect(),
    )
}

/// Independent draws with per-coordinate standard deviation `scale`; real for `m = 0`.
pub fn draw(layout: &Arc<BlockLayout>, rng: &mut ChaCha8Rng, scale: &[f64]) -> SteerableCoeffs {
    let mut data = Vec::with_capacity(layout.total_dim());
    for b in 0..layout.n_blocks() {
        let real = layout.m(b) == 0;
        for q in 0..layout.len(b) {
            let s = scale[layout.range(b).start + q];
            data.push(if real {
                c(s * gauss(rng))
            } else {
                Complex64::new(gauss(rng), gauss(rng)) * (s / 2f64.sqrt())
            });
        }
    }
    SteerableCoeffs::new(layout.clone(), data).unwrap()
}

pub fn random_psd(r: usize, rng: &mut ChaCha8Rng, complex: bool) -> CMat {
    let b = CMat::from_fn(r, r, |_, _| Complex64::new(gauss(rng), if complex { gauss(rng) } else { 0.0 }));
    &b * b.adjoint() * c(0.5)
}
