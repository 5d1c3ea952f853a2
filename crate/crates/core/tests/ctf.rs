use cryoclass::ctf::{apply_ctf, ctf_eval, ctf_grid, first_zero, phase_flip, CtfGrid, CtfParams};
use cryoclass::image::Image;
use cryoclass::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Weak-phase CTF written out from scratch in Å units.
fn oracle_ctf(defocus_um: f64, k: f64) -> f64 {
    let cs: f64 = 2.0e7;
    let lambda: f64 = 2.51e-2;
    let kh = (cs * lambda.powi(3)).powf(0.25) * k;
    let dz = defocus_um * 1e4 / (cs * lambda).sqrt();
    let alpha: f64 = 0.07;
    let phi = (alpha / (1.0 - alpha * alpha).sqrt()).atan();
    (-10.0 * kh * kh).exp() * (-PI * dz * kh * kh + 0.5 * PI * kh.powi(4) + phi).sin()
}

fn oracle_first_zero(defocus_um: f64) -> f64 {
    // coarse bracket then plain bisection
    let f = |k: f64| oracle_ctf(defocus_um, k);
    let mut a = 1e-6;
    let step = 1e-5;
    while f(a).signum() == f(a + step).signum() {
        a += step;
    }
    let mut b = a + step;
    while b - a > 1e-15 {
        let m = 0.5 * (a + b);
        if f(m).signum() == f(a).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Centered 2D DFT with the origin at the middle pixel.
fn centered_dft(side: usize, data: &[f64]) -> Vec<Complex64> {
    let c = (side / 2) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); side * side];
    for fr in 0..side {
        for fc in 0..side {
            let (v, u) = (fr as f64 - c, fc as f64 - c);
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..side {
                for col in 0..side {
                    let ph = -2.0 * PI * (u * (col as f64 - c) + v * (r as f64 - c)) / side as f64;
                    acc += data[r * side + col] * Complex64::from_polar(1.0, ph);
                }
            }
            out[fr * side + fc] = acc;
        }
    }
    out
}

fn noise_image(side: usize, seed: u64) -> Image {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Image::from_fn(side, 2.82, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
    .unwrap()
}

#[test]
fn first_zero_matches_independent_root_finder() {
    let k0 = first_zero(&CtfParams::reference(1.0), 0.5 / 2.82).unwrap();
    let oracle = oracle_first_zero(1.0);
    assert!((k0 - oracle).abs() < 1e-9, "{k0} vs {oracle}");
    // pinned regression value (1/Å)
    assert!((k0 - 0.009_425_991_3).abs() < 1e-10, "{k0}");
    assert!(ctf_eval(&CtfParams::reference(1.0), k0).unwrap().abs() < 1e-9);
}

#[test]
fn defocus_values_have_distinct_first_zeros() {
    let zeros: Vec<f64> = [1.0, 1.3, 1.6]
        .iter()
        .map(|&d| first_zero(&CtfParams::reference(d), 0.5 / 2.82).unwrap())
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!((zeros[i] - zeros[j]).abs() > 1e-4, "{zeros:?}");
        }
    }
    // more underfocus pulls the first zero in
    assert!(zeros[0] > zeros[1] && zeros[1] > zeros[2]);
}

#[test]
fn ctf_matches_oracle_pointwise() {
    for &d in &[1.0, 1.3, 1.6, 1.9] {
        let p = CtfParams::reference(d);
        for i in 0..500 {
            let k = i as f64 * 0.5 / 2.82 / 499.0;
            assert!((p.eval(k).unwrap() - oracle_ctf(d, k)).abs() < 1e-12);
        }
    }
}

#[test]
fn dc_is_zero_without_amplitude_contrast() {
    let mut p = CtfParams::reference(1.3);
    p.amp_contrast = 0.0;
    assert_eq!(ctf_eval(&p, 0.0).unwrap(), 0.0);
    let g = ctf_grid(&p, 33).unwrap();
    assert_eq!(g.get(16, 16), 0.0);
    assert!(matches!(ctf_eval(&p, f64::NAN), Err(Error::Domain(_))));
    assert!(matches!(ctf_grid(&p, 32), Err(Error::Precondition(_))));
}

#[test]
fn delta_image_gives_psf_whose_transform_is_the_grid() {
    let side = 33;
    let grid = ctf_grid(&CtfParams::reference(1.0), side).unwrap();
    let delta = Image::from_fn(side, 2.82, |r, c| if r == 16 && c == 16 { 1.0 } else { 0.0 }).unwrap();
    let psf = apply_ctf(&delta, &grid).unwrap();
    let ft = centered_dft(side, psf.pixels());
    for (z, &g) in ft.iter().zip(grid.values()) {
        assert!((z.re - g).abs() < 1e-10 && z.im.abs() < 1e-10);
    }
}

#[test]
fn ctf_then_flip_has_magnitude_grid_times_input() {
    let side = 17;
    let grid = ctf_grid(&CtfParams::reference(1.6), side).unwrap();
    let x = noise_image(side, 3);
    let y = phase_flip(&apply_ctf(&x, &grid).unwrap(), &grid).unwrap();
    let fx = centered_dft(side, x.pixels());
    let fy = centered_dft(side, y.pixels());
    for ((a, b), &g) in fx.iter().zip(&fy).zip(grid.values()) {
        assert!((b.norm() - g.abs() * a.norm()).abs() < 1e-10);
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let grid = ctf_grid(&CtfParams::reference(1.0), 9).unwrap();
    let img = Image::zeros(11, 1.0).unwrap();
    assert!(matches!(apply_ctf(&img, &grid), Err(Error::Shape { .. })));
    assert!(matches!(phase_flip(&img, &grid), Err(Error::Shape { .. })));
}

#[test]
fn positive_grid_flip_is_identity() {
    let grid = CtfGrid::constant(15, 0.3).unwrap();
    let x = noise_image(15, 9);
    let y = phase_flip(&x, &grid).unwrap();
    for (a, b) in x.pixels().iter().zip(y.pixels()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn params() -> impl Strategy<Value = CtfParams> {
    (0.5f64..3.0, 0.5f64..4.0, 1.5f64..4.0, 0.0f64..50.0, 0.0f64..0.3, 1.0f64..4.0).prop_map(
        |(defocus_um, cs_mm, lambda_pm, b_factor, amp_contrast, pixel_size)| CtfParams {
            defocus_um,
            cs_mm,
            lambda_pm,
            b_factor,
            amp_contrast,
            pixel_size,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn envelope_bounds_the_ctf(p in params(), k in -1.0f64..1.0) {
        let v = p.eval(k).unwrap();
        let env = p.envelope(k);
        prop_assert!(v.abs() <= env + 1e-15);
        prop_assert!(env <= 1.0);
    }

    #[test]
    fn grid_is_symmetric(p in params(), half in 1usize..12) {
        let side = 2 * half + 1;
        let g = ctf_grid(&p, side).unwrap();
        for r in 0..side {
            for c in 0..side {
                let v = g.get(r, c);
                prop_assert!((v - g.get(side - 1 - r, side - 1 - c)).abs() <= 1e-12);
                prop_assert!((v - g.get(c, r)).abs() <= 1e-12);
                prop_assert!(v.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn apply_ctf_is_linear(p in params(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let side = 15;
        let g = ctf_grid(&p, side).unwrap();
        let (x, y) = (noise_image(side, seed), noise_image(side, seed + 7919));
        let combo = Image::new(
            side,
            2.82,
            x.pixels().iter().zip(y.pixels()).map(|(u, v)| a * u + b * v).collect(),
        ).unwrap();
        let lhs = apply_ctf(&combo, &g).unwrap();
        let (ax, ay) = (apply_ctf(&x, &g).unwrap(), apply_ctf(&y, &g).unwrap());
        let scale = lhs.norm().max(1e-12);
        let err: f64 = lhs
            .pixels()
            .iter()
            .zip(ax.pixels().iter().zip(ay.pixels()))
            .map(|(l, (u, v))| (l - a * u - b * v).powi(2))
            .sum::<f64>()
            .sqrt();
        prop_assert!(err <= 1e-10 * scale.max(1.0));
    }
}
