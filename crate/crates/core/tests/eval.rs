use cryoclass::classify::{Neighbor, NeighborTable};
use cryoclass::eval::{
    angular_distance, clean_pair_correlation, evaluate, evaluate_stack, histogram, ks_uniform_directions,
    CleanReference,
};
use cryoclass::image::{Image, ImageStack, Quaternion};
use cryoclass::synth::{project_phantom, random_rotations, Phantom};
use cryoclass::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normalized correlation on the inscribed disk after removing the disk mean.
fn disk_corr(a: &Image, b: &Image) -> f64 {
    let c = a.center() as f64;
    let side = a.side();
    let idx: Vec<usize> = (0..side * side)
        .filter(|&k| {
            let (y, x) = ((k / side) as f64 - c, (k % side) as f64 - c);
            x * x + y * y <= c * c
        })
        .collect();
    let centered = |im: &Image| {
        let m = idx.iter().map(|&k| im.pixels()[k]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&k| im.pixels()[k] - m).collect::<Vec<f64>>()
    };
    let (u, v) = (centered(a), centered(b));
    let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Exhaustive 1° search with exact in-plane rotations: the phantom is spun
/// about the projection axis and re-projected, so no interpolation enters.
fn brute_force_corr(ph: &Phantom, a: &Image, qb: &Quaternion, side: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for k in 0..360 {
        let spin = Quaternion::from_axis_angle([0.0, 0.0, 1.0], (k as f64).to_radians());
        let b = project_phantom(ph, &spin.mul(qb), side, 1.0).unwrap();
        best = best.max(disk_corr(a, &b)).max(disk_corr(a, &b.flipped_rows()));
    }
    best
}

#[test]
fn clean_correlation_matches_pixel_rotation_search() {
    // blobs kept away from the disk edge, where the Dirichlet basis loses content
    let ph = Phantom::random(12, 0.45, (0.08, 0.14), 1).unwrap();
    let side = 65;
    let top = project_phantom(&ph, &Quaternion::IDENTITY, side, 1.0).unwrap();
    let tilted = Quaternion::from_axis_angle([1.0, 0.0, 0.0], std::f64::consts::FRAC_PI_2);
    let side_view = project_phantom(&ph, &tilted, side, 1.0).unwrap();
    let spun = project_phantom(&ph, &Quaternion::from_axis_angle([0.0, 0.0, 1.0], 0.7), side, 1.0).unwrap();
    let clean = CleanReference::new(&[&top, &side_view, &spun], 360).unwrap();
    let got = clean.correlation(0, 1);
    let want = brute_force_corr(&ph, &top, &tilted, side);
    assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    assert!((clean.correlation(0, 0) - 1.0).abs() < 1e-12);
    assert!(clean.correlation(0, 2) > 0.999);

    // the one-pair helper agrees on a small box
    let a = project_phantom(&ph, &Quaternion::IDENTITY, 33, 1.0).unwrap();
    let b = project_phantom(&ph, &tilted, 33, 1.0).unwrap();
    let small = CleanReference::new(&[&a, &b], 360).unwrap();
    assert_eq!(clean_pair_correlation(&a, &b, 360).unwrap(), small.correlation(0, 1));
}

#[test]
fn angular_distance_examples() {
    let q = Quaternion::normalized([0.3, -0.5, 0.7, 0.1]).unwrap();
    assert!(angular_distance(&q, &q).abs() < 1e-6);
    let spin = Quaternion::from_axis_angle([0.0, 0.0, 1.0], 1.3);
    assert!(angular_distance(&q, &spin.mul(&q)).abs() < 1e-6);
    // tilt about an in-plane axis of the current view
    let tilt = Quaternion::from_axis_angle([0.0, 1.0, 0.0], std::f64::consts::FRAC_PI_2);
    assert!((angular_distance(&q, &tilt.mul(&q)) - 90.0).abs() < 1e-9);
    let d = angular_distance(&Quaternion::IDENTITY, &Quaternion::from_axis_angle([1.0, 0.0, 0.0], 0.4));
    assert!((d - 0.4f64.to_degrees()).abs() < 1e-9);
}

fn row(js: &[usize]) -> Vec<Neighbor> {
    js.iter()
        .map(|&j| Neighbor { j, theta_deg: 0.0, reflected: false, score: 0.0 })
        .collect()
}

#[test]
fn planted_duplicates_fill_the_ceiling() {
    let ph = Phantom::random(12, 0.6, (0.08, 0.14), 2).unwrap();
    let m = 10;
    let rots = random_rotations(m, 4);
    let mut images: Vec<Image> = rots.iter().map(|q| project_phantom(&ph, q, 33, 1.0).unwrap()).collect();
    // duplicates spun in-plane by 90°
    let mut all_rots = rots.clone();
    for (k, q) in rots.iter().enumerate() {
        images.push(images[k].rotated(std::f64::consts::FRAC_PI_2));
        all_rots.push(Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).mul(q));
    }
    let n = 2 * m;
    let rows: Vec<Vec<Neighbor>> = (0..n).map(|i| row(&[(i + m) % n])).collect();
    let table = NeighborTable::new(rows, 1, 1).unwrap();
    let refs: Vec<&Image> = images.iter().collect();
    let clean = CleanReference::new(&refs, 360).unwrap();
    let report = evaluate(&table, &all_rots, &clean, 0.9).unwrap();
    assert_eq!(report.true_neighbors, n);
    assert!(report.angular_distances.iter().all(|d| d.abs() < 1e-5));

    // any table passes a threshold of -1
    let rows: Vec<Vec<Neighbor>> = (0..n).map(|i| row(&[(i + 1) % n, (i + 3) % n])).collect();
    let table = NeighborTable::new(rows, 2, 2).unwrap();
    let report = evaluate(&table, &all_rots, &clean, -1.0).unwrap();
    assert_eq!(report.true_neighbors, 2 * n);
    assert_eq!(report.pairs, 2 * n);
}

#[test]
fn random_table_follows_uniform_direction_law() {
    let n = 1000;
    let k = 10;
    let rots = random_rotations(n, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<Vec<Neighbor>> = (0..n)
        .map(|i| {
            let mut js = Vec::new();
            while js.len() < k {
                let j = rng.random_range(0..n);
                if j != i && !js.contains(&j) {
                    js.push(j);
                }
            }
            row(&js)
        })
        .collect();
    let table = NeighborTable::new(rows, k, k).unwrap();
    let images: Vec<Image> = (0..n)
        .map(|_| Image::from_fn(7, 1.0, |_, _| rng.random_range(-1.0..1.0)).unwrap())
        .collect();
    let refs: Vec<&Image> = images.iter().collect();
    let clean = CleanReference::new(&refs, 36).unwrap();
    let report = evaluate(&table, &rots, &clean, 0.9).unwrap();
    assert_eq!(report.pairs, n * k);
    let ks = ks_uniform_directions(&report.angular_distances);
    assert!(ks < 0.05, "{ks}");
    assert!((report.histogram.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(report.angular_distances.iter().all(|d| (0.0..=180.0).contains(d)));
}

#[test]
fn missing_truth_is_reported() {
    let stack = ImageStack::new(vec![Image::zeros(5, 1.0).unwrap(); 3], vec![0; 3]).unwrap();
    let table = NeighborTable::new(vec![row(&[1]), row(&[2]), row(&[0])], 1, 1).unwrap();
    assert!(matches!(evaluate_stack(&table, &stack, 0.9, 360), Err(Error::MissingTruth(_))));
}

#[test]
fn report_csv_lists_metrics_and_density() {
    let rots = random_rotations(4, 1);
    let images: Vec<Image> = (0..4)
        .map(|s| Image::from_fn(7, 1.0, |r, c| ((r * 7 + c + s) % 5) as f64).unwrap())
        .collect();
    let refs: Vec<&Image> = images.iter().collect();
    let clean = CleanReference::new(&refs, 36).unwrap();
    let table = NeighborTable::new((0..4).map(|i| row(&[(i + 1) % 4])).collect(), 1, 1).unwrap();
    let report = evaluate(&table, &rots, &clean, 0.9).unwrap();
    let csv = report.to_csv();
    assert!(csv.contains("\nmetric,value\n"));
    assert!(csv.contains("true_neighbors,"));
    assert!(csv.contains("bin_deg,density\n"));
    let density_lines = csv.lines().skip_while(|l| *l != "bin_deg,density").count() - 1;
    assert_eq!(density_lines, 180);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn distance_is_symmetric_and_bounded(a in prop::array::uniform4(-1.0f64..1.0), b in prop::array::uniform4(-1.0f64..1.0)) {
        let qa = Quaternion::normalized([a[0] + 1.5, a[1], a[2], a[3]]).unwrap();
        let qb = Quaternion::normalized([b[0], b[1] + 1.5, b[2], b[3]]).unwrap();
        let d = angular_distance(&qa, &qb);
        prop_assert_eq!(d, angular_distance(&qb, &qa));
        prop_assert!((0.0..=180.0).contains(&d));
    }

    #[test]
    fn histogram_is_a_density(d in prop::collection::vec(0.0f64..=180.0, 1..500)) {
        let h = histogram(&d);
        prop_assert_eq!(h.len(), 180);
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
