use cryoclass::image::{split_by_group, GroundTruth, Image, ImageStack, Quaternion};
use cryoclass::mrc::{read_mrc_stack, sidecar_path, write_mrc_stack};
use cryoclass::Error;
use proptest::prelude::*;

fn raw_header(nx: i32, ny: i32, nz: i32, mode: i32) -> Vec<u8> {
    let mut h = vec![0u8; 1024];
    for (w, v) in [nx, ny, nz, mode].iter().enumerate() {
        h[w * 4..w * 4 + 4].copy_from_slice(&v.to_le_bytes());
    }
    h[208..212].copy_from_slice(b"MAP ");
    h[212..216].copy_from_slice(&[0x44, 0x44, 0, 0]);
    h
}

#[test]
fn hand_built_header_reads_as_stack() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.mrcs");
    let mut bytes = raw_header(33, 33, 100, 2);
    for k in 0..33 * 33 * 100 {
        bytes.extend_from_slice(&(k as f32 * 0.5).to_le_bytes());
    }
    std::fs::write(&path, &bytes).unwrap();
    let stack = read_mrc_stack(&path).unwrap();
    assert_eq!(stack.len(), 100);
    assert_eq!(stack.side(), 33);
    // x fastest, z = image index
    assert_eq!(stack.image(2).get(1, 3), ((2 * 33 + 1) * 33 + 3) as f64 * 0.5);
    assert!(stack.group_of().iter().all(|&g| g == 0));
}

#[test]
fn format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.mrcs");

    std::fs::write(&path, raw_header(9, 9, 1, 1)).unwrap();
    assert!(matches!(read_mrc_stack(&path), Err(Error::UnsupportedMode { mode: 1 })));

    let mut b = raw_header(9, 7, 1, 2);
    b.extend(vec![0u8; 9 * 7 * 4]);
    std::fs::write(&path, b).unwrap();
    assert!(matches!(read_mrc_stack(&path), Err(Error::NonSquare { nx: 9, ny: 7 })));

    std::fs::write(&path, vec![0u8; 100]).unwrap();
    match read_mrc_stack(&path) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 100),
        other => panic!("expected format error, got {other:?}"),
    }

    let mut b = raw_header(9, 9, 2, 2);
    b[208..212].copy_from_slice(b"XXXX");
    std::fs::write(&path, b).unwrap();
    match read_mrc_stack(&path) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 208),
        other => panic!("expected format error, got {other:?}"),
    }

    // data shorter than nx*ny*nz floats
    let mut b = raw_header(9, 9, 2, 2);
    b.extend(vec![0u8; 9 * 9 * 4]);
    std::fs::write(&path, b).unwrap();
    assert!(matches!(read_mrc_stack(&path), Err(Error::Format { .. })));
}

#[test]
fn sidecar_records_follow_image_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.mrcs");
    let n = 5;
    let images: Vec<Image> = (0..n)
        .map(|i| Image::from_fn(5, 1.5, |r, c| (i * 25 + r * 5 + c) as f64).unwrap())
        .collect();
    let truth: Vec<GroundTruth> = (0..n)
        .map(|i| GroundTruth {
            rotation: Quaternion::from_axis_angle([0.0, 1.0, 0.0], 0.3 * i as f64),
            clean: None,
        })
        .collect();
    let stack = ImageStack::new(images, vec![1, 0, 1, 0, 1])
        .unwrap()
        .with_truth(truth.clone())
        .unwrap()
        .with_defocus(vec![1.3, 1.0, 1.3, 1.0, 1.3])
        .unwrap();
    write_mrc_stack(&stack, &path).unwrap();
    let text = std::fs::read_to_string(sidecar_path(&path)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), n);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["group"], stack.group_of()[i]);
        let q: Vec<f64> = serde_json::from_value(v["quat"].clone()).unwrap();
        assert_eq!(q, truth[i].rotation.0.to_vec());
    }
    assert_eq!(read_mrc_stack(&path).unwrap(), stack);
}

#[test]
fn split_examples() {
    assert_eq!(split_by_group(&[0, 1, 0, 1]), vec![(0, vec![0, 2]), (1, vec![1, 3])]);
    assert_eq!(split_by_group(&[0, 0, 0]), vec![(0, vec![0, 1, 2])]);
    let rr: Vec<usize> = (0..10_000).map(|i| i % 20).collect();
    let parts = split_by_group(&rr);
    assert_eq!(parts.len(), 20);
    assert!(parts.iter().all(|(_, l)| l.len() == 500));
}

fn stack_strategy() -> impl Strategy<Value = ImageStack> {
    (1usize..4, 1usize..6, 1usize..4).prop_flat_map(|(half, n, g)| {
        let side = 2 * half + 1;
        (
            prop::collection::vec(prop::collection::vec(-1e6f32..1e6f32, side * side), n),
            prop::collection::vec(0..g, n),
            prop::collection::vec(prop::array::uniform4(-1.0f64..1.0), n),
            prop::bool::ANY,
        )
            .prop_map(move |(pix, groups, quats, with_truth)| {
                let images = pix
                    .into_iter()
                    .map(|p| Image::new(side, 2.0, p.into_iter().map(f64::from).collect()).unwrap())
                    .collect();
                let stack = ImageStack::new(images, groups).unwrap();
                if with_truth {
                    let truth = quats
                        .into_iter()
                        .map(|q| GroundTruth {
                            rotation: Quaternion::normalized([q[0] + 2.0, q[1], q[2], q[3]]).unwrap(),
                            clean: None,
                        })
                        .collect();
                    stack.with_truth(truth).unwrap()
                } else {
                    stack
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mrc_roundtrip_is_bit_exact(stack in stack_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.mrcs");
        write_mrc_stack(&stack, &path).unwrap();
        let back = read_mrc_stack(&path).unwrap();
        prop_assert_eq!(back.len(), stack.len());
        for (a, b) in back.images().iter().zip(stack.images()) {
            let same = a.pixels().iter().zip(b.pixels()).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert!(same);
        }
        prop_assert_eq!(back.group_of(), stack.group_of());
        prop_assert_eq!(back.truth(), stack.truth());
    }

    #[test]
    fn split_is_a_stable_partition(groups in prop::collection::vec(0usize..7, 1..200)) {
        let parts = split_by_group(&groups);
        let mut seen = vec![false; groups.len()];
        let mut last_g = None;
        for (g, list) in &parts {
            prop_assert!(last_g.is_none_or(|l| l < *g));
            last_g = Some(*g);
            prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
            for &i in list {
                prop_assert_eq!(groups[i], *g);
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }
}
