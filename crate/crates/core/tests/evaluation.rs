mod common;

use common::{brute_force_distance, naive_confusion, naive_miou_macc, random_boundary};
use imp_core::boundary::{boundary_pixels, distance_transform, gt_distance_field, miou_within, DEFAULT_THRESHOLDS};
use imp_core::metrics::ConfusionMatrix;
use imp_core::synth;
use imp_core::LabelSpace;
use proptest::prelude::*;

fn space() -> LabelSpace {
    LabelSpace::new(4, 255).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn confusion_matches_naive_counts(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let gt = synth::random_label_map(&mut rng, 16, 16, space(), 0.1);
        let pred = synth::random_label_map(&mut rng, 16, 16, space(), 0.0);
        let mut cm = ConfusionMatrix::new(space());
        cm.accumulate(&pred, &gt).unwrap();
        let naive = naive_confusion(&[(&pred, &gt)]);
        for (g, row) in naive.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                prop_assert_eq!(cm.get(g, p), v);
            }
        }
        let (miou, macc) = naive_miou_macc(&naive);
        prop_assert_eq!(cm.miou(true), miou);
        prop_assert_eq!(cm.macc(true), macc);

        let ious = cm.iou_per_class();
        let accs = cm.acc_per_class();
        for (iou, acc) in ious.iter().zip(&accs) {
            if let (Some(i), Some(a)) = (iou, acc) {
                prop_assert!(0.0 <= *i && i <= a && *a <= 1.0);
            }
        }
    }

    #[test]
    fn accumulation_is_additive(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        // even entries are predictions (no ignore), odd entries ground truth
        let maps: Vec<_> = (0..4)
            .map(|i| synth::random_label_map(&mut rng, 9, 11, space(), if i % 2 == 0 { 0.0 } else { 0.2 }))
            .collect();
        let mut joint = ConfusionMatrix::new(space());
        joint.accumulate(&maps[0], &maps[1]).unwrap();
        joint.accumulate(&maps[2], &maps[3]).unwrap();
        let mut a = ConfusionMatrix::new(space());
        a.accumulate(&maps[0], &maps[1]).unwrap();
        let mut b = ConfusionMatrix::new(space());
        b.accumulate(&maps[2], &maps[3]).unwrap();
        b += &a;
        prop_assert_eq!(joint, b);
    }

    #[test]
    fn edt_matches_brute_force(seed in any::<u64>(), density in 0.001f64..0.2) {
        let mut rng = synth::rng(seed);
        let b = random_boundary(&mut rng, 40, 52, density);
        let fast = distance_transform(&b);
        let slow = brute_force_distance(&b);
        for (a, e) in fast.data.iter().zip(&slow) {
            prop_assert!(a == e || (a - e).abs() <= 1e-9);
        }
    }

    #[test]
    fn distance_field_is_lipschitz_and_counts_monotone(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let gt = synth::large_shape_scene(&mut rng, 96, 96, space(), 2, 20, 4);
        let pred = synth::random_label_map(&mut rng, 96, 96, space(), 0.0);
        let dist = gt_distance_field(&gt);
        let boundary = boundary_pixels(&gt);
        for y in 0..96 {
            for x in 0..96 {
                let d = dist.get(y, x);
                if boundary.data[y * 96 + x] {
                    prop_assert_eq!(d, 0.0);
                }
                if x + 1 < 96 && d.is_finite() {
                    prop_assert!((d - dist.get(y, x + 1)).abs() <= 1.0 + 1e-12);
                }
                if y + 1 < 96 && d.is_finite() {
                    prop_assert!((d - dist.get(y + 1, x)).abs() <= 1.0 + 1e-12);
                }
            }
        }
        let mut prev: Option<ConfusionMatrix> = None;
        for d in [0.0, 1.0, 2.5].into_iter().chain(DEFAULT_THRESHOLDS) {
            let mut cm = ConfusionMatrix::new(space());
            miou_within(&mut cm, &pred, &gt, &dist, d).unwrap();
            if let Some(p) = &prev {
                for (a, b) in cm.counts().iter().zip(p.counts()) {
                    prop_assert!(a >= b);
                }
            }
            prev = Some(cm);
        }
    }
}

#[test]
fn edt_64x64_instances() {
    let mut rng = synth::rng(64);
    for density in [0.0005, 0.002, 0.01, 0.05, 0.3] {
        let b = random_boundary(&mut rng, 64, 64, density);
        let fast = distance_transform(&b);
        let slow = brute_force_distance(&b);
        assert!(fast.data.iter().zip(&slow).all(|(a, e)| a == e || (a - e).abs() <= 1e-9));
    }
}
