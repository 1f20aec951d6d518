mod common;

use common::rasterize;
use imp_core::io::segments_to_instances;
use imp_core::metrics::ConfusionMatrix;
use imp_core::projection::{canvas_to_labels, project_to_semantic, upsample_labels};
use imp_core::synth::{self, DetectionParams, Shape};
use imp_core::{imp_forward, BBox, CanvasSpec, Detection, InstanceMask, LabelSpace};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn soft_mask(rng: &mut synth::SynthRng, h: usize, w: usize) -> InstanceMask {
    // a blob: high in the middle, low at the corners
    let values = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            let dy = (y - h as f64 / 2.0) / (h as f64 / 2.0);
            let dx = (x - w as f64 / 2.0) / (w as f64 / 2.0);
            ((1.2 - (dx * dx + dy * dy)) * 0.9 + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0) as f32
        })
        .collect();
    InstanceMask::new(h, w, values).unwrap()
}

#[test]
fn two_rectangle_scene_matches_rasterizer() {
    let mut rng = synth::rng(5);
    let spec = CanvasSpec::new(2, 96, 128, 4).unwrap();
    let dets = vec![
        Detection { class_id: 0, score: 0.9, bbox: BBox::new(6.3, 10.2, 58.7, 80.1), mask: soft_mask(&mut rng, 28, 28), index: 0 },
        Detection { class_id: 1, score: 0.8, bbox: BBox::new(66.0, 4.5, 121.2, 70.0), mask: soft_mask(&mut rng, 28, 28), index: 1 },
    ];
    let lm = project_to_semantic(&dets, &spec, 0.5).unwrap();
    let oracle = rasterize(&dets, &spec, 0.5);
    assert_eq!(lm.labels(), &oracle[..]);
    for class in 0..2u16 {
        assert!(lm.labels().iter().filter(|&&l| l == class).count() > 500);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pipeline_matches_rasterizer_and_composition(seed in any::<u64>(), tau in 0.0f64..0.9) {
        let mut rng = synth::rng(seed);
        let (spec, dets) = synth::random_instance(&mut rng, 16, 4, 10, 6);
        let fused = project_to_semantic(&dets, &spec, tau).unwrap();
        let (canvas, _) = imp_forward(&dets, &spec).unwrap();
        let staged = upsample_labels(&canvas_to_labels(&canvas, tau).unwrap(), &spec).unwrap();
        prop_assert_eq!(&fused, &staged);
        prop_assert_eq!(fused.labels(), &rasterize(&dets, &spec, tau)[..]);

        let mut shuffled = dets.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(project_to_semantic(&shuffled, &spec, tau).unwrap(), fused);
    }

    #[test]
    fn tau_at_max_score_is_all_background(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let spec = CanvasSpec::new(3, 40, 40, 4).unwrap();
        let dets: Vec<Detection> = synth::random_detections(&mut rng, &spec, 6, &DetectionParams::default());
        let max_score = dets.iter().map(|d| d.score as f64).fold(0.0, f64::max);
        let lm = project_to_semantic(&dets, &spec, max_score.min(1.0)).unwrap();
        prop_assert!(lm.labels().iter().all(|&l| l == 3));
    }
}

#[test]
fn large_shapes_round_trip_at_scale_four() {
    let space = LabelSpace::new(3, 255).unwrap();
    let mut rng = synth::rng(11);
    for _ in 0..4 {
        let gt = synth::large_shape_scene(&mut rng, 320, 320, space, 3, 64, 12);
        let dets = segments_to_instances(&gt, (28, 28), 16);
        let spec = CanvasSpec::new(3, 320, 320, 4).unwrap();
        let pred = project_to_semantic(&dets, &spec, 0.5).unwrap();
        let mut cm = ConfusionMatrix::new(space);
        cm.accumulate(&pred, &gt).unwrap();
        for (c, iou) in cm.iou_per_class().iter().enumerate() {
            if let Some(iou) = iou {
                assert!(*iou >= 0.85, "class {c}: iou {iou}");
            }
        }
        assert!(cm.miou(true) >= 0.85);
    }
}

#[test]
fn native_resolution_round_trip_is_exact() {
    let space = LabelSpace::new(2, 255).unwrap();
    let shapes = [
        (0, Shape::Ellipse { cx: 20.0, cy: 24.0, rx: 13.0, ry: 17.5 }),
        (1, Shape::Rect { x0: 40, y0: 5, x1: 57, y1: 21 }),
        (0, Shape::Ellipse { cx: 48.5, cy: 45.0, rx: 9.0, ry: 11.0 }),
    ];
    let gt = synth::paint(64, 64, space, &shapes);
    let spec = CanvasSpec::new(2, 64, 64, 1).unwrap();
    let comps = imp_core::io::segments::connected_components(&gt);
    assert_eq!(comps.len(), 3);
    let mut dets: Vec<Detection> = Vec::new();
    for (index, comp) in comps.iter().enumerate() {
        let dims = (comp.max_row - comp.min_row + 1, comp.max_col - comp.min_col + 1);
        let one = segments_to_instances(&gt, dims, 1)
            .into_iter()
            .find(|d| d.bbox == comp.bbox())
            .unwrap();
        dets.push(Detection { index, ..one });
    }
    let pred = project_to_semantic(&dets, &spec, 0.5).unwrap();
    assert_eq!(pred, gt);
}
