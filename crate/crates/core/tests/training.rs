use imp_core::synth::{self, ProgramParams};
use imp_core::train::{bootstrapped_ce, cross_entropy_on, gradcheck, relative_error, DetectionShape, ImpProgram, LinearReadout, Tensor3};
use imp_core::{BBox, CanvasSpec, LabelMap, LabelSpace};
use proptest::prelude::*;
use rand::Rng;

fn random_logits(rng: &mut synth::SynthRng, c: usize, h: usize, w: usize) -> Tensor3 {
    Tensor3::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

#[test]
fn bootstrapped_gradient_matches_finite_differences() {
    let mut rng = synth::rng(8);
    let space = LabelSpace::new(2, 255).unwrap();
    let target = synth::random_label_map(&mut rng, 8, 8, space, 0.1);
    let logits = random_logits(&mut rng, 3, 8, 8);
    let out = bootstrapped_ce(&logits, &target, 0.25).unwrap();
    let valid = target.labels().iter().filter(|&&l| l != 255).count();
    assert_eq!(out.kept.len(), (0.25 * valid as f64).ceil() as usize);

    let step = 1e-3;
    let f = |x: &[f64]| {
        let t = Tensor3::from_vec(3, 8, 8, x.to_vec()).unwrap();
        Ok(cross_entropy_on(&t, &target, &out.kept)?.0)
    };
    let n = logits.data.len();
    let report = gradcheck(f, &logits.data, &out.grad.data, step, 1e-4, &vec![false; n], &[]).unwrap();
    assert!(report.passed, "max rel err {}", report.max_rel_error);
    // gradient is zero off the kept set
    for p in 0..64 {
        if !out.kept.contains(&p) {
            assert!((0..3).all(|c| out.grad.data[c * 64 + p] == 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_non_increasing_in_keep_fraction(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let space = LabelSpace::new(3, 255).unwrap();
        let target = synth::random_label_map(&mut rng, 6, 7, space, 0.1);
        let logits = random_logits(&mut rng, 4, 6, 7);
        let mut prev = f64::INFINITY;
        for keep in [0.05, 0.1, 0.25, 0.5, 0.75, 1.0] {
            let loss = bootstrapped_ce(&logits, &target, keep).unwrap().loss;
            prop_assert!(loss <= prev + 1e-12);
            prev = loss;
        }
    }

    #[test]
    fn keep_all_equals_mean_ce(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let space = LabelSpace::new(3, 255).unwrap();
        let target = synth::random_label_map(&mut rng, 5, 5, space, 0.2);
        let logits = random_logits(&mut rng, 4, 5, 5);
        let valid: Vec<usize> = (0..25).filter(|&i| target.labels()[i] != 255).collect();
        prop_assume!(!valid.is_empty());
        let plain = cross_entropy_on(&logits, &target, &valid).unwrap().0;
        let boot = bootstrapped_ce(&logits, &target, 1.0).unwrap().loss;
        prop_assert!((plain - boot).abs() <= 1e-12);
    }
}

#[test]
fn pipeline_gradcheck_on_16x16_canvas() {
    let mut rng = synth::rng(1);
    let (program, params) = synth::random_program(&mut rng, &ProgramParams::default(), 1e-3).unwrap();
    let report = program.gradcheck(&params, 1e-3, 1e-4, 1e-3).unwrap();
    assert!(report.tie_proximal.is_empty());
    assert!(report.passed, "{:?}", report.offending);
    assert!(report.max_rel_error <= 1e-4);
    // gradients actually flow to scores and masks
    let eval = program.evaluate(&params).unwrap();
    let blocks = program.blocks();
    assert!(blocks.iter().filter(|(n, _)| n.ends_with("score")).any(|(_, r)| eval.grad[r.start] != 0.0));
    assert!(blocks.iter().filter(|(n, _)| n.ends_with("mask")).any(|(_, r)| eval.grad[r.clone()].iter().any(|&g| g != 0.0)));
}

#[test]
fn exact_tie_is_flagged_not_failed() {
    // two detections of class 0 with identical contributions on overlapping cells
    let spec = CanvasSpec::new(1, 16, 16, 4).unwrap();
    let space = LabelSpace::new(1, 255).unwrap();
    let shapes = vec![
        DetectionShape { class_id: 0, bbox: BBox::new(0.0, 0.0, 12.0, 12.0), mask_dims: (1, 1) },
        DetectionShape { class_id: 0, bbox: BBox::new(4.0, 4.0, 16.0, 16.0), mask_dims: (1, 1) },
    ];
    let program = ImpProgram {
        spec,
        shapes,
        features: Tensor3::zeros(1, 4, 4),
        readout: LinearReadout { inputs: 2, outputs: 2, weights: vec![0.1, 1.5, -0.3, -1.0], bias: vec![0.0, 0.1] },
        target: LabelMap::new(4, 4, (0..16).map(|i| (i % 2) as u16).collect(), space).unwrap(),
        keep_fraction: 1.0,
    };
    let params = vec![0.6, 0.5, 0.6, 0.5];
    let report = program.gradcheck(&params, 1e-3, 1e-4, 1e-3).unwrap();
    assert_eq!(report.tie_proximal, vec![0, 1, 2, 3]);
    assert_eq!(report.checked, 0);
    assert!(report.passed);
    // the subgradient at the tie routes to detection 0 only, so FD disagrees there
    assert!(report.tie_max_rel_error > 1e-4);
}

#[test]
fn gradcheck_detects_a_wrong_gradient() {
    let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[1]);
    let x = [0.5, 2.0];
    let wrong = [1.0, 2.5];
    let r = gradcheck(f, &x, &wrong, 1e-3, 1e-4, &[false, false], &[("x".into(), 0..2)]).unwrap();
    assert!(!r.passed);
    assert_eq!(r.offending.len(), 1);
    assert_eq!(r.offending[0].coordinate, 1);
    assert!(relative_error(1.0, 1.0) == 0.0);
}
