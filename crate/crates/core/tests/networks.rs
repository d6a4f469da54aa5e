use echogan::dataio::{batch_iterator, make_synthetic_fixture, ExperimentName};
use echogan::networks::{build_discriminator, build_generator, ModelConfig};
use echogan::{ConditionSpec, Tensor};

fn small(size: usize, base: usize) -> ModelConfig {
    ModelConfig {
        image_size: size,
        generator_base_channels: base,
        discriminator_base_channels: base,
        ..ModelConfig::default()
    }
}

/// Input rows (or columns) that can influence output index `o` of a stack of
/// 4-wide convolutions with TensorFlow-style "same" padding.
fn receptive_range(o: usize, strides: &[usize]) -> (i64, i64) {
    let (mut lo, mut hi) = (o as i64, o as i64);
    // Stride 2 pads one pixel on each side, stride 1 pads one before and
    // two after; either way the leading pad is one.
    for &s in strides.iter().rev() {
        lo = lo * s as i64 - 1;
        hi = hi * s as i64 - 1 + 3;
    }
    (lo, hi)
}

#[test]
fn discriminator_scores_only_see_their_patch() {
    let cfg = small(128, 4);
    let d = build_discriminator(&cfg, 5).unwrap();
    let strides = [2, 2, 2, 2, 1];
    let n = 128 * 128;
    let cond = Tensor::from_vec([1, 1, 128, 128], (0..n).map(|i| (i % 4) as f32).collect()).unwrap();
    let image = Tensor::from_vec([1, 1, 128, 128], (0..n).map(|i| (i % 97) as f32 / 97.0).collect()).unwrap();
    let base = d.score(&cond, &image).unwrap();
    let grid = cfg.patch_grid();
    for &(py, px) in &[(0usize, 0usize), (37, 90), (64, 64), (127, 3), (100, 127)] {
        let mut poked = image.clone();
        poked.data_mut()[py * 128 + px] += 0.75;
        let scores = d.score(&cond, &poked).unwrap();
        let mut changed_inside = 0;
        let mut inside = 0;
        for i in 0..grid {
            for j in 0..grid {
                let (ylo, yhi) = receptive_range(i, &strides);
                let (xlo, xhi) = receptive_range(j, &strides);
                let covers = (ylo..=yhi).contains(&(py as i64)) && (xlo..=xhi).contains(&(px as i64));
                let same = scores.data()[i * grid + j].to_bits() == base.data()[i * grid + j].to_bits();
                if covers {
                    inside += 1;
                    changed_inside += usize::from(!same);
                } else {
                    assert!(same, "score ({i},{j}) changed although pixel ({py},{px}) is outside its patch");
                }
            }
        }
        assert!(inside > 0 && changed_inside * 2 > inside, "pixel ({py},{px}) barely reached its patches");
    }
}

#[test]
fn patch_grid_matches_receptive_tiling() {
    assert_eq!(ModelConfig::default().patch_grid(), 16);
    assert_eq!(small(128, 4).patch_grid(), 8);
    // Adjacent scores are one output stride apart in the input.
    let (a, _) = receptive_range(3, &[2, 2, 2, 2, 1]);
    let (b, _) = receptive_range(4, &[2, 2, 2, 2, 1]);
    assert_eq!(b - a, 16);
}

#[test]
fn batched_inference_matches_single_items() {
    let cfg = small(128, 4);
    let g = build_generator(&cfg, 1).unwrap();
    let recs = make_synthetic_fixture(8, 2, 128).unwrap();
    let batch = batch_iterator(&recs, &ConditionSpec::new(ExperimentName::E), 8, 0)
        .unwrap()
        .next_batch();
    let together = g.infer(&batch.conditions).unwrap();
    for i in 0..8 {
        let alone = g.infer(&batch.conditions.select(i)).unwrap();
        let bits = |s: &[f32]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(alone.data()), bits(together.item(i)), "item {i}");
    }
}

/// Parameter count from the layer list: 4x4 kernels, no conv bias except on
/// the final layer, two affine parameters per normalised channel.
fn expected_params(widths: &[usize], input: usize, output: usize) -> usize {
    let mut total = 0;
    let mut c = input;
    for &w in widths {
        total += c * w * 16 + 2 * w;
        c = w;
    }
    total + c * output * 16 + output
}

#[test]
fn parameter_counts_at_default_width() {
    let cfg = ModelConfig::default();
    let g = build_generator(&cfg, 0).unwrap();
    let d = build_discriminator(&cfg, 0).unwrap();
    let g_widths = [64, 128, 256, 512, 512, 512, 512, 512, 512, 512, 256, 128, 64, 64];
    assert_eq!(g.param_count(), expected_params(&g_widths, 1, 1));
    assert_eq!(g.param_count(), 30_747_521);
    assert_eq!(d.param_count(), expected_params(&[64, 128, 256, 512], 2, 1));
    assert_eq!(d.param_count(), 2_764_673);
}

#[test]
fn generator_output_is_a_valid_image() {
    let g = build_generator(&small(128, 4), 3).unwrap();
    let cond = Tensor::filled([2, 1, 128, 128], 3.0);
    let out = g.infer(&cond).unwrap();
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
}
