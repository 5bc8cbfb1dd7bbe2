use dkn::autodiff::Graph;
use dkn::nets::{shape_chain, Mode, Model, Pass, StreamKind, Streams};
use dkn::stitch::{infer_shift_and_stitch, infer_single_pass};
use dkn::{Dkn, DknConfig, Fdkn, FdknConfig, OutputGrid, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_pair(h: usize, w: usize, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (
        Tensor::rand_uniform(&[3, h, w], 0.0, 1.0, &mut rng),
        Tensor::rand_uniform(&[1, h, w], 0.0, 1.0, &mut rng),
    )
}

#[test]
fn dkn_shape_chain_matches_layer_table() {
    let m = Dkn::<f32>::new(DknConfig::default(), 1).unwrap();
    let chain = shape_chain(m.layers(), (3, 51, 51)).unwrap();
    let want = [
        (32, 45, 45),
        (32, 22, 22),
        (64, 18, 18),
        (64, 9, 9),
        (128, 5, 5),
        (128, 3, 3),
        (128, 1, 1),
    ];
    assert_eq!(chain, want);

    let (g, _) = random_pair(51, 51, 3);
    let mut graph = Graph::inference();
    let mut pass = Pass::new(&mut graph, Mode::Eval);
    let trace = m.features_trace(&mut pass, StreamKind::Guidance, &g).unwrap();
    let shapes: Vec<_> = trace.iter().map(|&v| pass.graph.shape(v).to_vec()).collect();
    assert_eq!(shapes[1], vec![32, 22, 22]);
    assert_eq!(shapes[6], vec![128, 1, 1]);
}

#[test]
fn dkn_features_reject_wrong_patch() {
    let m = Dkn::<f32>::new(DknConfig::default(), 1).unwrap();
    let mut graph = Graph::inference();
    let mut pass = Pass::new(&mut graph, Mode::Eval);
    let bad = Tensor::zeros(&[3, 50, 51]);
    let err = m.features(&mut pass, StreamKind::Guidance, &bad).unwrap_err().to_string();
    assert!(err.contains("51 x 51"), "{err}");
}

#[test]
fn shape_chain_holds_for_other_widths() {
    let cfg = DknConfig {
        channels: vec![8, 8, 16, 16, 24, 24, 24],
        ..DknConfig::default()
    };
    let m = Dkn::<f32>::new(cfg, 2).unwrap();
    let spatial: Vec<_> = shape_chain(m.layers(), (1, 51, 51))
        .unwrap()
        .into_iter()
        .map(|(_, h, _)| h)
        .collect();
    assert_eq!(spatial, [45, 22, 18, 9, 5, 3, 1]);
}

#[test]
fn receptive_fields_are_computed() {
    let dkn = Dkn::<f32>::new(DknConfig::default(), 1).unwrap();
    let fdkn = Fdkn::<f32>::new(FdknConfig::default(), 1).unwrap();
    assert_eq!(dkn.receptive_field(), 51);
    assert_eq!(fdkn.receptive_field(), 13);
    let chain: Vec<_> = shape_chain(fdkn.layers(), (48, 13, 13))
        .unwrap()
        .into_iter()
        .map(|(_, h, _)| h)
        .collect();
    assert_eq!(chain, [11, 9, 7, 5, 3, 1]);
}

#[test]
fn fdkn_head_widths() {
    let cfg = FdknConfig::default();
    assert_eq!(cfg.weight_head_channels(), 144);
    assert_eq!(cfg.offset_head_channels(), 288);
    let m = Fdkn::<f32>::new(cfg, 1).unwrap();
    let p = m.params();
    let w = p.find("weight_head.guidance.weight").unwrap();
    assert_eq!(p.get(w).value.shape(), &[144, 128, 1, 1]);
    let o = p.find("offset_head.target.weight").unwrap();
    assert_eq!(p.get(o).value.shape(), &[288, 128, 1, 1]);
}

#[test]
fn fdkn_covers_every_pixel_in_one_pass() {
    let m = Fdkn::<f32>::new(FdknConfig::default(), 4).unwrap();
    let (g, t) = random_pair(64, 64, 5);
    let r = infer_single_pass(&m, &g, &t).unwrap();
    assert_eq!(r.passes, 1);
    assert_eq!(r.output.shape(), &[1, 64, 64]);
    let lead = m.lead_padding();
    let gr = dkn::resample::pixel_unshuffle(&g.pad_zero(lead, lead, lead, lead).unwrap(), 4).unwrap();
    let tr = dkn::resample::pixel_unshuffle(&t.pad_zero(lead, lead, lead, lead).unwrap(), 4).unwrap();
    let field = m.kernel_field(&gr, &tr).unwrap();
    assert_eq!((field.height(), field.width()), (64, 64));
    assert!(field.kernel_sums().iter().all(|s| s.abs() < 1e-5));
}

#[test]
fn shift_and_stitch_matches_per_pixel_oracle() {
    let m = Dkn::<f32>::new(DknConfig::default(), 7).unwrap();
    let (g, t) = random_pair(16, 16, 8);
    let stitched = infer_shift_and_stitch(&m, &g, &t).unwrap();
    assert_eq!(stitched.passes, 16);
    let naive = m.infer_per_pixel(&g, &t).unwrap();
    let diff = stitched.output.max_abs_diff(&naive).unwrap();
    assert!(diff < 1e-5, "max abs diff {diff}");
}

#[test]
fn stitch_equals_region_gather_path() {
    let m = Dkn::<f64>::new(DknConfig::default(), 9).unwrap();
    let (g, t) = random_pair(12, 12, 10);
    let (g, t) = (g.cast::<f64>(), t.cast::<f64>());
    let stitched = infer_shift_and_stitch(&m, &g, &t).unwrap().output;
    for (x, y) in [(0, 0), (3, 1), (2, 3)] {
        let mut graph = Graph::inference();
        let mut pass = Pass::new(&mut graph, Mode::Eval);
        let sample = pass.graph.constant(t.clone());
        let grid = OutputGrid {
            y0: y,
            x0: x,
            stride: 4,
            h: 3,
            w: 3,
        };
        let out = m.forward_region(&mut pass, &g, &t, sample, grid).unwrap();
        let v = pass.graph.value(out.filtered);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(v.at3(0, i, j), stitched.at3(0, y + 4 * i, x + 4 * j));
            }
        }
    }
}

#[test]
fn odd_extents_are_padded_and_cropped() {
    let m = Dkn::<f32>::new(DknConfig::default(), 11).unwrap();
    let (g, t) = random_pair(10, 13, 12);
    let r = infer_shift_and_stitch(&m, &g, &t).unwrap();
    assert_eq!(r.output.shape(), &[1, 10, 13]);
    assert_eq!(r.padded, (12, 16));
    let f = Fdkn::<f32>::new(FdknConfig::default(), 11).unwrap();
    let r = infer_single_pass(&f, &g, &t).unwrap();
    assert_eq!(r.output.shape(), &[1, 10, 13]);
}

#[test]
fn single_stream_ablations_build_and_run() {
    for streams in [Streams::GuidanceOnly, Streams::TargetOnly] {
        let mut cfg = FdknConfig::default();
        cfg.base.streams = streams;
        let m = Fdkn::<f32>::new(cfg, 3).unwrap();
        let (g, t) = random_pair(8, 8, 1);
        assert!(infer_single_pass(&m, &g, &t).unwrap().output.all_finite());
    }
}

#[test]
fn frozen_offsets_reduce_to_regular_grid_filter() {
    let mut cfg = FdknConfig::default();
    cfg.base.learn_offsets = false;
    let m = Fdkn::<f64>::new(cfg, 6).unwrap();
    assert!(m.params().find("offset_head.guidance.weight").is_none());
    let (g, t) = random_pair(8, 8, 2);
    let (g, t) = (g.cast::<f64>(), t.cast::<f64>());
    let lead = m.lead_padding();
    let gr = dkn::resample::pixel_unshuffle(&g.pad_zero(lead, lead, lead, lead).unwrap(), 4).unwrap();
    let tr = dkn::resample::pixel_unshuffle(&t.pad_zero(lead, lead, lead, lead).unwrap(), 4).unwrap();
    let field = m.kernel_field(&gr, &tr).unwrap();
    let out = infer_single_pass(&m, &g, &t).unwrap().output;
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = t.at3(0, y, x);
            for q in 0..9 {
                let sy = (y as isize + q as isize / 3 - 1).clamp(0, 7) as usize;
                let sx = (x as isize + q as isize % 3 - 1).clamp(0, 7) as usize;
                acc += field.weights.at3(q, y, x) * t.at3(0, sy, sx);
            }
            assert!((acc - out.at3(0, y, x)).abs() < 1e-12);
        }
    }
}
