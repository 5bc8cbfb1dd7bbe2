use std::collections::BTreeMap;

use dkn::autodiff::{conv_out_extent, Graph};
use dkn::filter::{weighted_average, FilterSpec, KernelField};
use dkn::io::{decode_image, encode_netpbm, encode_pfm};
use dkn::kv::{parse_kv, render_kv};
use dkn::resample::{pixel_shuffle, pixel_unshuffle};
use dkn::sampling::{sample_bilinear, taps, BorderMode};
use dkn::stitch::{split_outputs, stitch_outputs, ShiftPlan};
use dkn::Tensor;
use proptest::prelude::*;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |v| Tensor::from_vec(&shape, v).unwrap())
}

fn shuffle_case() -> impl Strategy<Value = (usize, Tensor<f32>)> {
    (prop_oneof![Just(1usize), Just(2), Just(3), Just(4)], 1usize..4, 1usize..5, 1usize..5).prop_flat_map(
        |(r, c, h, w)| {
            prop::collection::vec(-1e3f32..1e3, c * r * h * r * w)
                .prop_map(move |v| (r, Tensor::from_vec(&[c, r * h, r * w], v).unwrap()))
        },
    )
}

proptest! {
    #[test]
    fn shuffle_inverts_unshuffle((r, x) in shuffle_case()) {
        let down = pixel_unshuffle(&x, r).unwrap();
        prop_assert_eq!(down.shape()[0], x.shape()[0] * r * r);
        prop_assert_eq!(pixel_shuffle(&down, r).unwrap(), x.clone());
        let y = down.clone();
        prop_assert_eq!(pixel_unshuffle(&pixel_shuffle(&y, r).unwrap(), r).unwrap(), y);
    }

    #[test]
    fn bilinear_weights_partition_unity(x in -3.0f64..12.0, y in -3.0f64..9.0) {
        let t = taps(x, y, 7, 10, BorderMode::Border);
        prop_assert!((t.weight_sum() - 1.0).abs() < 1e-12);
        let inside = (0.0..=6.0).contains(&y) && (0.0..=9.0).contains(&x);
        if inside {
            let z = taps(x, y, 7, 10, BorderMode::Zero);
            prop_assert!((z.weight_sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_reproduces_affine(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
                                  x in 0.0f64..9.0, y in 0.0f64..6.0) {
        let img = Tensor::from_fn(&[1, 7, 10], |i| a + b * (i % 10) as f64 + c * (i / 10) as f64);
        let v = sample_bilinear(&img, x, y).unwrap();
        prop_assert!((v - (a + b * x + c * y)).abs() < 1e-9);
    }

    #[test]
    fn channel_constraints_hold(x in tensor(vec![9, 3, 4], 1e-3, 5.0)) {
        let mut g = Graph::<f64>::inference();
        let v = g.constant(x);
        let ms = g.mean_subtract_channels(v).unwrap();
        let l1 = g.l1_normalize_channels(v).unwrap();
        for px in 0..12 {
            let s: f64 = (0..9).map(|c| g.value(ms).data()[c * 12 + px]).sum();
            prop_assert!(s.abs() < 1e-12);
            let s: f64 = (0..9).map(|c| g.value(l1).data()[c * 12 + px]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!((0..9).all(|c| g.value(l1).data()[c * 12 + px] > 0.0));
        }
    }

    #[test]
    fn zero_sum_residual_keeps_constants(level in -1.0f64..1.0,
                                         w in tensor(vec![9, 5, 6], -1.0, 1.0),
                                         off in tensor(vec![18, 5, 6], -6.0, 6.0)) {
        let mut g = Graph::<f64>::inference();
        let wv = g.constant(w);
        let zero_sum = g.mean_subtract_channels(wv).unwrap();
        let field = KernelField::new(3, g.value(zero_sum).clone(), off).unwrap();
        let img = Tensor::full(&[1, 5, 6], level);
        let out = weighted_average(&img, &field, &FilterSpec::residual(3)).unwrap();
        prop_assert!(out.max_abs_diff(&img).unwrap() < 1e-12);
    }

    #[test]
    fn stitch_is_a_bijection(s in 1usize..5, h in 1usize..5, w in 1usize..5, seed in 0u64..1000) {
        let plan = ShiftPlan::new(s);
        let mut slots: Vec<usize> = plan.shifts.iter().map(|&(x, y)| plan.slot(x, y)).collect();
        slots.sort_unstable();
        prop_assert_eq!(slots, (0..s * s).collect::<Vec<_>>());
        let img = Tensor::<f32>::from_fn(&[1, s * h, s * w], |i| ((i as u64 * 2654435761 + seed) % 9973) as f32);
        let parts = split_outputs(&img, &plan).unwrap();
        prop_assert_eq!(parts.len(), s * s);
        let back = stitch_outputs(&parts.into_iter().map(Some).collect::<Vec<_>>(), &plan).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn conv_extent_formula(n in 1usize..80, k in 1usize..8, s in 1usize..4, p in 0usize..3) {
        match conv_out_extent(n, k, s, p) {
            Some(o) => prop_assert_eq!(o, (n + 2 * p - k) / s + 1),
            None => prop_assert!(n + 2 * p < k),
        }
    }

    #[test]
    fn kv_round_trip(map in prop::collection::btree_map("[a-z][a-z0-9_.]{0,8}", "[ -~&&[^#=]]{0,12}", 0..6)) {
        let map: BTreeMap<String, String> = map.into_iter().map(|(k, v)| (k, v.trim().to_string())).collect();
        prop_assert_eq!(parse_kv(&render_kv(&map)).unwrap(), map);
    }

    #[test]
    fn pfm_round_trip_is_exact(x in tensor(vec![1, 3, 5], -10.0, 10.0)) {
        let x: Tensor<f32> = x.cast();
        prop_assert_eq!(decode_image(&encode_pfm(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn netpbm_round_trip_of_quantised_values(levels in prop::collection::vec(0u16..=65535, 12)) {
        let x = Tensor::from_vec(&[1, 3, 4], levels.iter().map(|&v| v as f32 / 65535.0).collect()).unwrap();
        prop_assert_eq!(decode_image(&encode_netpbm(&x, 65535).unwrap()).unwrap(), x);
    }
}
