//! Self-guided texture removal with a model trained only to denoise depth.

use dkn::data::{make_synthetic_dataset, make_textured_step, make_training_pair, Degradation};
use dkn::filter::iterative_filter;
use dkn::nets::Arch;
use dkn::train::{new_optimizer, train, TrainConfig};
use dkn::{AnyModel, DknConfig, FdknConfig, ModelConfig, Tensor};

const SIZE: usize = 64;

fn denoiser() -> AnyModel<f32> {
    let d = Degradation {
        scale: 1,
        noise_var: 0.005,
        ..Degradation::default()
    };
    let pairs: Vec<_> = make_synthetic_dataset::<f32>(24, 96, 77)
        .iter()
        .enumerate()
        .map(|(i, (rgb, depth))| make_training_pair(rgb, depth, d, 500 + i as u64).unwrap())
        .collect();
    let mut model = AnyModel::<f32>::new(&ModelConfig::Dkn(DknConfig::plain()), 0).unwrap();
    let tc = TrainConfig {
        iterations: 2000,
        seed: 0,
        ..TrainConfig::for_arch(Arch::Dkn)
    };
    let mut opt = new_optimizer(&model, &tc);
    train(&mut model, &pairs, &tc, &mut opt, |_, _, _| {}).unwrap();
    model
}

/// Variance of the left flat region and the mean step across the edge.
fn flat_variance_and_edge(t: &Tensor<f32>) -> (f64, f64) {
    let rows = 4..SIZE - 4;
    let flat: Vec<f64> = rows
        .clone()
        .flat_map(|y| (4..SIZE / 2 - 6).map(move |x| (y, x)))
        .map(|(y, x)| t.at3(0, y, x) as f64)
        .collect();
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    let var = flat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / flat.len() as f64;
    let edge = rows
        .clone()
        .map(|y| (t.at3(0, y, SIZE / 2 + 1) - t.at3(0, y, SIZE / 2 - 2)) as f64)
        .sum::<f64>()
        / rows.len() as f64;
    (var, edge)
}

#[test]
fn four_passes_remove_texture_and_keep_the_edge() {
    let model = denoiser();
    for (cell, low, high) in [(1, 0.3, 0.7), (2, 0.3, 0.7), (2, 0.7, 0.3), (4, 0.3, 0.7)] {
        let image = make_textured_step::<f32>(SIZE, cell, 0.05, low, high);
        let out = iterative_filter(&image, &model, 4, 3).unwrap();
        let (v0, _) = flat_variance_and_edge(&image);
        let (v1, e1) = flat_variance_and_edge(&out);
        let ratio = v1 / v0;
        let retained = e1 / (high - low);
        println!("cell {cell} step {low}->{high}: variance ratio {ratio:.4}, edge retained {retained:.3}");
        assert!(ratio < 0.5, "cell {cell}: flat variance ratio {ratio}");
        assert!(retained > 0.8, "cell {cell}: edge retained {retained}");
    }
}

#[test]
fn zero_and_one_iterations() {
    let model = AnyModel::<f32>::new(&ModelConfig::Fdkn(FdknConfig::plain()), 3).unwrap();
    let image = make_textured_step::<f32>(32, 2, 0.1, 0.2, 0.8);
    assert_eq!(iterative_filter(&image, &model, 0, 3).unwrap(), image);
    let once = iterative_filter(&image, &model, 1, 3).unwrap();
    let direct = dkn::filter::JointFilter::filter(&model, &image.replicate_channels(3).unwrap(), &image).unwrap();
    assert_eq!(once, direct);
}
