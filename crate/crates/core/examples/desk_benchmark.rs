//! Train on synthetic scenes and report test RMSE against the bicubic baseline.
//!
//! `cargo run --release -p dkn --example desk_benchmark -- dkn 2000 64 0 [noise_var] [frozen]`

use std::time::Instant;

use dkn::data::{make_synthetic_dataset, make_training_pair, Degradation, SamplePair};
use dkn::eval::{benchmark, Scaling};
use dkn::train::{new_optimizer, train, TrainConfig};
use dkn::nets::Arch;
use dkn::{AnyModel, ModelConfig};

fn pairs(data: &[(dkn::Tensor32, dkn::Tensor32)], d: Degradation, seed: u64) -> Vec<SamplePair<f32>> {
    data.iter()
        .enumerate()
        .map(|(i, (rgb, depth))| make_training_pair(rgb, depth, d, seed + i as u64).unwrap())
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arch = args.get(1).map(String::as_str).unwrap_or("dkn");
    let iters: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let arch: Arch = arch.parse().unwrap();
    let crop: Option<usize> = args.get(3).and_then(|s| s.parse().ok());
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let noise: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let frozen = args.get(6).is_some_and(|s| s == "frozen");

    let data = make_synthetic_dataset::<f32>(40, 96, 1000 + seed);
    let d = Degradation {
        noise_var: noise,
        ..Degradation::default()
    };
    let train_set = pairs(&data[..32], d, 10_000 * (seed + 1));
    let test_set = pairs(&data[32..], d, 20_000 * (seed + 1));

    let mut cfg = ModelConfig::default_for(arch);
    cfg.base_mut().learn_offsets = !frozen;
    let mut model = AnyModel::<f32>::new(&cfg, seed).unwrap();
    let base = TrainConfig::for_arch(arch);
    let tc = TrainConfig {
        iterations: iters,
        crop: crop.unwrap_or(base.crop),
        seed,
        ..base
    };
    let mut opt = new_optimizer(&model, &tc);
    let t0 = Instant::now();
    train(&mut model, &train_set, &tc, &mut opt, |it, loss, lr| {
        eprintln!("iter {it:>5}  loss {loss:.5}  lr {lr:.2e}  {:.1}s", t0.elapsed().as_secs_f64())
    })
    .unwrap();
    let train_secs = t0.elapsed().as_secs_f64();
    let report = benchmark(&model, &test_set, Scaling::Range255).unwrap();
    print!("{}", report.render_text());
    println!("train time {train_secs:.1}s");
}
