use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dkn::data::{make_synthetic_dataset, make_training_pair, Degradation, Protocol, SamplePair};
use dkn::eval::{benchmark, Scaling};
use dkn::io::{read_image, write_image, ImageFormat, Manifest, ManifestEntry, Split};
use dkn::kv::render_kv;
use dkn::nets::{inject_broken_mean_subtraction, Arch, Constraint};
use dkn::selftest::{self, SelftestOptions};
use dkn::train::{self, new_optimizer, Checkpoint, TrainConfig};
use dkn::{AnyModel, JointFilter, Model, ModelConfig, Tensor};
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Result};
use crate::settings::Settings;
use crate::{EvalArgs, FilterArgs, SelftestArgs, SynthArgs, TrainArgs};

fn parse<T: std::str::FromStr<Err = dkn::Error>>(v: &str) -> Result<T> {
    v.parse().map_err(|e: dkn::Error| Failure::usage(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// `run.txt`: versions, command and the resolved configuration.
fn write_run_metadata(dir: &Path, command: &str, settings: &Settings, extra: &BTreeMap<String, String>) -> Result<()> {
    let mut kv = BTreeMap::new();
    kv.insert("command".to_string(), command.to_string());
    kv.insert("dkn_version".to_string(), dkn::VERSION.to_string());
    kv.insert("cli_version".to_string(), env!("CARGO_PKG_VERSION").to_string());
    kv.insert("checkpoint_format".to_string(), train::VERSION.to_string());
    for (k, v) in &settings.resolved {
        kv.insert(format!("config.{k}"), v.clone());
    }
    for (k, v) in extra {
        kv.insert(k.clone(), v.clone());
    }
    write_file(&dir.join("run.txt"), render_kv(&kv).as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let count = s.get("count", a.count, 40)?;
    let size = s.get("size", a.size, 96)?;
    let seed = s.get("seed", a.seed, 0)?;
    let test_count = s.get("test_count", a.test_count, count / 5)?;
    let out_dir: PathBuf = s.require("out_dir", a.out_dir.map(|p| p.display().to_string()))?.into();
    s.finish()?;
    s.echo("synth");
    if size == 0 {
        return Err(Failure::usage("--size must be positive"));
    }
    if test_count > count {
        return Err(Failure::usage(format!("--test-count {test_count} exceeds --count {count}")));
    }
    create_dir(&out_dir.join("rgb"))?;
    create_dir(&out_dir.join("depth"))?;
    let scenes = make_synthetic_dataset::<f32>(count, size, seed);
    let mut manifest = Manifest::default();
    for (i, (rgb, depth)) in scenes.iter().enumerate() {
        let rgb_rel = PathBuf::from(format!("rgb/{i:04}.ppm"));
        let depth_rel = PathBuf::from(format!("depth/{i:04}.pfm"));
        write_image(out_dir.join(&rgb_rel), rgb, ImageFormat::Ppm)?;
        write_image(out_dir.join(&depth_rel), depth, ImageFormat::Pfm)?;
        manifest.entries.push(ManifestEntry {
            rgb: rgb_rel,
            depth: depth_rel,
            split: if i < count - test_count { Split::Train } else { Split::Test },
            degradation: None,
        });
    }
    manifest.save(out_dir.join("manifest.txt"))?;
    write_run_metadata(&out_dir, "synth", &s, &BTreeMap::new())?;
    println!("wrote {count} pairs ({test_count} test) to {}", out_dir.display());
    Ok(())
}

/// Ground-truth pairs of one split, degraded with per-entry seeds.
fn load_pairs(manifest: &Manifest, split: Split, d: Degradation, seed: u64) -> Result<Vec<SamplePair<f32>>> {
    manifest
        .split(split)
        .enumerate()
        .map(|(i, e)| {
            let rgb = read_image(&e.rgb)?;
            let depth = read_image(&e.depth)?;
            let pair_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            Ok(make_training_pair(&rgb, &depth, d, pair_seed)?)
        })
        .collect()
}

fn degradation(s: &mut Settings, scale: Option<usize>, protocol: Option<String>, noise: Option<f64>) -> Result<Degradation> {
    let d = Degradation::default();
    let scale = s.get("scale", scale, d.scale)?;
    if ![4, 8, 16].contains(&scale) {
        return Err(Failure::usage(format!("--scale must be 4, 8 or 16, got {scale}")));
    }
    let protocol: Protocol = parse(&s.get("protocol", protocol, d.protocol.to_string())?)?;
    let noise_var = s.get("noise_var", noise, d.noise_var)?;
    if noise_var.is_nan() || noise_var < 0.0 {
        return Err(Failure::usage("--noise-var must be non-negative"));
    }
    Ok(Degradation {
        protocol,
        scale,
        noise_var,
    })
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let arch: Arch = parse(&s.get("arch", a.arch, "dkn".to_string())?)?;
    let d = degradation(&mut s, a.scale, a.protocol, a.noise_var)?;
    let mut config = ModelConfig::default_for(arch);
    let defaults = TrainConfig::for_arch(arch);
    {
        let base = config.base_mut();
        base.k = s.get("k", a.k, base.k)?;
        base.window = s.get("window", a.window, base.window)?;
        base.residual = s.get("residual", a.residual, base.residual)?;
        base.constraint = if base.residual {
            Constraint::MeanSubtract
        } else {
            Constraint::L1Normalize
        };
        base.learn_offsets = s.get("learn_offsets", a.learn_offsets, base.learn_offsets)?;
    }
    let tc = TrainConfig {
        iterations: s.get("iters", a.iters, defaults.iterations)?,
        lr: s.get("lr", a.lr, defaults.lr)?,
        lr_decay_every: s.optional("lr_decay_every", a.lr_decay_every)?,
        lr_decay_factor: s.get("lr_decay_factor", a.lr_decay_factor, defaults.lr_decay_factor)?,
        crop: s.get("crop", a.crop, defaults.crop)?,
        seed: s.get("seed", a.seed, defaults.seed)?,
        log_every: s.get("log_every", a.log_every, defaults.log_every)?,
        ..defaults
    };
    let data: PathBuf = s.require("data", a.data.map(|p| p.display().to_string()))?.into();
    let out: PathBuf = s.require("out", a.out.map(|p| p.display().to_string()))?.into();
    s.finish()?;
    s.echo("train");
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    tc.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let manifest = Manifest::load(&data)?;
    let pairs = load_pairs(&manifest, Split::Train, d, tc.seed)?;
    if pairs.is_empty() && tc.iterations > 0 {
        return Err(Failure::data(format!("{}: no train entries", data.display())));
    }
    let mut model = AnyModel::<f32>::new(&config, tc.seed)?;
    println!("parameters: {} trainable ({arch})", model.params().num_trainable());
    create_dir(&out)?;
    let mut log = String::new();
    let mut optimizer = new_optimizer(&model, &tc);
    let result = train::train(&mut model, &pairs, &tc, &mut optimizer, |it, loss, lr| {
        let line = format!("iter {it:>6}  loss {loss:.6}  lr {lr:.3e}");
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    });
    write_file(&out.join("loss.log"), log.as_bytes())?;
    let report = result.map_err(|e| match e {
        dkn::Error::Diverged { iteration, loss } => Failure::numerical(format!(
            "training diverged at iteration {iteration} (loss {loss}); lower --lr or check the data"
        )),
        other => other.into(),
    })?;

    let mut meta = BTreeMap::new();
    tc.push_kv(&mut meta);
    meta.insert("protocol".into(), d.protocol.to_string());
    meta.insert("scale".into(), d.scale.to_string());
    meta.insert("noise_var".into(), d.noise_var.to_string());
    meta.insert("train_pairs".into(), pairs.len().to_string());
    let ckpt = Checkpoint::from_model(&model, Some(&optimizer), meta);
    let bytes = ckpt.encode();
    let path = out.join("model.ckpt");
    write_file(&path, &bytes)?;
    let hash = sha256_hex(&bytes);
    let mut extra = BTreeMap::new();
    extra.insert("checkpoint_sha256".into(), hash.clone());
    extra.insert("parameters".into(), model.params().num_trainable().to_string());
    extra.insert("final_loss".into(), report.tail_mean(tc.log_every.max(1)).to_string());
    write_run_metadata(&out, "train", &s, &extra)?;
    println!("checkpoint {} sha256 {hash}", path.display());
    Ok(())
}

/// Mean over pixels of the 3 x 3 neighbourhood variance, per channel then averaged.
fn local_variance(t: &Tensor<f32>) -> f64 {
    let (_, c, h, w) = match t.chw() {
        Ok(d) => d,
        Err(_) => return f64::NAN,
    };
    let mut total = 0.0;
    let mut n = 0usize;
    for ch in 0..c {
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let vals: Vec<f64> = (0..9).map(|i| t.at3(ch, y + i / 3 - 1, x + i % 3 - 1) as f64).collect();
                let mean = vals.iter().sum::<f64>() / 9.0;
                total += vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

pub fn filter(a: FilterArgs) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let ckpt_path: PathBuf = s.require("ckpt", a.ckpt.map(|p| p.display().to_string()))?.into();
    let guidance_path = s.optional("guidance", a.guidance.map(|p| p.display().to_string()))?;
    let target_path: PathBuf = s.require("target", a.target.map(|p| p.display().to_string()))?.into();
    let out: PathBuf = s.require("out", a.out.map(|p| p.display().to_string()))?.into();
    let iterations = s.get("iterations", a.iterations, 1)?;
    let mode = s.optional("mode", a.mode)?;
    s.finish()?;
    s.echo("filter");
    let format = ImageFormat::from_path(&out).map_err(|e| Failure::usage(e.to_string()))?;

    let ckpt = Checkpoint::load(&ckpt_path)?;
    let residual = ckpt.config.base().residual;
    if let Some(m) = &mode {
        let want = match m.as_str() {
            "residual" => true,
            "plain" => false,
            _ => return Err(Failure::usage(format!("--mode must be residual or plain, got {m:?}"))),
        };
        if want != residual {
            return Err(Failure::usage(format!(
                "--mode {m} does not match the checkpoint ({})",
                if residual { "residual" } else { "plain" }
            )));
        }
    }
    let model: AnyModel<f32> = ckpt.to_model()?;
    let target = read_image(&target_path)?;
    let guidance = guidance_path.as_deref().map(read_image).transpose()?;
    let channels = ckpt.config.base().guidance_channels;
    let mut output = target.clone();
    for _ in 0..iterations {
        output = match &guidance {
            Some(g) => model.filter(g, &output)?,
            None => dkn::filter::iterative_filter(&output, &model, 1, channels)?,
        };
    }
    write_image(&out, &output, format)?;
    println!(
        "filtered {} pass(es): local variance {:.6e} -> {:.6e}",
        iterations,
        local_variance(&target),
        local_variance(&output)
    );
    println!("wrote {}", out.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let ckpt_path: PathBuf = s.require("ckpt", a.ckpt.map(|p| p.display().to_string()))?.into();
    let data: PathBuf = s.require("data", a.data.map(|p| p.display().to_string()))?.into();
    let d = degradation(&mut s, a.scale, a.protocol, a.noise_var)?;
    let scaling: Scaling = parse(&s.get("scaling", a.scaling, Scaling::Range255.to_string())?)?;
    let seed = s.get("seed", a.seed, 1u64 << 32)?;
    let out = s.optional("out", a.out.map(|p| p.display().to_string()))?;
    s.finish()?;
    s.echo("eval");

    let model: AnyModel<f32> = Checkpoint::load(&ckpt_path)?.to_model()?;
    let manifest = Manifest::load(&data)?;
    let pairs = load_pairs(&manifest, Split::Test, d, seed)?;
    if pairs.is_empty() {
        return Err(Failure::data(format!("{}: no test entries", data.display())));
    }
    let report = benchmark(&model, &pairs, scaling)?;
    let text = report.render_text();
    print!("{text}");
    if let Some(dir) = out {
        let dir = PathBuf::from(dir);
        create_dir(&dir)?;
        write_file(&dir.join("report.txt"), text.as_bytes())?;
        write_file(&dir.join("report.kv"), render_kv(&report.to_kv()).as_bytes())?;
        write_run_metadata(&dir, "eval", &s, &BTreeMap::new())?;
    }
    Ok(())
}

pub fn selftest(a: SelftestArgs) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let defaults = SelftestOptions::default();
    let fault = s.optional("inject_fault", a.inject_fault)?;
    let options = SelftestOptions {
        seed: s.get("seed", a.seed, defaults.seed)?,
        constraint_trials: s.get("constraint_trials", a.constraint_trials, defaults.constraint_trials)?,
        stitch_pairs: s.get("stitch_pairs", a.stitch_pairs, defaults.stitch_pairs)?,
        stitch_size: s.get("stitch_size", a.stitch_size, defaults.stitch_size)?,
        inject_broken_mean_subtraction: match fault.as_deref() {
            None => false,
            Some("broken-mean-subtraction") => true,
            Some(f) => return Err(Failure::usage(format!("unknown fault {f:?} (broken-mean-subtraction)"))),
        },
        ..defaults
    };
    s.finish()?;
    s.echo("selftest");
    let report = selftest::run(&options);
    inject_broken_mean_subtraction(false);
    let report = report?;
    print!("{}", report.render_text());
    let _ = std::io::stdout().flush();
    if report.passed() {
        return Ok(());
    }
    let names: Vec<String> = report.failures().map(|c| c.name.clone()).collect();
    Err(Failure::numerical(format!("selftest failed: {}", names.join(", "))))
}
