//! Training-pair synthesis: degradations and procedural scenes.

mod degrade;
mod synth;

pub use degrade::{
    add_gaussian_noise, bicubic_resize, make_training_pair, nearest_downsample_rb, Degradation, Protocol,
    SamplePair, BICUBIC_A,
};
pub use synth::{make_scene, make_synthetic_dataset, make_textured_step};
