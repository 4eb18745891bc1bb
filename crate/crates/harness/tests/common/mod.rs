#![allow(dead_code)]

use scribble_harness::config::{Preset, TrainConfig};
use scribble_harness::synth::{generate_dataset, Dataset, SyntheticSpec};

/// Small 40×40 data so training tests finish in seconds.
pub fn tiny_spec(num_cases: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        height: 40,
        width: 40,
        num_cases,
        slices_per_case: 3,
        max_organs: 2,
        lobe_min: 3.0,
        lobe_max: 5.0,
        hull_expand_px: 3,
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn tiny_dataset(num_cases: usize, seed: u64) -> Dataset {
    generate_dataset(&tiny_spec(num_cases, seed)).unwrap()
}

pub fn tiny_config(preset: Preset) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.preset = preset;
    c.epochs = 2;
    c.batch_size = 3;
    c.lr = 0.05;
    c.crf_sigma = 0.03;
    c.atn_radius = 3;
    c.fcn.encoder_channels = vec![4, 6, 8];
    c.fcn.block_depth = 1;
    c.attention.d_q = 4;
    c.attention.d_v = 4;
    c
}
