//! Scratch: single-step timing at the published presets.

use std::time::Instant;

use absynth::rng::SeedTree;
use trace::model::{Mode, Model, ModelConfig, TokenBatch};

fn batch(vocab: u32, b: usize, seed: u64) -> TokenBatch {
    let mut s = SeedTree::new(seed).stream();
    let seqs: Vec<Vec<u32>> = (0..b)
        .map(|_| {
            let mut row: Vec<u32> = (0..15).map(|_| 2 + s.next_below(vocab as usize - 2) as u32).collect();
            row.resize(16, 0);
            row
        })
        .collect();
    TokenBatch::from_sequences(&seqs, 16, 1)
}

fn main() {
    let v = 9002;
    for preset in ["small", "medium", "large"] {
        let cfg = ModelConfig::by_name(preset, v).unwrap();
        let b = batch(v as u32, 128, 1);
        // f32
        let m32: Model<f32> = Model::init(cfg.clone(), 3).unwrap();
        let t0 = Instant::now();
        let n = 5;
        for _ in 0..n {
            let _ = m32.loss_and_grad(&b, Mode::Eval).unwrap();
        }
        let f32_ms = t0.elapsed().as_millis() as f64 / n as f64;
        // f64
        let m64: Model<f64> = Model::init(cfg.clone(), 3).unwrap();
        let t0 = Instant::now();
        for _ in 0..n {
            let _ = m64.loss_and_grad(&b, Mode::Eval).unwrap();
        }
        let f64_ms = t0.elapsed().as_millis() as f64 / n as f64;
        println!("{preset}: f32 {f32_ms:.0} ms/step   f64 {f64_ms:.0} ms/step");
    }
}
