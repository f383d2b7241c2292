use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::network::Model;
use crate::tensor::{Real, Tensor};

use super::EvalError;

/// Forward-pass timing at one input size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub height: usize,
    pub width: usize,
    pub repeats: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// Multiply-accumulates of all convolutions.
    pub conv_macs: u64,
}

/// Median wall-clock of segmentation plus decision inference on a fixed
/// pseudo-random image, after `warmup` untimed passes.
pub fn bench_forward<T: Real>(
    model: &Model<T>,
    height: usize,
    width: usize,
    repeats: usize,
    warmup: usize,
) -> Result<BenchResult, EvalError> {
    let image = Tensor::from_fn(&[1, height, width], |i| {
        T::of(((i * 2_654_435_761) % 1000) as f64 / 1000.0)
    });
    for _ in 0..warmup {
        model.predict(&image)?;
    }
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let p = model.predict(&image)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(p.score);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2.0
    };
    Ok(BenchResult {
        height,
        width,
        repeats: n,
        median_ms: median,
        min_ms: times[0],
        max_ms: times[n - 1],
        conv_macs: model.arch.conv_macs(height, width),
    })
}

/// Full-size and half-size benchmarks with the wall-clock ratio full/half.
pub fn bench_resolutions<T: Real>(
    model: &Model<T>,
    height: usize,
    width: usize,
    repeats: usize,
) -> Result<(BenchResult, BenchResult, f64), EvalError> {
    let full = bench_forward(model, height, width, repeats, 1)?;
    let half = bench_forward(model, height / 2, width / 2, repeats, 1)?;
    let ratio = full.median_ms / half.median_ms;
    Ok((full, half, ratio))
}
