use serde::{Deserialize, Serialize};

use crate::dataio::Sample;
use crate::network::{Mode, SegmentationNet};
use crate::tensor::{global_pool, Real};

use super::TrainError;

pub const BASELINE_TOLERANCE: f64 = 1e-6;
pub const BASELINE_MAX_ITERS: usize = 10_000;
const BASELINE_LR: f64 = 1.0;

/// Logistic regression on the (global max, global average) of the
/// segmentation map. Inputs are standardized with the training moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticBaseline {
    pub weights: [f64; 2],
    pub bias: f64,
    pub mean: [f64; 2],
    pub std: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticBaseline {
    pub fn score(&self, d: [f64; 2]) -> f64 {
        let z = (0..2)
            .map(|i| self.weights[i] * (d[i] - self.mean[i]) / self.std[i])
            .sum::<f64>()
            + self.bias;
        1.0 / (1.0 + (-z).exp())
    }
}

/// `(max, avg)` of the segmentation map of each sample, in inference mode.
pub fn descriptors<T: Real>(
    net: &SegmentationNet<T>,
    samples: &[&Sample],
) -> Result<(Vec<[f64; 2]>, Vec<bool>), TrainError> {
    let mut d = Vec::with_capacity(samples.len());
    for s in samples {
        let out = net.forward(&s.image.to_tensor(), Mode::Infer)?;
        let p = global_pool(&out.seg_map).map_err(crate::network::NetworkError::from)?;
        d.push([p.max[0].to_f64_lossy(), p.avg[0].to_f64_lossy()]);
    }
    Ok((d, samples.iter().map(|s| s.is_defective()).collect()))
}

/// Full-batch gradient descent on the mean log-loss until the gradient
/// norm drops below [`BASELINE_TOLERANCE`] or [`BASELINE_MAX_ITERS`] pass.
pub fn fit_logistic_baseline(x: &[[f64; 2]], y: &[bool]) -> Result<LogisticBaseline, TrainError> {
    if x.len() != y.len() {
        return Err(TrainError::Config(format!(
            "{} descriptors but {} labels",
            x.len(),
            y.len()
        )));
    }
    if !y.iter().any(|v| *v) {
        return Err(TrainError::EmptyClass("defective"));
    }
    if y.iter().all(|v| *v) {
        return Err(TrainError::EmptyClass("non-defective"));
    }
    let n = x.len() as f64;
    let mut mean = [0.0; 2];
    let mut std = [0.0; 2];
    for i in 0..2 {
        mean[i] = x.iter().map(|d| d[i]).sum::<f64>() / n;
        let var = x.iter().map(|d| (d[i] - mean[i]).powi(2)).sum::<f64>() / n;
        std[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z: Vec<[f64; 2]> = x
        .iter()
        .map(|d| [(d[0] - mean[0]) / std[0], (d[1] - mean[1]) / std[1]])
        .collect();
    let (mut w, mut b) = ([0.0f64; 2], 0.0f64);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < BASELINE_MAX_ITERS {
        let mut g = [0.0; 3];
        for (zi, &yi) in z.iter().zip(y) {
            let p = 1.0 / (1.0 + (-(w[0] * zi[0] + w[1] * zi[1] + b)).exp());
            let r = p - if yi { 1.0 } else { 0.0 };
            g[0] += r * zi[0] / n;
            g[1] += r * zi[1] / n;
            g[2] += r / n;
        }
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < BASELINE_TOLERANCE {
            converged = true;
            break;
        }
        w[0] -= BASELINE_LR * g[0];
        w[1] -= BASELINE_LR * g[1];
        b -= BASELINE_LR * g[2];
        iterations += 1;
    }
    Ok(LogisticBaseline {
        weights: w,
        bias: b,
        mean,
        std,
        iterations,
        converged,
    })
}
