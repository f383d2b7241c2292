use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{downscale, rotate90_augment, DataError, Sample};
use crate::network::{Architecture, Mode, Model, SegOutput, SegmentationNet};
use crate::tensor::Real;

use super::baseline::{descriptors, fit_logistic_baseline, LogisticBaseline};
use super::loss::{decision_loss, pixel_loss, pixel_target};
use super::sampler::BalancedSampler;
use super::{Resolution, TrainConfig, TrainError};

const LOG_EVERY: usize = 500;
// independent random streams derived from the run seed
const SEG_SAMPLER: u64 = 0x5e6;
const SEG_ROTATION: u64 = 0x5e7;
const DEC_SAMPLER: u64 = 0xdec;
const DEC_ROTATION: u64 = 0xded;

fn stream(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt
}

/// Per-step training loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub losses: Vec<f64>,
}

impl LossTrace {
    /// Mean loss over steps `[start, end)`.
    pub fn window_mean(&self, start: usize, end: usize) -> f64 {
        let w = &self.losses[start.min(self.losses.len())..end.min(self.losses.len())];
        w.iter().sum::<f64>() / w.len().max(1) as f64
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "step,loss")?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(out, "{i},{l}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()
    }
}

/// Apply the configured annotation variant at stored resolution, then
/// downscale when training at half resolution.
pub fn prepare_samples(samples: &[&Sample], cfg: &TrainConfig) -> Result<Vec<Sample>, DataError> {
    samples
        .iter()
        .map(|s| {
            let a = s.with_annotation(cfg.annotation)?;
            match cfg.resolution {
                Resolution::Full => Ok(a),
                Resolution::Half => downscale(&a, 2),
            }
        })
        .collect()
}

fn split_classes<'a>(samples: &[&'a Sample]) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
    samples.iter().partition(|s| s.is_defective())
}

/// Stage one: SGD on the pixel loss with balanced alternating sampling.
/// The samples must already carry the chosen annotation variant.
pub fn train_segmentation<T: Real>(
    net: &mut SegmentationNet<T>,
    samples: &[&Sample],
    cfg: &TrainConfig,
) -> Result<LossTrace, TrainError> {
    cfg.validate()?;
    let (pos, neg) = split_classes(samples);
    let sampler = BalancedSampler::new(pos.len(), neg.len(), stream(cfg.seed, SEG_SAMPLER))?;
    let mut rot_rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, SEG_ROTATION));
    let lr = T::of(cfg.lr_segmentation());
    let mut trace = LossTrace::default();
    for draw in sampler.take(cfg.steps_segmentation) {
        let base = if draw.defective {
            pos[draw.index]
        } else {
            neg[draw.index]
        };
        let rotated;
        let sample = if cfg.rotate {
            rotated = rotate90_augment(base, 0.5, &mut rot_rng).0;
            &rotated
        } else {
            base
        };
        let image = sample.image.to_tensor::<T>();
        let target = pixel_target::<T>(&sample.mask)?;
        let (out, tr) = net.forward_traced(&image, Mode::Train)?;
        let (loss, grad) = pixel_loss(&out.seg_map, &target, cfg.loss).map_err(crate::network::NetworkError::from)?;
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(TrainError::NonFinite {
                stage: "segmentation",
                step: draw.step,
                loss,
            });
        }
        let grads = net.backward(&tr, grad)?;
        net.commit_statistics(&tr)?;
        net.apply_sgd(&grads, lr)?;
        trace.losses.push(loss);
        if (draw.step + 1) % LOG_EVERY == 0 {
            log::info!(
                "segmentation step {}: mean loss {:.5}",
                draw.step + 1,
                trace.window_mean(draw.step + 1 - LOG_EVERY, draw.step + 1)
            );
        }
    }
    Ok(trace)
}

/// Frozen segmentation outputs, kept while they fit in the budget.
struct FeatureCache<T> {
    entries: HashMap<(bool, usize, bool), SegOutput<T>>,
    bytes: usize,
    budget: usize,
}

impl<T: Real> FeatureCache<T> {
    fn get(
        &mut self,
        net: &SegmentationNet<T>,
        key: (bool, usize, bool),
        sample: &Sample,
    ) -> Result<SegOutput<T>, TrainError> {
        if let Some(out) = self.entries.get(&key) {
            return Ok(out.clone());
        }
        let out = net.forward(&sample.image.to_tensor(), Mode::Infer)?;
        let size = (out.features.len() + out.seg_map.len()) * std::mem::size_of::<T>();
        if self.bytes + size <= self.budget {
            self.bytes += size;
            self.entries.insert(key, out.clone());
        }
        Ok(out)
    }
}

/// Stage two: train only the decision network on image labels. Refuses to
/// run unless the segmentation network is frozen; segmentation runs in
/// inference mode so neither its weights nor its statistics change.
pub fn train_decision<T: Real>(
    model: &mut Model<T>,
    samples: &[&Sample],
    cfg: &TrainConfig,
) -> Result<LossTrace, TrainError> {
    cfg.validate()?;
    if !model.seg.is_frozen() {
        return Err(TrainError::NotFrozen);
    }
    let (pos, neg) = split_classes(samples);
    let sampler = BalancedSampler::new(pos.len(), neg.len(), stream(cfg.seed, DEC_SAMPLER))?;
    let mut rot_rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, DEC_ROTATION));
    let lr = T::of(cfg.lr_decision);
    let mut cache = FeatureCache {
        entries: HashMap::new(),
        bytes: 0,
        budget: cfg.feature_cache_bytes,
    };
    let Model { seg, dec, .. } = model;
    let mut trace = LossTrace::default();
    for draw in sampler.take(cfg.steps_decision) {
        let base = if draw.defective {
            pos[draw.index]
        } else {
            neg[draw.index]
        };
        let (sample, rotated) = if cfg.rotate {
            rotate90_augment(base, 0.5, &mut rot_rng)
        } else {
            (base.clone(), false)
        };
        let out = cache.get(seg, (draw.defective, draw.index, rotated), &sample)?;
        let (d_out, d_trace) = dec.forward_traced(&out.features, &out.seg_map, Mode::Train)?;
        let (loss, d_logit) = decision_loss(d_out.logit, draw.defective);
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(TrainError::NonFinite {
                stage: "decision",
                step: draw.step,
                loss,
            });
        }
        let grads = dec.backward(&d_trace, d_logit)?;
        dec.commit_statistics(&d_trace);
        dec.apply_sgd(&grads, lr)?;
        trace.losses.push(loss);
        if (draw.step + 1) % LOG_EVERY == 0 {
            log::info!(
                "decision step {}: mean loss {:.5}",
                draw.step + 1,
                trace.window_mean(draw.step + 1 - LOG_EVERY, draw.step + 1)
            );
        }
    }
    Ok(trace)
}

/// Everything produced by training on one fold.
#[derive(Clone, Debug)]
pub struct FoldOutcome<T> {
    pub model: Model<T>,
    pub segmentation_loss: LossTrace,
    pub decision_loss: LossTrace,
    pub baseline: LogisticBaseline,
}

/// Both stages plus the logistic baseline on one training set.
pub fn train_fold<T: Real>(
    arch: &Architecture,
    train: &[&Sample],
    cfg: &TrainConfig,
) -> Result<FoldOutcome<T>, TrainError> {
    let prepared = prepare_samples(train, cfg)?;
    let refs: Vec<&Sample> = prepared.iter().collect();
    let mut model = Model::<T>::new(arch, cfg.seed)?;
    let segmentation_loss = train_segmentation(&mut model.seg, &refs, cfg)?;
    model.seg.freeze();
    let decision_loss = train_decision(&mut model, &refs, cfg)?;
    let (desc, labels) = descriptors(&model.seg, &refs)?;
    let baseline = fit_logistic_baseline(&desc, &labels)?;
    Ok(FoldOutcome {
        model,
        segmentation_loss,
        decision_loss,
        baseline,
    })
}
