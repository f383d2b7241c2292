use crate::dataio::{downscale, AnnotationKind, FoldPlan, Sample};
use crate::network::{Architecture, Model};
use crate::tensor::Real;
use crate::train::{train_fold, FoldOutcome, LossKind, Resolution, TrainConfig};

use super::metrics::{average_precision, MetricError, ScoredItem, ScoredSet};
use super::report::EvalReport;
use super::EvalError;

/// Short label of the four configuration axes, e.g. `dilate5-cross_entropy-full-rot`.
pub fn config_label(cfg: &TrainConfig) -> String {
    format!(
        "{}-{}-{}-{}",
        cfg.annotation,
        cfg.loss,
        cfg.resolution,
        if cfg.rotate { "rot" } else { "norot" }
    )
}

/// Every combination of the five pixel-precise annotations, both losses,
/// both resolutions and rotation on/off, starting from `base`.
pub fn config_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut grid = Vec::new();
    for annotation in AnnotationKind::DILATIONS {
        for loss in [LossKind::Mse, LossKind::CrossEntropy] {
            for resolution in [Resolution::Full, Resolution::Half] {
                for rotate in [false, true] {
                    grid.push(TrainConfig {
                        annotation,
                        loss,
                        resolution,
                        rotate,
                        lr_segmentation: None,
                        ..base.clone()
                    });
                }
            }
        }
    }
    grid
}

/// Supplies the model evaluated on a held-out fold.
pub trait ModelSource<T: Real> {
    /// `Ok(None)` means no model exists for this fold.
    fn model(&mut self, cfg: &TrainConfig, fold: usize, train: &[&Sample]) -> Result<Option<Model<T>>, EvalError>;
}

/// Trains both stages on demand and keeps the last outcome for inspection.
pub struct TrainOnDemand<T> {
    pub arch: Architecture,
    pub outcomes: Vec<(String, usize, FoldOutcome<T>)>,
}

impl<T> TrainOnDemand<T> {
    pub fn new(arch: Architecture) -> Self {
        Self {
            arch,
            outcomes: Vec::new(),
        }
    }
}

impl<T: Real> ModelSource<T> for TrainOnDemand<T> {
    fn model(&mut self, cfg: &TrainConfig, fold: usize, train: &[&Sample]) -> Result<Option<Model<T>>, EvalError> {
        let out = train_fold::<T>(&self.arch, train, cfg).map_err(|source| EvalError::Fold { fold, source })?;
        let model = out.model.clone();
        self.outcomes.push((config_label(cfg), fold, out));
        Ok(Some(model))
    }
}

/// Bring a test image to the resolution the configuration trains at.
pub fn prepare_test(sample: &Sample, resolution: Resolution) -> Result<Sample, EvalError> {
    Ok(match resolution {
        Resolution::Full => sample.clone(),
        Resolution::Half => downscale(sample, 2)?,
    })
}

/// Decision scores of `model` on `samples`.
pub fn score_samples<T: Real>(
    model: &Model<T>,
    samples: &[&Sample],
    resolution: Resolution,
) -> Result<Vec<ScoredItem>, EvalError> {
    samples
        .iter()
        .map(|s| {
            let s = prepare_test(s, resolution)?;
            let p = model.predict(&s.image.to_tensor())?;
            Ok(ScoredItem {
                image_id: s.image_id.clone(),
                score: p.score.to_f64_lossy(),
                defective: s.is_defective(),
            })
        })
        .collect()
}

fn fold_ap(items: &[ScoredItem]) -> Result<Option<f64>, MetricError> {
    let set = ScoredSet::new(items.to_vec())?;
    match average_precision(&set) {
        Ok(ap) => Ok(Some(ap)),
        Err(MetricError::NoPositives) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Cross-validated metrics for each configuration: every fold is scored by
/// a model trained without it, scores are pooled across folds, and the
/// per-fold APs are kept alongside.
pub fn evaluate_cv<T: Real>(
    samples: &[Sample],
    plan: &FoldPlan,
    grid: &[TrainConfig],
    source: &mut impl ModelSource<T>,
) -> Result<Vec<EvalReport>, EvalError> {
    let mut reports = Vec::with_capacity(grid.len());
    for cfg in grid {
        let label = config_label(cfg);
        let mut pooled = Vec::new();
        let mut per_fold = Vec::with_capacity(plan.fold_count);
        for fold in 0..plan.fold_count {
            let (train, test) = plan.split(samples, fold)?;
            let model = source.model(cfg, fold, &train)?.ok_or_else(|| EvalError::MissingFold {
                config: label.clone(),
                fold,
            })?;
            let items = score_samples(&model, &test, cfg.resolution)?;
            per_fold.push(fold_ap(&items)?);
            pooled.extend(items);
        }
        let set = ScoredSet::new(pooled)?;
        log::info!("{label}: pooled AP {:.4}", average_precision(&set).unwrap_or(f64::NAN));
        reports.push(EvalReport::from_scores(label, &set, per_fold)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_forty_distinct_rows() {
        let g = config_grid(&TrainConfig::default());
        assert_eq!(g.len(), 40);
        let labels: std::collections::BTreeSet<String> = g.iter().map(config_label).collect();
        assert_eq!(labels.len(), 40);
        assert!(labels.contains("dilate5-cross_entropy-full-norot"));
        assert!(g
            .iter()
            .filter(|c| c.loss == LossKind::Mse)
            .all(|c| c.lr_segmentation() == 0.005));
    }
}
