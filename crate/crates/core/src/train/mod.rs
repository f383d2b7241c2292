//! Two-stage learning: the segmentation network on pixel losses, then the
//! decision network on image labels with the segmentation weights frozen.

mod baseline;
mod loss;
mod sampler;
mod stage;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{AnnotationKind, DataError};
use crate::network::NetworkError;

pub use baseline::{descriptors, fit_logistic_baseline, LogisticBaseline, BASELINE_MAX_ITERS, BASELINE_TOLERANCE};
pub use loss::{check_pixel_loss, decision_loss, pixel_loss, pixel_target};
pub use sampler::{BalancedSampler, Draw, EpochAccounting};
pub use stage::{prepare_samples, train_decision, train_fold, train_segmentation, FoldOutcome, LossTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

impl LossKind {
    /// Segmentation learning rate used with this loss.
    pub fn default_lr(self) -> f64 {
        match self {
            LossKind::Mse => 0.005,
            LossKind::CrossEntropy => 0.1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mse" => Ok(LossKind::Mse),
            "cross_entropy" | "ce" | "xent" => Ok(LossKind::CrossEntropy),
            other => Err(format!("unknown loss `{other}` (expected mse or cross_entropy)")),
        }
    }
}

/// Input resolution relative to the stored images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Full,
    Half,
}

impl Resolution {
    pub fn name(self) -> &'static str {
        match self {
            Resolution::Full => "full",
            Resolution::Half => "half",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Resolution::Full),
            "half" => Ok(Resolution::Half),
            other => Err(format!("unknown resolution `{other}` (expected full or half)")),
        }
    }
}

pub const DEFAULT_STEPS: usize = 6600;
pub const DEFAULT_LR_DECISION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// `None` picks [`LossKind::default_lr`].
    pub lr_segmentation: Option<f64>,
    pub lr_decision: f64,
    pub steps_segmentation: usize,
    pub steps_decision: usize,
    pub annotation: AnnotationKind,
    pub resolution: Resolution,
    /// Rotate each drawn image by 90° with probability 0.5.
    pub rotate: bool,
    pub seed: u64,
    /// Upper bound on memory used to cache frozen segmentation outputs
    /// during decision training.
    pub feature_cache_bytes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::CrossEntropy,
            lr_segmentation: None,
            lr_decision: DEFAULT_LR_DECISION,
            steps_segmentation: DEFAULT_STEPS,
            steps_decision: DEFAULT_STEPS,
            annotation: AnnotationKind::Dilate5,
            resolution: Resolution::Full,
            rotate: false,
            seed: 0,
            feature_cache_bytes: 1 << 31,
        }
    }
}

impl TrainConfig {
    pub fn lr_segmentation(&self) -> f64 {
        self.lr_segmentation.unwrap_or_else(|| self.loss.default_lr())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let lr = self.lr_segmentation();
        if !(lr >= 0.0 && lr.is_finite()) || !(self.lr_decision >= 0.0 && self.lr_decision.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rates must be finite and non-negative (segmentation {lr}, decision {})",
                self.lr_decision
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{stage} training diverged at step {step}: loss {loss}")]
    NonFinite {
        stage: &'static str,
        step: usize,
        loss: f64,
    },
    #[error("decision training requires a frozen segmentation network")]
    NotFrozen,
    #[error("no {0} samples to draw from")]
    EmptyClass(&'static str),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_picks_learning_rate() {
        let mut c = TrainConfig::default();
        assert_eq!(c.lr_segmentation(), 0.1);
        c.loss = LossKind::Mse;
        assert_eq!(c.lr_segmentation(), 0.005);
        c.lr_segmentation = Some(0.02);
        assert_eq!(c.lr_segmentation(), 0.02);
        assert_eq!(c.steps_segmentation, 6600);
    }

    #[test]
    fn parse_names() {
        assert_eq!("cross-entropy".parse::<LossKind>().unwrap(), LossKind::CrossEntropy);
        assert_eq!("MSE".parse::<LossKind>().unwrap(), LossKind::Mse);
        assert!("l1".parse::<LossKind>().is_err());
        assert_eq!("half".parse::<Resolution>().unwrap(), Resolution::Half);
    }

    #[test]
    fn negative_lr_rejected() {
        let c = TrainConfig {
            lr_decision: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
