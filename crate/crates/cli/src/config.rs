use std::path::{Path, PathBuf};

use segdec::dataio::{AnnotationKind, Layout};
use segdec::network::Architecture;
use segdec::train::{LossKind, Resolution, TrainConfig, DEFAULT_LR_DECISION, DEFAULT_STEPS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SNAPSHOT_FILE: &str = "run_config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ArchChoice {
    Full,
    Compact,
}

impl ArchChoice {
    pub fn architecture(self) -> Architecture {
        match self {
            ArchChoice::Full => Architecture::full(),
            ArchChoice::Compact => Architecture::compact(),
        }
    }
}

/// Everything needed to reproduce a training run. Written to the run
/// directory as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub mask_suffix: String,
    pub annotation: AnnotationKind,
    pub resolution: Resolution,
    pub loss: LossKind,
    pub rotate: bool,
    pub seed: u64,
    pub steps: usize,
    pub steps_decision: usize,
    pub lr_segmentation: Option<f64>,
    pub lr_decision: f64,
    pub out: PathBuf,
    pub subsample_positives: Option<usize>,
    pub arch: ArchChoice,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            mask_suffix: Layout::default().mask_suffix,
            annotation: AnnotationKind::Dilate5,
            resolution: Resolution::Full,
            loss: LossKind::CrossEntropy,
            rotate: false,
            seed: 0,
            steps: DEFAULT_STEPS,
            steps_decision: DEFAULT_STEPS,
            lr_segmentation: None,
            lr_decision: DEFAULT_LR_DECISION,
            out: PathBuf::from("runs/default"),
            subsample_positives: None,
            arch: ArchChoice::Full,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            lr_segmentation: self.lr_segmentation,
            lr_decision: self.lr_decision,
            steps_segmentation: self.steps,
            steps_decision: self.steps_decision,
            annotation: self.annotation,
            resolution: self.resolution,
            rotate: self.rotate,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            mask_suffix: self.mask_suffix.clone(),
            ..Layout::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        self.train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.subsample_positives = Some(5);
        c.lr_segmentation = Some(0.01);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: RunConfig = toml::from_str("loss = \"mse\"\nsteps = 10\n").unwrap();
        assert_eq!(c.loss, LossKind::Mse);
        assert_eq!(c.train_config().lr_segmentation(), 0.005);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
