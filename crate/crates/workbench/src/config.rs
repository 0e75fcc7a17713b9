use std::path::{Path, PathBuf};

use atkd_core::smoothing::SmoothingConfig;
use atkd_engine::{OptimSettings, StageSchedule, SynthTaskConfig, Variant};
use atkd_model::{ContextPolicy, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSettings {
    pub optim: OptimSettings,
    pub steps: usize,
}

impl Default for TeacherSettings {
    fn default() -> Self {
        Self {
            optim: OptimSettings {
                learning_rate: 0.1,
                batch_size: 32,
                ..Default::default()
            },
            steps: 6000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub teacher: Option<PathBuf>,
    pub student: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Everything one teacher/student run needs. The teacher shares `model`
/// with the context switched to full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: StageSchedule,
    pub task: SynthTaskConfig,
    pub teacher: TeacherSettings,
    /// Student optimizer.
    pub optim: OptimSettings,
    pub outputs: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let task = SynthTaskConfig::default();
        Self {
            model: ModelConfig::new(task.vocab, task.feature_dim, 16, ContextPolicy::STREAMING, 0),
            schedule: Variant::TwoStageAdaptive.schedule(2000, 0.5, SmoothingConfig::default()),
            task,
            teacher: TeacherSettings::default(),
            optim: OptimSettings {
                learning_rate: 0.1,
                batch_size: 32,
                ..Default::default()
            },
            outputs: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn teacher_model(&self) -> ModelConfig {
        self.model.with_context(ContextPolicy::Full)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("bad run config: {e}")))
    }
}

/// Reads a JSON config, or the default when no path is given.
pub fn load_json<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}
