//! Loss weighting per training stage.

use atkd_core::losses::KlDirection;
use atkd_core::smoothing::SmoothingConfig;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// Largest weight a sub-task may carry.
pub const SUB_TASK_MAX: f64 = 0.1;

/// How the output layer is distilled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputDistill {
    /// No KL term; the output loss is the transducer loss alone.
    None,
    Temperature { tau: f64 },
    Adaptive(SmoothingConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Hidden-layer loss weight.
    pub alpha: f64,
    /// Output loss weight (transducer loss plus KL).
    pub beta: f64,
    pub steps: usize,
    /// Only the joint network is updated.
    #[serde(default)]
    pub freeze_enc_dec: bool,
}

impl Stage {
    fn check(&self, i: usize) -> Result<()> {
        let (a, b) = (self.alpha, self.beta);
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(EngineError::Config(format!("stage {i}: weights must be finite and >= 0")));
        }
        let hierarchical = a == 1.0 && b == 1.0;
        let main_sub = (a == 1.0 && b <= SUB_TASK_MAX) || (b == 1.0 && a <= SUB_TASK_MAX);
        if !(hierarchical || main_sub) {
            return Err(EngineError::Config(format!(
                "stage {i}: (alpha, beta) = ({a}, {b}); one weight must be 1 and the other <= {SUB_TASK_MAX}, or both 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
    pub output: OutputDistill,
    #[serde(default)]
    pub kl_direction: KlDirection,
}

/// Fraction of steps given to stage 1 by default.
pub const DEFAULT_SPLIT: f64 = 0.5;

impl StageSchedule {
    pub fn single(alpha: f64, beta: f64, steps: usize, output: OutputDistill) -> Self {
        Self {
            stages: vec![Stage {
                alpha,
                beta,
                steps,
                freeze_enc_dec: false,
            }],
            output,
            kl_direction: KlDirection::default(),
        }
    }

    /// Hidden main-task (α = 1, β = 0.01) then output main-task
    /// (α = 0.01, β = 1).
    pub fn two_stage(total_steps: usize, split: f64, output: OutputDistill, freeze_in_stage2: bool) -> Self {
        let s1 = ((total_steps as f64) * split).round() as usize;
        Self {
            stages: vec![
                Stage {
                    alpha: 1.0,
                    beta: 0.01,
                    steps: s1,
                    freeze_enc_dec: false,
                },
                Stage {
                    alpha: 0.01,
                    beta: 1.0,
                    steps: total_steps - s1,
                    freeze_enc_dec: freeze_in_stage2,
                },
            ],
            output,
            kl_direction: KlDirection::default(),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }

    /// Stage index active at a 0-based step.
    pub fn stage_at(&self, step: usize) -> Option<usize> {
        let mut end = 0;
        for (i, s) in self.stages.iter().enumerate() {
            end += s.steps;
            if step < end {
                return Some(i);
            }
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(EngineError::Config("schedule has no stages".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.check(i + 1)?;
        }
        if let OutputDistill::Temperature { tau } = self.output {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(EngineError::Config(format!("temperature {tau} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn uses_teacher(&self) -> bool {
        self.output != OutputDistill::None || self.stages.iter().any(|s| s.alpha > 0.0)
    }
}

/// The schedule families compared in the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NoKd,
    TraditionalKd,
    HierarchicalKd,
    TwoStage,
    TwoStageAdaptive,
    TwoStageFixed,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::NoKd,
        Variant::TraditionalKd,
        Variant::HierarchicalKd,
        Variant::TwoStage,
        Variant::TwoStageAdaptive,
        Variant::TwoStageFixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoKd => "no-kd",
            Variant::TraditionalKd => "traditional-kd",
            Variant::HierarchicalKd => "hierarchical-kd",
            Variant::TwoStage => "two-stage",
            Variant::TwoStageAdaptive => "two-stage-adaptive",
            Variant::TwoStageFixed => "two-stage-fixed",
        }
    }

    pub fn schedule(self, steps: usize, split: f64, smoothing: SmoothingConfig) -> StageSchedule {
        let tau1 = OutputDistill::Temperature { tau: 1.0 };
        match self {
            Variant::NoKd => StageSchedule::single(0.0, 1.0, steps, OutputDistill::None),
            Variant::TraditionalKd => StageSchedule::single(0.0, 1.0, steps, tau1),
            Variant::HierarchicalKd => StageSchedule::single(1.0, 1.0, steps, tau1),
            Variant::TwoStage => StageSchedule::two_stage(steps, split, tau1, false),
            Variant::TwoStageAdaptive => {
                StageSchedule::two_stage(steps, split, OutputDistill::Adaptive(smoothing), false)
            }
            Variant::TwoStageFixed => StageSchedule::two_stage(steps, split, tau1, true),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
