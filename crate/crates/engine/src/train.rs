//! Gradient-descent training for the teacher and for students.

use atkd_core::losses::{
    hidden_mse, log_softmax_backward, output_kl, rnnt_loss, smoothed_output_kl_against, total_kd_loss,
};
use atkd_core::smoothing::{adaptive_smooth, SmoothingResult};
use atkd_core::{HiddenStack, ProbLattice, Tensor};
use atkd_model::{backward, forward, ContextPolicy, ModelConfig, Params, ToyTransducer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::eval::{evaluate, EvalMetrics};
use crate::schedule::{OutputDistill, Stage, StageSchedule};
use crate::synth::Utterance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Seeds minibatch sampling.
    pub seed: u64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 8,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl OptimSettings {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EngineError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || !(self.clip_norm > 0.0) {
            return Err(EngineError::Config("batch_size and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0-based global step.
    pub step: usize,
    /// 1-based stage.
    pub stage: usize,
    pub alpha: f64,
    pub beta: f64,
    pub l_rnnt: f64,
    pub l_hidden: f64,
    pub l_kl: f64,
    pub l_total: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

pub const RECORD_COLUMNS: &str = "step,stage,alpha,beta,l_rnnt,l_hidden,l_kl,l_total,grad_norm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub ter_clean: f64,
    pub ter_noisy: f64,
    pub mean_first_emission_frame: Option<f64>,
}

impl FinalMetrics {
    pub fn from_splits(clean: &EvalMetrics, noisy: &EvalMetrics) -> Self {
        let firsts: Vec<f64> = [clean, noisy]
            .iter()
            .filter_map(|m| m.mean_first_emission_frame.map(|f| (f, m.utterances as f64)))
            .flat_map(|(f, n)| [f * n, n])
            .collect();
        let mean_first_emission_frame = if firsts.is_empty() {
            None
        } else {
            let (num, den) = firsts.chunks(2).fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
            Some(num / den)
        };
        Self {
            ter_clean: clean.ter,
            ter_noisy: noisy.ter,
            mean_first_emission_frame,
        }
    }
}

/// Everything that shaped a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub model: ModelConfig,
    pub optim: OptimSettings,
    pub schedule: Option<StageSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    pub metrics: Option<FinalMetrics>,
    pub seed: u64,
    pub config: RunSnapshot,
}

impl TrainReport {
    /// Step records as CSV with header [`RECORD_COLUMNS`].
    pub fn records_csv(&self) -> String {
        let mut s = String::from(RECORD_COLUMNS);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                r.step, r.stage, r.alpha, r.beta, r.l_rnnt, r.l_hidden, r.l_kl, r.l_total, r.grad_norm
            ));
        }
        s
    }

    /// Evaluates on held-out clean and noisy splits and stores the result.
    pub fn attach_metrics(&mut self, model: &ToyTransducer, clean: &[Utterance], noisy: &[Utterance]) -> Result<()> {
        let c = evaluate(model, clean)?;
        let n = evaluate(model, noisy)?;
        self.metrics = Some(FinalMetrics::from_splits(&c, &n));
        Ok(())
    }
}

/// Teacher outputs along the reference alignment lattice.
#[derive(Debug, Clone)]
pub struct TeacherTargets {
    pub probs: ProbLattice,
    pub hidden: HiddenStack,
    /// Smoothed `probs`, present when the schedule smooths outputs.
    pub smoothed: Option<SmoothingResult>,
}

pub fn teacher_targets(
    teacher: &ToyTransducer,
    data: &[Utterance],
    output: &OutputDistill,
) -> Result<Vec<TeacherTargets>> {
    data.iter()
        .map(|u| {
            let tr = forward(teacher, &u.features, &u.tokens)?;
            let smoothed = match output {
                OutputDistill::Adaptive(cfg) => Some(adaptive_smooth(tr.probs(), cfg)?),
                _ => None,
            };
            Ok(TeacherTargets {
                probs: tr.probs().clone(),
                hidden: tr.hidden(),
                smoothed,
            })
        })
        .collect()
}

/// Per-utterance loss terms; `total = alpha * hidden + beta * (rnnt + kl)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub rnnt: f64,
    pub hidden: f64,
    pub kl: f64,
    pub total: f64,
}

fn diverged(step: usize, e: impl std::fmt::Display) -> EngineError {
    EngineError::Diverged {
        step,
        detail: e.to_string(),
    }
}

fn rnnt_grad_logits(probs: &ProbLattice, u: &Utterance) -> atkd_core::Result<(f64, Tensor)> {
    let r = rnnt_loss(&probs.log(), &u.tokens)?;
    Ok((r.loss, log_softmax_backward(probs.tensor(), &r.grad_logprobs)))
}

/// Loss of one utterance under `stage` and its gradient over every parameter.
/// Without a teacher only the transducer term contributes.
pub fn item_gradient(
    model: &ToyTransducer,
    u: &Utterance,
    target: Option<&TeacherTargets>,
    stage: &Stage,
    schedule: Option<&StageSchedule>,
) -> atkd_core::Result<(LossParts, Params)> {
    let tr = forward(model, &u.features, &u.tokens).map_err(|e| atkd_core::Error::Domain(e.to_string()))?;
    let (l_rnnt, mut g_logits) = rnnt_grad_logits(tr.probs(), u)?;
    let mut parts = LossParts {
        rnnt: l_rnnt,
        ..Default::default()
    };
    let mut g_hidden = None;
    if let (Some(t), Some(s)) = (target, schedule) {
        match s.output {
            OutputDistill::None => {}
            OutputDistill::Temperature { tau } => {
                let r = output_kl(tr.probs(), &t.probs, tau, s.kl_direction)?;
                parts.kl = r.loss;
                add_into(&mut g_logits, &r.grad_logits);
            }
            OutputDistill::Adaptive(cfg) => {
                let ts = match &t.smoothed {
                    Some(ts) => ts,
                    None => &adaptive_smooth(&t.probs, &cfg)?,
                };
                let r = smoothed_output_kl_against(tr.probs(), ts, &cfg, s.kl_direction)?;
                parts.kl = r.loss;
                add_into(&mut g_logits, &r.grad_logits);
            }
        }
        if stage.alpha > 0.0 {
            let mut h = hidden_mse(&tr.hidden(), &t.hidden)?;
            parts.hidden = h.loss;
            for l in &mut h.grad.layers {
                l.data_mut().iter_mut().for_each(|g| *g *= stage.alpha);
            }
            g_hidden = Some(h.grad);
        }
    }
    parts.total = total_kd_loss(parts.hidden, parts.rnnt, parts.kl, stage.alpha, stage.beta).l_total;
    g_logits.data_mut().iter_mut().for_each(|g| *g *= stage.beta);
    let g = backward(model, &tr, Some(&g_logits), g_hidden.as_ref())
        .map_err(|e| atkd_core::Error::Domain(e.to_string()))?;
    Ok((parts, g))
}

fn add_into(acc: &mut Tensor, other: &Tensor) {
    acc.data_mut().iter_mut().zip(other.data()).for_each(|(a, b)| *a += b);
}

fn is_enc_dec(slot: &str) -> bool {
    !slot.starts_with("joint.")
}

struct Loop<'a> {
    data: &'a [Utterance],
    targets: Option<&'a [TeacherTargets]>,
    schedule: Option<&'a StageSchedule>,
    optim: OptimSettings,
}

impl Loop<'_> {
    fn run(
        &self,
        model: &mut ToyTransducer,
        stages: &[Stage],
        mut on_stage_end: impl FnMut(usize, &ToyTransducer),
    ) -> Result<Vec<StepRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.optim.seed);
        let mut records = Vec::with_capacity(stages.iter().map(|s| s.steps).sum());
        let mut step = 0;
        for (si, stage) in stages.iter().enumerate() {
            // plain gradient descent keeps no optimizer state, so the
            // boundary reset is a no-op here
            for _ in 0..stage.steps {
                let batch: Vec<usize> = (0..self.optim.batch_size)
                    .map(|_| rng.gen_range(0..self.data.len()))
                    .collect();
                let mut grad = Params::zeros(&model.config);
                let mut sum = LossParts::default();
                for &i in &batch {
                    let target = self.targets.map(|t| &t[i]);
                    let (p, g) = item_gradient(model, &self.data[i], target, stage, self.schedule)
                        .map_err(|e| diverged(step, e))?;
                    grad.add_scaled(&g, 1.0, |_| true);
                    sum.rnnt += p.rnnt;
                    sum.hidden += p.hidden;
                    sum.kl += p.kl;
                    sum.total += p.total;
                }
                let n = batch.len() as f64;
                grad.scale(1.0 / n);
                let norm = grad.l2_norm();
                if !norm.is_finite() || !sum.total.is_finite() {
                    return Err(diverged(step, format!("loss {} gradient norm {norm}", sum.total / n)));
                }
                if norm > self.optim.clip_norm {
                    grad.scale(self.optim.clip_norm / norm);
                }
                let freeze = stage.freeze_enc_dec;
                model
                    .params
                    .add_scaled(&grad, -self.optim.learning_rate, |name| !(freeze && is_enc_dec(name)));
                records.push(StepRecord {
                    step,
                    stage: si + 1,
                    alpha: stage.alpha,
                    beta: stage.beta,
                    l_rnnt: sum.rnnt / n,
                    l_hidden: sum.hidden / n,
                    l_kl: sum.kl / n,
                    l_total: sum.total / n,
                    grad_norm: norm,
                });
                step += 1;
            }
            on_stage_end(si, model);
        }
        if !model.params.all_finite() {
            return Err(diverged(step, "non-finite parameters"));
        }
        Ok(records)
    }
}

fn check_data(data: &[Utterance], config: &ModelConfig) -> Result<()> {
    if data.is_empty() {
        return Err(EngineError::Config("training set is empty".into()));
    }
    for u in data {
        if u.features.shape()[1] != config.feature_dim || u.tokens.tokens().iter().any(|&k| k >= config.vocab) {
            return Err(EngineError::Config("training data does not match the model config".into()));
        }
    }
    Ok(())
}

/// Transducer-loss-only training of a full-context model.
pub fn train_teacher(
    config: &ModelConfig,
    data: &[Utterance],
    optim: &OptimSettings,
    steps: usize,
) -> Result<(ToyTransducer, TrainReport)> {
    if config.context != ContextPolicy::Full {
        return Err(EngineError::Config("the teacher must use full context".into()));
    }
    optim.validate()?;
    check_data(data, config)?;
    let mut model = ToyTransducer::new(config.clone())?;
    let stage = Stage {
        alpha: 0.0,
        beta: 1.0,
        steps,
        freeze_enc_dec: false,
    };
    let lp = Loop {
        data,
        targets: None,
        schedule: None,
        optim: *optim,
    };
    let records = lp.run(&mut model, &[stage], |_, _| {})?;
    let report = TrainReport {
        records,
        metrics: None,
        seed: config.seed,
        config: RunSnapshot {
            model: config.clone(),
            optim: *optim,
            schedule: None,
        },
    };
    Ok((model, report))
}

fn check_compatible(teacher: &ModelConfig, student: &ModelConfig) -> Result<()> {
    let same = teacher.vocab == student.vocab
        && teacher.feature_dim == student.feature_dim
        && teacher.hidden_dim == student.hidden_dim
        && teacher.encoder_layers == student.encoder_layers
        && teacher.decoder_layers == student.decoder_layers;
    if !same {
        return Err(EngineError::Config(
            "teacher and student must have identical layer counts and widths".into(),
        ));
    }
    Ok(())
}

/// Student training under `schedule`. `on_stage_end(i, model)` sees the
/// student after each stage `i` (0-based).
pub fn train_student_observed(
    teacher: &ToyTransducer,
    config: &ModelConfig,
    schedule: &StageSchedule,
    data: &[Utterance],
    optim: &OptimSettings,
    on_stage_end: impl FnMut(usize, &ToyTransducer),
) -> Result<(ToyTransducer, TrainReport)> {
    schedule.validate()?;
    optim.validate()?;
    check_compatible(&teacher.config, config)?;
    check_data(data, config)?;
    let targets = if schedule.uses_teacher() {
        Some(teacher_targets(teacher, data, &schedule.output)?)
    } else {
        None
    };
    let mut model = ToyTransducer::new(config.clone())?;
    let lp = Loop {
        data,
        targets: targets.as_deref(),
        schedule: Some(schedule),
        optim: *optim,
    };
    let records = lp.run(&mut model, &schedule.stages, on_stage_end)?;
    let report = TrainReport {
        records,
        metrics: None,
        seed: config.seed,
        config: RunSnapshot {
            model: config.clone(),
            optim: *optim,
            schedule: Some(schedule.clone()),
        },
    };
    Ok((model, report))
}

pub fn train_student(
    teacher: &ToyTransducer,
    config: &ModelConfig,
    schedule: &StageSchedule,
    data: &[Utterance],
    optim: &OptimSettings,
) -> Result<(ToyTransducer, TrainReport)> {
    train_student_observed(teacher, config, schedule, data, optim, |_, _| {})
}
