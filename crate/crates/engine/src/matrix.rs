//! Multi-seed comparison of distillation schedules.

use atkd_core::smoothing::SmoothingConfig;
use atkd_model::{ContextPolicy, ModelConfig, ToyTransducer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::eval::relative_reduction;
use crate::schedule::{Variant, DEFAULT_SPLIT};
use crate::synth::{generate, Corpus, SynthTaskConfig};
use crate::train::{train_student_observed, train_teacher, FinalMetrics, OptimSettings, TrainReport};

/// A row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Entry {
    Teacher,
    Student(Variant),
    /// The two-stage student evaluated at the stage boundary.
    TwoStageFirst,
}

impl Entry {
    pub fn label(&self) -> &'static str {
        match self {
            Entry::Teacher => "teacher",
            Entry::Student(v) => v.name(),
            Entry::TwoStageFirst => "two-stage-first",
        }
    }
}

impl std::str::FromStr for Entry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "teacher" => Ok(Entry::Teacher),
            "two-stage-first" => Ok(Entry::TwoStageFirst),
            v => v.parse().map(Entry::Student),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Task template; its seed is replaced by each matrix seed.
    pub task: SynthTaskConfig,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub student_context: ContextPolicy,
    pub teacher_optim: OptimSettings,
    pub teacher_steps: usize,
    pub student_optim: OptimSettings,
    pub student_steps: usize,
    /// Fraction of student steps spent in stage 1.
    pub stage_split: f64,
    pub smoothing: SmoothingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let tuned = OptimSettings {
            learning_rate: 0.1,
            batch_size: 32,
            ..Default::default()
        };
        Self {
            task: SynthTaskConfig::default(),
            hidden_dim: 16,
            encoder_layers: 2,
            decoder_layers: 1,
            student_context: ContextPolicy::STREAMING,
            teacher_optim: tuned,
            teacher_steps: 6000,
            student_optim: tuned,
            student_steps: 2000,
            stage_split: DEFAULT_SPLIT,
            smoothing: SmoothingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    fn model(&self, context: ContextPolicy, seed: u64) -> ModelConfig {
        ModelConfig {
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            ..ModelConfig::new(self.task.vocab, self.task.feature_dim, self.hidden_dim, context, seed)
        }
    }

    /// Teacher config for a matrix seed.
    pub fn teacher_model(&self, seed: u64) -> ModelConfig {
        self.model(ContextPolicy::Full, seed.wrapping_mul(2).wrapping_add(1))
    }

    /// Student config for a matrix seed; shared by every variant so that
    /// variants differ only in their schedule.
    pub fn student_model(&self, seed: u64) -> ModelConfig {
        self.model(self.student_context, seed.wrapping_mul(2).wrapping_add(2))
    }

    pub fn task_for(&self, seed: u64) -> SynthTaskConfig {
        SynthTaskConfig {
            seed,
            ..self.task.clone()
        }
    }

    pub fn teacher_optim_for(&self, seed: u64) -> OptimSettings {
        OptimSettings {
            seed: self.teacher_optim.seed ^ seed,
            ..self.teacher_optim
        }
    }

    pub fn student_optim_for(&self, seed: u64) -> OptimSettings {
        OptimSettings {
            seed: self.student_optim.seed ^ seed,
            ..self.student_optim
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub entry: Entry,
    pub seed: u64,
    pub metrics: FinalMetrics,
}

/// Trains the teacher for one seed and reports its metrics.
pub fn run_teacher(exp: &ExperimentConfig, seed: u64, corpus: &Corpus) -> Result<(ToyTransducer, TrainReport)> {
    let (teacher, mut report) = train_teacher(
        &exp.teacher_model(seed),
        &corpus.train,
        &exp.teacher_optim_for(seed),
        exp.teacher_steps,
    )?;
    report.attach_metrics(&teacher, &corpus.clean, &corpus.noisy)?;
    Ok((teacher, report))
}

/// Trains one student variant. The second value holds the metrics of the
/// model at the end of stage 1 when the schedule has two stages.
pub fn run_student(
    exp: &ExperimentConfig,
    seed: u64,
    corpus: &Corpus,
    teacher: &ToyTransducer,
    variant: Variant,
) -> Result<(ToyTransducer, TrainReport, Option<FinalMetrics>)> {
    let schedule = variant.schedule(exp.student_steps, exp.stage_split, exp.smoothing);
    let mut first = None;
    let (student, mut report) = train_student_observed(
        teacher,
        &exp.student_model(seed),
        &schedule,
        &corpus.train,
        &exp.student_optim_for(seed),
        |stage, m| {
            if stage == 0 && schedule.stages.len() > 1 {
                first = Some(m.clone());
            }
        },
    )?;
    report.attach_metrics(&student, &corpus.clean, &corpus.noisy)?;
    let first_metrics = match first {
        Some(m) => {
            let mut r = report.clone();
            r.attach_metrics(&m, &corpus.clean, &corpus.noisy)?;
            r.metrics
        }
        None => None,
    };
    Ok((student, report, first_metrics))
}

fn run_seed(exp: &ExperimentConfig, seed: u64, entries: &[Entry]) -> Result<Vec<SeedResult>> {
    let corpus = generate(&exp.task_for(seed))?;
    let (teacher, treport) = run_teacher(exp, seed, &corpus)?;
    let mut variants: Vec<Variant> = Vec::new();
    for e in entries {
        let v = match e {
            Entry::Teacher => continue,
            Entry::Student(v) => *v,
            Entry::TwoStageFirst => Variant::TwoStage,
        };
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let mut student = Vec::new();
    for v in variants {
        let (_, report, first) = run_student(exp, seed, &corpus, &teacher, v)?;
        student.push((v, report.metrics.expect("attached"), first));
    }
    let rows = entries
        .iter()
        .map(|&entry| {
            let metrics = match entry {
                Entry::Teacher => treport.metrics.expect("attached"),
                Entry::Student(v) => student.iter().find(|s| s.0 == v).expect("trained").1,
                Entry::TwoStageFirst => student
                    .iter()
                    .find(|s| s.0 == Variant::TwoStage)
                    .and_then(|s| s.2)
                    .expect("two-stage has a boundary"),
            };
            SeedResult { entry, seed, metrics }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub seeds: usize,
    pub ter_clean_mean: f64,
    pub ter_clean_std: f64,
    pub ter_noisy_mean: f64,
    pub ter_noisy_std: f64,
    /// Relative noisy TER reduction against no-KD, when that row exists.
    pub werr_noisy_pct: Option<f64>,
    pub first_emission_mean: Option<f64>,
}

pub const SUMMARY_COLUMNS: &str =
    "variant,seeds,ter_clean_mean,ter_clean_std,ter_noisy_mean,ter_noisy_std,werr_noisy_pct,first_emission_mean";
pub const PER_SEED_COLUMNS: &str = "variant,seed,ter_clean,ter_noisy,first_emission";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub entries: Vec<Entry>,
    pub seeds: Vec<u64>,
    /// Seed-major, entries in request order.
    pub per_seed: Vec<SeedResult>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MatrixResult {
    pub fn results(&self, entry: Entry) -> Vec<&SeedResult> {
        self.per_seed.iter().filter(|r| r.entry == entry).collect()
    }

    pub fn noisy_ter(&self, entry: Entry) -> Vec<f64> {
        self.results(entry).iter().map(|r| r.metrics.ter_noisy).collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let base = self
            .entries
            .contains(&Entry::Student(Variant::NoKd))
            .then(|| mean_std(&self.noisy_ter(Entry::Student(Variant::NoKd))).0);
        self.entries
            .iter()
            .map(|&e| {
                let rs = self.results(e);
                let (cm, cs) = mean_std(&rs.iter().map(|r| r.metrics.ter_clean).collect::<Vec<_>>());
                let (nm, ns) = mean_std(&rs.iter().map(|r| r.metrics.ter_noisy).collect::<Vec<_>>());
                let firsts: Vec<f64> = rs.iter().filter_map(|r| r.metrics.mean_first_emission_frame).collect();
                SummaryRow {
                    label: e.label().to_string(),
                    seeds: rs.len(),
                    ter_clean_mean: cm,
                    ter_clean_std: cs,
                    ter_noisy_mean: nm,
                    ter_noisy_std: ns,
                    werr_noisy_pct: base.filter(|b| *b > 0.0).map(|b| relative_reduction(b, nm)),
                    first_emission_mean: (!firsts.is_empty()).then(|| mean_std(&firsts).0),
                }
            })
            .collect()
    }

    /// One row per entry with header [`SUMMARY_COLUMNS`].
    pub fn summary_csv(&self) -> String {
        let mut s = format!("{SUMMARY_COLUMNS}\n");
        for r in self.summary() {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                r.label,
                r.seeds,
                r.ter_clean_mean,
                r.ter_clean_std,
                r.ter_noisy_mean,
                r.ter_noisy_std,
                fmt_opt(r.werr_noisy_pct),
                fmt_opt(r.first_emission_mean)
            ));
        }
        s
    }

    /// One row per (seed, entry) with header [`PER_SEED_COLUMNS`].
    pub fn per_seed_csv(&self) -> String {
        let mut s = format!("{PER_SEED_COLUMNS}\n");
        for r in &self.per_seed {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                r.entry.label(),
                r.seed,
                r.metrics.ter_clean,
                r.metrics.ter_noisy,
                fmt_opt(r.metrics.mean_first_emission_frame)
            ));
        }
        s
    }
}

/// Runs every entry for every seed. Seeds run in parallel; each run is
/// sequential and owns its data, so results do not depend on scheduling.
pub fn run_matrix(exp: &ExperimentConfig, seeds: &[u64], entries: &[Entry]) -> Result<MatrixResult> {
    if seeds.is_empty() || entries.is_empty() {
        return Err(EngineError::Config("matrix needs at least one seed and one entry".into()));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&s| run_seed(exp, s, entries))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(MatrixResult {
        entries: entries.to_vec(),
        seeds: seeds.to_vec(),
        per_seed,
    })
}
