use std::io::Write;
use std::path::{Path, PathBuf};

use atkd_core::io::{load_atkd, save_atkd};
use atkd_core::losses::{
    hidden_mse, output_kl, rnnt_loss, smoothed_output_kl, total_kd_loss, KlDirection,
};
use atkd_core::smoothing::{adaptive_smooth, oracle_gamma, taylor_gamma, EntropyTarget, SmoothingConfig};
use atkd_core::{dist, HiddenStack, ProbLattice, Tensor};
use atkd_engine::matrix::{run_matrix, Entry, ExperimentConfig};
use atkd_engine::train::FinalMetrics;
use atkd_engine::{evaluate, generate, train_student, train_teacher, Corpus, TrainReport};
use atkd_model::{load_checkpoint, save_checkpoint};

use crate::config::{load_json, RunConfig};
use crate::corpus::{parse_tokens, read_corpus, write_corpus};
use crate::error::CliError;
use crate::Command;

pub const DEFAULT_ENTRIES: &str =
    "teacher,no-kd,traditional-kd,hierarchical-kd,two-stage-first,two-stage,two-stage-adaptive,two-stage-fixed";

const ORACLE_TOL: f64 = 1e-12;

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Synth { config, out: dir, seed } => synth(config.as_deref(), &dir, seed, out),
        Command::TrainTeacher {
            config,
            data,
            out: ckpt,
            report,
        } => teacher(config.as_deref(), data.as_deref(), ckpt, report, out),
        Command::Distill {
            config,
            teacher,
            data,
            out: ckpt,
            report,
        } => distill(config.as_deref(), &teacher, data.as_deref(), ckpt, report, out),
        Command::Eval { model, data, config } => eval(&model, data.as_deref(), config.as_deref(), out),
        Command::Matrix {
            config,
            seeds,
            variants,
            out: path,
            per_seed,
        } => matrix(config.as_deref(), &seeds, &variants, path, per_seed, out),
        Command::Smooth {
            input,
            target_entropy,
            steps,
            output,
        } => smooth(&input, &target_entropy, steps, output.as_deref(), out),
        Command::Gamma { input, target_entropy } => gamma(&input, &target_entropy, out),
        Command::RnntLoss {
            input,
            tokens,
            log_probs,
            grad,
        } => rnnt(&input, &tokens, log_probs, grad.as_deref(), out),
        Command::KdLoss {
            student,
            teacher,
            tokens,
            alpha,
            beta,
            output,
            tau,
            target_entropy,
            steps,
            direction,
            student_hidden,
            teacher_hidden,
        } => {
            let mode = parse_output_mode(&output, tau, &target_entropy, steps)?;
            let direction = match direction.as_str() {
                "student-first" => KlDirection::StudentFirst,
                "teacher-first" => KlDirection::TeacherFirst,
                d => return Err(CliError::Usage(format!("unknown direction {d:?}"))),
            };
            let hidden = match (student_hidden, teacher_hidden) {
                (Some(s), Some(t)) => Some((s, t)),
                (None, None) => None,
                _ => return Err(CliError::Usage("give both --student-hidden and --teacher-hidden".into())),
            };
            kd_loss(&student, &teacher, &tokens, alpha, beta, mode, direction, hidden, out)
        }
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

fn parse_target(s: &str) -> Result<EntropyTarget, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn synth(config: Option<&Path>, dir: &Path, seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut task = load_json::<RunConfig>(config)?.task;
    if let Some(s) = seed {
        task.seed = s;
    }
    let corpus = generate(&task)?;
    write_corpus(&corpus, &task, dir)?;
    writeln!(out, "split,utterances")?;
    for (name, n) in [("train", corpus.train.len()), ("clean", corpus.clean.len()), ("noisy", corpus.noisy.len())] {
        writeln!(out, "{name},{n}")?;
    }
    Ok(())
}

fn corpus_for(cfg: &RunConfig, data: Option<&Path>) -> Result<Corpus, CliError> {
    match data {
        Some(d) => Ok(read_corpus(d)?.1),
        None => Ok(generate(&cfg.task)?),
    }
}

const METRIC_COLUMNS: &str = "ter_clean,ter_noisy,mean_first_emission_frame";

fn write_metrics(m: &FinalMetrics, out: &mut dyn Write) -> Result<(), CliError> {
    writeln!(out, "{METRIC_COLUMNS}")?;
    writeln!(out, "{},{},{}", f6(m.ter_clean), f6(m.ter_noisy), opt6(m.mean_first_emission_frame))?;
    Ok(())
}

fn finish(report: &TrainReport, path: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(p, report.records_csv())?;
    }
    write_metrics(&report.metrics.expect("metrics attached"), out)
}

fn teacher(
    config: Option<&Path>,
    data: Option<&Path>,
    ckpt: Option<PathBuf>,
    report: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg: RunConfig = load_json(config)?;
    let corpus = corpus_for(&cfg, data)?;
    let (model, mut rep) = train_teacher(&cfg.teacher_model(), &corpus.train, &cfg.teacher.optim, cfg.teacher.steps)?;
    rep.attach_metrics(&model, &corpus.clean, &corpus.noisy)?;
    if let Some(dir) = ckpt.or(cfg.outputs.teacher.clone()) {
        save_checkpoint(&model, dir)?;
    }
    finish(&rep, report.or(cfg.outputs.report.clone()), out)
}

fn distill(
    config: Option<&Path>,
    teacher: &Path,
    data: Option<&Path>,
    ckpt: Option<PathBuf>,
    report: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg: RunConfig = load_json(config)?;
    let corpus = corpus_for(&cfg, data)?;
    let teacher = load_checkpoint(teacher)?;
    let (model, mut rep) = train_student(&teacher, &cfg.model, &cfg.schedule, &corpus.train, &cfg.optim)?;
    rep.attach_metrics(&model, &corpus.clean, &corpus.noisy)?;
    if let Some(dir) = ckpt.or(cfg.outputs.student.clone()) {
        save_checkpoint(&model, dir)?;
    }
    finish(&rep, report.or(cfg.outputs.report.clone()), out)
}

fn eval(model: &Path, data: Option<&Path>, config: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_checkpoint(model)?;
    let cfg: RunConfig = load_json(config)?;
    let corpus = corpus_for(&cfg, data)?;
    writeln!(out, "split,utterances,ter,mean_first_emission_frame")?;
    for (name, split) in [("clean", &corpus.clean), ("noisy", &corpus.noisy)] {
        let m = evaluate(&model, split)?;
        writeln!(out, "{name},{},{},{}", m.utterances, f6(m.ter), opt6(m.mean_first_emission_frame))?;
    }
    Ok(())
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn matrix(
    config: Option<&Path>,
    seeds: &str,
    variants: &str,
    path: Option<PathBuf>,
    per_seed: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let exp: ExperimentConfig = load_json(config)?;
    let seeds = parse_seeds(seeds)?;
    let entries = variants
        .split(',')
        .map(|v| v.trim().parse::<Entry>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    let r = run_matrix(&exp, &seeds, &entries)?;
    let summary = r.summary_csv();
    if let Some(p) = path {
        std::fs::write(p, &summary)?;
    }
    if let Some(p) = per_seed {
        std::fs::write(p, r.per_seed_csv())?;
    }
    write!(out, "{summary}")?;
    Ok(())
}

/// Views any tensor as `[rows, 1, V]` unless it already is a lattice.
fn as_lattice(t: Tensor) -> Result<ProbLattice, CliError> {
    let shape = t.shape().to_vec();
    let t = match shape.len() {
        1 => t.reshape(vec![1, 1, shape[0]])?,
        2 => t.reshape(vec![shape[0], 1, shape[1]])?,
        3 => t,
        r => return Err(CliError::Failure(format!("expected rank 1-3, got rank {r}"))),
    };
    Ok(ProbLattice::new(t)?)
}

fn smooth(input: &Path, target: &str, steps: usize, output: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let target = parse_target(target)?;
    let raw = load_atkd(input)?;
    let shape = raw.shape().to_vec();
    let lat = as_lattice(raw)?;
    let cfg = SmoothingConfig::with_steps(steps).with_target(target);
    let r = adaptive_smooth(&lat, &cfg)?;
    writeln!(out, "t,u,step,gamma,h_before,h_after")?;
    let trace = &r.entropy_trace;
    for t in 0..lat.t_len() {
        for u in 0..lat.u_len() {
            let cell = t * lat.u_len() + u;
            for (z, g) in r.gammas.cell(cell).iter().enumerate() {
                let (hb, ha) = (trace.get(&[t, u, z]), trace.get(&[t, u, z + 1]));
                writeln!(out, "{t},{u},{},{},{},{}", z + 1, f6(*g), f6(hb), f6(ha))?;
            }
        }
    }
    if let Some(p) = output {
        save_atkd(&r.smoothed.into_tensor().reshape(shape)?, p)?;
    }
    Ok(())
}

fn gamma(input: &Path, target: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let target = parse_target(target)?;
    let t = load_atkd(input)?;
    let h = target.resolve(t.last_dim())?;
    writeln!(out, "row,entropy,taylor_gamma,oracle_gamma")?;
    for (i, row) in t.rows().enumerate() {
        let e = dist::entropy(row)?;
        let tg = taylor_gamma(row, h)?;
        let og = oracle_gamma(row, h, ORACLE_TOL)?;
        writeln!(out, "{i},{},{},{}", f6(e), f6(tg), f6(og))?;
    }
    Ok(())
}

fn rnnt(input: &Path, tokens: &str, log_probs: bool, grad: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let t = load_atkd(input)?;
    if t.rank() != 3 {
        return Err(CliError::Failure(format!("expected a [T, U+1, V] lattice, got {:?}", t.shape())));
    }
    let y = parse_tokens(tokens, t.last_dim())?;
    let lp = if log_probs { t } else { ProbLattice::new(t)?.log() };
    let r = rnnt_loss(&lp, &y)?;
    if let Some(p) = grad {
        save_atkd(&r.grad_logprobs, p)?;
    }
    writeln!(out, "{}", f6(r.loss))?;
    Ok(())
}

pub enum OutputMode {
    None,
    Temperature(f64),
    Adaptive(SmoothingConfig),
}

fn parse_output_mode(mode: &str, tau: f64, target: &str, steps: usize) -> Result<OutputMode, CliError> {
    match mode {
        "none" => Ok(OutputMode::None),
        "temperature" => Ok(OutputMode::Temperature(tau)),
        "adaptive" => Ok(OutputMode::Adaptive(
            SmoothingConfig::with_steps(steps).with_target(parse_target(target)?),
        )),
        m => Err(CliError::Usage(format!("unknown output mode {m:?}"))),
    }
}

fn load_stack(list: &str) -> Result<HiddenStack, CliError> {
    Ok(HiddenStack::new(
        list.split(',').map(|p| load_atkd(p.trim())).collect::<Result<Vec<_>, _>>()?,
    ))
}

#[allow(clippy::too_many_arguments)]
fn kd_loss(
    student: &Path,
    teacher: &Path,
    tokens: &str,
    alpha: f64,
    beta: f64,
    mode: OutputMode,
    direction: KlDirection,
    hidden: Option<(String, String)>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(CliError::Usage("alpha and beta must be >= 0".into()));
    }
    let s = ProbLattice::new(load_atkd(student)?)?;
    let t = ProbLattice::new(load_atkd(teacher)?)?;
    let y = parse_tokens(tokens, s.vocab())?;
    let l_rnnt = rnnt_loss(&s.log(), &y)?.loss;
    let l_kl = match mode {
        OutputMode::None => 0.0,
        OutputMode::Temperature(tau) => output_kl(&s, &t, tau, direction)?.loss,
        OutputMode::Adaptive(cfg) => smoothed_output_kl(&s, &t, &cfg, direction)?.loss,
    };
    let l_hidden = match hidden {
        Some((a, b)) => hidden_mse(&load_stack(&a)?, &load_stack(&b)?)?.loss,
        None => 0.0,
    };
    let b = total_kd_loss(l_hidden, l_rnnt, l_kl, alpha, beta);
    writeln!(out, "l_rnnt,l_hidden,l_kl,l_total")?;
    writeln!(out, "{},{},{},{}", f6(b.l_rnnt), f6(b.l_hidden), f6(b.l_output_kl), f6(b.l_total))?;
    Ok(())
}
