//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-4 and 7 are hard: any FAIL exits non-zero. Criteria 5 and 6
//! compare trained models and are reported; set `ATKD_STRICT_ACCEPTANCE=1`
//! to make a FAIL there exit non-zero as well.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use atkd_core::dist::{entropy, kl_divergence, log_softmax, softmax};
use atkd_core::io::save_atkd;
use atkd_core::losses::{
    hidden_mse, log_softmax_backward, output_kl, rnnt_loss, rnnt_loss_bruteforce, smoothed_output_kl, KlDirection,
};
use atkd_core::smoothing::{
    adaptive_smooth, apply_frozen_cell, oracle_gamma, power_transform, taylor_entropy, taylor_gamma,
    transformed_entropy, GammaTable, SmoothingConfig,
};
use atkd_core::{HiddenStack, ProbLattice, Tensor, TokenSequence};
use atkd_engine::matrix::run_matrix;
use atkd_engine::{
    item_gradient, teacher_targets, Entry, ExperimentConfig, MatrixResult, OptimSettings, OutputDistill, Stage,
    StageSchedule, SynthTaskConfig, Utterance, Variant,
};
use atkd_model::{forward, ContextPolicy, ModelConfig, ToyTransducer};
use atkd_workbench::config::TeacherSettings;
use atkd_workbench::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exponent for [0.9, 0.1] with target ln 2, and the entropy after one step
/// (40-digit evaluation: 0.15290490..., 0.67923460...).
const FIXTURE_GAMMA: f64 = 0.152906;
const FIXTURE_H_AFTER: f64 = 0.679_234_6;
/// Value tabulated for the fixture elsewhere; exact evaluation disagrees.
const FIXTURE_H_ROUNDED: f64 = 0.679198;
const FIXTURE_TOL: f64 = 1e-5;

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_dist(rng: &mut impl Rng, v: usize, min_p: f64) -> Vec<f64> {
    let sharp = rng.gen_range(0.1..20.0);
    let raw: Vec<f64> = (0..v).map(|_| (sharp * rng.gen_range(-1.0..1.0f64)).exp()).collect();
    let s: f64 = raw.iter().sum();
    let mix = min_p * v as f64;
    raw.iter().map(|x| (1.0 - mix) * x / s + min_p).collect()
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn lattice_of(shape: &[usize], logits: &[f64]) -> ProbLattice {
    ProbLattice::from_logits(&Tensor::new(shape.to_vec(), logits.to_vec()).unwrap()).unwrap()
}

fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-8)`.
fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-8)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg5 = SmoothingConfig::with_steps(5);
    let (mut rank, mut mono, mut taylor, mut trace) = (0, 0, 0, 0);
    let mut skipped = 0;
    for _ in 0..10_000 {
        let v = rng.gen_range(2..=100);
        let d = random_dist(&mut rng, v, 1e-6);
        let max = (v as f64).ln();

        let g = rng.gen_range(1e-3..5.0);
        let p = power_transform(&d, g).unwrap();
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
        let ranked = order.windows(2).all(|w| {
            let (i, j) = (w[0], w[1]);
            if d[i] == d[j] {
                p[i] == p[j]
            } else {
                p[i] <= p[j]
            }
        });
        rank += usize::from(!ranked);

        let mut prev = f64::INFINITY;
        for k in 0..=40 {
            let h = transformed_entropy(&d, 5.0 * k as f64 / 40.0).unwrap();
            if h > prev + 1e-12 {
                mono += 1;
                break;
            }
            prev = h;
        }

        let h0 = entropy(&d).unwrap();
        let gap0 = max - h0;
        if gap0 < 1e-9 {
            skipped += 1;
        } else {
            let gt = taylor_gamma(&d, max).unwrap();
            let h1 = entropy(&power_transform(&d, gt).unwrap()).unwrap();
            taylor += usize::from((max - h1).abs() >= gap0);
        }

        let lat = ProbLattice::new(Tensor::new(vec![1, 1, v], d).unwrap()).unwrap();
        let r = adaptive_smooth(&lat, &cfg5).unwrap();
        let tr = r.entropy_trace.data();
        let ok = tr
            .windows(2)
            .all(|w| (w[1] > w[0] && w[1] <= max + 1e-12) || (max - w[0]).abs() < 1e-12);
        trace += usize::from(!ok);
    }
    let elapsed = start.elapsed();
    let pass = rank + mono + taylor + trace == 0 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "10000 draws: rank violations {rank}, entropy-monotonicity violations {mono}, \
             Taylor steps not reducing the gap {taylor} ({skipped} already uniform), \
             Z=5 traces not increasing {trace}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut bad = 0;
    for _ in 0..10_000 {
        let v = rng.gen_range(2..=100);
        let d = random_dist(&mut rng, v, 1e-4);
        let bound = 5e-3 * (v as f64).ln();
        for k in 0..=10 {
            let g = 0.95 + 0.01 * k as f64;
            let err = (taylor_entropy(&d, g).unwrap() - transformed_entropy(&d, g).unwrap()).abs();
            worst = worst.max(err / bound);
            bad += usize::from(err > bound);
        }
    }
    let d = [0.9, 0.1];
    let ln2 = 2f64.ln();
    let g = taylor_gamma(&d, ln2).unwrap();
    let h_closed = transformed_entropy(&d, g).unwrap();
    let h_direct = entropy(&power_transform(&d, g).unwrap()).unwrap();
    let lat = ProbLattice::new(Tensor::new(vec![1, 1, 2], d.to_vec()).unwrap()).unwrap();
    let h_alg = adaptive_smooth(&lat, &SmoothingConfig::with_steps(1)).unwrap().entropy_trace.data()[1];
    let g_ok = (g - FIXTURE_GAMMA).abs() <= FIXTURE_TOL;
    let h_ok = [h_closed, h_direct, h_alg].iter().all(|h| (h - FIXTURE_H_AFTER).abs() <= FIXTURE_TOL);
    // an exact step to ln 2 would be γ = 0: the series step falls short of it
    let exact = oracle_gamma(&d, ln2, 1e-12).unwrap();
    outcome(
        bad == 0 && g_ok && h_ok,
        format!(
            "Taylor error bound violations {bad}/110000 (worst {worst:.3} of bound); \
             fixture γ={g:.7} (oracle {exact:.1e}), H after one step {h_closed:.7} closed form / \
             {h_direct:.7} direct / {h_alg:.7} smoother vs {FIXTURE_H_AFTER}; \
             tabulated {FIXTURE_H_ROUNDED} is off by {:.1e}",
            (h_closed - FIXTURE_H_ROUNDED).abs()
        ),
    )
}

fn uniform_lattice(t: usize, u1: usize, v: usize) -> ProbLattice {
    ProbLattice::new(Tensor::new(vec![t, u1, v], vec![1.0 / v as f64; t * u1 * v]).unwrap()).unwrap()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let t = rng.gen_range(1..=4);
        let u = rng.gen_range(0..=3);
        let v = rng.gen_range(2..=4);
        let y = TokenSequence::new((0..u).map(|_| rng.gen_range(1..v)).collect(), v).unwrap();
        let lat = lattice_of(&[t, u + 1, v], random_tensor(&mut rng, &[t, u + 1, v], 3.0).data());
        let dp = rnnt_loss(&lat.log(), &y).unwrap().loss;
        let bf = rnnt_loss_bruteforce(&lat, &y).unwrap();
        worst = worst.max((dp - bf).abs());
    }
    let y = TokenSequence::new(vec![1], 2).unwrap();
    let fixtures: Vec<f64> = [1, 2]
        .iter()
        .map(|&t| rnnt_loss(&uniform_lattice(t, 2, 2).log(), &y).unwrap().loss)
        .collect();
    // ln 4 = 1.3862943611...; the six-digit value is its rounding
    let fix_ok = fixtures.iter().all(|l| (l - 4f64.ln()).abs() <= 1e-9 && (l - 1.386294).abs() < 5e-7);
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && fix_ok && elapsed < Duration::from_secs(60),
        format!(
            "1000 lattices: max |DP − enumeration| {worst:.2e}; fixtures {:.9} and {:.9}; {:.1}s",
            fixtures[0],
            fixtures[1],
            elapsed.as_secs_f64()
        ),
    )
}

const D: usize = 8;
const T: usize = 5;
const U: usize = 3;
const V: usize = 8;
const F: usize = 8;

fn kl_cell(dir: KlDirection, s: &[f64], t: &[f64]) -> f64 {
    match dir {
        KlDirection::StudentFirst => kl_divergence(s, t).unwrap(),
        KlDirection::TeacherFirst => kl_divergence(t, s).unwrap(),
    }
}

/// Mean smoothed KL with the student exponents frozen.
fn frozen_kl(student: &ProbLattice, teacher_smoothed: &ProbLattice, gammas: &GammaTable, floor: f64, dir: KlDirection) -> f64 {
    let n = student.n_cells() as f64;
    student
        .cells()
        .zip(teacher_smoothed.cells())
        .enumerate()
        .map(|(i, (s, t))| kl_cell(dir, &apply_frozen_cell(s, gammas.cell(i), floor), t))
        .sum::<f64>()
        / n
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let shape = [T, U + 1, V];
    let mut worst = [0.0f64; 5];

    for _ in 0..100 {
        let shapes = [vec![T, D], vec![T, D], vec![U + 1, D]];
        let teacher = HiddenStack::new(shapes.iter().map(|s| random_tensor(&mut rng, s, 2.0)).collect());
        let student: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s, 2.0)).collect();
        let flat: Vec<f64> = student.iter().flat_map(|l| l.data().to_vec()).collect();
        let rebuild = |x: &[f64]| {
            let mut off = 0;
            HiddenStack::new(
                shapes
                    .iter()
                    .map(|s| {
                        let n: usize = s.iter().product();
                        off += n;
                        Tensor::new(s.clone(), x[off - n..off].to_vec()).unwrap()
                    })
                    .collect(),
            )
        };
        let r = hidden_mse(&HiddenStack::new(student), &teacher).unwrap();
        let analytic: Vec<f64> = r.grad.layers.iter().flat_map(|l| l.data().to_vec()).collect();
        let numeric = central_diff(&flat, |x| hidden_mse(&rebuild(x), &teacher).unwrap().loss);
        worst[0] = worst[0].max(rel_error(&analytic, &numeric));
    }

    for i in 0..100 {
        let dir = [KlDirection::StudentFirst, KlDirection::TeacherFirst][i % 2];
        let tau = [1.0, 0.5, 2.0, 4.0][i % 4];
        let teacher = lattice_of(&shape, random_tensor(&mut rng, &shape, 2.0).data());
        let z = random_tensor(&mut rng, &shape, 2.0);
        let r = output_kl(&lattice_of(&shape, z.data()), &teacher, tau, dir).unwrap();
        let numeric = central_diff(z.data(), |x| output_kl(&lattice_of(&shape, x), &teacher, tau, dir).unwrap().loss);
        worst[1] = worst[1].max(rel_error(r.grad_logits.data(), &numeric));
    }

    for i in 0..100 {
        let cfg = SmoothingConfig::with_steps(1 + i % 3);
        let dir = [KlDirection::StudentFirst, KlDirection::TeacherFirst][i % 2];
        let teacher = lattice_of(&shape, random_tensor(&mut rng, &shape, 2.0).data());
        let z = random_tensor(&mut rng, &shape, 2.0);
        let r = smoothed_output_kl(&lattice_of(&shape, z.data()), &teacher, &cfg, dir).unwrap();
        let ts = adaptive_smooth(&teacher, &cfg).unwrap().smoothed;
        let numeric = central_diff(z.data(), |x| {
            frozen_kl(&lattice_of(&shape, x), &ts, &r.student_gammas, cfg.prob_floor, dir)
        });
        worst[2] = worst[2].max(rel_error(r.grad_logits.data(), &numeric));
    }

    for _ in 0..100 {
        let y = TokenSequence::new((0..U).map(|_| rng.gen_range(1..V)).collect(), V).unwrap();
        let z = random_tensor(&mut rng, &shape, 2.0);
        let lp = log_softmax(&z).unwrap();
        let r = rnnt_loss(&lp, &y).unwrap();
        let analytic = log_softmax_backward(&softmax(&z).unwrap(), &r.grad_logprobs);
        let numeric = central_diff(z.data(), |x| {
            rnnt_loss(&log_softmax(&Tensor::new(shape.to_vec(), x.to_vec()).unwrap()).unwrap(), &y)
                .unwrap()
                .loss
        });
        worst[3] = worst[3].max(rel_error(analytic.data(), &numeric));
    }

    worst[4] = end_to_end(&mut rng);

    let names = ["hidden_mse", "output_kl", "smoothed_output_kl", "rnnt_loss", "end-to-end"];
    let elapsed = start.elapsed();
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        worst.iter().all(|&w| w < FD_TOL) && elapsed < Duration::from_secs(300),
        format!("worst relative error over 100 instances each: {detail}; {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Training-step gradient from the engine against finite differences of the
/// weighted loss assembled here from the individual terms.
fn end_to_end(rng: &mut ChaCha8Rng) -> f64 {
    let stages = [(0.0, 1.0), (1.0, 0.01), (0.01, 1.0), (1.0, 1.0)];
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let (alpha, beta) = stages[i as usize % 4];
        let smoothing = SmoothingConfig::with_steps(2);
        let output = match i % 3 {
            0 => OutputDistill::None,
            1 => OutputDistill::Temperature { tau: [1.0, 2.0][i as usize % 2] },
            _ => OutputDistill::Adaptive(smoothing),
        };
        let dir = [KlDirection::StudentFirst, KlDirection::TeacherFirst][(i / 2) as usize % 2];
        let stage = Stage {
            alpha,
            beta,
            steps: 1,
            freeze_enc_dec: false,
        };
        let schedule = StageSchedule {
            stages: vec![stage],
            output,
            kl_direction: dir,
        };
        let student = ToyTransducer::new(ModelConfig::new(V, F, D, ContextPolicy::STREAMING, 2 * i)).unwrap();
        let teacher = ToyTransducer::new(ModelConfig::new(V, F, D, ContextPolicy::Full, 2 * i + 1)).unwrap();
        let u = Utterance {
            features: random_tensor(rng, &[T, F], 1.0),
            tokens: TokenSequence::new((0..U).map(|_| rng.gen_range(1..V)).collect(), V).unwrap(),
        };
        let target = teacher_targets(&teacher, std::slice::from_ref(&u), &output).unwrap().remove(0);
        let (parts, grad) = item_gradient(&student, &u, Some(&target), &stage, Some(&schedule)).unwrap();

        let s0 = forward(&student, &u.features, &u.tokens).unwrap();
        let frozen = match output {
            OutputDistill::Adaptive(cfg) => Some((
                smoothed_output_kl(s0.probs(), &target.probs, &cfg, dir).unwrap().student_gammas,
                adaptive_smooth(&target.probs, &cfg).unwrap().smoothed,
            )),
            _ => None,
        };
        let loss = |m: &ToyTransducer| {
            let tr = forward(m, &u.features, &u.tokens).unwrap();
            let l_rnnt = rnnt_loss(&tr.probs().log(), &u.tokens).unwrap().loss;
            let l_kl = match (&output, &frozen) {
                (OutputDistill::Temperature { tau }, _) => output_kl(tr.probs(), &target.probs, *tau, dir).unwrap().loss,
                (OutputDistill::Adaptive(cfg), Some((g, ts))) => frozen_kl(tr.probs(), ts, g, cfg.prob_floor, dir),
                _ => 0.0,
            };
            let l_hidden = if alpha > 0.0 {
                hidden_mse(&tr.hidden(), &target.hidden).unwrap().loss
            } else {
                0.0
            };
            alpha * l_hidden + beta * (l_rnnt + l_kl)
        };
        assert!((loss(&student) - parts.total).abs() < 1e-10, "instance {i}: reported total differs");
        let base = student.params.flatten();
        let mut probe = student.clone();
        let numeric = central_diff(&base, |x| {
            probe.params.assign_flat(x);
            loss(&probe)
        });
        worst = worst.max(rel_error(&grad.flatten(), &numeric));
    }
    worst
}

const MATRIX_SEEDS: std::ops::Range<u64> = 0..10;

fn matrix_entries() -> Vec<Entry> {
    vec![
        Entry::Teacher,
        Entry::Student(Variant::NoKd),
        Entry::Student(Variant::TwoStage),
        Entry::Student(Variant::TwoStageAdaptive),
        Entry::TwoStageFirst,
        Entry::Student(Variant::TwoStageFixed),
    ]
}

fn criterion_5(m: &MatrixResult, elapsed: Duration) -> Outcome {
    let mean = |e: Entry| {
        let xs = m.noisy_ter(e);
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let teacher = mean(Entry::Teacher);
    let nokd = mean(Entry::Student(Variant::NoKd));
    let two = mean(Entry::Student(Variant::TwoStage));
    let adaptive = mean(Entry::Student(Variant::TwoStageAdaptive));
    let first = mean(Entry::TwoStageFirst);
    let base = m.noisy_ter(Entry::Student(Variant::NoKd));
    let wins = |e: Entry| m.noisy_ter(e).iter().zip(&base).filter(|(x, b)| x < b).count();
    let losses = |e: Entry| m.noisy_ter(e).iter().zip(&base).filter(|(x, b)| x > b).count();
    let adaptive_wins = wins(Entry::Student(Variant::TwoStageAdaptive));
    let fixed_worse = losses(Entry::Student(Variant::TwoStageFixed));
    let n = m.seeds.len();
    let checks = [
        ("teacher < adaptive", teacher < adaptive),
        ("adaptive <= two-stage", adaptive <= two),
        ("two-stage < no-kd", two < nokd),
        ("adaptive beats no-kd on >= 8/10 seeds", adaptive_wins >= 8),
        ("first stage worse than no-kd", first > nokd),
        ("fixed worse than no-kd on >= 6/10 seeds", fixed_worse >= 6),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        format!(
            "{n} seeds, mean noisy TER teacher {teacher:.4}, two-stage-adaptive {adaptive:.4}, two-stage {two:.4}, \
             no-kd {nokd:.4}, first stage {first:.4}, fixed {:.4}; adaptive beats no-kd on {adaptive_wins}/{n}, \
             fixed worse on {fixed_worse}/{n}; {:.0}s{}",
            mean(Entry::Student(Variant::TwoStageFixed)),
            elapsed.as_secs_f64(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join("; "))
            }
        ),
    )
}

fn criterion_6(m: &MatrixResult) -> Outcome {
    let mean_first = |e: Entry| {
        let xs: Vec<f64> = m.results(e).iter().filter_map(|r| r.metrics.mean_first_emission_frame).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let nokd = mean_first(Entry::Student(Variant::NoKd));
    let adaptive = mean_first(Entry::Student(Variant::TwoStageAdaptive));
    let two = mean_first(Entry::Student(Variant::TwoStage));
    let teacher = mean_first(Entry::Teacher);
    outcome(
        adaptive <= nokd,
        format!(
            "mean first-emission frame two-stage-adaptive {adaptive:.4} vs no-kd {nokd:.4} \
             (two-stage {two:.4}, teacher {teacher:.4})"
        ),
    )
}

fn atkd(dir: &Path, args: &[&str]) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_atkd")).current_dir(dir).args(args).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "atkd {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

fn run_config() -> String {
    let task = SynthTaskConfig {
        vocab: 5,
        max_len: 4,
        feature_dim: 5,
        train_size: 30,
        eval_size: 10,
        seed: 4,
        ..Default::default()
    };
    let optim = OptimSettings {
        learning_rate: 0.1,
        batch_size: 4,
        ..Default::default()
    };
    RunConfig {
        model: ModelConfig::new(5, 5, 4, ContextPolicy::STREAMING, 1),
        schedule: Variant::TwoStageAdaptive.schedule(6, 0.5, SmoothingConfig::default()),
        task: task.clone(),
        teacher: TeacherSettings { optim, steps: 8 },
        optim,
        outputs: Default::default(),
    }
    .to_json()
}

fn matrix_config() -> String {
    let optim = OptimSettings {
        batch_size: 4,
        ..Default::default()
    };
    let exp = ExperimentConfig {
        task: SynthTaskConfig {
            vocab: 5,
            max_len: 4,
            feature_dim: 5,
            train_size: 20,
            eval_size: 8,
            ..Default::default()
        },
        hidden_dim: 4,
        teacher_steps: 6,
        student_steps: 6,
        teacher_optim: optim,
        student_optim: optim,
        ..Default::default()
    };
    serde_json::to_string_pretty(&exp).unwrap()
}

/// Every file under `dir`, sorted by relative path.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli_session(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fs::write(dir.join("run.json"), run_config()).unwrap();
    fs::write(dir.join("matrix.json"), matrix_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    save_atkd(&lattice_of(&[3, 2, 4], random_tensor(&mut rng, &[3, 2, 4], 2.0).data()).into_tensor(), dir.join("s.atkd")).unwrap();
    save_atkd(&lattice_of(&[3, 2, 4], random_tensor(&mut rng, &[3, 2, 4], 2.0).data()).into_tensor(), dir.join("t.atkd")).unwrap();
    let runs: [&[&str]; 10] = [
        &["synth", "--config", "run.json", "--out", "data"],
        &["train-teacher", "--config", "run.json", "--data", "data", "--out", "teacher", "--report", "teacher.csv"],
        &["distill", "--config", "run.json", "--teacher", "teacher", "--data", "data", "--out", "student", "--report", "student.csv"],
        &["eval", "--model", "student", "--data", "data"],
        &["matrix", "--config", "matrix.json", "--seeds", "0-1", "--out", "summary.csv", "--per-seed", "per_seed.csv"],
        &["smooth", "--input", "s.atkd", "--steps", "3", "--output", "smoothed.atkd"],
        &["gamma", "--input", "s.atkd"],
        &["rnnt-loss", "--input", "s.atkd", "--tokens", "1", "--grad", "grad.atkd"],
        &["kd-loss", "--student", "s.atkd", "--teacher", "t.atkd", "--tokens", "1", "--output", "adaptive"],
        &["kd-loss", "--student", "s.atkd", "--teacher", "t.atkd", "--tokens", "2", "--tau", "2"],
    ];
    let mut out = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        out.push((format!("stdout {i} {}", args[0]), atkd(dir, args)));
    }
    out.extend(snapshot(dir));
    out
}

fn criterion_7(exp: &ExperimentConfig, m: &MatrixResult) -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, rb) = (cli_session(a.path()), cli_session(b.path()));
    let differing: Vec<&str> = ra
        .iter()
        .zip(&rb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let cli_ok = ra.len() == rb.len() && differing.is_empty();

    // one seed of the full matrix alone, outside the parallel run
    let seed = MATRIX_SEEDS.end - 1;
    let again = run_matrix(exp, &[seed], &matrix_entries()).unwrap();
    let before: Vec<_> = m.per_seed.iter().filter(|r| r.seed == seed).cloned().collect();
    let rerun_ok = again.per_seed == before;
    outcome(
        cli_ok && rerun_ok,
        format!(
            "{} CLI outputs compared across two sessions, {} differ{}; matrix seed {seed} rerun alone {}",
            ra.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            },
            if rerun_ok { "bitwise identical" } else { "differs" }
        ),
    )
}

fn report(n: usize, o: &Outcome) {
    println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    // `cargo test <filter>` passes a filter; run everything regardless, but
    // answer `--list` so test discovery tools do not start the suite
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let strict = std::env::var("ATKD_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    let mut hard_fail = false;
    let mut soft_fail = false;
    for (n, f) in [(1, criterion_1 as fn() -> Outcome), (2, criterion_2), (3, criterion_3), (4, criterion_4)] {
        let o = f();
        report(n, &o);
        hard_fail |= !o.pass;
    }

    let exp = ExperimentConfig::default();
    let seeds: Vec<u64> = MATRIX_SEEDS.collect();
    let start = Instant::now();
    let m = run_matrix(&exp, &seeds, &matrix_entries()).unwrap();
    let elapsed = start.elapsed();
    print!("{}", m.summary_csv());
    let o5 = criterion_5(&m, elapsed);
    report(5, &o5);
    let o6 = criterion_6(&m);
    report(6, &o6);
    soft_fail |= !o5.pass || !o6.pass;

    let o7 = criterion_7(&exp, &m);
    report(7, &o7);
    hard_fail |= !o7.pass;

    if hard_fail || (strict && soft_fail) {
        std::process::exit(1);
    }
}
