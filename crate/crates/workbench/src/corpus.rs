//! Corpus directory layout:
//!
//! ```text
//! <dir>/task.json                  generating SynthTaskConfig
//! <dir>/<split>/transcripts.txt    line i: space-separated token indices of utterance i
//! <dir>/<split>/<i:05>.atkd        [T, F] features of utterance i
//! ```
//!
//! Splits are `train`, `clean` and `noisy`.

use std::fs;
use std::path::Path;

use atkd_core::io::{load_atkd, save_atkd};
use atkd_core::TokenSequence;
use atkd_engine::{Corpus, SynthTaskConfig, Utterance};

use crate::error::CliError;

pub const SPLITS: [&str; 3] = ["train", "clean", "noisy"];

pub fn format_tokens(tokens: &TokenSequence) -> String {
    tokens.tokens().iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_tokens(text: &str, vocab: usize) -> Result<TokenSequence, CliError> {
    let tokens = text
        .split_whitespace()
        .map(|w| w.parse::<usize>().map_err(|_| CliError::Usage(format!("bad token {w:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    TokenSequence::new(tokens, vocab).map_err(|e| CliError::Usage(e.to_string()))
}

fn split<'a>(corpus: &'a Corpus, name: &str) -> &'a [Utterance] {
    match name {
        "train" => &corpus.train,
        "clean" => &corpus.clean,
        _ => &corpus.noisy,
    }
}

pub fn write_corpus(corpus: &Corpus, task: &SynthTaskConfig, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("task.json"), serde_json::to_string_pretty(task).expect("serializes") + "\n")?;
    for name in SPLITS {
        let sub = dir.join(name);
        fs::create_dir_all(&sub)?;
        let mut lines = String::new();
        for (i, u) in split(corpus, name).iter().enumerate() {
            save_atkd(&u.features, sub.join(format!("{i:05}.atkd")))?;
            lines.push_str(&format_tokens(&u.tokens));
            lines.push('\n');
        }
        fs::write(sub.join("transcripts.txt"), lines)?;
    }
    Ok(())
}

fn read_split(dir: &Path, vocab: usize) -> Result<Vec<Utterance>, CliError> {
    let text = fs::read_to_string(dir.join("transcripts.txt"))
        .map_err(|e| CliError::Failure(format!("{}: {e}", dir.join("transcripts.txt").display())))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let tokens = parse_tokens(line, vocab).map_err(|e| CliError::Failure(format!("line {}: {e}", i + 1)))?;
            let features = load_atkd(dir.join(format!("{i:05}.atkd")))?;
            Ok(Utterance { features, tokens })
        })
        .collect()
}

pub fn read_corpus(dir: &Path) -> Result<(SynthTaskConfig, Corpus), CliError> {
    let text = fs::read_to_string(dir.join("task.json"))
        .map_err(|e| CliError::Failure(format!("{}: {e}", dir.join("task.json").display())))?;
    let task: SynthTaskConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Failure(format!("task.json: {e}")))?;
    let corpus = Corpus {
        train: read_split(&dir.join("train"), task.vocab)?,
        clean: read_split(&dir.join("clean"), task.vocab)?,
        noisy: read_split(&dir.join("noisy"), task.vocab)?,
    };
    Ok((task, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip() {
        let task = SynthTaskConfig {
            train_size: 5,
            eval_size: 3,
            seed: 2,
            ..Default::default()
        };
        let corpus = atkd_engine::generate(&task).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, &task, dir.path()).unwrap();
        let (t, c) = read_corpus(dir.path()).unwrap();
        assert_eq!(t, task);
        assert_eq!(c, corpus);
    }

    #[test]
    fn token_text() {
        let t = parse_tokens(" 3 1  2\n", 5).unwrap();
        assert_eq!(format_tokens(&t), "3 1 2");
        assert!(parse_tokens("0", 5).is_err());
        assert!(parse_tokens("x", 5).is_err());
        assert!(parse_tokens("", 5).unwrap().is_empty());
    }
}
