//! JSON-Lines evaluation datasets and a synthetic generator.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub doc_id: String,
    pub text: String,
}

/// One question with its pre-retrieved contexts and the ids a correct
/// answer cites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub query: String,
    pub contexts: Vec<Context>,
    pub truth_ids: Vec<String>,
    pub reference_response: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("dataset is empty")]
    Empty,
}

impl EvalSample {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty sample id".into());
        }
        if self.truth_ids.iter().any(String::is_empty) {
            return Err("empty truth id".into());
        }
        let mut seen = HashSet::new();
        if let Some(d) = self.truth_ids.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(format!("truth id {d:?} listed twice"));
        }
        Ok(())
    }
}

pub fn parse_dataset(text: &str) -> Result<Vec<EvalSample>, DatasetError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let s: EvalSample = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        s.check()
            .map_err(|msg| DatasetError::Invalid { line: line_no, msg })?;
        if !ids.insert(s.id.clone()) {
            return Err(DatasetError::Invalid {
                line: line_no,
                msg: format!("duplicate sample id {:?}", s.id),
            });
        }
        out.push(s);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalSample>, DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut text = String::new();
    for line in BufReader::new(fs::File::open(path).map_err(io)?).lines() {
        text.push_str(&line.map_err(io)?);
        text.push('\n');
    }
    parse_dataset(&text)
}

pub fn to_jsonl(samples: &[EvalSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[EvalSample]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(samples).as_bytes())
}

/// Sample and reference counts in the shape of a dataset summary table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub total_refs: usize,
    pub unique_refs: usize,
}

pub fn stats<'a>(samples: impl IntoIterator<Item = &'a EvalSample>) -> DatasetStats {
    let mut n = 0;
    let mut total = 0;
    let mut unique = BTreeSet::new();
    for s in samples {
        n += 1;
        total += s.truth_ids.len();
        unique.extend(s.truth_ids.iter().map(String::as_str));
    }
    DatasetStats {
        samples: n,
        total_refs: total,
        unique_refs: unique.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenOptions {
    pub samples: usize,
    pub refs_per_sample: usize,
    /// Non-cited contexts added to each sample.
    pub distractors: usize,
    /// Size of the shared document pool relative to the number of
    /// references; below 1 forces ids to repeat across samples.
    pub pool_ratio: f64,
    pub seed: u64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            samples: 750,
            refs_per_sample: 2,
            distractors: 2,
            pool_ratio: 0.6,
            seed: 0,
        }
    }
}

const WORDS: &[&str] = &[
    "contract",
    "liability",
    "court",
    "appeal",
    "tenant",
    "employer",
    "notice",
    "period",
    "damages",
    "clause",
    "statute",
    "decision",
    "claim",
    "deadline",
    "party",
    "evidence",
    "article",
    "regulation",
    "payment",
    "termination",
    "lease",
    "warranty",
    "penalty",
    "ruling",
];

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words)
        .map(|_| *WORDS.choose(rng).expect("word list is non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn doc_id(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{}.{:04}.{}.{}_{}_page_{}",
        rng.gen_range(100..1000),
        rng.gen_range(0..10000),
        ["DOR", "KAR", "GEN", "YRG"][rng.gen_range(0..4)],
        rng.gen_range(2000..2025),
        rng.gen_range(1_500_000_000u64..1_700_000_000),
        rng.gen_range(1..1000),
    )
}

/// Synthetic dataset: every sample cites exactly `refs_per_sample` ids
/// drawn from a shared pool, so unique references are fewer than total
/// ones, and carries shuffled distractor contexts from the same pool.
pub fn generate(opts: &GenOptions) -> Vec<EvalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let k = opts.refs_per_sample.max(1);
    let want = ((opts.samples * k) as f64 * opts.pool_ratio).ceil() as usize;
    let pool_size = want.max(k + opts.distractors);
    let mut pool: Vec<String> = Vec::with_capacity(pool_size);
    let mut seen = HashSet::new();
    while pool.len() < pool_size {
        let id = doc_id(&mut rng);
        if seen.insert(id.clone()) {
            pool.push(id);
        }
    }
    let text_of = |id: &str, rng: &mut ChaCha8Rng| format!("{} ({id})", sentence(rng, 12));
    (0..opts.samples)
        .map(|i| {
            let chosen: Vec<&String> = pool
                .choose_multiple(&mut rng, k + opts.distractors)
                .collect();
            let truth: Vec<String> = chosen[..k].iter().map(|s| s.to_string()).collect();
            let mut contexts: Vec<Context> = chosen
                .iter()
                .map(|id| Context {
                    doc_id: id.to_string(),
                    text: text_of(id, &mut rng),
                })
                .collect();
            contexts.shuffle(&mut rng);
            EvalSample {
                id: format!("s{i:05}"),
                query: format!(
                    "what does the {} say about the {}?",
                    sentence(&mut rng, 1),
                    sentence(&mut rng, 2)
                ),
                contexts,
                truth_ids: truth,
                reference_response: format!("the {} applies", sentence(&mut rng, 6)),
            }
        })
        .collect()
}
