//! Multi-turn evaluation: chat-history construction, model querying, id
//! extraction and scoring.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use guidedec::decoder::{decode, DecodeConfig, MockScripted};
use guidedec::grammar::schema::encode_key;
use guidedec::{
    build_constraint, Backend, BuildError, BuildOptions, Constraint, ConstraintSource, Vocabulary,
};

use crate::client::{ChatClient, ChatRequest, ClientConfig, ClientError, Message, Role};
use crate::dataset::{stats, DatasetStats, EvalSample};
use crate::metrics::{aggregate, EvalResult, MetricsReport};

/// Captures ids written as `(doc_id)ID(/doc_id)` or `<doc_id>ID</doc_id>`.
pub const DEFAULT_ID_PATTERN: &str = r"[(<]doc_id[)>](?P<id>.+?)[(<]/doc_id[)>]";

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a legal research assistant. Answer the query using only the given contexts. \
Cite every document you rely on by writing its id between (doc_id) and (/doc_id) tags, exactly as it appears in the contexts. \
Never cite a document that is not among the contexts.";

pub const DEFAULT_USER_TEMPLATE: &str = "rag ctx: {ctx} query: {q}";
pub const DEFAULT_ASSISTANT_TEMPLATE: &str = "resp: {r} doc ids: {ids}";

/// Structured-answer schema sent to guided backends.
pub const RAG_RESPONSE_SCHEMA: &str = r#"{"type":"object","properties":{"response":{"type":"string"},"document_ids":{"type":"array","items":{"type":"string"}}},"required":["response","document_ids"]}"#;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{need} exemplar(s) needed, {have} available")]
    NotEnoughExemplars { need: usize, have: usize },
    #[error("sample {0:?} cannot be its own exemplar")]
    ExemplarIsSample(String),
    #[error("bad target {0:?}: expected mock:planted[:correct=K][:wrong=W][:every=P], mock:noisy:<seed>, or remote[:<url>]")]
    BadTarget(String),
    #[error("bad id pattern: {0}")]
    BadPattern(#[from] regex::Error),
    #[error("turns must be 0, 1 or 2, got {0}")]
    BadTurns(usize),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn tag(id: &str) -> String {
    format!("(doc_id){id}(/doc_id)")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Templates {
    pub system_prompt: String,
    /// `{ctx}` and `{q}` are substituted.
    pub user: String,
    /// `{r}` and `{ids}` are substituted.
    pub assistant: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            user: DEFAULT_USER_TEMPLATE.into(),
            assistant: DEFAULT_ASSISTANT_TEMPLATE.into(),
        }
    }
}

impl Templates {
    pub fn user_message(&self, s: &EvalSample) -> String {
        let ctx: Vec<String> = s
            .contexts
            .iter()
            .map(|c| format!("{} {}", tag(&c.doc_id), c.text))
            .collect();
        self.user
            .replace("{ctx}", &ctx.join("\n"))
            .replace("{q}", &s.query)
    }

    pub fn assistant_message(&self, response: &str, ids: &[String]) -> String {
        let ids: Vec<String> = ids.iter().map(|i| tag(i)).collect();
        self.assistant
            .replace("{r}", response)
            .replace("{ids}", &ids.join(" "))
    }
}

/// System prompt, one user/assistant pair per exemplar, then the query.
pub fn build_history(
    sample: &EvalSample,
    exemplars: &[&EvalSample],
    n: usize,
    t: &Templates,
) -> Result<Vec<Message>, EvalError> {
    if exemplars.len() < n {
        return Err(EvalError::NotEnoughExemplars {
            need: n,
            have: exemplars.len(),
        });
    }
    let mut out = vec![Message::new(Role::System, t.system_prompt.clone())];
    for e in &exemplars[..n] {
        if e.id == sample.id {
            return Err(EvalError::ExemplarIsSample(e.id.clone()));
        }
        out.push(Message::new(Role::User, t.user_message(e)));
        out.push(Message::new(
            Role::Assistant,
            t.assistant_message(&e.reference_response, &e.truth_ids),
        ));
    }
    out.push(Message::new(Role::User, t.user_message(sample)));
    Ok(out)
}

/// All non-overlapping matches of `pattern`, in order of first occurrence,
/// without duplicates. The id is the named group `id` if present, else the
/// first group, else the whole match.
pub fn extract_ids(text: &str, pattern: &Regex) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for caps in pattern.captures_iter(text) {
        let m = caps
            .name("id")
            .or_else(|| caps.get(1))
            .or_else(|| caps.get(0))
            .expect("group 0 always matches");
        if seen.insert(m.as_str()) {
            out.push(m.as_str().to_string());
        }
    }
    out
}

/// Ids cited by a model answer: the `document_ids` list when the answer is
/// a structured JSON object, followed by tagged ids anywhere in the text.
pub fn extract_response_ids(text: &str, pattern: &Regex) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if let Ok(serde_json::Value::Object(m)) = serde_json::from_str(text.trim()) {
        if let Some(serde_json::Value::Array(ids)) = m.get("document_ids") {
            out.extend(ids.iter().filter_map(|v| v.as_str().map(String::from)));
        }
    }
    out.extend(extract_ids(text, pattern));
    let mut seen = HashSet::new();
    out.retain(|i| seen.insert(i.clone()));
    out
}

/// Which samples serve as exemplars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExemplarMode {
    /// The first `n` samples are the exemplars for every query and are not
    /// scored.
    #[default]
    Leading,
    /// Consecutive groups of `n + 1`: the first `n` are the exemplars for
    /// the last. A dataset of `N` samples scores `N / (n + 1)`.
    Grouped,
}

impl FromStr for ExemplarMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "leading" => Ok(Self::Leading),
            "grouped" => Ok(Self::Grouped),
            _ => Err(format!(
                "unknown exemplar mode {s:?} (expected leading or grouped)"
            )),
        }
    }
}

/// `(scored sample, its exemplars)` by dataset index, in dataset order.
pub fn plan(len: usize, n: usize, mode: ExemplarMode) -> Vec<(usize, Vec<usize>)> {
    match mode {
        ExemplarMode::Leading => (n..len).map(|i| (i, (0..n).collect())).collect(),
        ExemplarMode::Grouped => (0..len / (n + 1))
            .map(|g| {
                let base = g * (n + 1);
                (base + n, (base..base + n).collect())
            })
            .collect(),
    }
}

/// Parameters of the planted responder: each scored sample cites its first
/// `correct` truth ids, and every `every`-th one (counting from the first)
/// also cites `wrong` fabricated ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planted {
    pub correct: usize,
    pub wrong: usize,
    pub every: usize,
}

impl Default for Planted {
    fn default() -> Self {
        Self {
            correct: 1,
            wrong: 0,
            every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Planted(Planted),
    /// Random but seeded citations mixing true, distractor and invented ids.
    Noisy(u64),
    /// OpenAI-compatible server; `None` uses the configured endpoint.
    Remote(Option<String>),
}

impl Target {
    pub fn is_remote(&self) -> bool {
        matches!(self, Target::Remote(_))
    }
}

impl FromStr for Target {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        let bad = || EvalError::BadTarget(s.to_string());
        if s == "remote" {
            return Ok(Target::Remote(None));
        }
        if let Some(url) = s.strip_prefix("remote:") {
            return Ok(Target::Remote(Some(url.to_string())));
        }
        let rest = s.strip_prefix("mock:").ok_or_else(bad)?;
        let mut parts = rest.split(':');
        match parts.next() {
            Some("planted") => {
                let mut p = Planted::default();
                for kv in parts {
                    let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                    let v: usize = v.parse().map_err(|_| bad())?;
                    match k {
                        "correct" => p.correct = v,
                        "wrong" => p.wrong = v,
                        "every" if v > 0 => p.every = v,
                        _ => return Err(bad()),
                    }
                }
                Ok(Target::Planted(p))
            }
            Some("noisy") => {
                let seed = match (parts.next(), parts.next()) {
                    (None, _) => 0,
                    (Some(x), None) => x.parse().map_err(|_| bad())?,
                    _ => return Err(bad()),
                };
                Ok(Target::Noisy(seed))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Planted(p) => write!(
                f,
                "mock:planted:correct={}:wrong={}:every={}",
                p.correct, p.wrong, p.every
            ),
            Target::Noisy(s) => write!(f, "mock:noisy:{s}"),
            Target::Remote(None) => f.write_str("remote"),
            Target::Remote(Some(u)) => write!(f, "remote:{u}"),
        }
    }
}

/// Server-side backend names sent as the guided-decoding hint.
pub fn hint_name(b: Backend) -> Option<&'static str> {
    match b {
        Backend::Fsm => Some("outlines"),
        Backend::Pda => Some("xgrammar"),
        Backend::Enforcer => Some("lm-format-enforcer"),
        Backend::None => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub turns: usize,
    pub target: String,
    pub backend: Backend,
    pub seed: u64,
    pub exemplar_mode: ExemplarMode,
    pub id_pattern: String,
    pub templates: Templates,
    /// Token budget for mock decoding and the remote `max_tokens`.
    pub max_tokens: usize,
    pub model: String,
    pub temperature: Option<f32>,
    pub timeout_secs: u64,
    pub client: ClientConfig,
    /// Worker threads; 0 means one per logical core.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            turns: 0,
            target: "mock:planted".into(),
            backend: Backend::None,
            seed: 0,
            exemplar_mode: ExemplarMode::Leading,
            id_pattern: DEFAULT_ID_PATTERN.into(),
            templates: Templates::default(),
            max_tokens: 2048,
            model: "default".into(),
            temperature: Some(0.0),
            timeout_secs: 120,
            client: ClientConfig::default(),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTiming {
    pub sample_id: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub target: String,
    pub backend: Backend,
    pub turns: usize,
    pub samples: Vec<SampleTiming>,
    pub mean_seconds: f64,
    pub total_seconds: f64,
}

/// The report file: aggregate metrics plus what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metrics: MetricsReport,
    pub target: String,
    pub backend: Backend,
    pub id_pattern: String,
    pub dataset: DatasetStats,
    pub config: EvalConfig,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub results: Vec<EvalResult>,
    pub report: RunReport,
    pub timing: Timing,
}

/// Answers queries without a model: builds the intended answer, then
/// produces it token by token through the real decoder and constraint.
struct MockModel {
    vocab: Arc<Vocabulary>,
    constraint: Constraint,
}

impl MockModel {
    fn new(backend: Backend) -> Result<Self, EvalError> {
        let vocab = Arc::new(Vocabulary::byte_level(&[
            "(doc_id)",
            "(/doc_id)",
            "{\"response\":",
            ",\"document_ids\":[",
            "\",\"",
            "resp: ",
            " doc ids: ",
            "_page_",
        ]));
        let constraint = build_constraint(
            backend,
            &ConstraintSource::JsonSchema(RAG_RESPONSE_SCHEMA.into()),
            vocab.clone(),
            &BuildOptions::default(),
        )?;
        Ok(Self { vocab, constraint })
    }

    fn generate(&self, text: &str, cfg: &DecodeConfig) -> Result<String, String> {
        let script = self
            .vocab
            .greedy_tokenize(text.as_bytes())
            .expect("byte-level vocabulary covers every text");
        let mut src = MockScripted::new(script, 50.0, self.vocab.len(), self.vocab.eos_id());
        let out = decode(&mut src, &self.constraint, cfg).map_err(|e| e.to_string())?;
        Ok(String::from_utf8_lossy(&out.text).into_owned())
    }
}

fn sample_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn fabricated_id(pos: usize, j: usize, truth: &[String]) -> String {
    (0..)
        .map(|k| format!("000.{pos:04}.FAB.2000_{j:010}_page_{k}"))
        .find(|c| !truth.contains(c))
        .expect("unbounded search")
}

/// The ids a mock target cites for the `pos`-th scored sample.
fn mock_citations(target: &Target, s: &EvalSample, pos: usize, seed: u64) -> Vec<String> {
    match target {
        Target::Planted(p) => {
            let mut ids: Vec<String> = s.truth_ids.iter().take(p.correct).cloned().collect();
            if pos.is_multiple_of(p.every) {
                ids.extend((0..p.wrong).map(|j| fabricated_id(pos, j, &s.truth_ids)));
            }
            ids
        }
        Target::Noisy(noise) => {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed ^ noise, &s.id));
            let k = rng.gen_range(0..=s.truth_ids.len());
            let mut ids: Vec<String> = s.truth_ids.choose_multiple(&mut rng, k).cloned().collect();
            let distractors: Vec<&String> = s
                .contexts
                .iter()
                .map(|c| &c.doc_id)
                .filter(|d| !s.truth_ids.contains(d))
                .collect();
            if rng.gen_bool(0.3) {
                if let Some(d) = distractors.choose(&mut rng) {
                    ids.push(d.to_string());
                }
            }
            if rng.gen_bool(0.1) {
                ids.push(fabricated_id(pos, 0, &s.truth_ids));
            }
            ids.shuffle(&mut rng);
            ids
        }
        Target::Remote(_) => unreachable!("remote targets are not mocked"),
    }
}

/// Structured answer text in the exact form the guided backends admit.
pub fn render_structured(response: &str, ids: &[String]) -> String {
    let ids: Vec<String> = ids.iter().map(|i| encode_key(i)).collect();
    format!(
        "{{\"response\":{},\"document_ids\":[{}]}}",
        encode_key(response),
        ids.join(",")
    )
}

enum Responder {
    Mock(MockModel),
    Remote(Arc<ChatClient>),
}

pub fn run_eval(samples: &[EvalSample], cfg: &EvalConfig) -> Result<EvalRun, EvalError> {
    if cfg.turns > 2 {
        return Err(EvalError::BadTurns(cfg.turns));
    }
    let target: Target = cfg.target.parse()?;
    let pattern = Regex::new(&cfg.id_pattern)?;
    let planned = plan(samples.len(), cfg.turns, cfg.exemplar_mode);
    if planned.is_empty() && samples.len() <= cfg.turns {
        return Err(EvalError::NotEnoughExemplars {
            need: cfg.turns,
            have: samples.len().saturating_sub(1),
        });
    }
    let responder = match &target {
        Target::Remote(url) => {
            let mut cc = cfg.client.clone();
            if let Some(u) = url {
                cc.endpoint = u.clone();
            }
            Responder::Remote(Arc::new(ChatClient::new(cc)?))
        }
        _ => Responder::Mock(MockModel::new(cfg.backend)?),
    };
    let schema: serde_json::Value =
        serde_json::from_str(RAG_RESPONSE_SCHEMA).expect("schema constant is JSON");
    let decode_cfg = |i: usize| DecodeConfig {
        backend: cfg.backend,
        max_tokens: cfg.max_tokens,
        seed: sample_seed(cfg.seed, &samples[i].id),
        greedy: true,
        ..Default::default()
    };

    let run_one = |pos: usize, (i, ex): &(usize, Vec<usize>)| -> (EvalResult, f64) {
        let s = &samples[*i];
        let started = Instant::now();
        let exemplars: Vec<&EvalSample> = ex.iter().map(|&j| &samples[j]).collect();
        let history = match build_history(s, &exemplars, cfg.turns, &cfg.templates) {
            Ok(h) => h,
            Err(e) => return (EvalResult::failed(&s.id, &s.truth_ids, e.to_string()), 0.0),
        };
        let answer: Result<String, String> = match &responder {
            Responder::Mock(m) => {
                let ids = mock_citations(&target, s, pos, cfg.seed);
                let text = if cfg.backend == Backend::None {
                    cfg.templates.assistant_message(&s.reference_response, &ids)
                } else {
                    render_structured(&s.reference_response, &ids)
                };
                m.generate(&text, &decode_cfg(*i))
            }
            Responder::Remote(client) => {
                let mut req = ChatRequest::new(cfg.model.clone(), history);
                req.temperature = cfg.temperature;
                req.max_tokens = Some(cfg.max_tokens as u32);
                req.timeout = std::time::Duration::from_secs(cfg.timeout_secs);
                if let Some(h) = hint_name(cfg.backend) {
                    req.response_schema = Some(schema.clone());
                    req.backend_hint = Some(h.to_string());
                }
                client.chat(&req).map(|r| r.text).map_err(|e| e.to_string())
            }
        };
        let secs = started.elapsed().as_secs_f64();
        let result = match answer {
            Ok(text) => {
                let ids = extract_response_ids(&text, &pattern);
                EvalResult::scored(&s.id, &s.truth_ids, ids, text)
            }
            Err(e) => {
                tracing::warn!(sample = %s.id, error = %e, "sample failed");
                EvalResult::failed(&s.id, &s.truth_ids, e)
            }
        };
        (result, secs)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let started = Instant::now();
    let outcomes: Vec<(EvalResult, f64)> = pool.install(|| {
        planned
            .par_iter()
            .enumerate()
            .map(|(pos, p)| run_one(pos, p))
            .collect()
    });
    let total_seconds = started.elapsed().as_secs_f64();

    let (results, secs): (Vec<EvalResult>, Vec<f64>) = outcomes.into_iter().unzip();
    let metrics = aggregate(cfg.turns, &results);
    let dataset = stats(planned.iter().map(|(i, _)| &samples[*i]));
    let target_label = target.to_string();
    let timing = Timing {
        target: target_label.clone(),
        backend: cfg.backend,
        turns: cfg.turns,
        mean_seconds: if secs.is_empty() {
            0.0
        } else {
            secs.iter().sum::<f64>() / secs.len() as f64
        },
        samples: results
            .iter()
            .zip(&secs)
            .map(|(r, &seconds)| SampleTiming {
                sample_id: r.sample_id.clone(),
                seconds,
            })
            .collect(),
        total_seconds,
    };
    let report = RunReport {
        metrics,
        target: target_label,
        backend: cfg.backend,
        id_pattern: cfg.id_pattern.clone(),
        dataset,
        config: cfg.clone(),
    };
    Ok(EvalRun {
        results,
        report,
        timing,
    })
}

pub const RESULTS_FILE: &str = "results.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

pub fn results_jsonl(results: &[EvalResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("result serializes"));
        out.push('\n');
    }
    out
}

/// Writes the results file, the report and the timing file into `dir`.
/// The first two depend only on the dataset and configuration.
pub fn write_run(dir: &Path, run: &EvalRun) -> Result<(), EvalError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESULTS_FILE), results_jsonl(&run.results))?;
    fs::write(
        dir.join(REPORT_FILE),
        serde_json::to_string_pretty(&run.report).expect("report serializes") + "\n",
    )?;
    fs::write(
        dir.join(TIMING_FILE),
        serde_json::to_string_pretty(&run.timing).expect("timing serializes") + "\n",
    )?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<EvalResult>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, Context, GenOptions};

    fn re() -> Regex {
        Regex::new(DEFAULT_ID_PATTERN).unwrap()
    }

    fn sample(id: &str, truth: &[&str]) -> EvalSample {
        EvalSample {
            id: id.into(),
            query: format!("q{id}"),
            contexts: truth
                .iter()
                .map(|t| Context {
                    doc_id: t.to_string(),
                    text: "txt".into(),
                })
                .collect(),
            truth_ids: truth.iter().map(|s| s.to_string()).collect(),
            reference_response: format!("r{id}"),
        }
    }

    #[test]
    fn history_shapes() {
        let t = Templates::default();
        let (a, b, c) = (
            sample("a", &["A"]),
            sample("b", &["B1", "B2"]),
            sample("c", &["C"]),
        );
        let h0 = build_history(&a, &[], 0, &t).unwrap();
        let roles = |h: &[Message]| h.iter().map(|m| m.role).collect::<Vec<_>>();
        assert_eq!(roles(&h0), [Role::System, Role::User]);
        let h2 = build_history(&a, &[&b, &c], 2, &t).unwrap();
        use Role::*;
        assert_eq!(roles(&h2), [System, User, Assistant, User, Assistant, User]);
        assert!(h2[2].content.contains("(doc_id)B1(/doc_id)"));
        assert!(h2[2].content.contains("(doc_id)B2(/doc_id)"));
        assert_eq!(h2[5].content, t.user_message(&a));
        assert!(matches!(
            build_history(&a, &[&b], 2, &t),
            Err(EvalError::NotEnoughExemplars { need: 2, have: 1 })
        ));
        assert!(matches!(
            build_history(&a, &[&a], 1, &t),
            Err(EvalError::ExemplarIsSample(_))
        ));
    }

    #[test]
    fn extraction() {
        let id = "344.0321.DOR.2021_1630505603_page_623";
        assert_eq!(
            extract_ids(&format!("resp: ok doc ids: (doc_id){id}(/doc_id)"), &re()),
            vec![id.to_string()]
        );
        assert_eq!(
            extract_ids(
                "(doc_id)x(/doc_id) and <doc_id>y</doc_id> (doc_id)x(/doc_id)",
                &re()
            ),
            vec!["x".to_string(), "y".to_string()]
        );
        assert!(extract_ids("no tags here", &re()).is_empty());
        let custom = Regex::new(r"\[(\w+)\]").unwrap();
        assert_eq!(extract_ids("[a] [b] [a]", &custom), vec!["a", "b"]);
        let json = r#"{"response":"see (doc_id)z(/doc_id)","document_ids":["a","b","a"]}"#;
        assert_eq!(extract_response_ids(json, &re()), vec!["a", "b", "z"]);
    }

    #[test]
    fn plans() {
        assert_eq!(plan(4, 0, ExemplarMode::Leading).len(), 4);
        assert_eq!(
            plan(4, 2, ExemplarMode::Leading),
            vec![(2, vec![0, 1]), (3, vec![0, 1])]
        );
        assert_eq!(
            plan(7, 2, ExemplarMode::Grouped),
            vec![(2, vec![0, 1]), (5, vec![3, 4])]
        );
        for n in 0..3 {
            assert_eq!(plan(750, n, ExemplarMode::Grouped).len(), 750 / (n + 1));
        }
    }

    #[test]
    fn targets_parse_and_print() {
        for s in [
            "mock:planted:correct=2:wrong=1:every=3",
            "mock:noisy:9",
            "remote",
            "remote:http://127.0.0.1:9/v1",
        ] {
            assert_eq!(s.parse::<Target>().unwrap().to_string(), s);
        }
        assert_eq!(
            "mock:planted".parse::<Target>().unwrap(),
            Target::Planted(Planted::default())
        );
        for bad in [
            "mock:planted:every=0",
            "mock:x",
            "local",
            "mock:planted:k=1",
            "mock:noisy:1:2",
        ] {
            assert!(bad.parse::<Target>().is_err(), "{bad}");
        }
    }

    #[test]
    fn mock_outputs_survive_every_backend() {
        let d = generate(&GenOptions {
            samples: 12,
            seed: 1,
            ..Default::default()
        });
        for backend in [Backend::None, Backend::Fsm, Backend::Pda, Backend::Enforcer] {
            let cfg = EvalConfig {
                target: "mock:planted:correct=2:wrong=1:every=2".into(),
                backend,
                turns: 1,
                jobs: 2,
                ..Default::default()
            };
            let run = run_eval(&d, &cfg).unwrap();
            assert_eq!(run.results.len(), 11);
            assert_eq!(run.report.metrics.failures, 0, "{backend}");
            assert_eq!(run.report.metrics.successes, 5, "{backend}");
            assert_eq!(run.report.metrics.total_fp, 6, "{backend}");
            if backend != Backend::None {
                serde_json::from_str::<serde_json::Value>(&run.results[0].response).unwrap();
            }
        }
    }

    #[test]
    fn structured_rendering_escapes() {
        let s = render_structured("a \"q\"\n", &["x\\y".into()]);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["response"], "a \"q\"\n");
        assert_eq!(v["document_ids"][0], "x\\y");
    }
}
