use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context as _};

use guidedec::decoder::{
    decode, DecodeConfig, DecodeError, FinishReason, LogitSource, MockAdversarial, MockRandom,
};
use guidedec::regex_fsm::FsmIndex;
use guidedec::{build_constraint, Backend, Constraint, ConstraintSource, Vocabulary};
use guidedec_eval::client::{ChatClient, RemoteLogits};
use guidedec_eval::dataset::{generate, load_dataset, stats, to_jsonl};
use guidedec_eval::harness::{run_eval, write_run};
use guidedec_eval::report::{check_consistency, load_runs, render};

use crate::config::{self, RunConfig, CONFIG_FILE};
use crate::{
    Cli, Command, CompileArgs, ConstraintArgs, DecodeArgs, EvalArgs, GenArgs, ReportArgs,
    UsageError,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(l) = cli.log_level {
        cfg.log_level = l;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    init_logging(&cfg.log_level)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .context("starting the worker pool")?;
    match cli.command {
        Command::Compile(a) => compile(cfg, a),
        Command::Decode(a) => decode_cmd(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Report(a) => report(cfg, a),
        Command::GenDataset(a) => gen_dataset(cfg, a),
    }
}

fn init_logging(level: &str) -> anyhow::Result<()> {
    let filter = tracing_subscriber::EnvFilter::try_new(level)
        .map_err(|e| usage(format!("bad log level {level:?}: {e}")))?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
    Ok(())
}

fn apply_constraint_args(cfg: &mut RunConfig, a: ConstraintArgs) {
    let c = &mut cfg.constraint;
    if a.regex.is_some() || a.grammar.is_some() || a.json_schema.is_some() {
        c.regex = a.regex;
        c.grammar = a.grammar;
        c.json_schema = a.json_schema;
        c.index = None;
    }
    if a.backend.is_some() {
        c.backend = a.backend;
    }
    if a.vocab.is_some() {
        c.vocab = a.vocab;
    }
    if let Some(x) = a.pda_cache {
        cfg.pda.cache = x;
    }
    if let Some(x) = a.pda_max_configs {
        cfg.pda.max_configs = x;
    }
}

fn load_source(cfg: &RunConfig) -> anyhow::Result<ConstraintSource> {
    let c = &cfg.constraint;
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    match (&c.regex, &c.grammar, &c.json_schema) {
        (Some(r), None, None) => Ok(ConstraintSource::Regex(r.clone())),
        (None, Some(g), None) => Ok(ConstraintSource::Grammar(read(g)?)),
        (None, None, Some(s)) => Ok(ConstraintSource::JsonSchema(read(s)?)),
        (None, None, None) => Err(usage(
            "one of --regex, --grammar or --json-schema is required",
        )),
        _ => Err(usage(
            "give only one of --regex, --grammar and --json-schema",
        )),
    }
}

/// The backend requested, or the natural one for the constraint kind.
fn backend_for(cfg: &RunConfig, source: &ConstraintSource) -> Backend {
    cfg.constraint.backend.unwrap_or(match source {
        ConstraintSource::Regex(_) => Backend::Fsm,
        _ => Backend::Pda,
    })
}

fn load_vocab(cfg: &RunConfig) -> anyhow::Result<Arc<Vocabulary>> {
    let path = cfg
        .constraint
        .vocab
        .as_ref()
        .ok_or_else(|| usage("--vocab is required"))?;
    let v =
        Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))?;
    Ok(Arc::new(v))
}

fn build(cfg: &RunConfig, vocab: Arc<Vocabulary>) -> anyhow::Result<Constraint> {
    if let Some(index) = &cfg.constraint.index {
        let text =
            fs::read_to_string(index).with_context(|| format!("reading {}", index.display()))?;
        let idx = FsmIndex::from_json(&text, vocab).context("loading compiled index")?;
        return Ok(Constraint::Fsm(Arc::new(idx)));
    }
    let source = load_source(cfg)?;
    let backend = backend_for(cfg, &source);
    let opts = cfg.pda.build_options()?;
    Ok(build_constraint(backend, &source, vocab, &opts)?)
}

/// Where the resolved settings of a run go: inside an output directory,
/// or beside an output file.
fn config_path_for(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join(CONFIG_FILE)
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".config.toml");
        out.with_file_name(name)
    }
}

fn compile(mut cfg: RunConfig, a: CompileArgs) -> anyhow::Result<()> {
    apply_constraint_args(&mut cfg, a.constraint);
    if a.out.is_some() {
        cfg.out = a.out;
    }
    let out = cfg.out.clone().ok_or_else(|| usage("--out is required"))?;
    let vocab = load_vocab(&cfg)?;
    let constraint = build(&cfg, vocab.clone())?;
    let text = match &constraint {
        Constraint::Fsm(idx) => idx.to_json(),
        Constraint::Pda(e) => serde_json::json!({
            "backend": "pda",
            "vocab_size": vocab.len(),
            "grammar": e.grammar().to_string(),
        })
        .to_string(),
        other => serde_json::json!({
            "backend": other.backend().as_str(),
            "vocab_size": vocab.len(),
            "source": load_source(&cfg)?.kind(),
        })
        .to_string(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    config::write_resolved(&cfg, &config_path_for(&out, false))?;
    println!(
        "{}",
        serde_json::json!({"backend": constraint.backend().as_str(), "out": out})
    );
    Ok(())
}

fn make_source(
    cfg: &RunConfig,
    spec: &str,
    constraint: &Constraint,
    vocab_len: usize,
) -> anyhow::Result<Box<dyn LogitSource>> {
    if let Some(url) = spec.strip_prefix("remote:") {
        let client = ChatClient::new(cfg.eval.settings.client.clone())?;
        return Ok(Box::new(RemoteLogits::new(Arc::new(client), url)));
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        usage(format!(
        "bad source {spec:?}: expected mock:random:<seed>, mock:adversarial:<seed> or remote:<url>"
    ))
    };
    let (kind, seed) = match parts.as_slice() {
        ["mock", kind] => (*kind, 0),
        ["mock", kind, seed] => (*kind, seed.parse::<u64>().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    match kind {
        "random" => Ok(Box::new(MockRandom::new(seed, vocab_len))),
        "adversarial" => Ok(Box::new(MockAdversarial::against(seed, constraint.clone()))),
        _ => Err(bad()),
    }
}

fn decode_cmd(mut cfg: RunConfig, a: DecodeArgs) -> anyhow::Result<()> {
    apply_constraint_args(&mut cfg, a.constraint);
    if a.index.is_some() {
        cfg.constraint.index = a.index;
        cfg.constraint.regex = None;
        cfg.constraint.grammar = None;
        cfg.constraint.json_schema = None;
    }
    let d = &mut cfg.decode;
    if let Some(s) = a.source {
        d.source = s;
    }
    if let Some(n) = a.max_tokens {
        d.max_tokens = n;
    }
    if let Some(s) = a.seed {
        d.seed = s;
    }
    if let Some(t) = a.temperature {
        d.temperature = t;
    }
    d.greedy |= a.greedy;
    if a.out.is_some() {
        cfg.out = a.out;
    }

    let vocab = load_vocab(&cfg)?;
    let constraint = build(&cfg, vocab.clone())?;
    let dcfg = DecodeConfig {
        backend: constraint.backend(),
        max_tokens: cfg.decode.max_tokens,
        temperature: cfg.decode.temperature,
        seed: cfg.decode.seed,
        greedy: cfg.decode.greedy,
    };
    dcfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut source = make_source(&cfg, &cfg.decode.source, &constraint, vocab.len())?;
    let (tokens, text, finish, steps) = match decode(&mut source, &constraint, &dcfg) {
        Ok(o) => {
            let steps = o.mask_popcounts.len();
            (o.token_ids, o.text, o.finish_reason, steps)
        }
        Err(DecodeError::DeadEnd { prefix, text }) => {
            let steps = prefix.len() + 1;
            (prefix, text, FinishReason::DeadEnd, steps)
        }
        Err(e) => return Err(e.into()),
    };
    let out = serde_json::json!({
        "text": String::from_utf8_lossy(&text),
        "token_ids": tokens,
        "finish_reason": finish,
        "steps": steps,
    });
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("decode.json"), format!("{out}\n"))?;
        config::write_resolved(&cfg, &config_path_for(dir, true))?;
    }
    println!("{out}");
    Ok(())
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> anyhow::Result<()> {
    let e = &mut cfg.eval;
    let s = &mut e.settings;
    if a.dataset.is_some() {
        e.dataset = a.dataset;
    }
    if a.system_prompt_file.is_some() {
        e.system_prompt_file = a.system_prompt_file;
    }
    if let Some(t) = a.turns {
        s.turns = t as usize;
    }
    if let Some(t) = a.target {
        s.target = t;
    }
    if let Some(b) = a.backend {
        s.backend = b;
    }
    if let Some(x) = a.seed {
        s.seed = x;
    }
    if let Some(m) = a.exemplars {
        s.exemplar_mode = m;
    }
    if let Some(p) = a.id_pattern {
        s.id_pattern = p;
    }
    if let Some(m) = a.model {
        s.model = m;
    }
    if let Some(u) = a.endpoint {
        s.client.endpoint = u;
    }
    if let Some(v) = a.api_key_env {
        s.client.api_key_env = v;
    }
    if let Some(h) = a.hint_field {
        s.client.hint_field = h;
    }
    if let Some(r) = a.max_retries {
        s.client.max_retries = r;
    }
    if let Some(n) = a.max_in_flight {
        s.client.max_in_flight = n;
    }
    if let Some(n) = a.max_tokens {
        s.max_tokens = n;
    }
    if a.temperature.is_some() {
        s.temperature = a.temperature;
    }
    if let Some(t) = a.timeout_secs {
        s.timeout_secs = t;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    if let Some(p) = &cfg.eval.system_prompt_file {
        cfg.eval.settings.templates.system_prompt =
            fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.eval.system_prompt_file = None;
    }
    cfg.eval.settings.jobs = cfg.jobs;

    let out = cfg.out.clone().ok_or_else(|| usage("--out is required"))?;
    let path = cfg
        .eval
        .dataset
        .clone()
        .ok_or_else(|| usage("--dataset is required"))?;
    if cfg.eval.settings.turns > 2 {
        return Err(usage("--turns must be 0, 1 or 2"));
    }
    cfg.eval
        .settings
        .target
        .parse::<guidedec_eval::Target>()
        .map_err(|e| usage(e.to_string()))?;
    let samples = load_dataset(&path)?;
    let run = run_eval(&samples, &cfg.eval.settings)?;
    write_run(&out, &run)?;
    config::write_resolved(&cfg, &config_path_for(&out, true))?;
    let m = &run.report.metrics;
    tracing::info!(samples = m.samples, failures = m.failures, "eval finished");
    println!("{}", serde_json::to_string(m)?);
    Ok(())
}

fn report(cfg: RunConfig, a: ReportArgs) -> anyhow::Result<()> {
    let runs = load_runs(&a.input)?;
    for r in &runs {
        check_consistency(r)?;
    }
    let mut text = render(&runs);
    text.push_str(
        "\nFigures come only from the runs listed above. Published latency and absolute \
         false-positive tables are not reproduced, since they depend on served models and \
         data that are not part of this tool.\n",
    );
    if let Some(dir) = a.out.or(cfg.out.clone()) {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.md"), &text)?;
        let mut cfg = cfg;
        cfg.out = Some(dir.clone());
        config::write_resolved(&cfg, &config_path_for(&dir, true))?;
    }
    print!("{text}");
    Ok(())
}

fn gen_dataset(mut cfg: RunConfig, a: GenArgs) -> anyhow::Result<()> {
    let g = &mut cfg.gen;
    if let Some(n) = a.samples {
        g.samples = n;
    }
    if let Some(k) = a.refs_per_sample {
        g.refs_per_sample = k;
    }
    if let Some(d) = a.distractors {
        g.distractors = d;
    }
    if let Some(r) = a.pool_ratio {
        g.pool_ratio = r;
    }
    if let Some(s) = a.seed {
        g.seed = s;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    if cfg.gen.refs_per_sample == 0 {
        bail!(usage("--refs-per-sample must be at least 1"));
    }
    if !(cfg.gen.pool_ratio > 0.0 && cfg.gen.pool_ratio.is_finite()) {
        bail!(usage("--pool-ratio must be positive"));
    }
    let samples = generate(&cfg.gen);
    match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("dataset.jsonl"), to_jsonl(&samples))?;
            config::write_resolved(&cfg, &config_path_for(dir, true))?;
            println!("{}", serde_json::to_string(&stats(&samples))?);
        }
        None => print!("{}", to_jsonl(&samples)),
    }
    Ok(())
}
