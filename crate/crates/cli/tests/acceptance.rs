//! Acceptance checks. Runs without the test harness so every criterion
//! prints exactly one PASS/FAIL line, and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use guidedec::decoder::{
    decode, DecodeConfig, FinishReason, LogitSource, MockAdversarial, MockRandom, SourceError,
};
use guidedec::enforcer::FormatEnforcer;
use guidedec::grammar::schema::{parse_schema_str, schema_to_grammar, schema_to_regex};
use guidedec::grammar::{parse_grammar, JSON_GRAMMAR};
use guidedec::pda::{CacheCapacity, PdaEngine, PdaOptions};
use guidedec::regex_fsm::{build_index, compile_regex};
use guidedec::{
    build::regex_grammar, build_constraint, Backend, BuildOptions, Constraint, ConstraintSource,
    Guide, TokenId, Vocabulary,
};
use guidedec_eval::client::{ChatClient, ChatRequest, ClientConfig, ClientError, Message, Role};
use guidedec_eval::dataset::{generate, write_dataset, GenOptions};
use guidedec_eval::harness::{run_eval, EvalConfig, ExemplarMode, RAG_RESPONSE_SCHEMA};
use guidedec_eval::metrics::{ratio, ratio_str};
use guidedec_eval::{eval_sample, EvalResult};
use guidedec_testkit::gen::random_regex;
use guidedec_testkit::{
    audit_decode, count_violations, json_vocab, schema_oracle, synthetic_vocab, validate_document,
    GrammarOracle, HoldEos, Oracle, RegexOracle, StubServer, RAG_SCHEMA,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Audits `runs` decodes of `guide` and returns the number of steps checked.
fn audit<G: Guide, O: Oracle>(
    guide: &G,
    oracle: &O,
    runs: u64,
    max: usize,
    what: &str,
) -> Result<usize, String> {
    let mut steps = 0;
    for seed in 0..runs {
        let cfg = DecodeConfig {
            seed,
            max_tokens: max,
            ..Default::default()
        };
        let mut src = HoldEos {
            inner: MockRandom::new(seed, guide.vocab().len()),
            eos: guide.vocab().eos_id(),
            hold: max * 3 / 4,
        };
        let a = audit_decode(guide, oracle, &mut src, &cfg);
        steps += a.steps;
        if let Some(d) = a.discrepancies.first() {
            return Err(format!(
                "{what} seed {seed} step {} after {:?}",
                d.step,
                String::from_utf8_lossy(&d.prefix)
            ));
        }
    }
    Ok(steps)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut steps = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut alphabet = b"abc01xz-".to_vec();
    alphabet.extend("é".as_bytes());
    for i in 0..20u64 {
        let p = random_regex(&mut rng, b"abc01");
        let v = Arc::new(synthetic_vocab(
            i,
            [64, 128, 256][i as usize % 3],
            &alphabet,
            &[],
        ));
        let o = RegexOracle::new(&p).map_err(|e| format!("oracle for {p}: {e}"))?;
        let fsm = build_index(compile_regex(&p).map_err(|e| e.to_string())?, v.clone());
        steps += audit(&fsm, &o, 3, 24, &format!("fsm {p}"))?;
        let pda = PdaEngine::new(
            &regex_grammar(&p).map_err(|e| e.to_string())?,
            v,
            PdaOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        steps += audit(&pda, &o, 3, 24, &format!("pda {p}"))?;
    }
    let g = parse_grammar(JSON_GRAMMAR).map_err(|e| e.to_string())?;
    let go = GrammarOracle::new(&g)?;
    let schema_json: serde_json::Value = serde_json::from_str(RAG_SCHEMA).unwrap();
    let schema = parse_schema_str(RAG_SCHEMA).map_err(|e| e.to_string())?;
    let so = schema_oracle(&schema_json);
    for (i, size) in [64, 128, 256].into_iter().enumerate() {
        let v = Arc::new(json_vocab(30 + i as u64, size));
        let pda =
            PdaEngine::new(&g, v.clone(), PdaOptions::default()).map_err(|e| e.to_string())?;
        steps += audit(&pda, &go, 8, 40, "json grammar pda")?;
        let fsm = build_index(
            compile_regex(&schema_to_regex(&schema)).map_err(|e| e.to_string())?,
            v.clone(),
        );
        steps += audit(&fsm, &so, 4, 48, "schema fsm")?;
        let spda = PdaEngine::new(
            &schema_to_grammar(&schema),
            v.clone(),
            PdaOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        steps += audit(&spda, &so, 4, 48, "schema pda")?;
        steps += audit(
            &FormatEnforcer::new(&schema, v),
            &so,
            4,
            48,
            "schema enforcer",
        )?;
    }
    let took = t0.elapsed();
    ensure(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!(
        "{steps} masks equal the oracle's in {:.1}s",
        took.as_secs_f64()
    ))
}

/// Scores eos at +inf once `after` tokens are out, so the decode ends as
/// soon as the constraint permits it; everything else stays adversarial.
struct CloseWhenAllowed<S> {
    inner: S,
    eos: TokenId,
    after: usize,
}

impl<S: LogitSource> LogitSource for CloseWhenAllowed<S> {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        let mut s = self.inner.scores(history)?;
        if history.len() >= self.after {
            s[self.eos as usize] = f32::INFINITY;
        }
        Ok(s)
    }
}

fn criterion_2() -> Outcome {
    let schema: serde_json::Value = serde_json::from_str(RAG_SCHEMA).unwrap();
    let oracle = schema_oracle(&schema);
    let v = Arc::new(json_vocab(8, 128));
    let src = ConstraintSource::JsonSchema(RAG_SCHEMA.into());
    let mut summary = Vec::new();
    for b in Backend::CONSTRAINED {
        let c = build_constraint(b, &src, v.clone(), &BuildOptions::default())
            .map_err(|e| e.to_string())?;
        let (mut violations, mut valid, mut unfinished) = (0, 0, 0);
        for seed in 0..1000u64 {
            let cfg = DecodeConfig {
                backend: b,
                seed,
                max_tokens: 2000,
                ..Default::default()
            };
            let mut adv = CloseWhenAllowed {
                inner: MockAdversarial::against(seed, c.clone()),
                eos: v.eos_id(),
                after: 24,
            };
            let out = decode(&mut adv, &c, &cfg).map_err(|e| format!("{b} seed {seed}: {e}"))?;
            let eos = out.finish_reason == FinishReason::Eos;
            violations += count_violations(&oracle, &v, &out.token_ids, eos);
            if !eos {
                unfinished += 1;
            } else if validate_document(&schema, &out.text).is_ok() {
                valid += 1;
            }
        }
        ensure(violations == 0 && valid == 1000, || {
            format!("{b}: {violations} violations, {valid}/1000 valid, {unfinished} unfinished")
        })?;
        summary.push(format!("{b} 1000/1000"));
    }
    Ok(format!(
        "0 violations, valid outputs: {}",
        summary.join(", ")
    ))
}

fn criterion_3() -> Outcome {
    let ids = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let truth = ids(&["a", "b"]);
    // (response ids, success, hallucination)
    let table: [(&[&str], bool, bool); 6] = [
        (&[], false, false),
        (&["a"], true, false),
        (&["a", "b"], true, false),
        (&["z"], false, true),
        (&["a", "z"], false, true),
        (&["b", "y", "z"], false, true),
    ];
    for (resp, success, hall) in table {
        let v = eval_sample(&truth, &ids(resp));
        ensure(v.success == success && v.hallucination == hall, || {
            format!(
                "{resp:?}: got success={} hallucination={}",
                v.success, v.hallucination
            )
        })?;
        let r = EvalResult::scored("s", &truth, ids(resp), String::new());
        ensure(!(r.success && r.hallucination), || {
            format!("{resp:?} is both")
        })?;
        ensure(r.corr.len() + r.fp.len() == r.resp_ids.len(), || {
            format!("{resp:?}: corr+fp != resp")
        })?;
    }
    Ok("6 rows of the truth table hold".into())
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let d = generate(&GenOptions {
        samples: 750,
        refs_per_sample: 2,
        seed: 4,
        ..Default::default()
    });
    // (cited, wrong, every) -> exact rates over s scored samples with k=2.
    let plants = [(1u64, 0u64, 1u64), (2, 1, 3), (0, 2, 5), (1, 1, 1)];
    let mut checked = 0;
    for turns in 0..3usize {
        let s = [750u64, 375, 250][turns];
        for (c, w, p) in plants {
            let injected = if w > 0 { s.div_ceil(p) } else { 0 };
            let success = if c > 0 { s - injected } else { 0 };
            let fp = injected * w;
            let want = [
                ratio_str(ratio(success as usize, s as usize)),
                ratio_str(ratio(injected as usize, s as usize)),
                ratio_str(ratio(fp as usize, (s * c + fp) as usize)),
            ];
            for backend in [Backend::None, Backend::Fsm, Backend::Pda, Backend::Enforcer] {
                let cfg = EvalConfig {
                    turns,
                    backend,
                    exemplar_mode: ExemplarMode::Grouped,
                    target: format!("mock:planted:correct={c}:wrong={w}:every={p}"),
                    ..Default::default()
                };
                let m = run_eval(&d, &cfg)
                    .map_err(|e| e.to_string())?
                    .report
                    .metrics;
                let got = [
                    m.exact.success_rate.clone(),
                    m.exact.hallucination_rate.clone(),
                    m.exact.fp_reference_rate.clone(),
                ];
                ensure(m.samples as u64 == s && got == want, || {
                    format!("turns {turns} {backend} c={c} w={w} p={p}: {} samples, {got:?} != {want:?}", m.samples)
                })?;
                checked += 1;
            }
        }
    }
    let took = t0.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!(
        "{checked} runs over 750/375/250 samples exact in {:.1}s",
        took.as_secs_f64()
    ))
}

fn criterion_5() -> Outcome {
    let pattern = r"[a-z]+(-[a-z0-9]+)*(\.[0-9]+)?";
    let fsm = compile_regex(pattern).map_err(|e| e.to_string())?;
    let mut per_lookup = Vec::new();
    for size in [100, 1000, 10000] {
        let v = Arc::new(synthetic_vocab(
            5,
            size,
            b"abcdefghijklmnopqrstuvwxyz0123456789-.",
            &[],
        ));
        let idx = build_index(fsm.clone(), v);
        let states: Vec<_> = (0..idx.num_states() as u32)
            .map(|s| idx.state_for(s))
            .collect();
        let lookups = 400_000;
        let mut best = f64::INFINITY;
        for _ in 0..7 {
            let t = Instant::now();
            let mut acc = 0usize;
            for i in 0..lookups {
                let m = idx
                    .mask(&states[i % states.len()])
                    .map_err(|e| e.to_string())?;
                acc = acc.wrapping_add(Arc::as_ptr(&m) as usize);
            }
            std::hint::black_box(acc);
            best = best.min(t.elapsed().as_secs_f64() / lookups as f64);
        }
        per_lookup.push(best);
    }
    let lo = per_lookup.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = per_lookup.iter().cloned().fold(0.0, f64::max);
    let ns: Vec<String> = per_lookup
        .iter()
        .map(|s| format!("{:.1}ns", s * 1e9))
        .collect();
    ensure(hi <= 2.0 * lo, || {
        format!("lookup times {ns:?} differ by more than 2x")
    })?;
    Ok(format!(
        "lookup per step at |V| 100/1000/10000: {}",
        ns.join(" / ")
    ))
}

fn criterion_6() -> Outcome {
    // Nested arrays 500 deep and back: 1000 tokens, one character each.
    let chars: Vec<String> = "[]0,".chars().map(String::from).collect();
    let v = Arc::new(
        Vocabulary::from_strs(&[&chars[..], &["<eos>".to_string()]].concat(), 4)
            .map_err(|e| e.to_string())?,
    );
    let g = parse_grammar(JSON_GRAMMAR).map_err(|e| e.to_string())?;
    let opts = PdaOptions {
        cache: CacheCapacity::Unbounded,
        ..Default::default()
    };
    let e = PdaEngine::new(&g, v.clone(), opts).map_err(|e| e.to_string())?;
    let tokens: Vec<TokenId> = std::iter::repeat_n(0, 500)
        .chain(std::iter::repeat_n(1, 500))
        .collect();
    let n = tokens.len();

    let mut best_linear = f64::INFINITY;
    let mut best_branch = f64::INFINITY;
    let mut kept = Vec::new();
    for _ in 0..5 {
        let t = Instant::now();
        let mut s = e.start();
        for &tok in &tokens {
            s = e.advance(&s, tok).map_err(|e| e.to_string())?;
        }
        std::hint::black_box(&s);
        best_linear = best_linear.min(t.elapsed().as_secs_f64());

        let t = Instant::now();
        let mut family = Vec::with_capacity(n + 1);
        family.push(e.start());
        for &tok in &tokens {
            let b = e.branch(family.last().unwrap());
            family.push(e.advance(&b, tok).map_err(|e| e.to_string())?);
        }
        best_branch = best_branch.min(t.elapsed().as_secs_f64());
        kept = family;
    }
    let ratio = best_branch / best_linear;
    ensure(ratio <= 10.0, || {
        format!("branching cost {ratio:.2}x linear")
    })?;

    let fresh = PdaEngine::new(
        &g,
        v,
        PdaOptions {
            cache: CacheCapacity::Disabled,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let mut r = fresh.start();
    for (i, s) in kept.iter().enumerate() {
        if i > 0 {
            r = fresh
                .advance(&r, tokens[i - 1])
                .map_err(|e| e.to_string())?;
        }
        let a = e.mask(s).map_err(|e| e.to_string())?;
        let b = fresh.mask(&r).map_err(|e| e.to_string())?;
        ensure(a == b, || {
            format!("branch {i} mask differs from its replay")
        })?;
    }
    ensure(
        kept.last()
            .map(|s| e.mask(s).map(|m| m.contains(e.vocab().eos_id())))
            == Some(Ok(true)),
        || "the nested document is not complete".into(),
    )?;
    Ok(format!(
        "{n} branches cost {ratio:.2}x linear advances, all {} masks equal replay",
        kept.len()
    ))
}

fn criterion_7() -> Outcome {
    let v = Arc::new(json_vocab(11, 200));
    let sources = [
        ConstraintSource::Grammar(JSON_GRAMMAR.into()),
        ConstraintSource::JsonSchema(RAG_SCHEMA.into()),
    ];
    let mut traces = 0;
    for src in &sources {
        let engines: Vec<Constraint> = [
            CacheCapacity::Disabled,
            CacheCapacity::Bounded(1),
            CacheCapacity::Unbounded,
        ]
        .into_iter()
        .map(|cache| {
            let opts = BuildOptions {
                pda: PdaOptions {
                    cache,
                    ..Default::default()
                },
                ..Default::default()
            };
            build_constraint(Backend::Pda, src, v.clone(), &opts)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
        for seed in 0..20 {
            let cfg = DecodeConfig {
                backend: Backend::Pda,
                seed,
                max_tokens: 150,
                ..Default::default()
            };
            let outs: Vec<String> = engines
                .iter()
                .map(
                    |c| match decode(&mut MockRandom::new(seed, v.len()), c, &cfg) {
                        Ok(o) => format!("{} {:?}", serde_json::to_string(&o).unwrap(), o.text),
                        Err(e) => format!("{e:?}"),
                    },
                )
                .collect();
            ensure(outs[0] == outs[1] && outs[0] == outs[2], || {
                format!("seed {seed}: traces differ")
            })?;
            traces += 1;
        }
    }
    Ok(format!(
        "{traces} traces byte-identical under cache 0, 1 and unbounded"
    ))
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../eval/tests/fixtures")
            .join(name),
    )
    .unwrap()
}

fn criterion_8() -> Outcome {
    let id = "344.0321.DOR.2021_1630505603_page_623";
    let mut plain = ChatRequest::new(
        "Qwen2.5-72B-Instruct",
        vec![
            Message::new(Role::System, "Cite documents as (doc_id)ID(/doc_id)."),
            Message::new(
                Role::User,
                format!(
                    "rag ctx: (doc_id){id}(/doc_id) Notice periods apply. query: what applies?"
                ),
            ),
            Message::new(
                Role::Assistant,
                format!("resp: notice periods doc ids: (doc_id){id}(/doc_id)"),
            ),
        ],
    );
    plain.temperature = Some(0.0);
    plain.max_tokens = Some(256);
    ensure(
        plain.to_wire("guided_decoding_backend") == fixture("chat_exemplar.request.json"),
        || "exemplar request differs from its golden file".into(),
    )?;

    let mut guided = ChatRequest::new(
        "Llama-3.3-70B-Instruct",
        vec![
            Message::new(Role::System, "Answer in JSON."),
            Message::new(Role::User, "rag ctx: (doc_id)A(/doc_id) first query: q1"),
            Message::new(Role::Assistant, r#"{"response":"r1","document_ids":["A"]}"#),
            Message::new(
                Role::User,
                "rag ctx: (doc_id)B(/doc_id) second \"quoted\"\nline query: q2",
            ),
        ],
    );
    guided.temperature = Some(0.7);
    guided.max_tokens = Some(512);
    guided.response_schema = Some(serde_json::from_str(RAG_RESPONSE_SCHEMA).unwrap());
    guided.backend_hint = Some("xgrammar".into());
    ensure(
        guided.to_wire("guided_decoding_backend") == fixture("chat_guided.request.json"),
        || "guided request differs from its golden file".into(),
    )?;

    let stub = StubServer::fixed(400, fixture("schema_rejected.response.json"));
    let client = ChatClient::new(ClientConfig {
        endpoint: format!("{}/v1", stub.url),
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    match client.chat(&guided) {
        Err(ClientError::SchemaRejected { status: 400, .. }) => {}
        other => return Err(format!("400 gave {other:?}")),
    }
    ensure(stub.requests().len() == 1, || {
        format!("{} requests for a 400", stub.requests().len())
    })?;
    Ok("2 golden requests match; 400 maps to SchemaRejected without retry".into())
}

fn guidedec(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_guidedec"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "guidedec {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let data = root.join("data.jsonl");
    write_dataset(
        &data,
        &generate(&GenOptions {
            samples: 60,
            seed: 9,
            ..Default::default()
        }),
    )
    .map_err(|e| e.to_string())?;
    let data = data.to_string_lossy().into_owned();
    let models = ["mock:planted:wrong=1:every=4", "mock:noisy:3"];
    for (m, model) in models.iter().enumerate() {
        for turns in ["0", "1", "2"] {
            for backend in ["fsm", "pda", "enforcer"] {
                let out = root.join("runs").join(format!("m{m}-t{turns}-{backend}"));
                guidedec(&[
                    "eval",
                    "--dataset",
                    &data,
                    "--turns",
                    turns,
                    "--backend",
                    backend,
                    "--target",
                    model,
                    "--exemplars",
                    "grouped",
                    "--out",
                    &out.to_string_lossy(),
                ])?;
            }
        }
    }
    let runs = root.join("runs").to_string_lossy().into_owned();
    let md = guidedec(&["report", "--in", &runs])?;
    let header = "| Model | Turns | fsm | pda | enforcer |";
    ensure(md.matches(header).count() == 3, || {
        format!("expected 3 comparison tables:\n{md}")
    })?;
    for model in ["mock:planted:correct=1:wrong=1:every=4", "mock:noisy:3"] {
        for label in ["0-Turn", "1-Turn", "2-Turns"] {
            let row = format!("| {model} | {label} |");
            ensure(md.matches(&row).count() == 3, || {
                format!("row {row} missing:\n{md}")
            })?;
        }
    }
    ensure(
        md.contains("| Backend | mock:noisy:3 | mock:planted:correct=1:wrong=1:every=4 |")
            || md.contains("| Backend | mock:planted:correct=1:wrong=1:every=4 | mock:noisy:3 |"),
        || format!("timing table missing:\n{md}"),
    )?;
    ensure(!md.contains(" - |"), || format!("empty cells:\n{md}"))?;

    let readme_path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let readme = std::fs::read_to_string(&readme_path)
        .map_err(|e| format!("README: {e}"))?
        .to_lowercase();
    ensure(
        readme.contains("not reproduced")
            && readme.contains("latency")
            && readme.contains("false-positive"),
        || {
            "README does not state that latency and absolute false-positive figures are not reproduced".into()
        },
    )?;
    Ok(
        "18 mock runs render 3 rate tables and a timing table; README notes non-reproduction"
            .into(),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("mask equivalence with oracles", criterion_1),
        ("adversarial sources cannot break constraints", criterion_2),
        ("success/hallucination truth table", criterion_3),
        ("planted metrics are exact", criterion_4),
        ("fsm lookup is independent of vocabulary size", criterion_5),
        ("persistent branching", criterion_6),
        ("cache capacity never changes a trace", criterion_7),
        ("wire format and schema rejection", criterion_8),
        ("comparison report shape", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
