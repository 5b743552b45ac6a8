use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use guidedec::Vocabulary;
use guidedec_testkit::stub::closed_port_url;

fn guidedec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guidedec"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn digit_vocab(dir: &Path) -> String {
    let v = Vocabulary::from_strs(&["0", "1", "7", "42", "x", "</s>"], 5).unwrap();
    let path = dir.join("vocab.json");
    v.write(&path).unwrap();
    p(&path)
}

fn dataset(dir: &Path, samples: &str) -> String {
    let out = guidedec(&[
        "gen-dataset",
        "--samples",
        samples,
        "--seed",
        "3",
        "--out",
        &p(dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    p(&dir.join("dataset.jsonl"))
}

#[test]
fn decode_smoke_path() {
    let tmp = tempfile::tempdir().unwrap();
    let vocab = digit_vocab(tmp.path());
    let out = guidedec(&[
        "decode",
        "--backend",
        "fsm",
        "--regex",
        "[0-9]+",
        "--vocab",
        &vocab,
        "--source",
        "mock:random:7",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let text = v["text"].as_str().unwrap();
    assert!(
        !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit()),
        "{text:?}"
    );
    assert!(v["token_ids"].is_array());
    assert!(["eos", "max_tokens"].contains(&v["finish_reason"].as_str().unwrap()));
}

#[test]
fn compiled_index_decodes_like_the_regex() {
    let tmp = tempfile::tempdir().unwrap();
    let vocab = digit_vocab(tmp.path());
    let index = p(&tmp.path().join("digits.index.json"));
    let c = guidedec(&[
        "compile",
        "--backend",
        "fsm",
        "--regex",
        "[0-9]+",
        "--vocab",
        &vocab,
        "--out",
        &index,
    ]);
    assert!(c.status.success(), "{}", stderr(&c));
    let direct = guidedec(&[
        "decode",
        "--regex",
        "[0-9]+",
        "--vocab",
        &vocab,
        "--source",
        "mock:adversarial:2",
    ]);
    let via = guidedec(&[
        "decode",
        "--index",
        &index,
        "--vocab",
        &vocab,
        "--source",
        "mock:adversarial:2",
    ]);
    assert!(via.status.success(), "{}", stderr(&via));
    assert_eq!(stdout(&direct), stdout(&via));
}

#[test]
fn usage_errors_exit_with_one() {
    let out = guidedec(&["decode", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));

    let out = guidedec(&["--json-errors", "decode", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(v["error"]["kind"], "usage");
    assert_eq!(v["error"]["exit_code"], 1);

    let out = guidedec(&["eval", "--target", "mock:planted"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    assert_eq!(guidedec(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two() {
    let out = guidedec(&[
        "--json-errors",
        "decode",
        "--regex",
        "a",
        "--vocab",
        "/definitely/missing.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(v["error"]["kind"], "runtime");
    assert!(v["error"]["message"]
        .as_str()
        .unwrap()
        .contains("missing.json"));
}

#[test]
fn unreachable_remote_is_recorded_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), "4");
    let run = tmp.path().join("run");
    let out = guidedec(&[
        "eval",
        "--dataset",
        &data,
        "--backend",
        "pda",
        "--target",
        "remote",
        "--endpoint",
        &closed_port_url(),
        "--max-retries",
        "0",
        "--out",
        &p(&run),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["failures"], 4);
    assert_eq!(report["metrics"]["samples"], 4);
    let results = fs::read_to_string(run.join("results.jsonl")).unwrap();
    assert!(results.lines().all(|l| l.contains("\"error\"")));
}

#[test]
fn flags_override_the_config_and_the_resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), "40");
    let cfg = tmp.path().join("settings.toml");
    fs::write(
        &cfg,
        format!(
            "[eval]\ndataset = {data:?}\n\n[eval.settings]\nturns = 2\ntarget = \"mock:noisy:1\"\nbackend = \"fsm\"\nseed = 5\n"
        ),
    )
    .unwrap();
    let a = tmp.path().join("a");
    let out = guidedec(&[
        "--config",
        &p(&cfg),
        "eval",
        "--turns",
        "1",
        "--backend",
        "enforcer",
        "--out",
        &p(&a),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resolved = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(resolved.contains("turns = 1"), "{resolved}");
    assert!(resolved.contains("backend = \"enforcer\""), "{resolved}");
    assert!(resolved.contains("seed = 5"), "{resolved}");
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["samples"], 39);

    let b = tmp.path().join("b");
    let out = guidedec(&[
        "--config",
        &p(&a.join("config.toml")),
        "eval",
        "--out",
        &p(&b),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(a.join("results.jsonl")).unwrap(),
        fs::read(b.join("results.jsonl")).unwrap()
    );
    let rb: serde_json::Value =
        serde_json::from_slice(&fs::read(b.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"], rb["metrics"]);
}

#[test]
fn credentials_in_config_files_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("settings.toml");
    fs::write(
        &cfg,
        "[eval.settings.client]\napi_key = \"sk-not-a-real-key\"\n",
    )
    .unwrap();
    let out = guidedec(&["--config", &p(&cfg), "gen-dataset", "--samples", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("environment variable"),
        "{}",
        stderr(&out)
    );
    assert!(!stderr(&out).contains("sk-not-a-real-key"));
}

#[test]
fn gen_dataset_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = guidedec(&["gen-dataset", "--samples", "3", "--seed", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 3);

    let data = dataset(tmp.path(), "30");
    for backend in ["fsm", "pda", "enforcer"] {
        let run = tmp.path().join("runs").join(backend);
        let out = guidedec(&[
            "eval",
            "--dataset",
            &data,
            "--backend",
            backend,
            "--target",
            "mock:planted",
            "--out",
            &p(&run),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let rep = tmp.path().join("rep");
    let out = guidedec(&[
        "report",
        "--in",
        &p(&tmp.path().join("runs")),
        "--out",
        &p(&rep),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let md = stdout(&out);
    assert!(
        md.contains("| mock:planted:correct=1:wrong=0:every=1 | 0-Turn | 0.00 | 0.00 | 0.00 |"),
        "{md}"
    );
    assert!(md.contains("not reproduced"), "{md}");
    assert_eq!(
        fs::read_to_string(rep.join("report.md")).unwrap().trim(),
        md.trim()
    );
}
