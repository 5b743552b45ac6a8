//! Every backend's per-step masks against brute-force oracles that share no
//! code with the engines.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use guidedec::decoder::{DecodeConfig, MockRandom};
use guidedec::enforcer::FormatEnforcer;
use guidedec::grammar::schema::parse_schema_str;
use guidedec::grammar::{parse_grammar, JSON_GRAMMAR};
use guidedec::pda::{PdaEngine, PdaOptions};
use guidedec::regex_fsm::{build_index, compile_regex};
use guidedec::{build::regex_grammar, Guide, TokenMask, Vocabulary};
use guidedec_testkit::gen::random_regex;
use guidedec_testkit::{
    audit_decode, json_vocab, schema_oracle, synthetic_vocab, GrammarOracle, HoldEos, Oracle,
    RegexOracle, RAG_SCHEMA,
};

const REGEX_ALPHABET: &[u8] = b"abc01";

fn regex_vocab(seed: u64, size: usize) -> Arc<Vocabulary> {
    let mut alphabet = b"abc01xz-".to_vec();
    alphabet.extend("é".as_bytes());
    Arc::new(synthetic_vocab(seed, size, &alphabet, &[]))
}

/// Audits decodes for each seed and returns the total number of steps
/// checked. Eos is held back for most of the budget so traces get long.
fn assert_clean<G: Guide, O: Oracle>(
    guide: &G,
    oracle: &O,
    seeds: std::ops::Range<u64>,
    max_tokens: usize,
    what: &str,
) -> usize {
    let mut steps = 0;
    for seed in seeds {
        let cfg = DecodeConfig {
            seed,
            max_tokens,
            ..Default::default()
        };
        let mut src = HoldEos {
            inner: MockRandom::new(seed, guide.vocab().len()),
            eos: guide.vocab().eos_id(),
            hold: max_tokens * 3 / 4,
        };
        let a = audit_decode(guide, oracle, &mut src, &cfg);
        steps += a.steps;
        if let Some(d) = a.discrepancies.first() {
            let missing: Vec<_> = d
                .expected
                .iter_ones()
                .filter(|&t| !d.got.contains(t))
                .collect();
            let extra: Vec<_> = d
                .got
                .iter_ones()
                .filter(|&t| !d.expected.contains(t))
                .collect();
            panic!(
                "{what} seed {seed}: step {} after {:?}: missing {missing:?}, extra {extra:?}",
                d.step,
                String::from_utf8_lossy(&d.prefix)
            );
        }
    }
    steps
}

#[test]
fn regex_index_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..20u64 {
        let p = random_regex(&mut rng, REGEX_ALPHABET);
        let v = regex_vocab(i, [64, 128, 256][i as usize % 3]);
        let idx = build_index(compile_regex(&p).unwrap(), v);
        let o = RegexOracle::new(&p).unwrap();
        assert_clean(&idx, &o, 0..3, 24, &p);
    }
}

#[test]
fn pda_matches_oracle_on_random_regexes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..10u64 {
        let p = random_regex(&mut rng, REGEX_ALPHABET);
        let v = regex_vocab(i, 96);
        let e = PdaEngine::new(&regex_grammar(&p).unwrap(), v, PdaOptions::default()).unwrap();
        let o = RegexOracle::new(&p).unwrap();
        assert_clean(&e, &o, 0..2, 24, &p);
    }
}

#[test]
fn pda_matches_oracle_on_json_grammar() {
    let g = parse_grammar(JSON_GRAMMAR).unwrap();
    let o = GrammarOracle::new(&g).unwrap();
    for (i, size) in [64, 128, 256].into_iter().enumerate() {
        let v = Arc::new(json_vocab(i as u64, size));
        let e = PdaEngine::new(&g, v, PdaOptions::default()).unwrap();
        let steps = assert_clean(&e, &o, 0..10, 40, "json grammar");
        assert!(steps >= 100, "only {steps} steps audited");
    }
}

#[test]
fn every_backend_matches_oracle_on_the_rag_schema() {
    let schema_json: serde_json::Value = serde_json::from_str(RAG_SCHEMA).unwrap();
    let schema = parse_schema_str(RAG_SCHEMA).unwrap();
    let o = schema_oracle(&schema_json);
    for (i, size) in [64, 128, 256].into_iter().enumerate() {
        let v = Arc::new(json_vocab(10 + i as u64, size));
        let fsm = build_index(
            compile_regex(&guidedec::grammar::schema::schema_to_regex(&schema)).unwrap(),
            v.clone(),
        );
        assert_clean(&fsm, &o, 0..4, 48, "schema fsm");
        let pda = PdaEngine::new(
            &guidedec::grammar::schema::schema_to_grammar(&schema),
            v.clone(),
            PdaOptions::default(),
        )
        .unwrap();
        assert_clean(&pda, &o, 0..4, 48, "schema pda");
        let enf = FormatEnforcer::new(&schema, v);
        let steps = assert_clean(&enf, &o, 0..4, 48, "schema enforcer");
        assert!(steps >= 100, "only {steps} steps audited");
    }
}

#[test]
fn enforcer_matches_oracle_on_nested_schema() {
    let text = r#"{"type":"object","properties":{
        "a":{"type":"array","items":{"type":"object","properties":{"n":{"type":"number"},"ok":{"type":"boolean"}},"required":["n","ok"]}},
        "e":{"type":"object","properties":{}},
        "s":{"type":"string"}},"required":["a","e","s"]}"#;
    let o = schema_oracle(&serde_json::from_str(text).unwrap());
    let schema = parse_schema_str(text).unwrap();
    let v = Arc::new(json_vocab(5, 160));
    assert_clean(
        &FormatEnforcer::new(&schema, v.clone()),
        &o,
        0..6,
        60,
        "nested enforcer",
    );
    let pda = PdaEngine::new(
        &guidedec::grammar::schema::schema_to_grammar(&schema),
        v,
        PdaOptions::default(),
    )
    .unwrap();
    assert_clean(&pda, &o, 0..6, 60, "nested pda");
}

#[test]
fn classification_is_sound_at_every_reached_state() {
    let g = parse_grammar(JSON_GRAMMAR).unwrap();
    let o = GrammarOracle::new(&g).unwrap();
    let v = Arc::new(json_vocab(7, 128));
    let e = PdaEngine::new(&g, v.clone(), PdaOptions::default()).unwrap();
    let text_tokens = TokenMask::from_ids(v.len(), v.text_tokens().map(|(id, _)| id));
    for seed in 0..4 {
        let mut src = MockRandom::new(seed, v.len());
        let cfg = DecodeConfig {
            seed,
            max_tokens: 40,
            ..Default::default()
        };
        let out = guidedec::decoder::decode(&mut src, &e, &cfg);
        let tokens = match out {
            Ok(o) => o.token_ids,
            Err(guidedec::decoder::DecodeError::DeadEnd { prefix, .. }) => prefix,
            Err(err) => panic!("{err}"),
        };
        let mut state = e.start();
        let mut cursor = o.begin();
        for t in std::iter::once(None).chain(tokens.iter().map(Some)) {
            if let Some(&t) = t {
                state = e.advance(&state, t).unwrap();
                cursor = Oracle::feed(&o, &cursor, v.token(t).unwrap()).unwrap();
            }
            let valid = o.mask_at(&cursor, &v);
            let mut all_invalid = text_tokens.clone();
            for c in e.classify(&state) {
                let parts = [&c.ci_valid, &c.ci_invalid, &c.context_dependent];
                for (i, a) in parts.iter().enumerate() {
                    for b in &parts[i + 1..] {
                        assert_eq!(a.and(b).unwrap().count_ones(), 0, "classes overlap");
                    }
                }
                let mut union = c.ci_valid.clone();
                union.union_with(&c.ci_invalid).unwrap();
                union.union_with(&c.context_dependent).unwrap();
                assert_eq!(union, text_tokens, "classes do not cover the vocabulary");
                let wrongly_valid: Vec<_> = c
                    .ci_valid
                    .iter_ones()
                    .filter(|&t| !valid.contains(t))
                    .collect();
                assert!(
                    wrongly_valid.is_empty(),
                    "ci_valid but invalid: {wrongly_valid:?}"
                );
                all_invalid = all_invalid.and(&c.ci_invalid).unwrap();
            }
            assert_eq!(all_invalid.and(&valid).unwrap().count_ones(), 0);
        }
    }
}
