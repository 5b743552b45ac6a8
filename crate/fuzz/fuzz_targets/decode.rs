#![no_main]

//! Drives each backend with fuzzer-chosen tokens: every step picks among
//! the allowed tokens, so the walk must never be refused, and a walk that
//! may stop must be a JSON document.

use std::sync::{Arc, OnceLock};

use guidedec::{
    build_constraint, Backend, BuildOptions, Constraint, ConstraintSource, Guide, Vocabulary,
};
use guidedec_eval::harness::RAG_RESPONSE_SCHEMA;
use libfuzzer_sys::fuzz_target;

fn constraints() -> &'static [Constraint] {
    static C: OnceLock<Vec<Constraint>> = OnceLock::new();
    C.get_or_init(|| {
        let v = Arc::new(Vocabulary::byte_level(&[
            "\"response\"",
            "\"document_ids\"",
            "\": ",
            "\\u00e9",
        ]));
        let src = ConstraintSource::JsonSchema(RAG_RESPONSE_SCHEMA.into());
        Backend::CONSTRAINED
            .iter()
            .map(|&b| {
                build_constraint(b, &src, v.clone(), &BuildOptions::default())
                    .expect("schema builds")
            })
            .collect()
    })
}

fuzz_target!(|data: &[u8]| {
    let Some((&which, picks)) = data.split_first() else {
        return;
    };
    let cs = constraints();
    let c = &cs[which as usize % cs.len()];
    let eos = c.vocab().eos_id();
    let mut state = c.start();
    let mut text = Vec::new();
    for &k in picks.iter().take(200) {
        let mask = c.mask(&state).expect("mask");
        let allowed: Vec<_> = mask.iter_ones().filter(|&t| t != eos).collect();
        if allowed.is_empty() {
            break;
        }
        let t = allowed[k as usize % allowed.len()];
        state = c.advance(&state, t).expect("allowed token advances");
        text.extend_from_slice(c.vocab().token(t).unwrap());
    }
    if c.mask(&state).expect("mask").contains(eos) {
        serde_json::from_slice::<serde_json::Value>(&text).expect("completed output is JSON");
    }
});
