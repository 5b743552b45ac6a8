#![no_main]

use guidedec::grammar::schema::{parse_schema_str, schema_to_grammar, schema_to_regex};
use guidedec::regex_fsm::compile_regex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(schema) = parse_schema_str(text) {
        compile_regex(&schema_to_regex(&schema)).expect("schema regex compiles");
        let g = schema_to_grammar(&schema);
        let _ = g.to_string();
    }
});
