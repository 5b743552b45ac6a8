#![no_main]

use guidedec::grammar::parse_grammar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = parse_grammar(text) {
        let again = parse_grammar(&g.to_string()).expect("printed grammar parses");
        assert_eq!(g, again);
    }
});
