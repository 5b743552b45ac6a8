#![no_main]

use guidedec::regex_fsm::compile_regex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(pattern) = std::str::from_utf8(data) else {
        return;
    };
    if pattern.len() > 256 {
        return;
    }
    if let Ok(fsm) = compile_regex(pattern) {
        let _ = fsm.matches(data);
        let _ = fsm.walk(fsm.start(), b"abc");
    }
});
