#![no_main]

use std::time::Duration;

use guidedec_eval::client::parse_chat_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_chat_response(text, Duration::ZERO);
});
