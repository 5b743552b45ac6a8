#![no_main]

use std::sync::{Arc, OnceLock};

use guidedec::regex_fsm::FsmIndex;
use guidedec::{Guide, Vocabulary};
use libfuzzer_sys::fuzz_target;

fn vocab() -> Arc<Vocabulary> {
    static V: OnceLock<Arc<Vocabulary>> = OnceLock::new();
    V.get_or_init(|| Arc::new(Vocabulary::byte_level(&["ab", "12"])))
        .clone()
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(idx) = FsmIndex::from_json(text, vocab()) {
        let s = idx.start();
        if let Ok(mask) = idx.mask(&s) {
            if let Some(t) = mask.iter_ones().next() {
                let _ = idx.advance(&s, t);
            }
        }
    }
});
