#![no_main]

use guidedec::Vocabulary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = Vocabulary::from_json(text) {
        let back = Vocabulary::from_json(&v.to_json()).expect("written vocabulary loads");
        assert_eq!(back.len(), v.len());
        assert_eq!(back.eos_id(), v.eos_id());
        for (id, bytes) in v.tokens() {
            assert_eq!(back.token(id), Some(bytes));
        }
    }
});
