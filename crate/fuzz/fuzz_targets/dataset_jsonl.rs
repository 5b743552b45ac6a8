#![no_main]

use guidedec_eval::dataset::{parse_dataset, to_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(samples) = parse_dataset(text) {
        assert_eq!(
            parse_dataset(&to_jsonl(&samples)).expect("written dataset parses"),
            samples
        );
    }
});
