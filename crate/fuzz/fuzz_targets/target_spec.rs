#![no_main]

use guidedec_eval::Target;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = text.parse::<Target>() {
        let again: Target = t.to_string().parse().expect("displayed target parses");
        assert_eq!(again, t);
    }
});
