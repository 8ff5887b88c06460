#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = facemap::corpus::parse_meta(text) {
            assert!(meta.count >= 1 && meta.dim >= 2);
        }
    }
});
