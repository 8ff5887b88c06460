#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(labels) = facemap::corpus::parse_labels(text) {
            let again = facemap::corpus::parse_labels(&labels.to_text()).unwrap();
            assert_eq!(again, labels);
        }
    }
});
