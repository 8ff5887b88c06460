#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(partition) = facemap::mapeq::parse_partition(text) {
            let again = facemap::mapeq::parse_partition(&partition.to_tsv()).unwrap();
            assert_eq!(again, partition);
        }
    }
});
