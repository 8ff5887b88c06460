#![no_main]

use libfuzzer_sys::fuzz_target;

// The first two bytes pick the declared shape; the rest is the payload.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let count = data[0] as usize % 16 + 1;
    let dim = data[1] as usize % 16 + 2;
    if let Ok(set) = facemap::corpus::decode_payload(&data[2..], count, dim) {
        assert_eq!(set.count(), count);
        assert_eq!(set.dim(), dim);
        let bytes = facemap::corpus::encode_payload(set.as_slice());
        let again = facemap::corpus::decode_payload(&bytes, count, dim).unwrap();
        assert_eq!(again.as_slice(), set.as_slice());
    }
});
