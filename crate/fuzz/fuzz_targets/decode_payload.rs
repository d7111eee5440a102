#![no_main]

use cellfree_fl::quantizer::{decode_mixed, wire};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(q) = wire::from_bytes(data) {
        // Accepted payloads are canonical and decode.
        assert_eq!(wire::to_bytes(&q), data);
        let _ = decode_mixed(&q);
    }
});
