#![no_main]

use cellfree_fl::cli::vector::{parse_vector, VectorFormat};
use cellfree_fl::quantizer::{encode_mixed, QuantSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for format in [VectorFormat::F32, VectorFormat::Csv] {
        if let Ok(v) = parse_vector(data, format) {
            assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()));
            let spec = QuantSpec::new(0.05, 10).unwrap();
            encode_mixed(&v, spec).expect("parsed vectors encode");
        }
    }
});
