#![no_main]

use cellfree_fl::fl_engine::Dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = Dataset::from_csv(data, "fuzz") {
        assert_eq!(d.features.len(), d.len() * d.num_features);
        assert!(d.labels.iter().all(|&l| l < d.num_classes));
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(Dataset::from_csv(out.as_slice(), "fuzz").unwrap().labels, d.labels);
    }
});
