//! Replays the checked-in fuzz seeds, plus cheap mutations of them, through
//! the same invariants the cargo-fuzz targets assert.

use std::path::PathBuf;

use cellfree_fl::cli::load::{parse_and_validate, to_toml};
use cellfree_fl::cli::vector::{parse_vector, VectorFormat};
use cellfree_fl::fl_engine::Dataset;
use cellfree_fl::power_control::{solve, PowerProblemFile, SolverConfig};
use cellfree_fl::quantizer::{decode_mixed, encode_mixed, wire, QuantSpec};
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn decode_payload(data: &[u8]) -> bool {
    match wire::from_bytes(data) {
        Ok(q) => {
            assert_eq!(wire::to_bytes(&q), data);
            decode_mixed(&q).unwrap();
            true
        }
        Err(_) => false,
    }
}

fn parse_config(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let mut any = false;
    for json in [false, true] {
        if let Ok(config) = parse_and_validate(Some((text, json)), &[], None) {
            let again = parse_and_validate(Some((&to_toml(&config), false)), &[], None).unwrap();
            assert_eq!(again, config);
            any = true;
        }
    }
    any
}

fn parse_power_problem(data: &[u8]) -> bool {
    match PowerProblemFile::parse(data) {
        Ok(problem) => {
            if problem.num_users() <= 8 {
                solve(&problem, &SolverConfig::default()).unwrap();
            }
            true
        }
        Err(_) => false,
    }
}

fn parse_vector_file(data: &[u8]) -> bool {
    let mut any = false;
    for format in [VectorFormat::F32, VectorFormat::Csv] {
        if let Ok(v) = parse_vector(data, format) {
            assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()));
            encode_mixed(&v, QuantSpec::new(0.05, 10).unwrap()).unwrap();
            any = true;
        }
    }
    any
}

fn parse_dataset_csv(data: &[u8]) -> bool {
    match Dataset::from_csv(data, "fuzz") {
        Ok(d) => {
            assert_eq!(d.features.len(), d.len() * d.num_features);
            assert!(d.labels.iter().all(|&l| l < d.num_classes));
            let mut out = Vec::new();
            d.write_csv(&mut out).unwrap();
            assert_eq!(Dataset::from_csv(out.as_slice(), "fuzz").unwrap().labels, d.labels);
            true
        }
        Err(_) => false,
    }
}

type Target = fn(&[u8]) -> bool;

const TARGETS: [(&str, Target); 5] = [
    ("decode_payload", decode_payload),
    ("parse_config", parse_config),
    ("parse_power_problem", parse_power_problem),
    ("parse_vector_file", parse_vector_file),
    ("parse_dataset_csv", parse_dataset_csv),
];

#[test]
fn every_seed_is_accepted() {
    for (name, target) in TARGETS {
        for (i, seed) in seeds(name).iter().enumerate() {
            assert!(target(seed), "{name} seed {i} rejected");
        }
    }
}

#[derive(Debug, Clone)]
enum Mutation {
    Flip(usize, u8),
    Truncate(usize),
    Insert(usize, u8),
}

fn apply(seed: &[u8], mutations: &[Mutation]) -> Vec<u8> {
    let mut v = seed.to_vec();
    for m in mutations {
        match *m {
            Mutation::Flip(i, mask) if !v.is_empty() => {
                let n = v.len();
                v[i % n] ^= mask;
            }
            Mutation::Truncate(n) => v.truncate(n % (v.len() + 1)),
            Mutation::Insert(i, b) => {
                let at = i % (v.len() + 1);
                v.insert(at, b);
            }
            _ => {}
        }
    }
    v
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (any::<usize>(), 1u8..).prop_map(|(i, m)| Mutation::Flip(i, m)),
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Insert(i, b)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn mutated_seeds_never_panic(
        target in 0usize..TARGETS.len(),
        pick in any::<usize>(),
        muts in prop::collection::vec(mutation(), 1..4),
    ) {
        let (name, f) = TARGETS[target];
        let s = seeds(name);
        let data = apply(&s[pick % s.len()], &muts);
        let _ = f(&data);
    }
}
