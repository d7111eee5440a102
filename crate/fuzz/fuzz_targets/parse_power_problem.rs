#![no_main]

use cellfree_fl::power_control::{solve, PowerProblemFile, SolverConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(problem) = PowerProblemFile::parse(data) {
        if problem.num_users() <= 8 {
            let _ = solve(&problem, &SolverConfig::default());
        }
    }
});
