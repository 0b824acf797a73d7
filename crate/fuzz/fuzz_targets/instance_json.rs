#![no_main]

use libfuzzer_sys::fuzz_target;
use pdra::solvers::greedy_heuristic;
use pdra::Instance;

fuzz_target!(|data: &[u8]| {
    if let Ok(inst) = serde_json::from_slice::<Instance>(data) {
        if inst.network.len() <= 64 {
            let _ = greedy_heuristic(&inst);
        }
    }
});
