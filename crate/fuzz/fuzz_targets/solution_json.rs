#![no_main]

use libfuzzer_sys::fuzz_target;
use pdra::env::replay;
use pdra::instancegen::{generate_tiny, TinyConfig};
use pdra::solvers::validate_solution;
use pdra::{Rng, Solution};
use rand::SeedableRng;

// Arbitrary solutions against a fixed tiny instance: the validator and
// the environment replay must agree.
fuzz_target!(|data: &[u8]| {
    let Ok(sol) = serde_json::from_slice::<Solution>(data) else {
        return;
    };
    let inst = generate_tiny(&TinyConfig::default(), &mut Rng::seed_from_u64(7)).unwrap();
    if let Ok(rep) = validate_solution(&inst, &sol) {
        assert_eq!(rep.feasible, replay(&inst, &sol).is_ok());
    }
});
