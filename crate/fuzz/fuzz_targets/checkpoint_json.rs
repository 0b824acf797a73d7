#![no_main]

use libfuzzer_sys::fuzz_target;
use pdra::policy::PolicyParams;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = PolicyParams::from_json(text) {
            let back = PolicyParams::from_json(&p.to_json()).unwrap();
            assert_eq!(back.tensors(), p.tensors());
        }
    }
});
