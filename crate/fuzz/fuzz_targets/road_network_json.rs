#![no_main]

use libfuzzer_sys::fuzz_target;
use pdra::{RoadNetwork, TransformedNetwork};

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = serde_json::from_slice::<RoadNetwork>(data) {
        let back: RoadNetwork = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        assert_eq!(back, net);
        pdra::transform(&net);
    }
    let _ = serde_json::from_slice::<TransformedNetwork>(data);
});
