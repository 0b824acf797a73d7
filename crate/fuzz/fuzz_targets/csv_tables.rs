#![no_main]

use libfuzzer_sys::fuzz_target;
use pdra::eval::{read_gap_csv, read_long_csv};
use pdra::training::read_metrics_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_gap_csv(data, "greedy");
    let _ = read_long_csv(data);
    let _ = read_metrics_csv(data);
});
