#![no_main]

use libfuzzer_sys::fuzz_target;
use pdra::network::{ingest_tntp, IngestOptions};

// Node file and link file separated by the first NUL byte.
fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let (nodes, links) = text.split_once('\0').unwrap_or((&text, ""));
    for euclidean_lengths in [false, true] {
        if let Ok(net) = ingest_tntp(
            nodes,
            links,
            IngestOptions {
                seed: 0,
                euclidean_lengths,
            },
        ) {
            let tn = pdra::transform(&net);
            assert_eq!(tn.len(), net.node_count() + net.link_count());
        }
    }
});
