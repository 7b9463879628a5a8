//! Follow-graph parser must never panic on arbitrary input.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = feedshape::formats::parse_follow_graph_bytes(data);
});
