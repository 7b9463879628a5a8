//! Event-log parser must never panic: any byte stream (including gzip
//! framing, since reads are sniffed) yields records or a typed error.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = feedshape::formats::parse_event_log_bytes(data);
});
