//! TOML run-config parser must never panic on arbitrary input.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = feedshape_cli::config::parse_config_bytes(data);
});
