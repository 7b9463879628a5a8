//! Profiles-file parser (JSON schema + semantic validation) must never
//! panic on arbitrary input.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = feedshape::formats::parse_profiles_bytes(data);
});
