#![no_main]

use libfuzzer_sys::fuzz_target;

// The purpose parser must never panic, whatever the bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        let _ = graphloom::ingest::parse_purpose_str(src);
    }
});
