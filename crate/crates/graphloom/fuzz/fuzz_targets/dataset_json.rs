#![no_main]

use libfuzzer_sys::fuzz_target;

// First line (if any) selects the record path, the rest is the document.
fuzz_target!(|data: &[u8]| {
    let _ = graphloom::ingest::parse_json_records(data, None);
    if let Some(pos) = data.iter().position(|b| *b == b'\n') {
        if let Ok(path) = std::str::from_utf8(&data[..pos]) {
            let _ = graphloom::ingest::parse_json_records(&data[pos + 1..], Some(path));
        }
    }
});
