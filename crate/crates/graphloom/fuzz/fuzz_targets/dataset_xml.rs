#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = graphloom::ingest::parse_xml_records(data, "/records/record");
    if let Some(pos) = data.iter().position(|b| *b == b'\n') {
        if let Ok(path) = std::str::from_utf8(&data[..pos]) {
            let _ = graphloom::ingest::parse_xml_records(&data[pos + 1..], path);
        }
    }
});
