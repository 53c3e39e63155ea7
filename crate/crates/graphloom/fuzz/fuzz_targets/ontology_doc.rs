#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        let _ = graphloom::ingest::parse_ontology_str(src);
        let _ = graphloom::ingest::parse_model_str(src);
    }
});
