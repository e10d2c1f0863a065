#![no_main]

use hardball::io::{parse_richness, parse_spectrum, parse_survey, parse_table};
use libfuzzer_sys::fuzz_target;

// One target for the three table formats: they share the metadata and CSV
// layer, and the schema line routes the input to a typed parser.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_table(text);
    let _ = parse_spectrum(text);
    let _ = parse_survey(text);
    let _ = parse_richness(text);
});
