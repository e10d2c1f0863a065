#![no_main]

use hardball::io::{parse_events, write_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(segment) = parse_events(text) {
        let mut buf = Vec::new();
        write_events(&mut buf, &segment).unwrap();
        let again = parse_events(std::str::from_utf8(&buf).unwrap()).expect("re-parse of written log");
        assert_eq!(again.events.len(), segment.events.len());
        let _ = segment.symbols();
        let _ = segment.time_slots();
    }
});
