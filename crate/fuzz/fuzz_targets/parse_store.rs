#![no_main]

use libfuzzer_sys::fuzz_target;
use rhomb::orbit::store::{format_record, parse_store};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_store(text) {
        for rec in &records {
            let line = format_record(rec);
            let again = parse_store(&format!("format=rhomb-orbit-store/1\n{line}\n")).unwrap();
            assert_eq!(format_record(&again[0]), line);
        }
    }
});
