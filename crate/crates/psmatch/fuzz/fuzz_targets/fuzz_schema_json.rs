//! Schema JSON parsing and validation over arbitrary input.

#![no_main]

use libfuzzer_sys::fuzz_target;
use psmatch::cohort::Schema;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(schema) = Schema::from_json(text) {
            // A schema that parses must survive a round trip.
            let again = Schema::from_json(&schema.to_json()).expect("round trip");
            assert_eq!(schema.specs().len(), again.specs().len());
        }
    }
});
