//! CSV cohort loader must reject malformed input with an error, never a
//! panic, for any byte stream.

#![no_main]

use libfuzzer_sys::fuzz_target;
use psmatch::cohort::{glioma_schema, load_cohort};

fuzz_target!(|data: &[u8]| {
    let _ = load_cohort(data, glioma_schema());
});
