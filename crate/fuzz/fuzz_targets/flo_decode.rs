#![no_main]

use libfuzzer_sys::fuzz_target;
use mird::flow::flo;

fuzz_target!(|data: &[u8]| {
    // Accepted files are canonical, so re-encoding reproduces them.
    if let Ok(field) = flo::decode(data) {
        assert_eq!(flo::encode(&field), data);
    }
});
