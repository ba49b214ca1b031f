#![no_main]

use libfuzzer_sys::fuzz_target;
use mird::synth::SceneSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = SceneSpec::from_json(text) {
        let _ = SceneSpec::from_json(&spec.to_json());
        let _ = spec.reversed().validate();
    }
});
