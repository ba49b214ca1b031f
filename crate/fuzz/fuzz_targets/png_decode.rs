#![no_main]

use libfuzzer_sys::fuzz_target;
use mird::imaging::{decode_png, encode_png};

fuzz_target!(|data: &[u8]| {
    // Decoded samples sit on the 8-bit grid, so a re-encode is lossless.
    if let Ok(img) = decode_png(data) {
        let again = decode_png(&encode_png(&img).expect("decoded image encodes")).expect("re-encoded image decodes");
        assert_eq!(again, img);
    }
});
