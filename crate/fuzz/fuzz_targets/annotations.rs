#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::score_model::{format_annotations, parse_annotations};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((parts, bars)) = parse_annotations(text) {
        let again = parse_annotations(&format_annotations(&parts, &bars)).unwrap();
        assert_eq!(again.0.parts(), parts.parts());
    }
});
