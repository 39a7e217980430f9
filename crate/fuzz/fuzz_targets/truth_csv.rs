#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::mismatch_sim::GroundTruth;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(truth) = GroundTruth::from_csv(text) {
        assert_eq!(GroundTruth::from_csv(&truth.to_csv()).unwrap(), truth);
    }
});
