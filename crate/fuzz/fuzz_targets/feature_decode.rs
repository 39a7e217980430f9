#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::features::Resolution;
use scorefollow::io::{decode_features, encode_features, FeatureHeader};

// first byte picks the dimension, the rest is the matrix
fuzz_target!(|data: &[u8]| {
    let Some((&d, body)) = data.split_first() else { return };
    let dims = usize::from(d % 32) + 1;
    let header = FeatureHeader {
        dims,
        hop_s: Resolution::Hr.hop_s(),
        window_s: Resolution::Hr.window_s(),
        sample_rate_hz: 22_050,
        resolution: Resolution::Hr,
        frame_count: body.len() / 4 / dims,
    };
    if let Ok(seq) = decode_features(body, &header) {
        assert_eq!(seq.len(), header.frame_count);
        assert_eq!(encode_features(&seq), body);
    }
});
