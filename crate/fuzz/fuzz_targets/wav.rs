#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::io::decode_wav;

fuzz_target!(|data: &[u8]| {
    if let Ok(pcm) = decode_wav(std::io::Cursor::new(data)) {
        assert!(pcm.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
    }
});
