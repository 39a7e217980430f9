#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::io::parse_header;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(h) = parse_header(text) {
        // whatever parses must survive a round trip
        assert_eq!(parse_header(&h.to_text()).unwrap(), h);
    }
});
