#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::integrator::parse_reports;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_reports(text);
});
