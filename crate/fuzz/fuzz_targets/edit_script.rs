#![no_main]

use libfuzzer_sys::fuzz_target;
use scorefollow::mismatch_sim::EditScript;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(script) = EditScript::from_json(text) {
        let _ = EditScript::from_json(&script.to_json()).unwrap();
    }
});
