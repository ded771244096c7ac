#![no_main]
use libfuzzer_sys::fuzz_target;

use rankmoe::io::parse_long_ballots;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_long_ballots(text, None);
    }
});
