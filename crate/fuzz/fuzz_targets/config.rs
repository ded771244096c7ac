#![no_main]
use libfuzzer_sys::fuzz_target;

use rankmoe::io::{parse_config, write_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        let out = write_config(&cfg).expect("accepted config writes");
        assert_eq!(parse_config(&out).expect("written config parses"), cfg);
    }
});
