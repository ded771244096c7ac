#![no_main]
use libfuzzer_sys::fuzz_target;

use rankmoe::io::{parse_ballots, write_ballots};

// First byte picks whether a fixed candidate list is supplied.
fuzz_target!(|data: &[u8]| {
    let Some((&mode, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let names: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
    let list = (mode & 1 == 1).then_some(names.as_slice());
    if let Ok(table) = parse_ballots(text, list) {
        // Anything accepted must survive a write/read cycle unchanged.
        let out = write_ballots(&table).expect("accepted table writes");
        let back = parse_ballots(&out, Some(&table.candidates)).expect("written table parses");
        assert_eq!(back.ballots, table.ballots);
        assert_eq!(back.ids, table.ids);
    }
});
