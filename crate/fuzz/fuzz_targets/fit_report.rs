#![no_main]
use libfuzzer_sys::fuzz_target;

use rankmoe::io::{mosaic, FitReport};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = FitReport::from_json(text) {
        // A report that passed the consistency check must be usable.
        report.params().expect("consistent report has parameters");
        let _ = mosaic(&report);
    }
});
