#![no_main]
use libfuzzer_sys::fuzz_target;

use rankmoe::io::{build_design, parse_ballots, parse_covariates};

// Input is a ballot file and a covariate file separated by a NUL byte, so the
// join and standardization run on whatever both parsers accept.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (ballots, covs) = text.split_once('\0').unwrap_or(("", text));
    let Ok(table) = parse_covariates(covs) else { return };
    if let Ok(bt) = parse_ballots(ballots, None) {
        let _ = build_design(&bt, Some(&table), &[], true);
        let _ = build_design(&bt, Some(&table), &[], false);
    }
});
