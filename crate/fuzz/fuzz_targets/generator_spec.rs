#![no_main]
use libfuzzer_sys::fuzz_target;

use rankmoe::synth::{generate, GeneratorSpec};

// First byte picks JSON or TOML. Small accepted specs are also generated.
fuzz_target!(|data: &[u8]| {
    let Some((&mode, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let parsed = if mode & 1 == 0 {
        GeneratorSpec::from_json(text)
    } else {
        GeneratorSpec::from_toml(text)
    };
    if let Ok(spec) = parsed {
        if spec.n_voters <= 64 && spec.n_candidates() <= 8 && spec.covariates.len() <= 4 {
            let _ = generate(&spec);
        }
    }
});
