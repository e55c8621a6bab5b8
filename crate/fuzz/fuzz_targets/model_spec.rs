#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::models::build;
use qsd_core::ModelSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ModelSpec::from_toml_str(text) {
        // building is O(n^3); stay small
        if spec.n <= 64 {
            let _ = build(&spec);
        }
    }
});
