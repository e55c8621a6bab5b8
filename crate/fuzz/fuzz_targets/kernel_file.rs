#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::io::{parse_kernel, write_kernel};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kernel) = parse_kernel(text) {
        assert_eq!(parse_kernel(&write_kernel(&kernel)).unwrap(), kernel);
    }
});
