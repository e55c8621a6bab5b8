#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::ergodic::PlanSpec;
use qsd_core::qprocess::Rates;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<PlanSpec>() {
        let rates = Rates { lambda0: 0.1, gamma: 0.7, gamma_prime: 0.9 };
        let _ = spec.resolve(50, Some(&rates));
        let again: PlanSpec = spec.to_string().parse().unwrap();
        assert_eq!(again.to_string(), spec.to_string());
    }
});
