#![no_main]
use libfuzzer_sys::fuzz_target;
use mime_core::ThresholdSet;

fuzz_target!(|data: &str| {
    if let Ok(t) = ThresholdSet::from_json(data) {
        let back = ThresholdSet::from_json(&t.to_json()).expect("re-parse of emitted thresholds");
        assert_eq!(back, t);
    }
});
