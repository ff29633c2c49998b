#![no_main]
use libfuzzer_sys::fuzz_target;
use mime_core::trainer::Checkpoint;

fuzz_target!(|data: &str| {
    if let Ok(c) = Checkpoint::from_json(data) {
        let back = Checkpoint::from_json(&c.to_json()).expect("re-parse of emitted checkpoint");
        assert_eq!(back, c);
    }
});
