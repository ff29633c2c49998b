#![no_main]
use libfuzzer_sys::fuzz_target;
use mime_cli::ExperimentConfig;

fuzz_target!(|data: &str| {
    if let Ok(c) = ExperimentConfig::from_json(data) {
        let _ = c.validate();
        let text = serde_json::to_string(&c).expect("config serializes");
        assert_eq!(ExperimentConfig::from_json(&text).expect("re-parse of emitted config"), c);
    }
});
