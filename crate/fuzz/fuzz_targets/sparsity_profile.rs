#![no_main]
use libfuzzer_sys::fuzz_target;
use mime_cli::profiles::{parse_profile_set, profile_set_json};
use mime_core::{SparsityProfile, SparsitySource};

fuzz_target!(|data: &str| {
    if let Ok(p) = SparsityProfile::from_json(data) {
        assert_eq!(SparsityProfile::from_json(&p.to_json()).expect("re-parse of emitted profile"), p);
    }
    for source in [SparsitySource::Mime, SparsitySource::Relu] {
        if let Ok(set) = parse_profile_set(data, source) {
            assert_eq!(parse_profile_set(&profile_set_json(&set), source).expect("re-parse of emitted set"), set);
        }
    }
});
