#![no_main]
use libfuzzer_sys::fuzz_target;
use mime_core::trainer::parse_idx_labels;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = parse_idx_labels(data) {
        assert_eq!(&data[8..], &labels[..]);
    }
});
