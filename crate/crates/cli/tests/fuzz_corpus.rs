//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets run, so regressions surface under `cargo test`.

use std::path::PathBuf;

use mime_cli::profiles::{parse_profile_set, profile_set_json};
use mime_cli::ExperimentConfig;
use mime_core::trainer::{parse_idx_images, parse_idx_labels, Checkpoint};
use mime_core::{SparsityProfile, SparsitySource, ThresholdSet};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut v: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    assert!(!v.is_empty(), "no seeds for {target}");
    v
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

fn accepted(names: &[(String, bool)]) -> Vec<&str> {
    names.iter().filter(|(_, ok)| *ok).map(|(n, _)| n.as_str()).collect()
}

#[test]
fn threshold_doc() {
    let r: Vec<_> = seeds("threshold_doc")
        .into_iter()
        .map(|(n, b)| {
            let parsed = ThresholdSet::from_json(text(&b));
            if let Ok(t) = &parsed {
                assert_eq!(&ThresholdSet::from_json(&t.to_json()).unwrap(), t);
            }
            (n, parsed.is_ok())
        })
        .collect();
    assert_eq!(accepted(&r), ["valid.json"]);
}

#[test]
fn checkpoint() {
    let r: Vec<_> = seeds("checkpoint")
        .into_iter()
        .map(|(n, b)| {
            let parsed = Checkpoint::from_json(text(&b));
            if let Ok(c) = &parsed {
                assert_eq!(&Checkpoint::from_json(&c.to_json()).unwrap(), c);
            }
            (n, parsed.is_ok())
        })
        .collect();
    assert_eq!(accepted(&r), ["parent.json", "with_thresholds.json"]);
}

#[test]
fn idx() {
    let r: Vec<_> = seeds("idx_images")
        .into_iter()
        .map(|(n, b)| {
            let parsed = parse_idx_images(&b);
            if let Ok(img) = &parsed {
                assert_eq!(&b[16..], &img.pixels[..]);
                assert_eq!(img.pixels.len(), img.count * img.rows * img.cols);
            }
            (n, parsed.is_ok())
        })
        .collect();
    assert_eq!(accepted(&r), ["two_2x2.idx"]);
    let r: Vec<_> = seeds("idx_labels")
        .into_iter()
        .map(|(n, b)| {
            let parsed = parse_idx_labels(&b);
            if let Ok(l) = &parsed {
                assert_eq!(&b[8..], &l[..]);
            }
            (n, parsed.is_ok())
        })
        .collect();
    assert_eq!(accepted(&r), ["three.idx"]);
}

#[test]
fn experiment_config() {
    let r: Vec<_> = seeds("experiment_config")
        .into_iter()
        .map(|(n, b)| {
            let parsed = ExperimentConfig::from_json(text(&b));
            if let Ok(c) = &parsed {
                let again = ExperimentConfig::from_json(&serde_json::to_string(c).unwrap()).unwrap();
                assert_eq!(&again, c);
            }
            (n, parsed.is_ok())
        })
        .collect();
    assert_eq!(accepted(&r), ["empty.json", "footprint.json", "hardware.json", "train_small.json"]);
}

#[test]
fn sparsity_profile() {
    let mut singles = Vec::new();
    let mut sets = Vec::new();
    for (n, b) in seeds("sparsity_profile") {
        if let Ok(p) = SparsityProfile::from_json(text(&b)) {
            assert_eq!(SparsityProfile::from_json(&p.to_json()).unwrap(), p);
            singles.push(n.clone());
        }
        if let Ok(set) = parse_profile_set(text(&b), SparsitySource::Mime) {
            assert_eq!(parse_profile_set(&profile_set_json(&set), SparsitySource::Mime).unwrap(), set);
            sets.push(n);
        }
    }
    assert_eq!(singles, ["single.json"]);
    assert_eq!(sets, ["fixture_set.json"]);
}
