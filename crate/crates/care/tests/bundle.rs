//! Model bundle round trips and rejection of damaged bundles.

use std::fs;
use std::path::Path;

use care::bundle::{load_bundle, save_bundle, ModelBundle};
use care::CareError;
use care_core::classify::StrategyModel;
use care_core::safety::{Lexicon, LexiconList, SafetyError};
use care_core::synth;
use care_core::training::{fit, TrainOptions};
use care_core::{Context, Speaker, Strategy, Utterance};

fn saved(dir: &Path) -> ModelBundle {
    let opts = TrainOptions {
        seed: 1,
        ..TrainOptions::default()
    };
    let models = fit(&synth::demo_corpus(40, 1), &opts).unwrap();
    let bundle = ModelBundle::new(models, Lexicon::builtin(), &opts);
    save_bundle(dir, &bundle).unwrap();
    bundle
}

#[test]
fn round_trip_preserves_models_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = saved(dir.path());
    let loaded = load_bundle(dir.path()).unwrap();
    assert_eq!(loaded.manifest, bundle.manifest);
    assert_eq!(loaded.predictor, bundle.predictor);
    assert_eq!(loaded.index, bundle.index);
    for list in LexiconList::ALL {
        assert_eq!(loaded.lexicon.source(list), bundle.lexicon.source(list));
    }
    let ctx = Context::new(vec![Utterance::new(0, Speaker::Seeker, "i feel so alone lately")]).unwrap();
    assert_eq!(loaded.predictor.predict(&ctx).unwrap(), bundle.predictor.predict(&ctx).unwrap());
    for s in Strategy::ALL {
        assert!(dir.path().join("weights").join(format!("{}.f32", s.as_str())).is_file());
    }
}

fn expect_bundle_error(dir: &Path, needle: &str) {
    match load_bundle(dir) {
        Ok(_) => panic!("damaged bundle loaded"),
        Err(e) => assert!(e.to_string().contains(needle), "`{e}` does not mention {needle}"),
    }
}

#[test]
fn truncated_weights_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    saved(dir.path());
    let w = dir.path().join("weights/reflection.f32");
    let bytes = fs::read(&w).unwrap();
    fs::write(&w, &bytes[..bytes.len() - 4]).unwrap();
    expect_bundle_error(dir.path(), "reflection.f32");
}

#[test]
fn manifest_mismatches_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    saved(dir.path());
    let path = dir.path().join("manifest.json");
    let original = fs::read_to_string(&path).unwrap();

    fs::write(&path, original.replace("\"logistic", "\"neural")).unwrap();
    expect_bundle_error(dir.path(), "backend");

    let mut m: serde_json::Value = serde_json::from_str(&original).unwrap();
    m["strategies"].as_array_mut().unwrap().pop();
    fs::write(&path, m.to_string()).unwrap();
    expect_bundle_error(dir.path(), "strategies");

    let mut m: serde_json::Value = serde_json::from_str(&original).unwrap();
    m["vocab_size"] = (m["vocab_size"].as_u64().unwrap() + 1).into();
    fs::write(&path, m.to_string()).unwrap();
    expect_bundle_error(dir.path(), "vocab.tsv");

    fs::write(&path, "{").unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(CareError::Parse { .. })));
    fs::remove_file(&path).unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(CareError::Io { .. })));
}

#[test]
fn malformed_rows_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    saved(dir.path());
    let vocab = dir.path().join("vocab.tsv");
    let text = fs::read_to_string(&vocab).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(0, 1);
    fs::write(&vocab, lines.join("\n") + "\n").unwrap();
    match load_bundle(dir.path()) {
        Err(CareError::Parse { path, line, .. }) => {
            assert!(path.ends_with("vocab.tsv"));
            assert_eq!(line, 1);
        }
        other => panic!("expected parse error, got {other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    saved(dir.path());
    let index = dir.path().join("index.jsonl");
    let mut text = fs::read_to_string(&index).unwrap();
    text.push_str("not json\n");
    let bad_line = text.lines().count();
    fs::write(&index, text).unwrap();
    match load_bundle(dir.path()) {
        Err(CareError::Parse { path, line, .. }) => {
            assert!(path.ends_with("index.jsonl"));
            assert_eq!(line, bad_line);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn missing_lexicon_list_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    saved(dir.path());
    fs::remove_file(dir.path().join("safety").join(LexiconList::Profanity.file_name())).unwrap();
    match load_bundle(dir.path()) {
        Err(CareError::Safety(SafetyError::LexiconMissing(name))) => assert!(name.contains("profanity"), "{name}"),
        other => panic!("expected LexiconMissing, got {other:?}"),
    }
}
