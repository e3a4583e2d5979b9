use std::path::PathBuf;

use folkso_core::ingest::serialize_events;
use folkso_core::synth::synthetic_events;

const FIXTURE_SEED: u64 = 7;

/// Set `FOLKSO_REGENERATE=1` to rewrite the file instead of checking it.
#[test]
fn bundled_fixture_matches_generator() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/events_1k.jsonl");
    let expected = serialize_events(&synthetic_events(1000, FIXTURE_SEED));
    if std::env::var_os("FOLKSO_REGENERATE").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    let actual = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected);
}
