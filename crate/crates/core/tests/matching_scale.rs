use std::collections::BTreeSet;

use folkso_core::embedding::{embed, Embedding};
use folkso_core::fsn::{build_fsn, AcquaintanceWeights, Fsn, PrefixLexicon};
use folkso_core::ingest::aggregate;
use folkso_core::matching::{candidate_pairs, elasto_adaptive_match, MatchConfig};
use folkso_core::model::{compute_ctr, make_fd_tag, FDTag, FormalContext, ResourceRef};
use folkso_core::synth::synthetic_events;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tag(rng: &mut ChaCha8Rng, i: usize) -> FDTag {
    const STEMS: &[&str] = &["news", "sport", "tech", "music", "food", "art", "travel", "game"];
    let stem = STEMS[rng.random_range(0..STEMS.len())];
    let label = format!("{stem}{}", rng.random_range(0..500));
    let topic = format!("t{}", rng.random_range(0..20));
    let ctx = FormalContext::new(BTreeSet::from([topic]), BTreeSet::from(["d".to_string()]), BTreeSet::new()).unwrap();
    let uri = ResourceRef::parse(&format!("https://r.example/{}", i % 300)).unwrap();
    make_fd_tag(&label, ctx, compute_ctr(rng.random_range(0..5), 5).unwrap(), uri, 1.0).unwrap()
}

#[test]
fn candidate_storage_bounded_on_ten_thousand_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let a_tags: Vec<FDTag> = (0..10_000).map(|i| random_tag(&mut rng, i)).collect();
    let b_tags: Vec<FDTag> = (0..200).map(|i| random_tag(&mut rng, i)).collect();
    let a = Fsn::from_parts(a_tags, Vec::new(), 0.5).unwrap();
    let b = Fsn::from_parts(b_tags, Vec::new(), 0.5).unwrap();
    let m = 5;
    let c = candidate_pairs(&a, &b, &PrefixLexicon::open(), &AcquaintanceWeights::default(), m).unwrap();
    assert!(c.peak_entries <= m * a.len(), "peak {} > {}", c.peak_entries, m * a.len());
    assert!(c.peak_entries < a.len() * b.len());
    assert_eq!(c.per_source.len(), a.len());
    assert!(c.per_source.iter().all(|l| l.len() <= m && l.iter().all(|x| x.score > 0.0)));
    assert!(c.total() > 0);
}

fn synthetic_network(seed: u64) -> (Fsn, Embedding) {
    let tags = aggregate(&synthetic_events(600, seed), 1.0);
    let fsn = build_fsn(tags, &PrefixLexicon::open(), &AcquaintanceWeights::default(), 0.5).unwrap();
    let emb = embed(&fsn, seed);
    (fsn, emb)
}

#[test]
fn matching_is_deterministic_monotone_and_injective() {
    let (a, ea) = synthetic_network(1);
    let (b, eb) = synthetic_network(2);
    let lex = PrefixLexicon::open();
    let cfg = MatchConfig::default();
    let first = elasto_adaptive_match((&a, &ea), (&b, &eb), &lex, &cfg).unwrap();
    let second = elasto_adaptive_match((&a, &ea), (&b, &eb), &lex, &cfg).unwrap();
    assert_eq!(first, second);
    assert!(first.is_injective());
    assert!(first.trace.windows(2).all(|w| w[0] <= w[1]));
    assert!(first.mapping.iter().flatten().count() > 0);
}

#[test]
fn identical_snapshots_match_identically() {
    let (a, ea) = synthetic_network(3);
    let c = elasto_adaptive_match((&a, &ea), (&a, &ea), &PrefixLexicon::open(), &MatchConfig::default()).unwrap();
    assert_eq!(c.mapping, (0..a.len()).map(Some).collect::<Vec<_>>());
    assert_eq!(c.energy(), 0.0);
    assert_eq!(c.combined(), 1.0);
}
