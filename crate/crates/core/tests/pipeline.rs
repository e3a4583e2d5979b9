use folkso_core::elastica::{displacement_field, energy_density, gradient_lenient, strain, ElasticModuli, GradientOperator};
use folkso_core::embedding::{build_stencils, embed, DEFAULT_STENCIL_NEIGHBORS};
use folkso_core::fsn::{build_fsn, detect_hubs, AcquaintanceWeights, PrefixLexicon};
use folkso_core::ingest::{aggregate, parse_events, serialize_events};
use folkso_core::matching::suggest_tags;
use folkso_core::snapshot::{BuildConfig, Snapshot};
use folkso_core::synth::synthetic_events;

fn build(seed: u64) -> Snapshot {
    let text = serialize_events(&synthetic_events(1000, seed));
    let parsed = parse_events(text.as_bytes()).unwrap();
    assert!(parsed.rejected.is_empty());
    let tags = aggregate(&parsed.events, 1.0);
    let weights = AcquaintanceWeights::default();
    let fsn = build_fsn(tags, &PrefixLexicon::open(), &weights, 0.5).unwrap();
    let config =
        BuildConfig { theta: 0.5, lexicon: PrefixLexicon::NAME.into(), seed, weights, time_scale: 1.0 };
    let emb = embed(&fsn, seed);
    Snapshot::new(&fsn, config).with_embedding(emb).unwrap()
}

#[test]
fn end_to_end_is_reproducible() {
    let a = build(11).to_canonical_json();
    let b = build(11).to_canonical_json();
    assert_eq!(a, b);
    assert_eq!(Snapshot::from_json(&a).unwrap().to_canonical_json(), a);
}

#[test]
fn network_has_hubs_and_answers_queries() {
    let snap = build(5);
    let fsn = snap.fsn().unwrap();
    assert!(!fsn.edges().is_empty());
    let hubs = detect_hubs(&fsn, 75.0).unwrap();
    assert!(!hubs.is_empty());
    let floor = hubs.iter().map(|&h| fsn.degree(h)).min().unwrap();
    assert!((0..fsn.len()).filter(|i| !hubs.contains(i)).all(|i| fsn.degree(i) < floor));
    let label = fsn.nodes()[0].label().to_string();
    let top = suggest_tags(&fsn, &format!("#{}", label.to_uppercase()), 5, &PrefixLexicon::open()).unwrap();
    assert_eq!(top[0].label, label);
    assert!(top.len() <= 5);
}

#[test]
fn identity_deformation_has_zero_strain() {
    let snap = build(8);
    let emb = snap.embedding.as_ref().unwrap();
    let mapping: Vec<_> = (0..emb.len()).map(Some).collect();
    let field = displacement_field(emb, emb, &mapping);
    assert_eq!(field.unmatched_count(), 0);
    let stencil = build_stencils(emb.coords(), DEFAULT_STENCIL_NEIGHBORS).unwrap();
    let op = GradientOperator::new(&stencil);
    for g in gradient_lenient(&field.u, &op).into_iter().flatten() {
        assert_eq!(energy_density(&strain(&g), &ElasticModuli::default()), 0.0);
    }
}
