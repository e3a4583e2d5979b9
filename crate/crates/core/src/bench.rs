//! Latency harness: seeded hashtag queries answered by suggestion plus
//! matching against a perturbed copy of the network.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedding::{EmbedError, Embedding};
use crate::fsn::{Fsn, Lexicon};
use crate::matching::{elasto_adaptive_match, suggest_tags, MatchConfig, MatchError};

pub const HISTOGRAM_BINS: usize = 20;

/// Amplitude of the affine strain applied to the perturbed copy.
const PERTURB_STRAIN: f64 = 0.02;
const PERTURB_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchConfig {
    pub queries: usize,
    pub seed: u64,
    pub top_k: usize,
    pub matching: MatchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `HISTOGRAM_BINS + 1` edges; all equal when every sample is equal.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub queries: Vec<String>,
    pub samples_ms: Vec<f64>,
    pub histogram: Histogram,
    pub summary: Summary,
}

/// Hashtag queries sampled from the network's labels, with case and `#`
/// variations a user might type.
pub fn bench_queries(fsn: &Fsn, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = fsn.nodes()[rng.random_range(0..fsn.len())].label();
            match rng.random_range(0..4) {
                0 => format!("#{label}"),
                1 => label.to_uppercase(),
                2 => {
                    let mut c = label.chars();
                    let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
                    format!("#{first}{}", c.as_str())
                }
                _ => label.to_string(),
            }
        })
        .collect()
}

/// Copy of `emb` under a small seeded affine strain plus jitter.
pub fn perturbed_copy(emb: &Embedding, seed: u64) -> Result<Embedding, EmbedError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut a = [[0.0; 3]; 3];
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(-PERTURB_STRAIN..PERTURB_STRAIN);
        }
    }
    let coords = emb
        .coords()
        .iter()
        .map(|p| {
            let mut q = *p;
            for (i, qi) in q.iter_mut().enumerate() {
                *qi += a[i][0] * p[0] + a[i][1] * p[1] + a[i][2] * p[2];
                *qi += rng.random_range(-PERTURB_NOISE..PERTURB_NOISE);
            }
            q
        })
        .collect();
    Embedding::with_cell_size(coords, emb.cell_size(), emb.seed())
}

pub fn histogram(samples: &[f64], bins: usize) -> Histogram {
    let mut counts = vec![0; bins];
    if samples.is_empty() || bins == 0 {
        return Histogram { edges: Vec::new(), counts };
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { max } else { min + width * i as f64 }).collect();
    for &s in samples {
        let bin = if width > 0.0 { ((s - min) / width).floor() as usize } else { 0 };
        counts[bin.min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Nearest-rank summary. Panics on an empty slice.
pub fn summarize(samples: &[f64]) -> Summary {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        min: sorted[0],
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
    }
}

/// Issues `config.queries` queries in sequence and times each one end to end.
pub fn bench_matching(
    fsn: &Fsn,
    emb: &Embedding,
    lex: &dyn Lexicon,
    config: &BenchConfig,
) -> Result<LatencyReport, MatchError> {
    if config.queries == 0 || config.top_k == 0 {
        return Err(MatchError::ZeroLimit);
    }
    if fsn.is_empty() {
        return Err(MatchError::EmptySnapshot);
    }
    let queries = bench_queries(fsn, config.queries, config.seed);
    let deformed = perturbed_copy(emb, config.seed)?;
    let mut samples_ms = Vec::with_capacity(queries.len());
    for q in &queries {
        let start = Instant::now();
        let suggestions = suggest_tags(fsn, q, config.top_k, lex)?;
        let keep: Vec<usize> = (0..fsn.len())
            .filter(|&i| suggestions.iter().any(|s| s.label == fsn.nodes()[i].label()))
            .collect();
        let sub = fsn.subgraph(&keep).expect("indices come from the network");
        let (ea, eb) = (emb.subset(&keep), deformed.subset(&keep));
        let result = elasto_adaptive_match((&sub, &ea), (&sub, &eb), lex, &config.matching)?;
        samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
        log::debug!("query {q:?}: {} nodes, combined {}", keep.len(), result.combined());
    }
    let histogram = histogram(&samples_ms, HISTOGRAM_BINS);
    let summary = summarize(&samples_ms);
    Ok(LatencyReport { queries, samples_ms, histogram, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed;
    use crate::fsn::{build_fsn, AcquaintanceWeights, PrefixLexicon};
    use crate::ingest::aggregate;
    use crate::model::normalize_label;
    use crate::synth::synthetic_events;

    fn network() -> (Fsn, Embedding) {
        let tags = aggregate(&synthetic_events(400, 1), 1.0);
        let fsn = build_fsn(tags, &PrefixLexicon::open(), &AcquaintanceWeights::default(), 0.5).unwrap();
        let emb = embed(&fsn, 42);
        (fsn, emb)
    }

    fn config(queries: usize) -> BenchConfig {
        BenchConfig { queries, seed: 9, top_k: 10, matching: MatchConfig::default() }
    }

    #[test]
    fn single_query() {
        let (fsn, emb) = network();
        let r = bench_matching(&fsn, &emb, &PrefixLexicon::open(), &config(1)).unwrap();
        assert_eq!(r.samples_ms.len(), 1);
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 1);
        assert_eq!(r.histogram.counts[0], 1);
    }

    #[test]
    fn queries_are_seeded_and_resolve() {
        let (fsn, _) = network();
        let q = bench_queries(&fsn, 50, 3);
        assert_eq!(q, bench_queries(&fsn, 50, 3));
        assert!(q.iter().all(|s| fsn.nodes().iter().any(|t| t.label() == normalize_label(s))));
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[1.0, 2.0, 3.0, 4.0], 3);
        assert_eq!(h.counts, vec![1, 1, 2]);
        assert_eq!(h.edges.first(), Some(&1.0));
        assert_eq!(h.edges.last(), Some(&4.0));
        let flat = histogram(&[2.0; 5], 4);
        assert_eq!(flat.counts, vec![5, 0, 0, 0]);
    }

    #[test]
    fn summary_nearest_rank() {
        let samples: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = summarize(&samples);
        assert_eq!((s.min, s.p50, s.p95, s.max, s.mean), (1.0, 10.0, 19.0, 20.0, 10.5));
    }

    #[test]
    fn perturbation_is_small_and_seeded() {
        let (_, emb) = network();
        let a = perturbed_copy(&emb, 5).unwrap();
        assert_eq!(a, perturbed_copy(&emb, 5).unwrap());
        let scale = emb.coords().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, q) in emb.coords().iter().zip(a.coords()) {
            for i in 0..3 {
                assert!((p[i] - q[i]).abs() <= 3.0 * PERTURB_STRAIN * scale + PERTURB_NOISE);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_sum_to_samples(samples in prop::collection::vec(0.0f64..50.0, 1..1000)) {
                let h = histogram(&samples, HISTOGRAM_BINS);
                prop_assert_eq!(h.counts.iter().sum::<usize>(), samples.len());
                let s = summarize(&samples);
                prop_assert!(s.min <= s.p50 && s.p50 <= s.p95 && s.p95 <= s.max);
            }
        }
    }
}
