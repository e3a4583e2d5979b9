//! The Folksodriven Structure Network: tags as nodes, weighted acquaintance
//! relations as undirected edges, plus the topology summaries used to check
//! for hubs and a power-law degree tail.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FDTag;

/// Exponent estimates are capped here when the tail is degenerate.
pub const ALPHA_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FsnError {
    #[error("cannot build a network from an empty tag set")]
    EmptyTagSet,
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("percentile must lie in (0, 100), got {0}")]
    InvalidPercentile(f64),
    #[error("power-law tail needs at least 2 degrees >= k_min, found {found}")]
    InsufficientTail { found: usize },
    #[error("k_min must be positive")]
    ZeroKmin,
    #[error("malformed network: {0}")]
    Malformed(String),
}

/// Lexical similarity between normalized tag labels.
///
/// Implementations must return 1 for `(a, a)` on known labels, be symmetric
/// and stay within `[0, 1]`. Unknown labels score 0.
pub trait Lexicon: Sync {
    fn name(&self) -> &str;
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Exact-match plus shared-prefix scorer: 1 for equal labels, otherwise
/// `common_prefix / max_len` counted in chars.
///
/// With a vocabulary, labels outside it score 0; without one every label is
/// known.
#[derive(Debug, Clone, Default)]
pub struct PrefixLexicon {
    vocabulary: Option<BTreeSet<String>>,
}

impl PrefixLexicon {
    pub const NAME: &'static str = "prefix";

    pub fn open() -> Self {
        Self { vocabulary: None }
    }

    pub fn with_vocabulary<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { vocabulary: Some(words.into_iter().map(Into::into).collect()) }
    }

    fn knows(&self, label: &str) -> bool {
        self.vocabulary.as_ref().is_none_or(|v| v.contains(label))
    }
}

impl Lexicon for PrefixLexicon {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        if !self.knows(a) || !self.knows(b) {
            return 0.0;
        }
        if a == b {
            return 1.0;
        }
        let max_len = a.chars().count().max(b.chars().count());
        if max_len == 0 {
            return 0.0;
        }
        let common = a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count();
        (common as f64 / max_len as f64).max(0.0)
    }
}

/// Mixing weights for the acquaintance score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquaintanceWeights {
    pub label: f64,
    pub topic: f64,
    pub resource: f64,
}

impl Default for AcquaintanceWeights {
    fn default() -> Self {
        Self { label: 0.6, topic: 0.3, resource: 0.1 }
    }
}

impl AcquaintanceWeights {
    /// Weighted mean of the three components. Dividing by the weight sum keeps
    /// a perfect match at exactly 1.0 despite rounding in `0.6 + 0.3 + 0.1`.
    pub fn combine(&self, label: f64, topic: f64, resource: f64) -> f64 {
        let total = self.label + self.topic + self.resource;
        let score = (self.label * label + self.topic * topic + self.resource * resource) / total;
        score.clamp(0.0, 1.0)
    }
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn acquaintance_score(a: &FDTag, b: &FDTag, lex: &dyn Lexicon, weights: &AcquaintanceWeights) -> f64 {
    let label = lex.similarity(a.label(), b.label());
    let topic = jaccard(a.context().topics(), b.context().topics());
    let resource = if a.resource() == b.resource() { 1.0 } else { 0.0 };
    weights.combine(label, topic, resource)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// An immutable FSN. Edges are stored once with `a < b`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Fsn {
    nodes: Vec<FDTag>,
    edges: Vec<Edge>,
    theta: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Fsn {
    /// Reassembles a network, checking the structural invariants.
    pub fn from_parts(nodes: Vec<FDTag>, mut edges: Vec<Edge>, theta: f64) -> Result<Self, FsnError> {
        if nodes.is_empty() {
            return Err(FsnError::EmptyTagSet);
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(FsnError::InvalidThreshold(theta));
        }
        let n = nodes.len();
        for e in &edges {
            if e.a >= e.b || e.b >= n {
                return Err(FsnError::Malformed(format!("bad edge ({}, {})", e.a, e.b)));
            }
            if !(e.weight >= theta && e.weight <= 1.0) {
                return Err(FsnError::Malformed(format!("edge weight {} outside [theta, 1]", e.weight)));
            }
        }
        edges.sort_by_key(|a| (a.a, a.b));
        if edges.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(FsnError::Malformed("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { nodes, edges, theta, adjacency })
    }

    pub fn nodes(&self) -> &[FDTag] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Induced sub-network on `keep` (in the given order).
    pub fn subgraph(&self, keep: &[usize]) -> Result<Fsn, FsnError> {
        let mut remap = vec![usize::MAX; self.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let nodes = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| remap[e.a] != usize::MAX && remap[e.b] != usize::MAX)
            .map(|e| {
                let (a, b) = (remap[e.a], remap[e.b]);
                Edge { a: a.min(b), b: a.max(b), weight: e.weight }
            })
            .collect();
        Fsn::from_parts(nodes, edges, self.theta)
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Builds the network: an edge joins `i < j` iff their acquaintance score is at
/// least `theta`. Pair scoring runs in parallel; rows are assembled in order.
pub fn build_fsn(
    tags: Vec<FDTag>,
    lex: &dyn Lexicon,
    weights: &AcquaintanceWeights,
    theta: f64,
) -> Result<Fsn, FsnError> {
    if tags.is_empty() {
        return Err(FsnError::EmptyTagSet);
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(FsnError::InvalidThreshold(theta));
    }
    let n = tags.len();
    let rows: Vec<Vec<Edge>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .filter_map(|j| {
                    let w = acquaintance_score(&tags[i], &tags[j], lex, weights);
                    (w >= theta).then_some(Edge { a: i, b: j, weight: w })
                })
                .collect()
        })
        .collect();
    Fsn::from_parts(tags, rows.into_iter().flatten().collect(), theta)
}

/// Nearest-rank percentile of an unsorted sample (`p` in `(0, 100]`).
pub fn nearest_rank<T: Copy + Ord>(values: &[T], p: f64) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Nodes whose degree strictly exceeds the nearest-rank `p`-th percentile of
/// the degree sequence.
pub fn detect_hubs(fsn: &Fsn, percentile: f64) -> Result<BTreeSet<usize>, FsnError> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(FsnError::InvalidPercentile(percentile));
    }
    let degrees = fsn.degrees();
    let cut = nearest_rank(&degrees, percentile);
    Ok(degrees.iter().enumerate().filter(|&(_, &d)| d > cut).map(|(i, _)| i).collect())
}

pub fn degree_distribution(fsn: &Fsn) -> BTreeMap<usize, usize> {
    let mut dist = BTreeMap::new();
    for d in fsn.degrees() {
        *dist.entry(d).or_insert(0) += 1;
    }
    dist
}

/// Maximum-likelihood power-law exponent over the tail `k >= k_min`, using the
/// continuous approximation with a half-unit shift:
/// `alpha = 1 + n / sum(ln(k / (k_min - 0.5)))`, capped at [`ALPHA_MAX`].
pub fn fit_power_law(degrees: &[usize], k_min: usize) -> Result<f64, FsnError> {
    if k_min == 0 {
        return Err(FsnError::ZeroKmin);
    }
    let shift = k_min as f64 - 0.5;
    let (n, log_sum) = degrees
        .iter()
        .filter(|&&k| k >= k_min)
        .fold((0usize, 0.0f64), |(n, s), &k| (n + 1, s + (k as f64 / shift).ln()));
    if n < 2 {
        return Err(FsnError::InsufficientTail { found: n });
    }
    if log_sum <= 0.0 {
        return Ok(ALPHA_MAX);
    }
    Ok((1.0 + n as f64 / log_sum).min(ALPHA_MAX))
}

/// Seeded Barabási-Albert graph: starts from a clique on `m + 1` nodes, then
/// attaches each new node to `m` distinct existing nodes chosen with
/// probability proportional to degree. Returns the undirected edge list.
pub fn preferential_attachment(n: usize, m: usize, seed: u64) -> Vec<(usize, usize)> {
    assert!(m >= 1 && n > m, "need n > m >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // one entry per edge endpoint, so uniform sampling is degree-proportional
    let mut endpoints = Vec::new();
    for i in 0..=m {
        for j in (i + 1)..=m {
            edges.push((i, j));
            endpoints.extend([i, j]);
        }
    }
    for v in (m + 1)..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(endpoints[rng.random_range(0..endpoints.len())]);
        }
        for t in targets {
            edges.push((t, v));
            endpoints.extend([t, v]);
        }
    }
    edges
}

pub fn degrees_from_edges(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![0; n];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    deg
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{compute_ctr, make_fd_tag, FormalContext, ResourceRef};

    pub(crate) fn tag(label: &str, topics: &[&str], uri: &str, clicks: u64) -> FDTag {
        let topics: BTreeSet<String> = topics.iter().map(|s| s.to_string()).collect();
        let ctx = FormalContext::new(topics, BTreeSet::from(["d".to_string()]), BTreeSet::new()).unwrap();
        make_fd_tag(label, ctx, compute_ctr(clicks, 10).unwrap(), ResourceRef::parse(uri).unwrap(), 1.0).unwrap()
    }

    /// A network with the given undirected structure; edge weights 1.
    pub(crate) fn graph(n: usize, edges: &[(usize, usize)]) -> Fsn {
        let nodes = (0..n).map(|i| tag(&format!("n{i}"), &["t"], &format!("https://x.org/{i}"), 1)).collect();
        let edges = edges.iter().map(|&(a, b)| Edge { a: a.min(b), b: a.max(b), weight: 1.0 }).collect();
        Fsn::from_parts(nodes, edges, 0.5).unwrap()
    }

    #[test]
    fn prefix_lexicon() {
        let lex = PrefixLexicon::open();
        assert_eq!(lex.similarity("news", "news"), 1.0);
        assert_eq!(lex.similarity("news", "newsroom"), 0.5);
        assert_eq!(lex.similarity("news", "sport"), 0.0);
        let closed = PrefixLexicon::with_vocabulary(["news"]);
        assert_eq!(closed.similarity("news", "news"), 1.0);
        assert_eq!(closed.similarity("newz", "newz"), 0.0);
    }

    #[test]
    fn acquaintance_examples() {
        let lex = PrefixLexicon::open();
        let w = AcquaintanceWeights::default();
        let a = tag("news", &["t1"], "https://a.org", 1);
        assert_eq!(acquaintance_score(&a, &a, &lex, &w), 1.0);

        let closed = PrefixLexicon::with_vocabulary(Vec::<String>::new());
        let b = tag("sport", &["t2"], "https://b.org", 1);
        assert_eq!(acquaintance_score(&a, &b, &closed, &w), 0.0);

        // label sim 0.5 ("news" vs "newsroom"), topic Jaccard 1/2, different resources
        let c = tag("news", &["t1", "t2"], "https://a.org/x", 1);
        let d = tag("newsroom", &["t2"], "https://b.org", 1);
        assert!((acquaintance_score(&c, &d, &lex, &w) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn build_examples() {
        let lex = PrefixLexicon::open();
        let w = AcquaintanceWeights::default();
        let one = build_fsn(vec![tag("a", &["t"], "https://a.org", 1)], &lex, &w, 0.5).unwrap();
        assert_eq!((one.len(), one.edges().len()), (1, 0));

        let triple: Vec<_> = (0..3).map(|i| tag("news", &["t"], &format!("https://a.org/{i}"), 1)).collect();
        let tri = build_fsn(triple, &lex, &w, 0.5).unwrap();
        assert_eq!(tri.edges().len(), 3);
        assert_eq!(degree_distribution(&tri), BTreeMap::from([(2, 3)]));

        assert_eq!(build_fsn(vec![], &lex, &w, 0.5), Err(FsnError::EmptyTagSet));
        let t = vec![tag("a", &["t"], "https://a.org", 1)];
        assert!(matches!(build_fsn(t.clone(), &lex, &w, 1.0 + 1e-9), Err(FsnError::InvalidThreshold(_))));
        assert!(matches!(build_fsn(t, &lex, &w, 0.0), Err(FsnError::InvalidThreshold(_))));
    }

    #[test]
    fn theta_one_keeps_only_perfect_pairs() {
        let lex = PrefixLexicon::open();
        let w = AcquaintanceWeights::default();
        let tags = vec![
            tag("news", &["t"], "https://a.org", 1),
            tag("news", &["t"], "https://a.org", 3),
            tag("news", &["t"], "https://b.org", 1),
            tag("newsy", &["t"], "https://a.org", 1),
        ];
        let fsn = build_fsn(tags.clone(), &lex, &w, 1.0).unwrap();
        // exhaustive pair oracle
        let mut expected = Vec::new();
        for i in 0..tags.len() {
            for j in (i + 1)..tags.len() {
                if acquaintance_score(&tags[i], &tags[j], &lex, &w) == 1.0 {
                    expected.push((i, j));
                }
            }
        }
        let got: Vec<_> = fsn.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(got, expected);
        assert_eq!(got, vec![(0, 1)]);
    }

    #[test]
    fn hubs() {
        let star = graph(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        // brute force: rank nodes by degree, center is the unique maximum
        let degs = star.degrees();
        let max = *degs.iter().max().unwrap();
        let maxima: BTreeSet<_> = (0..6).filter(|&i| degs[i] == max).collect();
        assert_eq!(detect_hubs(&star, 80.0).unwrap(), maxima);
        assert_eq!(detect_hubs(&star, 90.0).unwrap(), BTreeSet::new());

        let k4 = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for p in [1.0, 25.0, 50.0, 99.0] {
            assert!(detect_hubs(&k4, p).unwrap().is_empty());
        }

        let p3 = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(detect_hubs(&p3, 50.0).unwrap(), BTreeSet::from([1]));
        assert!(detect_hubs(&p3, 100.0).is_err());
    }

    #[test]
    fn degree_distributions() {
        assert_eq!(degree_distribution(&graph(1, &[])), BTreeMap::from([(0, 1)]));
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(degree_distribution(&star), BTreeMap::from([(1, 3), (3, 1)]));
    }

    #[test]
    fn power_law_examples() {
        let oracle = 1.0 + 3.0 / ((2.0f64 / 1.5).ln() + (4.0f64 / 1.5).ln() + (8.0f64 / 1.5).ln());
        let got = fit_power_law(&[2, 4, 8], 2).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 2.0195).abs() < 1e-4);

        assert_eq!(fit_power_law(&[10, 10, 10, 10], 10).unwrap(), ALPHA_MAX);
        assert_eq!(fit_power_law(&[1, 1, 1], 2), Err(FsnError::InsufficientTail { found: 0 }));
        assert_eq!(fit_power_law(&[1, 5], 2), Err(FsnError::InsufficientTail { found: 1 }));
    }

    #[test]
    fn subgraph_and_components() {
        let g = graph(5, &[(0, 1), (1, 2), (3, 4)]);
        assert_eq!(g.components(), vec![vec![0, 1, 2], vec![3, 4]]);
        let s = g.subgraph(&[2, 1, 4]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.edges().iter().map(|e| (e.a, e.b)).collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn preferential_attachment_shape() {
        let edges = preferential_attachment(500, 2, 7);
        assert_eq!(edges.len(), 3 + 2 * (500 - 3));
        assert_eq!(edges, preferential_attachment(500, 2, 7));
        let deg = degrees_from_edges(500, &edges);
        assert!(deg.iter().all(|&d| d >= 2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_tag() -> impl Strategy<Value = FDTag> {
            (
                prop::sample::select(vec!["news", "newsroom", "new", "sport", "sports", "tech"]),
                prop::sample::subsequence(vec!["t1", "t2", "t3", "t4"], 1..4),
                prop::sample::select(vec!["https://a.org", "https://b.org", "https://c.org"]),
                0u64..=10,
            )
                .prop_map(|(l, t, u, c)| tag(l, &t, u, c))
        }

        proptest! {
            #[test]
            fn score_symmetric(a in arb_tag(), b in arb_tag()) {
                let lex = PrefixLexicon::open();
                let w = AcquaintanceWeights::default();
                prop_assert_eq!(acquaintance_score(&a, &b, &lex, &w), acquaintance_score(&b, &a, &lex, &w));
            }

            #[test]
            fn threshold_monotone(tags in prop::collection::vec(arb_tag(), 1..12), t1 in 0.05..=1.0f64, t2 in 0.05..=1.0f64) {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let lex = PrefixLexicon::open();
                let w = AcquaintanceWeights::default();
                let edges = |th| -> BTreeSet<(usize, usize)> {
                    build_fsn(tags.clone(), &lex, &w, th).unwrap().edges().iter().map(|e| (e.a, e.b)).collect()
                };
                prop_assert!(edges(hi).is_subset(&edges(lo)));
            }

            #[test]
            fn distribution_sums(tags in prop::collection::vec(arb_tag(), 1..15), th in 0.1..=1.0f64) {
                let fsn = build_fsn(tags, &PrefixLexicon::open(), &AcquaintanceWeights::default(), th).unwrap();
                let dist = degree_distribution(&fsn);
                prop_assert_eq!(dist.values().sum::<usize>(), fsn.len());
                prop_assert_eq!(dist.iter().map(|(d, c)| d * c).sum::<usize>(), 2 * fsn.edges().len());
                for e in fsn.edges() {
                    prop_assert!(e.a < e.b && e.weight >= th);
                }
            }
        }
    }
}
