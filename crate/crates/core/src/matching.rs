//! Elasticity-aware matching between two FSN snapshots, and tag suggestion.
//!
//! A correspondence is scored by
//! `α · mean semantic score − β · (deformation energy / matched pairs)`,
//! where the energy comes from the displacement field the mapping induces on
//! the source lattice. Candidates are pruned to the top `m` targets per source
//! node so no full similarity matrix is ever stored.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::elastica::{energy_density, strain, ElasticModuli, GradientOperator};
use crate::embedding::{build_stencils, EmbedError, Embedding, DEFAULT_STENCIL_NEIGHBORS};
use crate::fsn::{acquaintance_score, AcquaintanceWeights, Fsn, Lexicon};
use crate::model::{normalize_label, ResourceRef};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("cannot match an empty snapshot")]
    EmptySnapshot,
    #[error("embedding has {coords} points but the network has {nodes} nodes")]
    EmbeddingMismatch { nodes: usize, coords: usize },
    #[error(transparent)]
    Geometry(#[from] EmbedError),
    #[error("no tag matches query {0:?}")]
    UnknownQuery(String),
    #[error("k and m must be at least 1")]
    ZeroLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub target: usize,
    pub score: f64,
}

// Heap order: the *worst* candidate sits on top so it can be evicted.
#[derive(PartialEq)]
struct Worst(Candidate);

impl Eq for Worst {}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.score.total_cmp(&self.0.score).then(self.0.target.cmp(&other.0.target))
    }
}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// For each source node, at most `m` targets sorted by descending score,
    /// ties by target index.
    pub per_source: Vec<Vec<Candidate>>,
    /// Largest number of candidate entries held at once while scoring.
    pub peak_entries: usize,
}

impl CandidateSet {
    pub fn total(&self) -> usize {
        self.per_source.iter().map(Vec::len).sum()
    }
}

/// Top-`m` positive-score targets in `b` for every node of `a`.
pub fn candidate_pairs(
    a: &Fsn,
    b: &Fsn,
    lex: &dyn Lexicon,
    weights: &AcquaintanceWeights,
    m: usize,
) -> Result<CandidateSet, MatchError> {
    if m == 0 {
        return Err(MatchError::ZeroLimit);
    }
    let live = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let per_source = a
        .nodes()
        .par_iter()
        .map(|src| {
            let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(m);
            for (t, dst) in b.nodes().iter().enumerate() {
                let score = acquaintance_score(src, dst, lex, weights);
                if score <= 0.0 {
                    continue;
                }
                let entry = Worst(Candidate { target: t, score });
                if heap.len() < m {
                    heap.push(entry);
                    let now = live.fetch_add(1, AtomicOrdering::Relaxed) + 1;
                    peak.fetch_max(now, AtomicOrdering::Relaxed);
                } else if let Some(mut worst) = heap.peek_mut() {
                    if entry < *worst {
                        *worst = entry;
                    }
                }
            }
            let mut list: Vec<Candidate> = heap.into_iter().map(|w| w.0).collect();
            list.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.target.cmp(&y.target)));
            list
        })
        .collect();
    Ok(CandidateSet { per_source, peak_entries: peak.into_inner() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchConfig {
    pub alpha: f64,
    pub beta: f64,
    pub cand_m: usize,
    pub max_iters: usize,
    pub stencil_k: usize,
    pub weights: AcquaintanceWeights,
    pub moduli: ElasticModuli,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            cand_m: 5,
            max_iters: 20,
            stencil_k: DEFAULT_STENCIL_NEIGHBORS,
            weights: AcquaintanceWeights::default(),
            moduli: ElasticModuli::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub semantic_mean: f64,
    pub energy: f64,
    pub matched: usize,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correspondence {
    /// `mapping[i]` is the target of source node `i`, if any.
    pub mapping: Vec<Option<usize>>,
    /// Semantic score of each matched pair.
    pub pair_scores: Vec<Option<f64>>,
    pub evaluation: Evaluation,
    /// Combined score after the greedy seed and after each improvement pass.
    pub trace: Vec<f64>,
    /// Source nodes whose stencil is too degenerate to carry strain.
    pub singular_nodes: usize,
}

impl Correspondence {
    pub fn combined(&self) -> f64 {
        self.evaluation.combined
    }

    pub fn energy(&self) -> f64 {
        self.evaluation.energy
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.mapping.iter().flatten().all(|t| seen.insert(*t))
    }
}

/// The matching objective over a fixed pair of snapshots.
pub struct Objective<'a> {
    a: &'a Fsn,
    b: &'a Fsn,
    coords_a: &'a Embedding,
    coords_b: &'a Embedding,
    lex: &'a dyn Lexicon,
    config: MatchConfig,
    op: Option<GradientOperator>,
    reverse: Vec<Vec<usize>>,
}

impl<'a> Objective<'a> {
    pub fn new(
        a: (&'a Fsn, &'a Embedding),
        b: (&'a Fsn, &'a Embedding),
        lex: &'a dyn Lexicon,
        config: MatchConfig,
    ) -> Result<Self, MatchError> {
        if a.0.is_empty() || b.0.is_empty() {
            return Err(MatchError::EmptySnapshot);
        }
        for (fsn, emb) in [a, b] {
            if fsn.len() != emb.len() {
                return Err(MatchError::EmbeddingMismatch { nodes: fsn.len(), coords: emb.len() });
            }
        }
        let (op, reverse) = if a.0.len() >= 2 {
            let stencil = build_stencils(a.1.coords(), config.stencil_k.max(1))?;
            (Some(GradientOperator::new(&stencil)), stencil.reverse())
        } else {
            (None, vec![Vec::new(); a.0.len()])
        };
        Ok(Self { a: a.0, b: b.0, coords_a: a.1, coords_b: b.1, lex, config, op, reverse })
    }

    pub fn semantic(&self, source: usize, target: usize) -> f64 {
        acquaintance_score(&self.a.nodes()[source], &self.b.nodes()[target], self.lex, &self.config.weights)
    }

    pub fn singular_nodes(&self) -> usize {
        self.op.as_ref().map_or(self.a.len(), |op| op.singular_nodes().len())
    }

    fn displacement(&self, source: usize, target: Option<usize>) -> Vector3<f64> {
        target.map_or_else(Vector3::zeros, |t| self.coords_b.point(t) - self.coords_a.point(source))
    }

    /// Strain energy carried by one matched node with a regular stencil.
    fn node_energy(&self, node: usize, mapping: &[Option<usize>], u: &[Vector3<f64>]) -> f64 {
        match (&self.op, mapping[node]) {
            (Some(op), Some(_)) => op
                .node_gradient(node, u)
                .map(|g| energy_density(&strain(&g), &self.config.moduli))
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Scores a mapping from scratch.
    pub fn evaluate(&self, mapping: &[Option<usize>]) -> Evaluation {
        let mut state = SearchState::new(self, mapping.to_vec());
        state.evaluate(self)
    }
}

/// Mutable mapping plus cached per-node terms for incremental rescoring.
struct SearchState {
    mapping: Vec<Option<usize>>,
    owner: Vec<Option<usize>>,
    u: Vec<Vector3<f64>>,
    semantic: Vec<f64>,
    energy: Vec<f64>,
}

impl SearchState {
    fn new(obj: &Objective<'_>, mapping: Vec<Option<usize>>) -> Self {
        let mut owner = vec![None; obj.b.len()];
        for (i, t) in mapping.iter().enumerate() {
            if let Some(t) = *t {
                owner[t] = Some(i);
            }
        }
        let u: Vec<_> = mapping.iter().enumerate().map(|(i, t)| obj.displacement(i, *t)).collect();
        let semantic = mapping.iter().enumerate().map(|(i, t)| t.map_or(0.0, |t| obj.semantic(i, t))).collect();
        let energy = (0..mapping.len()).map(|i| obj.node_energy(i, &mapping, &u)).collect();
        Self { mapping, owner, u, semantic, energy }
    }

    /// Sums in index order so incremental and from-scratch scores agree bit
    /// for bit.
    fn evaluate(&mut self, obj: &Objective<'_>) -> Evaluation {
        let n = self.mapping.len();
        let matched = self.mapping.iter().flatten().count();
        let semantic_mean = self.semantic.iter().sum::<f64>() / n as f64;
        let energy: f64 = self.energy.iter().sum();
        let normalized = if matched == 0 { 0.0 } else { energy / matched as f64 };
        let combined = obj.config.alpha * semantic_mean - obj.config.beta * normalized;
        Evaluation { semantic_mean, energy, matched, combined }
    }

    /// Applies `(source, new target)` assignments and refreshes the affected
    /// cached terms. Returns the previous assignments for [`Self::apply`]-based
    /// undo.
    fn apply(&mut self, obj: &Objective<'_>, moves: &[(usize, Option<usize>)]) -> Vec<(usize, Option<usize>)> {
        let undo: Vec<_> = moves.iter().map(|&(s, _)| (s, self.mapping[s])).collect();
        for &(s, _) in moves {
            if let Some(t) = self.mapping[s] {
                if self.owner[t] == Some(s) {
                    self.owner[t] = None;
                }
            }
        }
        for &(s, t) in moves {
            self.mapping[s] = t;
            if let Some(t) = t {
                self.owner[t] = Some(s);
            }
            self.u[s] = obj.displacement(s, t);
            self.semantic[s] = t.map_or(0.0, |t| obj.semantic(s, t));
        }
        let mut touched: Vec<usize> = Vec::new();
        for &(s, _) in moves {
            touched.push(s);
            touched.extend_from_slice(&obj.reverse[s]);
        }
        touched.sort_unstable();
        touched.dedup();
        for i in touched {
            self.energy[i] = obj.node_energy(i, &self.mapping, &self.u);
        }
        debug_assert!(self.is_injective());
        undo
    }

    fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.owner.len()];
        self.mapping.iter().flatten().all(|&t| !std::mem::replace(&mut seen[t], true))
    }
}

/// Greedy seeding by semantic score followed by local improvement with
/// reassign / swap / unassign moves, each accepted only if it strictly raises
/// the combined score.
///
/// Move targets per source are its semantic candidates plus its `cand_m`
/// spatially nearest targets, so a relabelled node can still land on its
/// geometric partner. The search also runs from the empty mapping; the greedy
/// run wins ties.
pub fn elasto_adaptive_match(
    a: (&Fsn, &Embedding),
    b: (&Fsn, &Embedding),
    lex: &dyn Lexicon,
    config: &MatchConfig,
) -> Result<Correspondence, MatchError> {
    let obj = Objective::new(a, b, lex, *config)?;
    let cands = candidate_pairs(a.0, b.0, lex, &config.weights, config.cand_m)?;
    let n = a.0.len();

    let mut order: Vec<(usize, Candidate)> =
        cands.per_source.iter().enumerate().flat_map(|(s, list)| list.iter().map(move |c| (s, *c))).collect();
    order.sort_by(|(s1, c1), (s2, c2)| c2.score.total_cmp(&c1.score).then(s1.cmp(s2)).then(c1.target.cmp(&c2.target)));
    let mut mapping = vec![None; n];
    let mut used = vec![false; b.0.len()];
    for (s, c) in order {
        if mapping[s].is_none() && !used[c.target] {
            mapping[s] = Some(c.target);
            used[c.target] = true;
        }
    }

    let options: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut targets: Vec<usize> = cands.per_source[s].iter().map(|c| c.target).collect();
            targets.extend(nearest_targets(a.1.point(s), b.1, config.cand_m));
            targets.sort_unstable();
            targets.dedup();
            targets
        })
        .collect();

    let (mut state, mut best, mut trace) = local_search(&obj, &options, mapping, config.max_iters);
    let (alt, alt_best, alt_trace) = local_search(&obj, &options, vec![None; n], config.max_iters);
    if alt_best.combined > best.combined {
        (state, best, trace) = (alt, alt_best, alt_trace);
    }

    let pair_scores = state.mapping.iter().enumerate().map(|(s, t)| t.map(|t| obj.semantic(s, t))).collect();
    Ok(Correspondence {
        mapping: state.mapping,
        pair_scores,
        evaluation: best,
        trace,
        singular_nodes: obj.singular_nodes(),
    })
}

/// Indices of the `m` targets closest to `p`, nearest first, ties by index.
fn nearest_targets(p: Vector3<f64>, b: &Embedding, m: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = (0..b.len()).map(|t| ((b.point(t) - p).norm_squared(), t)).collect();
    let m = m.min(dist.len());
    if m == 0 {
        return Vec::new();
    }
    dist.select_nth_unstable_by(m - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    dist.truncate(m);
    dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    dist.into_iter().map(|(_, t)| t).collect()
}

/// First-improvement passes over every source until a pass changes nothing.
fn local_search(
    obj: &Objective<'_>,
    options: &[Vec<usize>],
    mapping: Vec<Option<usize>>,
    max_iters: usize,
) -> (SearchState, Evaluation, Vec<f64>) {
    let mut state = SearchState::new(obj, mapping);
    let mut best = state.evaluate(obj);
    let mut trace = vec![best.combined];
    for _ in 0..max_iters {
        let mut improved = false;
        for s in 0..options.len() {
            for option in options[s].iter().copied().map(Some).chain(std::iter::once(None)) {
                let current = state.mapping[s];
                if option == current {
                    continue;
                }
                let mut moves = vec![(s, option)];
                if let Some(t) = option {
                    if let Some(k) = state.owner[t] {
                        // hand our old target to the displaced source if it may take it
                        let back = current.filter(|old| options[k].binary_search(old).is_ok());
                        moves.push((k, back));
                    }
                }
                let undo = state.apply(obj, &moves);
                let trial = state.evaluate(obj);
                if trial.combined > best.combined {
                    best = trial;
                    improved = true;
                } else {
                    state.apply(obj, &undo);
                }
            }
        }
        trace.push(best.combined);
        if !improved {
            break;
        }
    }
    (state, best, trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub label: String,
    pub score: f64,
}

/// Ranks tags related to `query` (a label, topic or resource URI).
///
/// Nodes matched by the query seed the ranking with their match strength;
/// every node then scores `max_m strength(m) · acquaintance(m, v)` through the
/// network's edges, scaled by `(1 + ctr) / 2`. Tags whose label equals the
/// normalized query are ranked ahead of everything else; the rest order by
/// descending score, then label. Labels appear at most once.
pub fn suggest_tags(fsn: &Fsn, query: &str, k: usize, lex: &dyn Lexicon) -> Result<Vec<Suggestion>, MatchError> {
    if k == 0 {
        return Err(MatchError::ZeroLimit);
    }
    let normalized = normalize_label(query);
    let raw = query.trim();
    let folded = raw.to_lowercase();
    let as_resource = ResourceRef::parse(raw).ok();
    let strength: Vec<f64> = fsn
        .nodes()
        .iter()
        .map(|tag| {
            let lexical = if normalized.is_empty() { 0.0 } else { lex.similarity(&normalized, tag.label()) };
            let topical = tag.context().topics().iter().any(|t| t.to_lowercase() == folded);
            let resource = as_resource.as_ref() == Some(tag.resource());
            if topical || resource {
                1.0
            } else {
                lexical
            }
        })
        .collect();
    if strength.iter().all(|&s| s <= 0.0) {
        return Err(MatchError::UnknownQuery(query.to_string()));
    }

    let mut relevance = strength.clone();
    for (m, &s) in strength.iter().enumerate().filter(|(_, &s)| s > 0.0) {
        for &(v, w) in fsn.neighbors(m) {
            relevance[v] = relevance[v].max(s * w);
        }
    }

    let mut best: BTreeMap<&str, (bool, f64)> = BTreeMap::new();
    for (v, &r) in relevance.iter().enumerate().filter(|(_, &r)| r > 0.0) {
        let tag = &fsn.nodes()[v];
        let score = r * (1.0 + tag.exposition().ctr()) / 2.0;
        let exact = tag.label() == normalized;
        let entry = best.entry(tag.label()).or_insert((exact, score));
        entry.1 = entry.1.max(score);
    }
    let mut ranked: Vec<(bool, f64, &str)> = best.into_iter().map(|(l, (e, s))| (e, s, l)).collect();
    ranked.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.total_cmp(&x.1)).then(x.2.cmp(y.2)));
    Ok(ranked.into_iter().take(k).map(|(_, score, label)| Suggestion { label: label.to_string(), score }).collect())
}
