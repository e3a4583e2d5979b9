//! Rank-correlation and score-difference metrics over id-keyed score lists.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of equal-width levels on `[0, 1]` used by [`avg_level_diff`].
pub const LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("score for {0:?} is not finite")]
    NonFiniteScore(String),
    #[error("rankings do not cover the same ids")]
    MismatchedIds,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("gold score {score} for {id:?} lies outside [0, 1]")]
    OutOfScale { id: String, score: f64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Scores keyed by unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRanking {
    items: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    id: String,
    score: f64,
}

impl ScoredRanking {
    pub fn new<I, S>(items: I) -> Result<Self, MetricError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (id, score) in items {
            let id = id.into();
            if !score.is_finite() {
                return Err(MetricError::NonFiniteScore(id));
            }
            if map.contains_key(&id) {
                return Err(MetricError::DuplicateId(id));
            }
            map.insert(id, score);
        }
        Ok(Self { items: map })
    }

    /// Reads `{"id": str, "score": float}` lines; blank lines are skipped.
    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Self, MetricError> {
        let mut items = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| MetricError::Parse { line: i + 1, reason: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreLine =
                serde_json::from_str(&line).map_err(|e| MetricError::Parse { line: i + 1, reason: e.to_string() })?;
            items.push((rec.id, rec.score));
        }
        Self::new(items)
    }

    pub fn to_jsonl(&self) -> String {
        self.items
            .iter()
            .map(|(id, &score)| serde_json::to_string(&ScoreLine { id: id.clone(), score }).expect("finite scores serialize") + "\n")
            .collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.items.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.items.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Paired score vectors in id order.
fn align(x: &ScoredRanking, y: &ScoredRanking) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
    if x.items.len() != y.items.len() || !x.items.keys().eq(y.items.keys()) {
        return Err(MetricError::MismatchedIds);
    }
    Ok((x.items.values().copied().collect(), y.items.values().copied().collect()))
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort of `v` that returns the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Tie-corrected Kendall τ_b in O(n log n).
pub fn kendall_tau(x: &ScoredRanking, y: &ScoredRanking) -> Result<f64, MetricError> {
    let (xs, ys) = align(x, y)?;
    let n = xs.len();
    if n < 2 {
        return Err(MetricError::DegenerateInput("need at least two items"));
    }
    let mut pairs: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs_sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs_sorted);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys_sorted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = sort_counting_swaps(&mut ys_sorted, &mut Vec::with_capacity(n));
    let n2 = tied_pairs(&ys_sorted);

    if n1 == n0 || n2 == n0 {
        return Err(MetricError::DegenerateInput("all scores tied"));
    }
    let s = n0 as i64 - n1 as i64 - n2 as i64 + joint as i64 - 2 * swaps as i64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman ρ as the Pearson correlation of average ranks.
pub fn spearman_rho(x: &ScoredRanking, y: &ScoredRanking) -> Result<f64, MetricError> {
    let (xs, ys) = align(x, y)?;
    if xs.len() < 2 {
        return Err(MetricError::DegenerateInput("need at least two items"));
    }
    pearson(&average_ranks(&xs), &average_ranks(&ys)).ok_or(MetricError::DegenerateInput("all scores tied"))
}

fn check_gold(gold: &ScoredRanking) -> Result<(), MetricError> {
    match gold.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
        Some((id, score)) => Err(MetricError::OutOfScale { id: id.to_string(), score }),
        None => Ok(()),
    }
}

/// Mean absolute score difference.
pub fn avg_diff(pred: &ScoredRanking, gold: &ScoredRanking) -> Result<f64, MetricError> {
    let (p, g) = align(pred, gold)?;
    check_gold(gold)?;
    if p.is_empty() {
        return Err(MetricError::DegenerateInput("empty rankings"));
    }
    Ok(p.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

/// Level `0..LEVELS` of a score after clamping it to `[0, 1]`.
pub fn level(score: f64) -> usize {
    ((score.clamp(0.0, 1.0) * LEVELS as f64).floor() as usize).min(LEVELS - 1)
}

/// Mean absolute difference of quantized levels.
pub fn avg_level_diff(pred: &ScoredRanking, gold: &ScoredRanking) -> Result<f64, MetricError> {
    let (p, g) = align(pred, gold)?;
    check_gold(gold)?;
    if p.is_empty() {
        return Err(MetricError::DegenerateInput("empty rankings"));
    }
    let total: usize = p.iter().zip(&g).map(|(a, b)| level(*a).abs_diff(level(*b))).sum();
    Ok(total as f64 / p.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub n: usize,
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub avg_diff: f64,
    pub avg_level_diff: f64,
}

pub fn score_all(pred: &ScoredRanking, gold: &ScoredRanking) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        n: pred.len(),
        kendall_tau: kendall_tau(pred, gold)?,
        spearman_rho: spearman_rho(pred, gold)?,
        avg_diff: avg_diff(pred, gold)?,
        avg_level_diff: avg_level_diff(pred, gold)?,
    })
}
