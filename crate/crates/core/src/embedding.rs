//! Spatial layout of an FSN and the neighbor stencils used by the
//! differential operators in [`crate::elastica`].
//!
//! Each connected component is laid out with the three Laplacian eigenvectors
//! of smallest nonzero eigenvalue, scaled to unit RMS per axis and shifted
//! along x by `10 × component index`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsn::Fsn;

pub const COMPONENT_SPACING: f64 = 10.0;
pub const DEFAULT_STENCIL_NEIGHBORS: usize = 4;

/// Points closer than this are treated as coincident by [`embed`] and pulled
/// apart with a seeded jitter of at most [`COINCIDENT_JITTER`] per axis.
const COINCIDENT_TOL: f64 = 1e-9;
const COINCIDENT_JITTER: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("cell size must be positive, got {0}")]
    NonPositiveCellSize(f64),
    #[error("nodes {0} and {1} share identical coordinates")]
    DegenerateGeometry(usize, usize),
    #[error("stencil needs at least 2 nodes and 1 <= k <= n-1 (n = {n}, k = {k})")]
    InvalidStencil { n: usize, k: usize },
    #[error("coordinates must be finite")]
    NonFinite,
}

pub type Cell = [i64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    coords: Vec<[f64; 3]>,
    cell_size: f64,
    #[serde(skip)]
    cells: BTreeMap<Cell, Vec<usize>>,
    seed: u64,
}

impl Embedding {
    /// Wraps precomputed coordinates. The cell size defaults to twice the
    /// median nearest-neighbor distance (1.0 when that is zero or undefined).
    pub fn from_coords(coords: Vec<[f64; 3]>, seed: u64) -> Result<Self, EmbedError> {
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let cell_size = default_cell_size(&coords);
        Self::with_cell_size(coords, cell_size, seed)
    }

    pub fn with_cell_size(coords: Vec<[f64; 3]>, cell_size: f64, seed: u64) -> Result<Self, EmbedError> {
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let cells = assign_cells(&coords, cell_size)?;
        Ok(Self { coords, cell_size, cells, seed })
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.coords[i])
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cells(&self) -> &BTreeMap<Cell, Vec<usize>> {
        &self.cells
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cell_of(&self, i: usize) -> Cell {
        cell_index(&self.coords[i], self.cell_size)
    }

    /// Restriction to `keep`, in that order. The cell size is preserved.
    pub fn subset(&self, keep: &[usize]) -> Embedding {
        let coords = keep.iter().map(|&i| self.coords[i]).collect();
        Self::with_cell_size(coords, self.cell_size, self.seed).expect("cell size already validated")
    }

    /// Rebuilds the cell map, e.g. after deserialization.
    pub fn reindex(mut self) -> Result<Self, EmbedError> {
        self.cells = assign_cells(&self.coords, self.cell_size)?;
        Ok(self)
    }
}

fn cell_index(p: &[f64; 3], cell_size: f64) -> Cell {
    [(p[0] / cell_size).floor() as i64, (p[1] / cell_size).floor() as i64, (p[2] / cell_size).floor() as i64]
}

pub fn assign_cells(coords: &[[f64; 3]], cell_size: f64) -> Result<BTreeMap<Cell, Vec<usize>>, EmbedError> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(EmbedError::NonPositiveCellSize(cell_size));
    }
    let mut cells: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
    for (i, p) in coords.iter().enumerate() {
        cells.entry(cell_index(p, cell_size)).or_default().push(i);
    }
    Ok(cells)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn nearest_distances(coords: &[[f64; 3]]) -> Vec<f64> {
    (0..coords.len())
        .into_par_iter()
        .map(|i| {
            coords
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist(&coords[i], q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn default_cell_size(coords: &[[f64; 3]]) -> f64 {
    if coords.len() < 2 {
        return 1.0;
    }
    let mut nn = nearest_distances(coords);
    nn.sort_by(f64::total_cmp);
    let mid = nn.len() / 2;
    let median = if nn.len() % 2 == 0 { 0.5 * (nn[mid - 1] + nn[mid]) } else { nn[mid] };
    if median > 0.0 && median.is_finite() {
        2.0 * median
    } else {
        1.0
    }
}

/// Three smallest-nonzero Laplacian eigenvectors of one component, each with
/// its first nonzero entry made positive and scaled to unit RMS.
fn component_layout(fsn: &Fsn, comp: &[usize]) -> Vec<[f64; 3]> {
    let n = comp.len();
    let mut out = vec![[0.0; 3]; n];
    if n < 2 {
        return out;
    }
    let mut local = BTreeMap::new();
    for (li, &g) in comp.iter().enumerate() {
        local.insert(g, li);
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for (li, &g) in comp.iter().enumerate() {
        for &(nb, w) in fsn.neighbors(g) {
            let lj = local[&nb];
            lap[(li, lj)] -= w;
            lap[(li, li)] += w;
        }
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let nonzero: Vec<usize> = order.into_iter().filter(|&k| eig.eigenvalues[k] > 1e-9 * scale).take(3).collect();
    for (axis, &k) in nonzero.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        if rms > 0.0 {
            for (li, x) in v.iter().enumerate() {
                out[li][axis] = x / rms;
            }
        }
    }
    out
}

/// Spectral layout of the whole network. Coordinates that coincide with an
/// earlier node's are separated by a seeded jitter so stencils stay
/// well-defined; everything else is independent of `seed`.
pub fn embed(fsn: &Fsn, seed: u64) -> Embedding {
    let mut coords = vec![[0.0; 3]; fsn.len()];
    for (ci, comp) in fsn.components().iter().enumerate() {
        let layout = component_layout(fsn, comp);
        for (li, &g) in comp.iter().enumerate() {
            let mut p = layout[li];
            p[0] += COMPONENT_SPACING * ci as f64;
            coords[g] = p;
        }
    }
    separate_coincident(&mut coords, seed);
    Embedding::from_coords(coords, seed).expect("spectral coordinates are finite")
}

fn separate_coincident(coords: &mut [[f64; 3]], seed: u64) {
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&a, &b| {
        coords[a][0].total_cmp(&coords[b][0]).then(coords[a][1].total_cmp(&coords[b][1])).then(a.cmp(&b))
    });
    // sweep along x; only points inside the tolerance window can coincide
    let mut clashes = Vec::new();
    for pos in 0..order.len() {
        let i = order[pos];
        for &j in order[..pos].iter().rev() {
            if coords[i][0] - coords[j][0] > COINCIDENT_TOL {
                break;
            }
            if dist(&coords[i], &coords[j]) <= COINCIDENT_TOL {
                clashes.push(i);
                break;
            }
        }
    }
    clashes.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in clashes {
        for c in coords[i].iter_mut() {
            *c += rng.random_range(-COINCIDENT_JITTER..COINCIDENT_JITTER);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilEntry {
    pub neighbor: usize,
    pub offset: Vector3<f64>,
    pub weight: f64,
}

/// Per-node k-nearest-neighbor lists with inverse-square weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborStencil {
    entries: Vec<Vec<StencilEntry>>,
    h_min: f64,
}

impl NeighborStencil {
    pub fn neighbors(&self, node: usize) -> &[StencilEntry] {
        &self.entries[node]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    /// For each node, the nodes whose stencil contains it.
    pub fn reverse(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.entries.len()];
        for (i, list) in self.entries.iter().enumerate() {
            for e in list {
                rev[e.neighbor].push(i);
            }
        }
        rev
    }
}

/// Builds stencils from the `k` nearest nodes (ties by index). `k` is clamped
/// to `n − 1`.
pub fn build_stencils(coords: &[[f64; 3]], k: usize) -> Result<NeighborStencil, EmbedError> {
    let n = coords.len();
    if n < 2 || k == 0 {
        return Err(EmbedError::InvalidStencil { n, k });
    }
    let k = k.min(n - 1);
    let entries: Vec<Vec<StencilEntry>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (dist(&coords[i], &coords[j]), j)).collect();
            cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter()
                .map(|(d, j)| {
                    let offset = Vector3::from(coords[j]) - Vector3::from(coords[i]);
                    StencilEntry { neighbor: j, offset, weight: 1.0 / (d * d) }
                })
                .collect()
        })
        .collect();
    let mut h_min = f64::INFINITY;
    for (i, list) in entries.iter().enumerate() {
        let first = &list[0];
        if first.offset.norm() == 0.0 {
            return Err(EmbedError::DegenerateGeometry(i.min(first.neighbor), i.max(first.neighbor)));
        }
        h_min = h_min.min(first.offset.norm());
    }
    Ok(NeighborStencil { entries, h_min })
}
