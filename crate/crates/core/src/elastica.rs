//! Small-strain elastodynamics on an FSN point lattice.
//!
//! Displacements `u = r' − r` are differentiated with a weighted
//! least-squares fit over each node's stencil (first-order Taylor term only),
//! symmetrized into strain, mapped to stress through the isotropic Hooke law
//! `σ = 2με + λ tr(ε) I` and advanced in time with an explicit leapfrog
//! scheme for `ρ ü = ∇·σ + f`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, NeighborStencil};

/// Normal matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Courant factor of [`stable_dt`].
pub const CFL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElasticError {
    #[error("invalid moduli: mu = {mu} (must be > 0), lambda = {lambda} (must be >= 0)")]
    InvalidModuli { mu: f64, lambda: f64 },
    #[error("stencil of node {node} is singular (condition number {condition:e})")]
    SingularStencil { node: usize, condition: f64 },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    UnstableTimeStep { dt: f64, bound: f64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),
    #[error("mass density must be positive everywhere (node {0})")]
    NonPositiveDensity(usize),
    #[error("field has {got} entries, lattice has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticModuli {
    mu: f64,
    lambda: f64,
}

impl ElasticModuli {
    pub fn new(mu: f64, lambda: f64) -> Result<Self, ElasticError> {
        if mu > 0.0 && lambda >= 0.0 && mu.is_finite() && lambda.is_finite() {
            Ok(Self { mu, lambda })
        } else {
            Err(ElasticError::InvalidModuli { mu, lambda })
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// P-wave speed `sqrt((λ + 2μ) / ρ)`.
    pub fn p_wave_speed(&self, rho: f64) -> f64 {
        ((self.lambda + 2.0 * self.mu) / rho).sqrt()
    }
}

impl Default for ElasticModuli {
    fn default() -> Self {
        Self { mu: 1.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub u: Vec<Vector3<f64>>,
    /// False for reference nodes without a counterpart; their `u` is zero.
    pub matched: Vec<bool>,
}

impl DisplacementField {
    pub fn zeros(n: usize) -> Self {
        Self { u: vec![Vector3::zeros(); n], matched: vec![true; n] }
    }

    pub fn unmatched_count(&self) -> usize {
        self.matched.iter().filter(|m| !**m).count()
    }
}

/// `u(i) = r'(mapping[i]) − r(i)`; unmatched nodes get zero.
pub fn displacement_field(reference: &Embedding, deformed: &Embedding, mapping: &[Option<usize>]) -> DisplacementField {
    let mut field = DisplacementField { u: vec![Vector3::zeros(); reference.len()], matched: vec![false; reference.len()] };
    for (i, target) in mapping.iter().enumerate().take(reference.len()) {
        if let Some(j) = *target {
            field.u[i] = deformed.point(j) - reference.point(i);
            field.matched[i] = true;
        }
    }
    field
}

/// Symmetric strain tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainTensor(pub Matrix3<f64>);

/// Symmetric stress tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressTensor(pub Matrix3<f64>);

impl StrainTensor {
    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// `ε = ½(G + Gᵀ)`; exactly symmetric because `a + b == b + a` in IEEE 754.
pub fn strain(g: &Matrix3<f64>) -> StrainTensor {
    StrainTensor((g + g.transpose()) * 0.5)
}

/// `σ_ij = 2μ ε_ij + λ ε_kk δ_ij`.
pub fn hooke_stress(eps: &StrainTensor, m: &ElasticModuli) -> StressTensor {
    let mut s = eps.0 * (2.0 * m.mu);
    let t = m.lambda * eps.trace();
    for k in 0..3 {
        s[(k, k)] += t;
    }
    StressTensor(s)
}

/// Strain energy density `W = μ ε:ε + (λ/2) tr(ε)²`.
pub fn energy_density(eps: &StrainTensor, m: &ElasticModuli) -> f64 {
    let tr = eps.trace();
    m.mu * eps.0.component_mul(&eps.0).sum() + 0.5 * m.lambda * tr * tr
}

/// Weighted total strain energy; `weights = None` means 1 per node.
pub fn deformation_energy(eps: &[StrainTensor], m: &ElasticModuli, weights: Option<&[f64]>) -> f64 {
    eps.iter().enumerate().map(|(i, e)| weights.map_or(1.0, |w| w[i]) * energy_density(e, m)).sum()
}

/// Weighted least-squares gradient operator for one stencil.
///
/// For node `i` with offsets `dx_j` and weights `w_j`, the gradient of any
/// field `f` is `G = Σ_j (f_j − f_i) c_jᵀ` with `c_j = w_j M⁻¹ dx_j` and
/// `M = Σ_j w_j dx_j dx_jᵀ`, which minimizes `Σ_j w_j ‖Δf_j − G dx_j‖²`.
#[derive(Debug, Clone)]
pub struct GradientOperator {
    rows: Vec<Result<Vec<(usize, Vector3<f64>)>, f64>>,
}

impl GradientOperator {
    pub fn new(stencil: &NeighborStencil) -> Self {
        let rows = (0..stencil.len()).into_par_iter().map(|i| node_coefficients(stencil, i)).collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_singular(&self, node: usize) -> bool {
        self.rows[node].is_err()
    }

    pub fn singular_nodes(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.is_singular(i)).collect()
    }

    pub fn coefficients(&self, node: usize) -> Result<&[(usize, Vector3<f64>)], ElasticError> {
        self.rows[node]
            .as_deref()
            .map_err(|&condition| ElasticError::SingularStencil { node, condition })
    }

    /// Gradient of a vector field at one node: `G[(r, k)] = ∂f_r/∂x_k`.
    pub fn node_gradient(&self, node: usize, field: &[Vector3<f64>]) -> Result<Matrix3<f64>, ElasticError> {
        let mut g = Matrix3::zeros();
        for &(j, c) in self.coefficients(node)? {
            g += (field[j] - field[node]) * c.transpose();
        }
        Ok(g)
    }

    /// Divergence of a tensor field at one node: `Σ_k ∂σ_rk/∂x_k`.
    pub fn node_divergence(&self, node: usize, field: &[Matrix3<f64>]) -> Result<Vector3<f64>, ElasticError> {
        let mut d = Vector3::zeros();
        for &(j, c) in self.coefficients(node)? {
            d += (field[j] - field[node]) * c;
        }
        Ok(d)
    }
}

fn node_coefficients(stencil: &NeighborStencil, node: usize) -> Result<Vec<(usize, Vector3<f64>)>, f64> {
    let entries = stencil.neighbors(node);
    let mut normal = Matrix3::zeros();
    for e in entries {
        normal += e.offset * e.offset.transpose() * e.weight;
    }
    let eig = SymmetricEigen::new(normal);
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(condition);
    }
    let inv = normal.cholesky().ok_or(f64::INFINITY)?.inverse();
    Ok(entries.iter().map(|e| (e.neighbor, inv * e.offset * e.weight)).collect())
}

fn check_len(expected: usize, got: usize) -> Result<(), ElasticError> {
    if expected == got {
        Ok(())
    } else {
        Err(ElasticError::SizeMismatch { expected, got })
    }
}

/// Displacement gradient at every node; fails on the first singular stencil.
pub fn gradient(u: &[Vector3<f64>], op: &GradientOperator) -> Result<Vec<Matrix3<f64>>, ElasticError> {
    check_len(op.len(), u.len())?;
    (0..u.len()).into_par_iter().map(|i| op.node_gradient(i, u)).collect()
}

/// Like [`gradient`] but yields `None` for nodes with singular stencils.
pub fn gradient_lenient(u: &[Vector3<f64>], op: &GradientOperator) -> Vec<Option<Matrix3<f64>>> {
    (0..u.len()).into_par_iter().map(|i| op.node_gradient(i, u).ok()).collect()
}

pub fn stress_divergence(sigma: &[StressTensor], op: &GradientOperator) -> Result<Vec<Vector3<f64>>, ElasticError> {
    check_len(op.len(), sigma.len())?;
    let raw: Vec<Matrix3<f64>> = sigma.iter().map(|s| s.0).collect();
    (0..raw.len()).into_par_iter().map(|i| op.node_divergence(i, &raw)).collect()
}

/// Stress field of a displacement field: gradient → strain → Hooke.
pub fn stress_field(u: &[Vector3<f64>], op: &GradientOperator, m: &ElasticModuli) -> Result<Vec<StressTensor>, ElasticError> {
    Ok(gradient(u, op)?.iter().map(|g| hooke_stress(&strain(g), m)).collect())
}

/// Total strain energy `E(u) = Σ_i w_i W(ε_i(u))` of a displacement field.
pub fn strain_energy(
    u: &[Vector3<f64>],
    op: &GradientOperator,
    m: &ElasticModuli,
    weights: Option<&[f64]>,
) -> Result<f64, ElasticError> {
    let eps: Vec<StrainTensor> = gradient(u, op)?.iter().map(strain).collect();
    Ok(deformation_energy(&eps, m, weights))
}

/// Analytic `∂E/∂u_n` for [`strain_energy`].
///
/// `E` depends on `u` only through `G_i = Σ_j (u_j − u_i) c_ijᵀ` and
/// `∂W/∂G = σ` for symmetric `σ`, so node `i` pushes `w_i σ_i c_ij` onto
/// neighbor `j` and the negated sum onto itself.
pub fn strain_energy_gradient(
    u: &[Vector3<f64>],
    op: &GradientOperator,
    m: &ElasticModuli,
    weights: Option<&[f64]>,
) -> Result<Vec<Vector3<f64>>, ElasticError> {
    let sigma = stress_field(u, op, m)?;
    let mut grad = vec![Vector3::zeros(); u.len()];
    for (i, s) in sigma.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for &(j, c) in op.coefficients(i)? {
            let push = s.0 * c * w;
            grad[j] += push;
            grad[i] -= push;
        }
    }
    Ok(grad)
}

/// Dynamic state of the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub reference: Vec<Vector3<f64>>,
    pub positions: Vec<Vector3<f64>>,
    pub displacement: Vec<Vector3<f64>>,
    pub velocity: Vec<Vector3<f64>>,
    pub rho: Vec<f64>,
    pub body_force: Vec<Vector3<f64>>,
    /// Accumulated exposition time.
    pub clock: f64,
}

impl LatticeState {
    /// At rest in the reference configuration, unit density, no body force.
    pub fn at_rest(reference: Vec<Vector3<f64>>) -> Self {
        let n = reference.len();
        Self {
            positions: reference.clone(),
            reference,
            displacement: vec![Vector3::zeros(); n],
            velocity: vec![Vector3::zeros(); n],
            rho: vec![1.0; n],
            body_force: vec![Vector3::zeros(); n],
            clock: 0.0,
        }
    }

    pub fn from_embedding(e: &Embedding) -> Self {
        Self::at_rest((0..e.len()).map(|i| e.point(i)).collect())
    }

    pub fn with_displacement(mut self, u: Vec<Vector3<f64>>) -> Self {
        self.positions = self.reference.iter().zip(&u).map(|(r, d)| r + d).collect();
        self.displacement = u;
        self
    }

    pub fn with_density(mut self, rho: Vec<f64>) -> Result<Self, ElasticError> {
        check_len(self.reference.len(), rho.len())?;
        if let Some(i) = rho.iter().position(|&r| !(r > 0.0)) {
            return Err(ElasticError::NonPositiveDensity(i));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocity.iter().zip(&self.rho).map(|(v, r)| 0.5 * r * v.norm_squared()).sum()
    }
}

/// `C · h_min / v_p` with `v_p` taken at the smallest density.
pub fn stable_dt(m: &ElasticModuli, state: &LatticeState, stencil: &NeighborStencil) -> f64 {
    CFL * stencil.h_min() / m.p_wave_speed(state.rho_min())
}

/// Nodal internal force `−∂E/∂u`, the discrete weak-form counterpart of
/// `∇·σ`.
///
/// On interior nodes of a regular lattice it coincides with
/// [`stress_divergence`] applied to the stress field. Unlike that operator it
/// is the exact negative adjoint of the gradient, so the semi-discrete system
/// conserves `kinetic + strain` energy even at free boundaries where stencils
/// are one-sided.
pub fn internal_force(
    u: &[Vector3<f64>],
    op: &GradientOperator,
    m: &ElasticModuli,
) -> Result<Vec<Vector3<f64>>, ElasticError> {
    let mut f = strain_energy_gradient(u, op, m, None)?;
    f.iter_mut().for_each(|x| *x = -*x);
    Ok(f)
}

/// `(internal force + f) / ρ` at every node.
pub fn acceleration(
    u: &[Vector3<f64>],
    state: &LatticeState,
    op: &GradientOperator,
    m: &ElasticModuli,
) -> Result<Vec<Vector3<f64>>, ElasticError> {
    let force = internal_force(u, op, m)?;
    Ok(force.iter().zip(&state.body_force).zip(&state.rho).map(|((d, f), r)| (d + f) / *r).collect())
}

/// Kinetic plus strain energy.
pub fn total_energy(state: &LatticeState, op: &GradientOperator, m: &ElasticModuli) -> Result<f64, ElasticError> {
    Ok(state.kinetic_energy() + strain_energy(&state.displacement, op, m, None)?)
}

/// One explicit leapfrog step in kick-drift-kick form, which keeps `u` and
/// `v` at the same time level:
/// `v½ = v + ½Δe·a(u)`, `u' = u + Δe·v½`, `v' = v½ + ½Δe·a(u')`.
pub fn step_dynamics(
    state: &LatticeState,
    stencil: &NeighborStencil,
    op: &GradientOperator,
    m: &ElasticModuli,
    de: f64,
) -> Result<LatticeState, ElasticError> {
    if !(de > 0.0) {
        return Err(ElasticError::NonPositiveTimeStep(de));
    }
    let bound = stable_dt(m, state, stencil);
    if de > bound {
        return Err(ElasticError::UnstableTimeStep { dt: de, bound });
    }
    let half = 0.5 * de;
    let a0 = acceleration(&state.displacement, state, op, m)?;
    let v_half: Vec<Vector3<f64>> = state.velocity.iter().zip(&a0).map(|(v, a)| v + a * half).collect();
    let u_new: Vec<Vector3<f64>> = state.displacement.iter().zip(&v_half).map(|(u, v)| u + v * de).collect();
    let a1 = acceleration(&u_new, state, op, m)?;
    let v_new = v_half.iter().zip(&a1).map(|(v, a)| v + a * half).collect();
    Ok(LatticeState {
        positions: state.reference.iter().zip(&u_new).map(|(r, u)| r + u).collect(),
        displacement: u_new,
        velocity: v_new,
        clock: state.clock + de,
        ..state.clone()
    })
}
