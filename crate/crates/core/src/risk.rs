//! Exact per-realization risk computation: reconstruction error, excess
//! risk and its two-part split, Hilbert-Schmidt projector distance, and the
//! empirical-risk-minimization gap.
//!
//! Two deliberately independent code paths compute the same quantity: the
//! excess risk is evaluated as a matrix inner product ⟨Σ, P − P̂⟩, while the
//! split parts are evaluated from eigenvector overlaps. Their agreement is a
//! verified identity, not an implementation shortcut.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::CovModel;
use crate::spectral::{build_projector, hs_inner, sym_eig, Mat, Projector, SymMatrix};

/// Eigenpairs of an empirical covariance, descending.
#[derive(Debug, Clone)]
pub struct EmpiricalSpectrum {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

/// One draw's complete state: population model, empirical eigensystem,
/// target rank d, the difference Δ = Σ − Σ̂, and cached coordinate data.
///
/// Coordinate caches (all in the population eigenbasis u₁, …, u_p):
/// * `overlap[j][k]  = u_jᵀ û_k`          (population × empirical),
/// * `delta_pop[j][m] = u_jᵀ Δ u_m`        (population × population),
/// * `delta_mixed[j][k] = u_jᵀ Δ û_k`      (population × empirical).
#[derive(Debug, Clone)]
pub struct Realization {
    model: CovModel,
    d: usize,
    sigma: SymMatrix,
    sigma_hat: SymMatrix,
    delta: SymMatrix,
    emp: EmpiricalSpectrum,
    pop_leq: Projector,
    emp_leq: Projector,
    overlap: Mat,
    delta_pop: Mat,
    delta_mixed: Mat,
}

impl Realization {
    /// Builds the realization for a given empirical covariance.
    pub fn new(model: &CovModel, sigma_hat: SymMatrix, d: usize) -> Result<Self> {
        let p = model.p();
        if sigma_hat.dim() != p {
            return Err(Error::DimMismatch {
                expected: p,
                got: sigma_hat.dim(),
            });
        }
        if d == 0 || d >= p {
            return Err(Error::InvalidParameter(format!(
                "target rank must satisfy 1 <= d < p, got d = {d}, p = {p}"
            )));
        }
        let sigma = model.covariance();
        let delta = sigma.sub(&sigma_hat);
        let eig = sym_eig(&sigma_hat)?;
        let emp = EmpiricalSpectrum {
            values: eig.values,
            vectors: eig.vectors,
        };
        let basis = model.basis();
        let leading: Vec<usize> = (0..d).collect();
        let pop_leq = build_projector(&basis, &leading)?;
        let emp_leq = build_projector(&emp.vectors, &leading)?;

        let basis_t = basis.transpose();
        let overlap = basis_t.mul(&emp.vectors);
        let delta_mat = delta.to_mat();
        let delta_pop = basis_t.mul(&delta_mat).mul(&basis);
        let delta_mixed = basis_t.mul(&delta_mat).mul(&emp.vectors);

        Ok(Realization {
            model: model.clone(),
            d,
            sigma,
            sigma_hat,
            delta,
            emp,
            pop_leq,
            emp_leq,
            overlap,
            delta_pop,
            delta_mixed,
        })
    }

    pub fn model(&self) -> &CovModel {
        &self.model
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn sigma_hat(&self) -> &SymMatrix {
        &self.sigma_hat
    }

    /// Δ = Σ − Σ̂.
    pub fn delta(&self) -> &SymMatrix {
        &self.delta
    }

    pub fn empirical(&self) -> &EmpiricalSpectrum {
        &self.emp
    }

    /// Population eigenvalue with 0-based index j.
    pub fn pop_value(&self, j: usize) -> f64 {
        self.model.spectrum().values()[j]
    }

    /// Empirical eigenvalue with 0-based index j.
    pub fn emp_value(&self, j: usize) -> f64 {
        self.emp.values[j]
    }

    /// Projector onto the top-d population eigenspace.
    pub fn pop_leading(&self) -> &Projector {
        &self.pop_leq
    }

    /// Projector onto the top-d empirical eigenspace.
    pub fn emp_leading(&self) -> &Projector {
        &self.emp_leq
    }

    /// u_jᵀ û_k.
    pub fn overlap(&self, j: usize, k: usize) -> f64 {
        self.overlap.get(j, k)
    }

    /// u_jᵀ Δ u_m.
    pub fn delta_pop(&self, j: usize, m: usize) -> f64 {
        self.delta_pop.get(j, m)
    }

    /// u_jᵀ Δ û_k.
    pub fn delta_mixed(&self, j: usize, k: usize) -> f64 {
        self.delta_mixed.get(j, k)
    }

    /// ⟨P_j, P̂_k⟩ = (u_jᵀ û_k)².
    pub fn projector_overlap(&self, j: usize, k: usize) -> f64 {
        let g = self.overlap.get(j, k);
        g * g
    }

    /// ⟨P_j, P̂_{>d}⟩ = Σ_{k>d} (u_jᵀ û_k)².
    pub fn overlap_with_trailing(&self, j: usize) -> f64 {
        (self.d..self.p()).map(|k| self.projector_overlap(j, k)).sum()
    }

    /// ⟨P_k, P̂_{≤d}⟩ = Σ_{j≤d} (u_kᵀ û_j)².
    pub fn overlap_with_leading(&self, k: usize) -> f64 {
        (0..self.d).map(|b| self.projector_overlap(k, b)).sum()
    }

    /// λ_d − λ_{d+1} (population gap across the split).
    pub fn split_gap(&self) -> f64 {
        self.model.spectrum().gap(self.d)
    }
}

/// ⟨Sigma_like, I − P⟩: the expected squared residual of projecting data
/// with second-moment matrix `sigma_like` onto the range of P.
pub fn reconstruction_error(sigma_like: &SymMatrix, proj: &Projector) -> Result<f64> {
    if sigma_like.dim() != proj.dim() {
        return Err(Error::DimMismatch {
            expected: sigma_like.dim(),
            got: proj.dim(),
        });
    }
    Ok(sigma_like.trace() - hs_inner(sigma_like, proj.matrix()))
}

/// Excess risk ⟨Σ, P_{≤d} − P̂_{≤d}⟩, evaluated on the matrix route.
/// Non-negative up to roundoff.
pub fn excess_risk(r: &Realization) -> f64 {
    hs_inner(&r.sigma, r.pop_leq.matrix()) - hs_inner(&r.sigma, r.emp_leq.matrix())
}

/// The two-part split of the excess risk at reference level μ:
/// part_leq = Σ_{j≤d} (λ_j − μ)⟨P_j, P̂_{>d}⟩ and
/// part_gt  = Σ_{k>d} (μ − λ_k)⟨P_k, P̂_{≤d}⟩.
/// Their sum equals the excess risk for every real μ; both parts are
/// non-negative when μ lies in [λ_{d+1}, λ_d]. Evaluated on the overlap
/// route, independently of [`excess_risk`].
pub fn risk_parts(r: &Realization, mu: f64) -> (f64, f64) {
    let values = r.model.spectrum().values();
    let p = r.p();
    let d = r.d;
    let mut part_leq = 0.0;
    for j in 0..d {
        part_leq += (values[j] - mu) * r.overlap_with_trailing(j);
    }
    let mut part_gt = 0.0;
    for k in d..p {
        part_gt += (mu - values[k]) * r.overlap_with_leading(k);
    }
    (part_leq, part_gt)
}

/// Squared Hilbert-Schmidt distance ‖P − P̂‖₂² between two projectors of
/// equal rank, computed as a direct matrix norm.
pub fn hs_distance_sq(p: &Projector, phat: &Projector) -> Result<f64> {
    if p.rank() != phat.rank() {
        return Err(Error::InvalidParameter(format!(
            "projector ranks differ: {} vs {}",
            p.rank(),
            phat.rank()
        )));
    }
    if p.dim() != phat.dim() {
        return Err(Error::DimMismatch {
            expected: p.dim(),
            got: phat.dim(),
        });
    }
    let diff = p.matrix().sub(phat.matrix());
    Ok(hs_inner(&diff, &diff))
}

/// The basic-inequality surrogate ⟨Δ, P_{≤d} − P̂_{≤d}⟩ with Δ = Σ − Σ̂.
/// Always at least the excess risk (up to roundoff), because P̂_{≤d}
/// maximizes ⟨Σ̂, ·⟩ over rank-d projectors.
pub fn erm_gap(r: &Realization) -> f64 {
    hs_inner(&r.delta, r.pop_leq.matrix()) - hs_inner(&r.delta, r.emp_leq.matrix())
}

/// One realization's headline numbers. Raw values — nominally non-negative
/// entries may be tiny negatives from roundoff, and are reported as-is.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub excess: f64,
    pub part_leq: f64,
    pub part_gt: f64,
    pub mu: f64,
    pub hs_sq: f64,
    pub erm_gap: f64,
}

/// Builds the full report, splitting at reference level μ.
pub fn risk_report(r: &Realization, mu: f64) -> RiskReport {
    let (part_leq, part_gt) = risk_parts(r, mu);
    RiskReport {
        excess: excess_risk(r),
        part_leq,
        part_gt,
        mu,
        hs_sq: hs_distance_sq(&r.pop_leq, &r.emp_leq).expect("equal ranks by construction"),
        erm_gap: erm_gap(r),
    }
}
