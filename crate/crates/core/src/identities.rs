//! Numerical verification of the exact projector algebra relating population
//! and empirical eigenstructures.
//!
//! Every check computes its two sides by genuinely different routes (direct
//! matrix arithmetic versus coordinate expansions) and records absolute and
//! relative errors. Checks whose denominators are nearly singular are
//! flagged `degenerate` rather than failed: the identities themselves are
//! stated only for non-vanishing denominators.

use serde::Serialize;

use crate::risk::{excess_risk, risk_parts, Realization};
use crate::spectral::Mat;

/// Denominators smaller than this multiple of λ₁ mark a check degenerate.
pub const DEGENERACY_RELATIVE_THRESHOLD: f64 = 1e-9;

/// Outcome of one identity evaluation. `lhs` and `rhs` are scalar summaries
/// (values for scalar identities, Hilbert-Schmidt norms for matrix ones).
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub degenerate: bool,
}

impl IdentityCheck {
    fn from_scalars(name: String, lhs: f64, rhs: f64, degenerate: bool) -> Self {
        let abs_err = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        let rel_err = if scale > 0.0 { abs_err / scale } else { 0.0 };
        IdentityCheck {
            name,
            lhs,
            rhs,
            abs_err,
            rel_err,
            degenerate,
        }
    }

    fn from_matrices(name: String, lhs: &Mat, rhs: &Mat, degenerate: bool) -> Self {
        let abs_err = lhs.sub(rhs).frob_norm();
        let lhs_norm = lhs.frob_norm();
        let rhs_norm = rhs.frob_norm();
        let scale = lhs_norm.max(rhs_norm);
        let rel_err = if scale > 0.0 { abs_err / scale } else { 0.0 };
        IdentityCheck {
            name,
            lhs: lhs_norm,
            rhs: rhs_norm,
            abs_err,
            rel_err,
            degenerate,
        }
    }
}

/// Which block an expansion check targets: a leading index (j ≤ d, paired
/// with the trailing empirical projector) or a trailing index (k > d, paired
/// with the leading empirical projector).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Leading,
    Trailing,
}

fn rank_one(frame_col: &[f64]) -> Mat {
    let p = frame_col.len();
    let mut m = Mat::zeros(p, p);
    for (a, &va) in frame_col.iter().enumerate() {
        for (b, &vb) in frame_col.iter().enumerate() {
            m.set(a, b, va * vb);
        }
    }
    m
}

fn pop_projector(r: &Realization, j: usize) -> Mat {
    rank_one(&r.model().basis().col(j))
}

fn emp_projector(r: &Realization, k: usize) -> Mat {
    rank_one(&r.empirical().vectors.col(k))
}

/// Multiplication-form interaction identity between one population and one
/// empirical eigenprojector:
/// (λ_j − λ̂_k) P_j P̂_k  ==  P_j Δ P̂_k.
/// Stated without division, so it is evaluated even when λ_j ≈ λ̂_k; the
/// degenerate flag still records such near-collisions.
pub fn interaction_identity(r: &Realization, j: usize, k: usize) -> IdentityCheck {
    let top = r.pop_value(0);
    let gap = r.pop_value(j) - r.emp_value(k);
    let degenerate = gap.abs() < DEGENERACY_RELATIVE_THRESHOLD * top;

    let pj = pop_projector(r, j);
    let pk_hat = emp_projector(r, k);
    let lhs = pj.mul(&pk_hat).scale(gap);
    let rhs = pj.mul(&r.delta().to_mat()).mul(&pk_hat);
    IdentityCheck::from_matrices(format!("interaction[{j},{k}]"), &lhs, &rhs, degenerate)
}

/// Overlap expansion: the alignment of one eigendirection with the
/// complementary empirical block equals a sum of squared interaction terms
/// over that block:
/// ⟨P_j, P̂_{>d}⟩ = Σ_{k>d} ‖P_j Δ P̂_k‖₂² / (λ_j − λ̂_k)²   (leading side),
/// ⟨P_k, P̂_{≤d}⟩ = Σ_{j≤d} ‖P_k Δ P̂_j‖₂² / (λ_k − λ̂_j)²   (trailing side).
/// The left side uses eigenvector overlaps, the right side the Δ-coordinates.
pub fn overlap_expansion(r: &Realization, side: Side, index: usize) -> IdentityCheck {
    let d = r.d();
    let p = r.p();
    let top = r.pop_value(0);
    let tol = DEGENERACY_RELATIVE_THRESHOLD * top;
    match side {
        Side::Leading => {
            assert!(index < d, "leading-side index must satisfy j <= d");
            let lhs = r.overlap_with_trailing(index);
            let mut rhs = 0.0;
            let mut degenerate = false;
            for k in d..p {
                let den = r.pop_value(index) - r.emp_value(k);
                if den.abs() < tol {
                    degenerate = true;
                    continue;
                }
                let num = r.delta_mixed(index, k);
                rhs += (num * num) / (den * den);
            }
            IdentityCheck::from_scalars(format!("overlap_leading[{index}]"), lhs, rhs, degenerate)
        }
        Side::Trailing => {
            assert!(index >= d && index < p, "trailing-side index must satisfy k > d");
            let lhs = r.overlap_with_leading(index);
            let mut rhs = 0.0;
            let mut degenerate = false;
            for b in 0..d {
                let den = r.pop_value(index) - r.emp_value(b);
                if den.abs() < tol {
                    degenerate = true;
                    continue;
                }
                let num = r.delta_mixed(index, b);
                rhs += (num * num) / (den * den);
            }
            IdentityCheck::from_scalars(format!("overlap_trailing[{index}]"), lhs, rhs, degenerate)
        }
    }
}

/// Second-order expansion of a mixed projector product: the matrix
/// P_j P̂_{>d} (leading side) equals a first-order population term plus three
/// second-order correction sums; mirrored for P_k P̂_{≤d} (trailing side).
/// Both sides are evaluated as explicit matrices.
pub fn second_order_expansion(r: &Realization, side: Side, index: usize) -> IdentityCheck {
    let d = r.d();
    let p = r.p();
    let top = r.pop_value(0);
    let tol = DEGENERACY_RELATIVE_THRESHOLD * top;
    let delta = r.delta().to_mat();
    let mut degenerate = false;
    let mut guard = |den: f64| -> f64 {
        if den.abs() < tol {
            degenerate = true;
        }
        den
    };

    let (name, lhs, rhs) = match side {
        Side::Leading => {
            assert!(index < d, "leading-side index must satisfy j <= d");
            let j = index;
            let pj = pop_projector(r, j);
            let lhs = pj.mul(&r.emp_leading().complement().matrix().to_mat());
            let pj_delta = pj.mul(&delta);

            let mut rhs = Mat::zeros(p, p);
            // first-order: Σ_{k>d} P_jΔP_k / (λ_j − λ_k)
            for k in d..p {
                let den = guard(r.pop_value(j) - r.pop_value(k));
                let term = pj_delta.mul(&pop_projector(r, k)).scale(1.0 / den);
                rhs = rhs.add(&term);
            }
            // + Σ_{k≤d} Σ_{l>d} P_jΔP_kΔP̂_l / ((λ_j−λ̂_l)(λ_k−λ̂_l))
            for k in 0..d {
                let head = pj_delta.mul(&pop_projector(r, k)).mul(&delta);
                for l in d..p {
                    let den1 = guard(r.pop_value(j) - r.emp_value(l));
                    let den2 = guard(r.pop_value(k) - r.emp_value(l));
                    let term = head.mul(&emp_projector(r, l)).scale(1.0 / (den1 * den2));
                    rhs = rhs.add(&term);
                }
            }
            // + Σ_{k>d} Σ_{l≤d} P_jΔP_kΔP̂_l / ((λ_j−λ_k)(λ̂_l−λ_k))
            for k in d..p {
                let den1 = guard(r.pop_value(j) - r.pop_value(k));
                let head = pj_delta.mul(&pop_projector(r, k)).mul(&delta);
                for l in 0..d {
                    let den2 = guard(r.emp_value(l) - r.pop_value(k));
                    let term = head.mul(&emp_projector(r, l)).scale(1.0 / (den1 * den2));
                    rhs = rhs.add(&term);
                }
            }
            // − Σ_{k>d} Σ_{l>d} P_jΔP_kΔP̂_l / ((λ_j−λ̂_l)(λ_j−λ_k))
            for k in d..p {
                let den1 = guard(r.pop_value(j) - r.pop_value(k));
                let head = pj_delta.mul(&pop_projector(r, k)).mul(&delta);
                for l in d..p {
                    let den2 = guard(r.pop_value(j) - r.emp_value(l));
                    let term = head.mul(&emp_projector(r, l)).scale(1.0 / (den1 * den2));
                    rhs = rhs.sub(&term);
                }
            }
            (format!("expansion_leading[{j}]"), lhs, rhs)
        }
        Side::Trailing => {
            assert!(index >= d && index < p, "trailing-side index must satisfy k > d");
            let k = index;
            let pk = pop_projector(r, k);
            let lhs = pk.mul(&r.emp_leading().matrix().to_mat());
            let pk_delta = pk.mul(&delta);

            let mut rhs = Mat::zeros(p, p);
            // first-order: Σ_{j≤d} P_kΔP_j / (λ_k − λ_j)
            for j in 0..d {
                let den = guard(r.pop_value(k) - r.pop_value(j));
                let term = pk_delta.mul(&pop_projector(r, j)).scale(1.0 / den);
                rhs = rhs.add(&term);
            }
            // + Σ_{j>d} Σ_{l≤d} P_kΔP_jΔP̂_l / ((λ_k−λ̂_l)(λ_j−λ̂_l))
            for j in d..p {
                let head = pk_delta.mul(&pop_projector(r, j)).mul(&delta);
                for l in 0..d {
                    let den1 = guard(r.pop_value(k) - r.emp_value(l));
                    let den2 = guard(r.pop_value(j) - r.emp_value(l));
                    let term = head.mul(&emp_projector(r, l)).scale(1.0 / (den1 * den2));
                    rhs = rhs.add(&term);
                }
            }
            // + Σ_{j≤d} Σ_{l>d} P_kΔP_jΔP̂_l / ((λ_k−λ_j)(λ̂_l−λ_j))
            for j in 0..d {
                let den1 = guard(r.pop_value(k) - r.pop_value(j));
                let head = pk_delta.mul(&pop_projector(r, j)).mul(&delta);
                for l in d..p {
                    let den2 = guard(r.emp_value(l) - r.pop_value(j));
                    let term = head.mul(&emp_projector(r, l)).scale(1.0 / (den1 * den2));
                    rhs = rhs.add(&term);
                }
            }
            // − Σ_{j≤d} Σ_{l≤d} P_kΔP_jΔP̂_l / ((λ_k−λ_j)(λ_k−λ̂_l))
            for j in 0..d {
                let den1 = guard(r.pop_value(k) - r.pop_value(j));
                let head = pk_delta.mul(&pop_projector(r, j)).mul(&delta);
                for l in 0..d {
                    let den2 = guard(r.pop_value(k) - r.emp_value(l));
                    let term = head.mul(&emp_projector(r, l)).scale(1.0 / (den1 * den2));
                    rhs = rhs.sub(&term);
                }
            }
            (format!("expansion_trailing[{k}]"), lhs, rhs)
        }
    };
    IdentityCheck::from_matrices(name, &lhs, &rhs, degenerate)
}

/// Split identity: the excess risk computed on the matrix route equals the
/// sum of the two overlap-route parts, for every real reference level μ.
pub fn spectral_split_identity(r: &Realization, mu: f64) -> IdentityCheck {
    let lhs = excess_risk(r);
    let (a, b) = risk_parts(r, mu);
    IdentityCheck::from_scalars(format!("spectral_split[mu={mu}]"), lhs, a + b, false)
}

/// Runs the complete identity suite on one realization: every interaction
/// pair, every overlap expansion, every second-order expansion, and the
/// split identity at each requested μ.
pub fn verify_realization(r: &Realization, mus: &[f64]) -> Vec<IdentityCheck> {
    let d = r.d();
    let p = r.p();
    let mut checks = Vec::new();
    for j in 0..p {
        for k in 0..p {
            checks.push(interaction_identity(r, j, k));
        }
    }
    for j in 0..d {
        checks.push(overlap_expansion(r, Side::Leading, j));
    }
    for k in d..p {
        checks.push(overlap_expansion(r, Side::Trailing, k));
    }
    for j in 0..d {
        checks.push(second_order_expansion(r, Side::Leading, j));
    }
    for k in d..p {
        checks.push(second_order_expansion(r, Side::Trailing, k));
    }
    for &mu in mus {
        checks.push(spectral_split_identity(r, mu));
    }
    checks
}
