//! Population covariance models: eigenvalue spectra from standard decay
//! families, plus spectrum functionals (partial traces, effective rank,
//! spectral gaps) used by every bound.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Mat, SymMatrix};

/// Descending, strictly positive eigenvalue list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Validates positivity, finiteness, and non-increasing order.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidSpectrum(format!(
                    "eigenvalue {i} is {v}; must be finite and positive"
                )));
            }
        }
        for w in values.windows(2) {
            if w[0] < w[1] {
                return Err(Error::InvalidSpectrum(
                    "eigenvalues must be non-increasing".into(),
                ));
            }
        }
        Ok(Spectrum { values })
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The largest eigenvalue.
    pub fn top(&self) -> f64 {
        self.values[0]
    }

    /// The smallest eigenvalue.
    pub fn bottom(&self) -> f64 {
        self.values[self.p() - 1]
    }

    pub fn trace(&self) -> f64 {
        self.tail_sum(0)
    }

    /// Sum of the eigenvalues with 0-based index ≥ `from` (i.e. the trace of
    /// the spectrum after removing the `from` largest eigenvalues).
    /// Summed ascending for accuracy.
    pub fn tail_sum(&self, from: usize) -> f64 {
        assert!(from <= self.p(), "tail_sum start out of range");
        self.values[from..].iter().rev().sum()
    }

    /// Partial trace in 1-based index notation: with `strict`, the sum over
    /// positions j > r; otherwise the sum over positions j ≥ r (r ≥ 1).
    pub fn partial_trace(&self, r: usize, strict: bool) -> Result<f64> {
        if r > self.p() {
            return Err(Error::IndexOutOfRange {
                index: r,
                dim: self.p(),
            });
        }
        if strict {
            Ok(self.tail_sum(r))
        } else {
            Ok(self.tail_sum(r.saturating_sub(1)))
        }
    }

    /// trace / largest eigenvalue, in [1, p].
    pub fn effective_rank(&self) -> f64 {
        self.trace() / self.top()
    }

    /// Gap between the d-th and (d+1)-th largest eigenvalues, where d ≥ 1 is
    /// the size of the leading block. Requires 1 ≤ d < p.
    pub fn gap(&self, d: usize) -> f64 {
        assert!(d >= 1 && d < self.p(), "gap index must satisfy 1 <= d < p");
        self.values[d - 1] - self.values[d]
    }

    /// Reads one eigenvalue per line, descending, plain decimal text.
    /// Blank lines and `#` comment lines are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut values = Vec::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let v: f64 = trimmed.parse().map_err(|_| {
                Error::Parse(format!("line {}: not a number: {trimmed:?}", lineno + 1))
            })?;
            values.push(v);
        }
        Spectrum::new(values)
    }

    /// Writes one eigenvalue per line, plain decimal text.
    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for v in &self.values {
            writeln!(file, "{v}")?;
        }
        Ok(())
    }
}

/// Tag recording which family produced a model's spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// λ_j = exp(−α·j) for j = 1..p, α > 0.
    Exponential { alpha: f64 },
    /// λ_j = j^(−α) for j = 1..p, α > 1.
    Polynomial { alpha: f64 },
    /// Top d eigenvalues in [1+x, 1+κx], remaining eigenvalues 1.
    Spiked { x: f64, kappa: f64, d: usize },
    /// λ_j = σ² for all j.
    Isotropic { sigma_sq: f64 },
    /// Explicit eigenvalue list.
    Custom,
}

/// Population covariance Σ = Σ_j λ_j u_j u_jᵀ: a spectrum plus an orthonormal
/// eigenbasis (identity by default).
#[derive(Debug, Clone)]
pub struct CovModel {
    spectrum: Spectrum,
    basis: Option<Mat>,
    kind: ModelKind,
}

/// Gram residual allowed when installing a model eigenbasis.
const BASIS_GRAM_TOLERANCE: f64 = 1e-8;

impl CovModel {
    /// λ_j = exp(−α·j), j = 1..p.
    pub fn exponential(alpha: f64, p: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "exponential decay rate must be positive and finite, got {alpha}"
            )));
        }
        let values = (1..=p).map(|j| (-alpha * j as f64).exp()).collect();
        Ok(CovModel {
            spectrum: Spectrum::new(values)?,
            basis: None,
            kind: ModelKind::Exponential { alpha },
        })
    }

    /// λ_j = j^(−α), j = 1..p.
    pub fn polynomial(alpha: f64, p: usize) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "polynomial decay rate must exceed 1, got {alpha}"
            )));
        }
        let values = (1..=p).map(|j| (j as f64).powf(-alpha)).collect();
        Ok(CovModel {
            spectrum: Spectrum::new(values)?,
            basis: None,
            kind: ModelKind::Polynomial { alpha },
        })
    }

    /// Spiked model with all d spikes at the lower edge 1+x of the admissible
    /// band [1+x, 1+κx]; trailing eigenvalues 1. x = 0 degenerates to the
    /// identity spectrum.
    pub fn spiked(x: f64, kappa: f64, d: usize, p: usize) -> Result<Self> {
        Self::validate_spiked_params(x, kappa, d, p)?;
        let mut values = vec![1.0 + x; d];
        values.extend(std::iter::repeat(1.0).take(p - d));
        Ok(CovModel {
            spectrum: Spectrum::new(values)?,
            basis: None,
            kind: ModelKind::Spiked { x, kappa, d },
        })
    }

    /// Spiked model with an explicit non-increasing spike profile; every
    /// profile entry must lie in [1+x, 1+κx].
    pub fn spiked_profile(x: f64, kappa: f64, d: usize, p: usize, profile: &[f64]) -> Result<Self> {
        Self::validate_spiked_params(x, kappa, d, p)?;
        if profile.len() != d {
            return Err(Error::InvalidParameter(format!(
                "spike profile length {} does not match d = {d}",
                profile.len()
            )));
        }
        let lo = 1.0 + x;
        let hi = 1.0 + kappa * x;
        for &v in profile {
            if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "spike {v} outside the admissible band [{lo}, {hi}]"
                )));
            }
        }
        let mut values = profile.to_vec();
        values.extend(std::iter::repeat(1.0).take(p - d));
        Ok(CovModel {
            spectrum: Spectrum::new(values)?,
            basis: None,
            kind: ModelKind::Spiked { x, kappa, d },
        })
    }

    fn validate_spiked_params(x: f64, kappa: f64, d: usize, p: usize) -> Result<()> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spike height must be non-negative, got {x}"
            )));
        }
        if !(kappa >= 1.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spike band ratio must be at least 1, got {kappa}"
            )));
        }
        if d == 0 || d >= p {
            return Err(Error::InvalidParameter(format!(
                "spike count must satisfy 1 <= d < p, got d = {d}, p = {p}"
            )));
        }
        Ok(())
    }

    /// λ_j = σ² for all j.
    pub fn isotropic(sigma_sq: f64, p: usize) -> Result<Self> {
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "variance must be positive, got {sigma_sq}"
            )));
        }
        Ok(CovModel {
            spectrum: Spectrum::new(vec![sigma_sq; p])?,
            basis: None,
            kind: ModelKind::Isotropic { sigma_sq },
        })
    }

    /// Explicit eigenvalue list with the identity eigenbasis.
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        Ok(CovModel {
            spectrum: Spectrum::new(values)?,
            basis: None,
            kind: ModelKind::Custom,
        })
    }

    /// Installs an orthonormal eigenbasis (column j is the eigenvector of
    /// λ_j). The frame must be square of dimension p with Gram residual at
    /// most 1e-8.
    pub fn with_basis(mut self, basis: Mat) -> Result<Self> {
        let p = self.p();
        if basis.rows() != p || basis.cols() != p {
            return Err(Error::DimMismatch {
                expected: p,
                got: basis.rows().max(basis.cols()),
            });
        }
        let gram = basis.transpose().mul(&basis);
        let residual = gram.sub(&Mat::identity(p)).max_abs();
        if residual > BASIS_GRAM_TOLERANCE {
            return Err(Error::NonOrthonormalFrame { residual });
        }
        self.basis = Some(basis);
        Ok(self)
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn p(&self) -> usize {
        self.spectrum.p()
    }

    /// True when the eigenbasis is the identity frame.
    pub fn has_identity_basis(&self) -> bool {
        self.basis.is_none()
    }

    /// The eigenbasis as a matrix (identity materialized on demand).
    pub fn basis(&self) -> Mat {
        match &self.basis {
            Some(b) => b.clone(),
            None => Mat::identity(self.p()),
        }
    }

    /// Column j of the eigenbasis.
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        assert!(j < self.p(), "eigenvector index out of range");
        match &self.basis {
            Some(b) => b.col(j),
            None => {
                let mut e = vec![0.0; self.p()];
                e[j] = 1.0;
                e
            }
        }
    }

    /// The covariance matrix U Λ Uᵀ.
    pub fn covariance(&self) -> SymMatrix {
        match &self.basis {
            None => SymMatrix::diag(self.spectrum.values()).expect("validated spectrum"),
            Some(b) => {
                let weights: Vec<(usize, f64)> = self
                    .spectrum
                    .values()
                    .iter()
                    .copied()
                    .enumerate()
                    .collect();
                SymMatrix::weighted_outer(b, &weights).expect("validated basis")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sym_eig;

    #[test]
    fn exponential_matches_hand_values() {
        let m = CovModel::exponential(1.0, 3).unwrap();
        let v = m.spectrum().values();
        assert!((v[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v[1] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v[2] - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn polynomial_matches_hand_values() {
        let m = CovModel::polynomial(2.0, 3).unwrap();
        let v = m.spectrum().values();
        assert_eq!(v, &[1.0, 0.25, 1.0 / 9.0]);
    }

    #[test]
    fn spiked_zero_height_is_isotropic() {
        let m = CovModel::spiked(0.0, 3.0, 15, 40).unwrap();
        assert!(m.spectrum().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn spiked_default_has_two_levels() {
        let m = CovModel::spiked(1.0, 2.0, 15, 40).unwrap();
        let v = m.spectrum().values();
        assert!(v[..15].iter().all(|&x| x == 2.0));
        assert!(v[15..].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn spiked_profile_validates_band() {
        let ok = CovModel::spiked_profile(1.0, 2.0, 2, 4, &[3.0, 2.5]);
        assert!(ok.is_ok());
        let bad = CovModel::spiked_profile(1.0, 2.0, 2, 4, &[3.5, 2.0]);
        assert!(bad.is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(CovModel::exponential(0.0, 3).is_err());
        assert!(CovModel::polynomial(1.0, 3).is_err());
        assert!(CovModel::spiked(-0.1, 1.0, 1, 3).is_err());
        assert!(CovModel::spiked(1.0, 0.5, 1, 3).is_err());
        assert!(CovModel::spiked(1.0, 1.0, 3, 3).is_err());
        assert!(CovModel::isotropic(0.0, 3).is_err());
        assert!(CovModel::custom(vec![1.0, 2.0]).is_err());
        assert!(CovModel::custom(vec![2.0, -1.0]).is_err());
        assert!(Spectrum::new(vec![]).is_err());
    }

    #[test]
    fn partial_trace_hand_cases() {
        let s = Spectrum::new(vec![3.0, 2.0, 1.0]).unwrap();
        // strict: positions j > 1 → 2 + 1 = 3
        assert_eq!(s.partial_trace(1, true).unwrap(), 3.0);
        // strict at r = p → 0
        assert_eq!(s.partial_trace(3, true).unwrap(), 0.0);
        // inclusive: positions j ≥ 2 → 2 + 1 = 3
        assert_eq!(s.partial_trace(2, false).unwrap(), 3.0);
        // inclusive at r = 1 → full trace
        assert_eq!(s.partial_trace(1, false).unwrap(), 6.0);
        assert!(s.partial_trace(4, true).is_err());
    }

    #[test]
    fn partial_trace_exponential_oracle() {
        // Direct-summation oracle: α=1, p=10, r=4 strict → Σ_{j=5}^{10} e^{−j}.
        let m = CovModel::exponential(1.0, 10).unwrap();
        let expect: f64 = (5..=10).map(|j| (-(j as f64)).exp()).sum();
        let got = m.spectrum().partial_trace(4, true).unwrap();
        assert!((got - expect).abs() <= 1e-15);
    }

    #[test]
    fn tail_plus_head_equals_trace() {
        let m = CovModel::polynomial(1.5, 12).unwrap();
        let s = m.spectrum();
        let trace = s.trace();
        for r in 0..=12 {
            let head: f64 = s.values()[..r].iter().sum();
            let rel = ((head + s.tail_sum(r)) - trace).abs() / trace;
            assert!(rel <= 1e-12, "r = {r}: relative error {rel}");
        }
    }

    #[test]
    fn effective_rank_hand_cases() {
        assert_eq!(
            CovModel::isotropic(2.0, 7).unwrap().spectrum().effective_rank(),
            7.0
        );
        assert_eq!(
            Spectrum::new(vec![2.0, 1.0, 1.0]).unwrap().effective_rank(),
            2.0
        );
        // spiked x=1, κ=1, p=40, d=15: tr = 15·2 + 25 = 55, λ₁ = 2 → 27.5
        let m = CovModel::spiked(1.0, 1.0, 15, 40).unwrap();
        assert_eq!(m.spectrum().effective_rank(), 27.5);
    }

    #[test]
    fn gap_and_extremes() {
        let s = Spectrum::new(vec![5.0, 3.0, 1.0]).unwrap();
        assert_eq!(s.gap(1), 2.0);
        assert_eq!(s.gap(2), 2.0);
        assert_eq!(s.top(), 5.0);
        assert_eq!(s.bottom(), 1.0);
    }

    #[test]
    fn covariance_reconstructs_spectrum_with_rotated_basis() {
        // Rotate a custom spectrum by an orthonormal frame and check that
        // eigendecomposition of the assembled covariance recovers it.
        let base = SymMatrix::new(
            4,
            vec![
                2.0, 1.0, 0.5, 0.0, 1.0, 3.0, 0.2, 0.1, 0.5, 0.2, 1.5, 0.3, 0.0, 0.1, 0.3, 2.5,
            ],
        )
        .unwrap();
        let frame = sym_eig(&base).unwrap().vectors;
        let model = CovModel::custom(vec![4.0, 2.0, 1.0, 0.5])
            .unwrap()
            .with_basis(frame)
            .unwrap();
        let sigma = model.covariance();
        let eig = sym_eig(&sigma).unwrap();
        for (got, expect) in eig.values.iter().zip([4.0, 2.0, 1.0, 0.5]) {
            assert!((got - expect).abs() < 1e-10);
        }
        assert!((sigma.trace() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn with_basis_rejects_skewed_frame() {
        let skew = Mat::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(CovModel::custom(vec![2.0, 1.0])
            .unwrap()
            .with_basis(skew)
            .is_err());
    }

    #[test]
    fn spectrum_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.txt");
        let s = Spectrum::new(vec![3.5, 1.25, 0.125]).unwrap();
        s.to_file(&path).unwrap();
        let back = Spectrum::from_file(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn spectrum_file_rejects_garbage_and_disorder() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "1.0\nnot-a-number\n").unwrap();
        assert!(Spectrum::from_file(&bad).is_err());
        let asc = dir.path().join("asc.txt");
        std::fs::write(&asc, "1.0\n2.0\n").unwrap();
        assert!(Spectrum::from_file(&asc).is_err());
    }
}
