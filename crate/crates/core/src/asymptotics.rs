//! Limit distributions of the scaled excess risk and of the scaled squared
//! projector distance: weighted chi-square mixtures over the cross-split
//! eigenvalue pairs, sampled directly, plus a two-sample
//! Kolmogorov–Smirnov statistic for comparing scaled finite-`n` Monte Carlo
//! draws against the limit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::Spectrum;
use crate::sampling::RngStream;

/// Which scaled functional the limit law describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LimitLaw {
    /// `n · excess risk`: weights `λ_jλ_k/(λ_j−λ_k)` over strict pairs.
    ExcessRisk,
    /// `n · ‖P̂_{≤d} − P_{≤d}‖₂²`: weights `λ_jλ_k/(λ_j−λ_k)²`, the whole
    /// draw carrying an extra factor 2; requires `λ_d > λ_{d+1}`.
    HsDistance,
}

/// One cross-split pair `(j, k)` (0-based, `j < d ≤ k`) with its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairWeight {
    pub j: usize,
    pub k: usize,
    pub weight: f64,
}

/// A weighted chi-square mixture `factor · Σ w_jk g_jk²` over independent
/// standard normals, one per retained pair. Pairs with tied eigenvalues
/// are excluded for the excess law (their contribution vanishes in the
/// limit); the distance law refuses tied split eigenvalues outright.
#[derive(Debug, Clone, Serialize)]
pub struct LimitLawSpec {
    law: LimitLaw,
    d: usize,
    pairs: Vec<PairWeight>,
}

impl LimitLawSpec {
    pub fn new(spec: &Spectrum, d: usize, law: LimitLaw) -> Result<Self> {
        let p = spec.p();
        if d == 0 || d >= p {
            return Err(Error::InvalidParameter(format!(
                "limit law needs 1 <= d < p, got d={d}, p={p}"
            )));
        }
        let vals = spec.values();
        if law == LimitLaw::HsDistance && vals[d - 1] <= vals[d] {
            return Err(Error::ZeroGap(
                "distance limit law needs lambda_d > lambda_{d+1}".to_string(),
            ));
        }
        let mut pairs = Vec::new();
        for j in 0..d {
            for k in d..p {
                let gap = vals[j] - vals[k];
                if gap <= 0.0 {
                    continue; // tied pair: excluded from the limit sum
                }
                let weight = match law {
                    LimitLaw::ExcessRisk => vals[j] * vals[k] / gap,
                    LimitLaw::HsDistance => vals[j] * vals[k] / (gap * gap),
                };
                pairs.push(PairWeight { j, k, weight });
            }
        }
        Ok(LimitLawSpec { law, d, pairs })
    }

    pub fn law(&self) -> LimitLaw {
        self.law
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn pairs(&self) -> &[PairWeight] {
        &self.pairs
    }

    /// The overall factor multiplying the weighted sum (2 for the distance
    /// law, 1 otherwise).
    pub fn factor(&self) -> f64 {
        match self.law {
            LimitLaw::ExcessRisk => 1.0,
            LimitLaw::HsDistance => 2.0,
        }
    }

    /// Exact mean of the law: `factor · Σ w_jk` (each `g²` has mean one).
    pub fn mean(&self) -> f64 {
        self.factor() * self.pairs.iter().map(|pw| pw.weight).sum::<f64>()
    }
}

/// One draw `factor · Σ w_jk g_jk²` with independent standard normals.
pub fn limit_law_sample(spec: &LimitLawSpec, rng: &mut RngStream) -> f64 {
    let mut sum = 0.0;
    for pw in &spec.pairs {
        let g = rng.next_normal();
        sum += pw.weight * g * g;
    }
    spec.factor() * sum
}

/// One draw of the scaled squared-distance limit (factor 2 included);
/// errors on a tied split gap.
pub fn hs_limit_law_sample(spec: &Spectrum, d: usize, rng: &mut RngStream) -> Result<f64> {
    let law = LimitLawSpec::new(spec, d, LimitLaw::HsDistance)?;
    Ok(limit_law_sample(&law, rng))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_t |F_a(t) − F_b(t)|` in
/// `[0, 1]`. Inputs need not be sorted; they must be nonempty and finite.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter(
            "Kolmogorov-Smirnov statistic needs two nonempty samples".to_string(),
        ));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "Kolmogorov-Smirnov statistic needs finite samples".to_string(),
        ));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CovModel;
    use crate::numeric::pairwise_mean;

    #[test]
    fn excess_law_pair_construction() {
        // Isotropic: no strict pairs, constant-zero law.
        let iso = CovModel::isotropic(1.0, 5).unwrap().spectrum().clone();
        let law = LimitLawSpec::new(&iso, 2, LimitLaw::ExcessRisk).unwrap();
        assert!(law.pairs().is_empty());
        assert_eq!(law.mean(), 0.0);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(limit_law_sample(&law, &mut rng), 0.0);

        // Two-level spiked: d(p−d) pairs, mean d(p−d)(1+x)/x.
        let spec = CovModel::spiked(0.5, 1.0, 3, 9).unwrap().spectrum().clone();
        let law = LimitLawSpec::new(&spec, 3, LimitLaw::ExcessRisk).unwrap();
        assert_eq!(law.pairs().len(), 18);
        assert!((law.mean() - 18.0 * 1.5 / 0.5).abs() <= 1e-12);

        // diag(5,4,3,2,1), d=2: direct-summation oracle 353/12.
        let spec = CovModel::custom(vec![5.0, 4.0, 3.0, 2.0, 1.0])
            .unwrap()
            .spectrum()
            .clone();
        let law = LimitLawSpec::new(&spec, 2, LimitLaw::ExcessRisk).unwrap();
        assert_eq!(law.pairs().len(), 6);
        assert!((law.mean() - 353.0 / 12.0).abs() <= 1e-12, "{}", law.mean());
    }

    #[test]
    fn tied_pairs_are_excluded() {
        // diag(3,2,2,1), d=2: the pair (2,3) has λ_j = λ_k and drops out,
        // leaving mean 6 + 1.5 + 2 = 9.5.
        let spec = CovModel::custom(vec![3.0, 2.0, 2.0, 1.0])
            .unwrap()
            .spectrum()
            .clone();
        let law = LimitLawSpec::new(&spec, 2, LimitLaw::ExcessRisk).unwrap();
        assert_eq!(law.pairs().len(), 3);
        assert!(law
            .pairs()
            .iter()
            .all(|pw| !(pw.j == 1 && pw.k == 2)));
        assert!((law.mean() - 9.5).abs() <= 1e-12);

        // The same spectrum refuses the distance law (zero split gap).
        assert!(matches!(
            LimitLawSpec::new(&spec, 2, LimitLaw::HsDistance),
            Err(Error::ZeroGap(_))
        ));
    }

    #[test]
    fn distance_law_oracles() {
        // diag(3,1), d=1: single pair, law 2·(3/4)·g² with mean 1.5.
        let spec = CovModel::custom(vec![3.0, 1.0]).unwrap().spectrum().clone();
        let law = LimitLawSpec::new(&spec, 1, LimitLaw::HsDistance).unwrap();
        assert!((law.mean() - 1.5).abs() <= 1e-12);
        let mut rng = RngStream::new(7, 0);
        let draw = limit_law_sample(&law, &mut rng);
        let mut rng2 = RngStream::new(7, 0);
        let g = rng2.next_normal();
        assert!((draw - 1.5 * g * g).abs() <= 1e-15);

        // Spiked x=2, p=6, d=2: mean 2·d(p−d)(1+x)/x² = 12.
        let spec = CovModel::spiked(2.0, 1.0, 2, 6).unwrap().spectrum().clone();
        let law = LimitLawSpec::new(&spec, 2, LimitLaw::HsDistance).unwrap();
        assert!((law.mean() - 12.0).abs() <= 1e-12);

        // Convenience sampler agrees with the explicit construction.
        let mut rng_a = RngStream::new(9, 3);
        let mut rng_b = RngStream::new(9, 3);
        let via_helper = hs_limit_law_sample(&spec, 2, &mut rng_a).unwrap();
        let via_spec = limit_law_sample(&law, &mut rng_b);
        assert_eq!(via_helper, via_spec);
    }

    #[test]
    fn monte_carlo_mean_matches_exact_mean() {
        // 10⁵ draws of the diag(5,4,3,2,1), d=2 law: within 3% relative.
        let spec = CovModel::custom(vec![5.0, 4.0, 3.0, 2.0, 1.0])
            .unwrap()
            .spectrum()
            .clone();
        let law = LimitLawSpec::new(&spec, 2, LimitLaw::ExcessRisk).unwrap();
        let mut rng = RngStream::new(123, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| limit_law_sample(&law, &mut rng)).collect();
        let mean = pairwise_mean(&draws);
        let exact = law.mean();
        assert!(
            (mean - exact).abs() <= 0.03 * exact,
            "MC mean {mean} vs exact {exact}"
        );
    }

    #[test]
    fn ks_statistic_hand_cases() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
        let d = ks_statistic(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((d - 1.0 / 3.0).abs() <= 1e-15, "{d}");
        // Unsorted input is handled.
        let d2 = ks_statistic(&[3.0, 1.0, 2.0], &[4.0, 2.0, 3.0]).unwrap();
        assert_eq!(d, d2);
        // Unequal sizes.
        let d = ks_statistic(&[1.0], &[1.0, 2.0]).unwrap();
        assert!((d - 0.5).abs() <= 1e-15);
        assert!(ks_statistic(&[], &[1.0]).is_err());
        assert!(ks_statistic(&[1.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn ks_self_consistency_of_the_law() {
        // Two independent streams of the same law stay within 0.03.
        let spec = CovModel::custom(vec![5.0, 4.0, 3.0, 2.0, 1.0])
            .unwrap()
            .spectrum()
            .clone();
        let law = LimitLawSpec::new(&spec, 2, LimitLaw::ExcessRisk).unwrap();
        let mut rng_a = RngStream::new(5, 1);
        let mut rng_b = RngStream::new(5, 2);
        let a: Vec<f64> = (0..10_000).map(|_| limit_law_sample(&law, &mut rng_a)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| limit_law_sample(&law, &mut rng_b)).collect();
        let d = ks_statistic(&a, &b).unwrap();
        assert!(d <= 0.03, "self-consistency KS = {d}");
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let spec = CovModel::spiked(1.0, 1.0, 2, 5).unwrap().spectrum().clone();
        let law = LimitLawSpec::new(&spec, 2, LimitLaw::ExcessRisk).unwrap();
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(limit_law_sample(&law, &mut a), limit_law_sample(&law, &mut b));
        }
    }

    #[test]
    fn invalid_dimensions_rejected() {
        let spec = CovModel::custom(vec![3.0, 1.0]).unwrap().spectrum().clone();
        assert!(LimitLawSpec::new(&spec, 0, LimitLaw::ExcessRisk).is_err());
        assert!(LimitLawSpec::new(&spec, 2, LimitLaw::ExcessRisk).is_err());
    }
}
