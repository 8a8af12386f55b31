//! Weighted spectral operators and eigenvalue-deviation inequalities: tail
//! bounds for the empirical eigenvalues around the `d`-split, relative
//! deviation bounds, the weighted-block covariance concentration event, and
//! the operator shift-equivalence identity underlying all of them.
//!
//! Every bound returns a [`DeviationBound`] whose hypothesis is recorded
//! numerically (`condition_lhs` / `condition_rhs`); hypothesis failures
//! never suppress evaluation. Probability bounds exceeding one are
//! reported as vacuous rather than silently clamped.

use std::collections::BTreeMap;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::bounds::{weighted_trace_lhs, BoundConstants};
use crate::error::{Error, Result};
use crate::models::{CovModel, Spectrum};
use crate::spectral::{sym_eig, Mat, SymMatrix};

/// Which deviation event a bound controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeviationSide {
    /// Right tail of the first trailing empirical eigenvalue,
    /// `{λ̂_{d+1} − λ_{d+1} > x}`.
    #[serde(rename = "upper_d_plus_1")]
    UpperDPlusOne,
    /// Left tail of the last leading empirical eigenvalue,
    /// `{λ̂_d − λ_d < −x}`.
    #[serde(rename = "lower_d")]
    LowerD,
    /// Relative or operator-norm deviation events.
    #[serde(rename = "relative")]
    Relative,
}

/// One evaluated deviation inequality. The raw probability bound is kept
/// as computed; [`DeviationBound::prob_bound`] clamps to one for reporting
/// and [`DeviationBound::vacuous`] flags the clamped case.
#[derive(Debug, Clone)]
pub struct DeviationBound {
    pub name: String,
    pub side: DeviationSide,
    /// The deviation level the event is evaluated at (`x`, `y`, or an
    /// operator-norm threshold).
    pub x_or_y: f64,
    pub raw_value: f64,
    pub condition_ok: Option<bool>,
    pub condition_lhs: Option<f64>,
    pub condition_rhs: Option<f64>,
    pub params: BTreeMap<String, f64>,
}

impl DeviationBound {
    fn new(name: &str, side: DeviationSide, x_or_y: f64, raw: f64) -> Self {
        DeviationBound {
            name: name.to_string(),
            side,
            x_or_y,
            raw_value: raw,
            condition_ok: None,
            condition_lhs: None,
            condition_rhs: None,
            params: BTreeMap::new(),
        }
    }

    fn condition(mut self, lhs: f64, rhs: f64) -> Self {
        self.condition_ok = Some(lhs <= rhs);
        self.condition_lhs = Some(lhs);
        self.condition_rhs = Some(rhs);
        self
    }

    fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Probability bound clamped to `[0, 1]` for reporting.
    pub fn prob_bound(&self) -> f64 {
        self.raw_value.min(1.0)
    }

    /// True when the raw bound exceeds one and carries no information.
    pub fn vacuous(&self) -> bool {
        self.raw_value > 1.0
    }
}

impl Serialize for DeviationBound {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DeviationBound", 9)?;
        s.serialize_field("name", &self.name)?;
        s.serialize_field("side", &self.side)?;
        s.serialize_field("x_or_y", &self.x_or_y)?;
        if self.prob_bound().is_finite() {
            s.serialize_field("value", &self.prob_bound())?;
        } else {
            s.serialize_field("value", "inf")?;
        }
        s.serialize_field("raw_value", &self.raw_value)?;
        s.serialize_field("vacuous", &self.vacuous())?;
        s.serialize_field("condition_ok", &self.condition_ok)?;
        s.serialize_field("condition_lhs", &self.condition_lhs)?;
        s.serialize_field("condition_rhs", &self.condition_rhs)?;
        s.end()
    }
}

// ---------------------------------------------------------------------------
// Weighted operators
// ---------------------------------------------------------------------------

/// The four weighted projector sums used by the deviation arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WeightKind {
    /// `S_{≤s}(μ) = Σ_{j≤s} (λ_j−μ)^{−1/2} P_j` (requires `λ_s > μ`).
    SLeq { s: usize, mu: f64 },
    /// `R_{≤s}(μ) = Σ_{j≤s} (λ_j−μ)^{1/2} P_j`, the block inverse of
    /// `S_{≤s}(μ)`: their product is the leading projector `P_{≤s}`.
    RLeq { s: usize, mu: f64 },
    /// `T_{>d}(x) = Σ_{k>d} (λ_{d+1}−λ_k+x)^{−1/2} P_k` (requires `x > 0`).
    TGt { d: usize, x: f64 },
    /// `T_{≤d}(x) = Σ_{j≤d} (λ_j−λ_d+x)^{−1/2} P_j` (requires `x > 0`).
    TLeq { d: usize, x: f64 },
}

/// A weighted projector sum, diagonal in the population eigenbasis with
/// strictly positive weights on its block.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    kind: WeightKind,
    /// `(eigendirection index, weight)` pairs over the operator's block.
    weights: Vec<(usize, f64)>,
    matrix: SymMatrix,
}

const BLOCK_INVERSE_TOLERANCE: f64 = 1e-12;

/// Weights for a kind, as `(index, weight)` pairs; errors on nonpositive
/// weights or out-of-range block indices.
fn kind_weights(spec: &Spectrum, kind: WeightKind) -> Result<Vec<(usize, f64)>> {
    let vals = spec.values();
    let p = spec.p();
    let mut weights = Vec::new();
    match kind {
        WeightKind::SLeq { s, mu } | WeightKind::RLeq { s, mu } => {
            if s == 0 || s > p {
                return Err(Error::IndexOutOfRange { index: s, dim: p });
            }
            if vals[s - 1] <= mu {
                return Err(Error::InvalidParameter(format!(
                    "weighted block needs lambda_s > mu, got lambda_{s} = {} and mu = {mu}",
                    vals[s - 1]
                )));
            }
            let inverse = matches!(kind, WeightKind::SLeq { .. });
            for (j, &lam) in vals.iter().enumerate().take(s) {
                let root = (lam - mu).sqrt();
                weights.push((j, if inverse { 1.0 / root } else { root }));
            }
        }
        WeightKind::TGt { d, x } => {
            if d == 0 || d >= p {
                return Err(Error::IndexOutOfRange { index: d, dim: p });
            }
            if !(x > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "trailing weight shift x must be positive, got {x}"
                )));
            }
            for (k, &lam) in vals.iter().enumerate().skip(d) {
                weights.push((k, 1.0 / (vals[d] - lam + x).sqrt()));
            }
        }
        WeightKind::TLeq { d, x } => {
            if d == 0 || d >= p {
                return Err(Error::IndexOutOfRange { index: d, dim: p });
            }
            if !(x > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "leading weight shift x must be positive, got {x}"
                )));
            }
            for (j, &lam) in vals.iter().enumerate().take(d) {
                weights.push((j, 1.0 / (lam - vals[d - 1] + x).sqrt()));
            }
        }
    }
    for &(idx, w) in &weights {
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "weight at eigendirection {idx} is nonpositive or non-finite: {w}"
            )));
        }
    }
    Ok(weights)
}

/// Build a weighted operator for `model`'s spectrum in `model`'s eigenbasis.
/// For the `S`/`R` kinds the block-inverse identity `S·R = P_{≤s}` is
/// verified on construction.
pub fn weighted_operator(model: &CovModel, kind: WeightKind) -> Result<WeightedOperator> {
    let weights = kind_weights(model.spectrum(), kind)?;
    let basis = model.basis();
    let matrix = SymMatrix::weighted_outer(&basis, &weights)?;

    if let WeightKind::SLeq { s, mu } | WeightKind::RLeq { s, mu } = kind {
        let partner_kind = match kind {
            WeightKind::SLeq { .. } => WeightKind::RLeq { s, mu },
            _ => WeightKind::SLeq { s, mu },
        };
        let partner = SymMatrix::weighted_outer(&basis, &kind_weights(model.spectrum(), partner_kind)?)?;
        let product = matrix.to_mat().mul(&partner.to_mat());
        let unit: Vec<(usize, f64)> = (0..s).map(|j| (j, 1.0)).collect();
        let projector = SymMatrix::weighted_outer(&basis, &unit)?;
        let residual = product.sub(&projector.to_mat()).max_abs();
        if residual > BLOCK_INVERSE_TOLERANCE {
            return Err(Error::NonOrthonormalFrame { residual });
        }
    }
    Ok(WeightedOperator {
        kind,
        weights,
        matrix,
    })
}

impl WeightedOperator {
    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }
}

// ---------------------------------------------------------------------------
// Eigenvalue deviation bounds
// ---------------------------------------------------------------------------

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample size n must be at least 1".to_string(),
        ));
    }
    Ok(())
}

fn check_d(spec: &Spectrum, d: usize) -> Result<()> {
    if d == 0 || d >= spec.p() {
        return Err(Error::InvalidParameter(format!(
            "split index d={d} must satisfy 1 <= d < p={}",
            spec.p()
        )));
    }
    Ok(())
}

fn check_level(x: f64, label: &str) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "deviation level {label}={x} must be positive and finite"
        )));
    }
    Ok(())
}

/// Tail exponent `exp(−n·min(x²/(c3²λ²), x/(c3·λ)))` shared by the two
/// absolute deviation bounds.
fn deviation_prob(n: usize, x: f64, lam: f64, c3: f64) -> f64 {
    let quad = x * x / (c3 * c3 * lam * lam);
    let lin = x / (c3 * lam);
    (-(n as f64) * quad.min(lin)).exp()
}

/// Right-tail bound for the first trailing empirical eigenvalue:
/// `P(λ̂_{d+1} − λ_{d+1} > x) ≤ exp(−n·min(x²/(c3²λ_{d+1}²),
/// x/(c3λ_{d+1})))` under the weighted-trace condition
/// `max(c3λ_{d+1}/x, 1)·Σ_{k>d} λ_k/(λ_{d+1}−λ_k+x) ≤ n/c3`.
pub fn right_deviation_bound(
    spec: &Spectrum,
    n: usize,
    d: usize,
    x: f64,
    k: &BoundConstants,
) -> Result<DeviationBound> {
    check_n(n)?;
    check_d(spec, d)?;
    check_level(x, "x")?;
    let vals = spec.values();
    let lam = vals[d];
    let mut sum = 0.0;
    for kk in d..spec.p() {
        sum += vals[kk] / (lam - vals[kk] + x);
    }
    let lhs = (k.c3 * lam / x).max(1.0) * sum;
    Ok(DeviationBound::new(
        "right_deviation",
        DeviationSide::UpperDPlusOne,
        x,
        deviation_prob(n, x, lam, k.c3),
    )
    .condition(lhs, n as f64 / k.c3)
    .param("n", n as f64)
    .param("d", d as f64)
    .param("lambda", lam)
    .param("c3", k.c3))
}

/// Left-tail bound for the last leading empirical eigenvalue:
/// `P(λ̂_d − λ_d < −x) ≤ exp(−n·min(x²/(c3²λ_d²), x/(c3λ_d)))` under
/// `max(c3λ_d/x, 1)·Σ_{j≤d} λ_j/(λ_j−λ_d+x) ≤ n/c3`.
pub fn left_deviation_bound(
    spec: &Spectrum,
    n: usize,
    d: usize,
    x: f64,
    k: &BoundConstants,
) -> Result<DeviationBound> {
    check_n(n)?;
    check_d(spec, d)?;
    check_level(x, "x")?;
    let vals = spec.values();
    let lam = vals[d - 1];
    let mut sum = 0.0;
    for j in 0..d {
        sum += vals[j] / (vals[j] - lam + x);
    }
    let lhs = (k.c3 * lam / x).max(1.0) * sum;
    Ok(DeviationBound::new(
        "left_deviation",
        DeviationSide::LowerD,
        x,
        deviation_prob(n, x, lam, k.c3),
    )
    .condition(lhs, n as f64 / k.c3)
    .param("n", n as f64)
    .param("d", d as f64)
    .param("lambda", lam)
    .param("c3", k.c3))
}

/// Side selector for [`gap_event_bounds`]: which half-gap event to bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapSide {
    /// `{λ̂_{d+1} − λ_{d+1} > (λ_j − λ_{d+1})/2}` for a leading index
    /// `j ≤ d`.
    Right,
    /// `{λ̂_d − λ_d < −(λ_d − λ_k)/2}` for a trailing index `k > d`.
    Left,
}

/// Half-gap deviation events. For `side = Right` and leading index `j`
/// (1-based): condition `(λ_j/(λ_j−λ_{d+1}))·Σ_{k>d} λ_k/(λ_j−λ_k) ≤
/// n/(4c3²)` and bound `exp(−n(λ_j−λ_{d+1})²/(4c3²λ_j²))`. For
/// `side = Left` and trailing index `k`: the mirror condition over the
/// leading block and bound `2·exp(−n(λ_d−λ_k)²/(4c3²λ_d²))`. Zero gaps are
/// rejected.
pub fn gap_event_bounds(
    spec: &Spectrum,
    n: usize,
    d: usize,
    index: usize,
    side: GapSide,
    k: &BoundConstants,
) -> Result<DeviationBound> {
    check_n(n)?;
    check_d(spec, d)?;
    let vals = spec.values();
    let p = spec.p();
    let nf = n as f64;
    let rhs = nf / (4.0 * k.c3 * k.c3);
    match side {
        GapSide::Right => {
            if index == 0 || index > d {
                return Err(Error::IndexOutOfRange { index, dim: d });
            }
            let lam_j = vals[index - 1];
            let gap = lam_j - vals[d];
            if gap <= 0.0 {
                return Err(Error::ZeroGap(format!(
                    "half-gap event needs lambda_{index} > lambda_{}",
                    d + 1
                )));
            }
            let mut sum = 0.0;
            for kk in d..p {
                sum += vals[kk] / (lam_j - vals[kk]);
            }
            let lhs = (lam_j / gap) * sum;
            let raw = (-nf * gap * gap / (4.0 * k.c3 * k.c3 * lam_j * lam_j)).exp();
            Ok(
                DeviationBound::new("gap_event_right", DeviationSide::UpperDPlusOne, gap / 2.0, raw)
                    .condition(lhs, rhs)
                    .param("n", nf)
                    .param("d", d as f64)
                    .param("j", index as f64)
                    .param("gap", gap)
                    .param("c3", k.c3),
            )
        }
        GapSide::Left => {
            if index <= d || index > p {
                return Err(Error::IndexOutOfRange { index, dim: p });
            }
            let lam_d = vals[d - 1];
            let gap = lam_d - vals[index - 1];
            if gap <= 0.0 {
                return Err(Error::ZeroGap(format!(
                    "half-gap event needs lambda_{d} > lambda_{index}"
                )));
            }
            let mut sum = 0.0;
            for j in 0..d {
                sum += vals[j] / (vals[j] - vals[index - 1]);
            }
            let lhs = (lam_d / gap) * sum;
            let raw = 2.0 * (-nf * gap * gap / (4.0 * k.c3 * k.c3 * lam_d * lam_d)).exp();
            Ok(
                DeviationBound::new("gap_event_left", DeviationSide::LowerD, gap / 2.0, raw)
                    .condition(lhs, rhs)
                    .param("n", nf)
                    .param("d", d as f64)
                    .param("k", index as f64)
                    .param("gap", gap)
                    .param("c3", k.c3),
            )
        }
    }
}

/// Relative two-sided deviation bounds for `λ̂_d` at level `y > 0`: both
/// tails are bounded by `e^{1−c·n·(y∧y²)}` with the small-rate constant
/// `c` from the configuration (default `1/(32c3²)`), under the respective
/// weighted-trace conditions
/// `(1/(n(y∧1)))·Σ_{k>d} λ_k/(λ_d−λ_k+yλ_d) ≤ 1/(2c3²)` (upper tail) and
/// `(1/(n(y∧1)))·Σ_{j<d} λ_j/(λ_j−λ_d+yλ_d) ≤ 1/(2c3²)` (lower tail).
pub fn relative_deviation_bounds(
    spec: &Spectrum,
    n: usize,
    d: usize,
    y: f64,
    k: &BoundConstants,
) -> Result<(DeviationBound, DeviationBound)> {
    check_n(n)?;
    check_d(spec, d)?;
    check_level(y, "y")?;
    let vals = spec.values();
    let p = spec.p();
    let nf = n as f64;
    let lam_d = vals[d - 1];
    let y_unit = y.min(1.0);
    let rhs = 1.0 / (2.0 * k.c3 * k.c3);
    let c = k.small_c();
    let raw = (1.0 - c * nf * y.min(y * y)).exp();

    let mut upper_sum = 0.0;
    for kk in d..p {
        upper_sum += vals[kk] / (lam_d - vals[kk] + y * lam_d);
    }
    let upper_lhs = upper_sum / (nf * y_unit);
    let upper = DeviationBound::new("relative_upper", DeviationSide::Relative, y, raw)
        .condition(upper_lhs, rhs)
        .param("n", nf)
        .param("d", d as f64)
        .param("c", c)
        .param("c3", k.c3);

    let mut lower_sum = 0.0;
    for j in 0..d.saturating_sub(1) {
        lower_sum += vals[j] / (vals[j] - lam_d + y * lam_d);
    }
    let lower_lhs = lower_sum / (nf * y_unit);
    let lower = DeviationBound::new("relative_lower", DeviationSide::Relative, y, raw)
        .condition(lower_lhs, rhs)
        .param("n", nf)
        .param("d", d as f64)
        .param("c", c)
        .param("c3", k.c3);
    Ok((upper, lower))
}

/// Concentration of the weighted leading block: for `μ ∈ [0, λ_s)` and
/// `(λ_s/(λ_s−μ))·Σ_{j≤s} λ_j/(λ_j−μ) ≤ n/(256c3²)`,
/// `P(‖S_{≤s}(μ) Δ S_{≤s}(μ)‖_∞ > 1/16) ≤ exp(−n(λ_s−μ)²/(256c3²λ_s²))`.
/// With `μ = λ_{d+1}` the recorded condition fields coincide bit-for-bit
/// with the pivot bounds' condition at pivot `s`.
pub fn weighted_cov_concentration(
    spec: &Spectrum,
    n: usize,
    s_idx: usize,
    mu: f64,
    k: &BoundConstants,
) -> Result<DeviationBound> {
    check_n(n)?;
    let p = spec.p();
    if s_idx == 0 || s_idx > p {
        return Err(Error::IndexOutOfRange { index: s_idx, dim: p });
    }
    let vals = spec.values();
    let lam_s = vals[s_idx - 1];
    if !(0.0..lam_s).contains(&mu) {
        return Err(Error::InvalidParameter(format!(
            "weighted-block level mu={mu} must lie in [0, lambda_{s_idx}={lam_s})"
        )));
    }
    let nf = n as f64;
    let gap = lam_s - mu;
    let raw = (-nf * gap * gap / (256.0 * k.c3 * k.c3 * lam_s * lam_s)).exp();
    Ok(DeviationBound::new(
        "weighted_block_concentration",
        DeviationSide::Relative,
        1.0 / 16.0,
        raw,
    )
    .condition(
        weighted_trace_lhs(vals, s_idx, mu),
        nf / (256.0 * k.c3 * k.c3),
    )
    .param("n", nf)
    .param("s", s_idx as f64)
    .param("mu", mu)
    .param("lambda_s", lam_s)
    .param("c3", k.c3))
}

// ---------------------------------------------------------------------------
// Shift equivalence
// ---------------------------------------------------------------------------

/// Outcome of one shift-equivalence check: whether each side of the
/// eigenvalue-threshold identity held on the instance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftCheck {
    /// `λ₁(T) > y`
    pub threshold_exceeded: bool,
    /// `λ₁((y−S)^{−1/2}(T−S)(y−S)^{−1/2}) > 1`
    pub weighted_exceeded: bool,
}

impl ShiftCheck {
    pub fn agree(&self) -> bool {
        self.threshold_exceeded == self.weighted_exceeded
    }
}

const PSD_TOLERANCE: f64 = 1e-10;

fn top_eigenvalue_psd(m: &SymMatrix, label: &str) -> Result<f64> {
    let eig = sym_eig(m)?;
    let scale = eig.values.first().map(|v| v.abs()).unwrap_or(0.0).max(1.0);
    if let Some(&min) = eig.values.last() {
        if min < -PSD_TOLERANCE * scale {
            return Err(Error::InvalidParameter(format!(
                "{label} must be positive semidefinite, found eigenvalue {min}"
            )));
        }
    }
    Ok(eig.values[0])
}

/// Numerically verify, on one instance, the equivalence
/// `λ₁(T) > y  ⟺  λ₁((y−S)^{−1/2} (T−S) (y−S)^{−1/2}) > 1`
/// for symmetric positive semidefinite `S`, `T` and `y > λ₁(S)`.
pub fn operator_shift_equivalence_check(
    s: &SymMatrix,
    t: &SymMatrix,
    y: f64,
) -> Result<ShiftCheck> {
    if s.dim() != t.dim() {
        return Err(Error::DimMismatch {
            expected: s.dim(),
            got: t.dim(),
        });
    }
    let top_s = top_eigenvalue_psd(s, "shift operator S")?;
    let top_t = top_eigenvalue_psd(t, "operator T")?;
    if !(y > top_s) {
        return Err(Error::InvalidParameter(format!(
            "shift level y={y} must exceed the top eigenvalue {top_s} of S"
        )));
    }

    let eig_s = sym_eig(s)?;
    let p = s.dim();
    let mut w = Mat::zeros(p, p);
    for (j, &lam) in eig_s.values.iter().enumerate() {
        let scale = 1.0 / (y - lam).sqrt();
        for a in 0..p {
            for b in 0..p {
                let add = scale * eig_s.vectors.get(a, j) * eig_s.vectors.get(b, j);
                w.set(a, b, w.get(a, b) + add);
            }
        }
    }
    let diff = t.to_mat().sub(&s.to_mat());
    let weighted = w.mul(&diff).mul(&w);
    let top_weighted = sym_eig(&SymMatrix::from_mat(&weighted)?)?.values[0];
    Ok(ShiftCheck {
        threshold_exceeded: top_t > y,
        weighted_exceeded: top_weighted > 1.0,
    })
}
