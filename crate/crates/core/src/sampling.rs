//! Seeded Gaussian data generation and empirical covariance construction.
//!
//! # Random number generation
//!
//! Standard normals come from a Box–Muller transform driven by a
//! counter-mode SplitMix64 generator. The algorithm is fixed forever for
//! reproducibility:
//!
//! * Stream key: `key = mix(mix(seed) ^ mix(stream ^ STREAM_SALT))`, where
//!   `mix` is the SplitMix64 finalizer.
//! * Output block i (i = 0, 1, 2, …): `mix(key + (i+1)·GOLDEN_GAMMA)`
//!   (wrapping arithmetic), i.e. the SplitMix64 sequence seeded at `key`.
//! * Uniforms map the top 53 bits to the open interval (0, 1):
//!   `u = (bits >> 11 + 0.5) / 2^53`.
//! * Box–Muller consumes two uniforms and yields two normals
//!   (`r·cos θ`, `r·sin θ` with `r = sqrt(−2 ln u₁)`, `θ = 2π u₂`);
//!   the second is cached, so normal consumption is strictly sequential.
//!
//! Distinct stream indices give statistically independent sequences, so
//! replication r of an experiment owns stream r and may run on any thread.
//! Because consumption is sequential, the first n rows drawn from a stream
//! coincide with the first n rows of any longer draw from the same stream
//! (sample-size coupling).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::CovModel;
use crate::spectral::{Mat, SymMatrix};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0x6A09_E667_F3BC_C909;

/// SplitMix64 finalizer: a bijective 64-bit mixer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream identified by (seed, stream index).
///
/// Value type: cloning forks the exact state; streams are cheap to create.
/// A single stream must not be shared across threads — give each parallel
/// task its own stream index instead.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
    cached_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream {
            key: mix(mix(seed) ^ mix(stream ^ STREAM_SALT)),
            counter: 0,
            cached_normal: None,
        }
    }

    /// Next raw 64-bit block.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box–Muller, pair-cached).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fills a slice with standard normals.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }
}

/// n observations of a p-dimensional centered Gaussian, row-major.
#[derive(Debug, Clone)]
pub struct SampleSet {
    n: usize,
    p: usize,
    rows: Vec<f64>,
    seed_info: (u64, u64),
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    /// The (seed, stream) pair the samples were drawn from.
    pub fn seed_info(&self) -> (u64, u64) {
        self.seed_info
    }

    pub fn data(&self) -> &[f64] {
        &self.rows
    }

    /// Writes the samples as CSV with header `x1,…,xp`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        writeln!(file, "{}", header.join(","))?;
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws n i.i.d. centered Gaussian observations with the model's covariance,
/// realized as X = U Λ^{1/2} Z with Z a standard normal vector per row.
///
/// Row i consumes normals i·p … (i+1)·p − 1 of the stream, so a longer draw
/// from the same stream extends a shorter one row-for-row.
pub fn draw_gaussian_samples(model: &CovModel, n: usize, stream: &mut RngStream) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let p = model.p();
    let sqrt_values: Vec<f64> = model.spectrum().values().iter().map(|v| v.sqrt()).collect();
    let mut rows = vec![0.0; n * p];
    let seed_info = (stream.key, stream.counter);

    if model.has_identity_basis() {
        for row in rows.chunks_mut(p) {
            for (v, s) in row.iter_mut().zip(sqrt_values.iter()) {
                *v = s * stream.next_normal();
            }
        }
    } else {
        let basis = model.basis();
        let mut z = vec![0.0; p];
        for row in rows.chunks_mut(p) {
            stream.fill_normals(&mut z);
            for (zj, s) in z.iter_mut().zip(sqrt_values.iter()) {
                *zj *= s;
            }
            // row = U · (Λ^{1/2} z), accumulated column-by-column
            for (j, zj) in z.iter().enumerate() {
                if *zj == 0.0 {
                    continue;
                }
                for (a, out) in row.iter_mut().enumerate() {
                    *out += basis.get(a, j) * zj;
                }
            }
        }
    }
    Ok(SampleSet {
        n,
        p,
        rows,
        seed_info,
    })
}

/// Empirical covariance (1/n) Σ Xᵢ Xᵢᵀ — deliberately NOT mean-centered: the
/// data model is centered by construction, and centering would change the
/// constants in every bound.
pub fn empirical_covariance(samples: &SampleSet) -> SymMatrix {
    let p = samples.p;
    let n = samples.n;
    let mut acc = vec![0.0; p * p];
    for i in 0..n {
        let x = samples.row(i);
        for a in 0..p {
            let xa = x[a];
            let dst = &mut acc[a * p..(a + 1) * p];
            for (b, &xb) in x.iter().enumerate().skip(a) {
                dst[b] += xa * xb;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for a in 0..p {
        for b in a..p {
            let v = acc[a * p + b] * inv_n;
            acc[a * p + b] = v;
            acc[b * p + a] = v;
        }
    }
    SymMatrix::new(p, acc).expect("finite samples yield a finite covariance")
}

/// Orthonormal frame drawn Haar-like via Gram–Schmidt on a standard Gaussian
/// matrix (utility for randomized-basis tests and experiments).
pub fn random_orthonormal_frame(p: usize, stream: &mut RngStream) -> Mat {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut ok = true;
        for _ in 0..p {
            let mut v = vec![0.0; p];
            stream.fill_normals(&mut v);
            for u in &cols {
                let dot: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u.iter()) {
                    *vi -= dot * ui;
                }
            }
            // second orthogonalization pass for numerical cleanliness
            for u in &cols {
                let dot: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u.iter()) {
                    *vi -= dot * ui;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            cols.push(v);
        }
        if !ok {
            continue; // astronomically unlikely degenerate draw: redraw
        }
        let mut frame = Mat::zeros(p, p);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                frame.set(i, j, v);
            }
        }
        return frame;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sym_eig;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 0);
        let seq_a: Vec<u64> = (0..32).map(|_| a.next_u64()).collect();
        let seq_b: Vec<u64> = (0..32).map(|_| b.next_u64()).collect();
        assert_eq!(seq_a, seq_b);
        let mut c = RngStream::new(42, 1);
        let seq_c: Vec<u64> = (0..32).map(|_| c.next_u64()).collect();
        assert_ne!(seq_a, seq_c);
        let mut d = RngStream::new(43, 0);
        let seq_d: Vec<u64> = (0..32).map(|_| d.next_u64()).collect();
        assert_ne!(seq_a, seq_d);
    }

    #[test]
    fn uniforms_live_in_open_unit_interval() {
        let mut s = RngStream::new(7, 3);
        for _ in 0..10_000 {
            let u = s.next_uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn draws_are_bitwise_reproducible() {
        let model = CovModel::custom(vec![4.0, 1.0]).unwrap();
        let s1 = draw_gaussian_samples(&model, 100, &mut RngStream::new(9, 2)).unwrap();
        let s2 = draw_gaussian_samples(&model, 100, &mut RngStream::new(9, 2)).unwrap();
        assert_eq!(s1.data(), s2.data());
    }

    #[test]
    fn longer_draw_extends_shorter_draw() {
        let model = CovModel::custom(vec![2.0, 1.0, 0.5]).unwrap();
        let short = draw_gaussian_samples(&model, 40, &mut RngStream::new(5, 1)).unwrap();
        let long = draw_gaussian_samples(&model, 90, &mut RngStream::new(5, 1)).unwrap();
        assert_eq!(short.data(), &long.data()[..40 * 3]);
    }

    #[test]
    fn sample_moments_match_model() {
        // CLT tolerance checks at n = 1e5.
        let n = 100_000;
        let model = CovModel::custom(vec![4.0, 1.0]).unwrap();
        let s = draw_gaussian_samples(&model, n, &mut RngStream::new(2024, 0)).unwrap();
        let mut mean = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for i in 0..n {
            let row = s.row(i);
            for j in 0..2 {
                mean[j] += row[j];
                sq[j] += row[j] * row[j];
            }
        }
        for j in 0..2 {
            mean[j] /= n as f64;
            sq[j] /= n as f64;
        }
        let tol0 = 4.0 * (4.0f64 / n as f64).sqrt();
        let tol1 = 4.0 * (1.0f64 / n as f64).sqrt();
        assert!(mean[0].abs() <= tol0, "mean[0] = {}", mean[0]);
        assert!(mean[1].abs() <= tol1, "mean[1] = {}", mean[1]);
        assert!((3.8..=4.2).contains(&sq[0]), "var[0] = {}", sq[0]);
        assert!((0.9..=1.1).contains(&sq[1]), "var[1] = {}", sq[1]);
    }

    #[test]
    fn gaussian_marginal_passes_ks_against_normal_cdf() {
        // One-sample Kolmogorov–Smirnov check of the standardized first
        // coordinate against N(0,1): critical value at level 1e-3 for
        // n = 1e5 is sqrt(ln(2/1e-3)/2)/sqrt(n) ≈ 0.006164.
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = 100_000;
        let model = CovModel::custom(vec![9.0]).unwrap();
        let s = draw_gaussian_samples(&model, n, &mut RngStream::new(77, 0)).unwrap();
        let mut vals: Vec<f64> = s.data().iter().map(|v| v / 3.0).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut ks: f64 = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let cdf = normal.cdf(*v);
            let hi = (i + 1) as f64 / n as f64 - cdf;
            let lo = cdf - i as f64 / n as f64;
            ks = ks.max(hi.max(lo));
        }
        assert!(ks <= 0.006164, "KS statistic {ks} exceeds the 1e-3 critical value");
    }

    #[test]
    fn empirical_covariance_single_row_is_outer_product() {
        let model = CovModel::custom(vec![1.0, 1.0]).unwrap();
        let s = draw_gaussian_samples(&model, 1, &mut RngStream::new(3, 0)).unwrap();
        let x = s.row(0).to_vec();
        let cov = empirical_covariance(&s);
        for a in 0..2 {
            for b in 0..2 {
                assert!((cov.get(a, b) - x[a] * x[b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empirical_covariance_hand_case() {
        // Rows (1,2) and (3,4): Σ̂ = ([[1,2],[2,4]] + [[9,12],[12,16]]) / 2
        //                          = [[5,7],[7,10]].
        let samples = SampleSet {
            n: 2,
            p: 2,
            rows: vec![1.0, 2.0, 3.0, 4.0],
            seed_info: (0, 0),
        };
        let cov = empirical_covariance(&samples);
        assert_eq!(cov.get(0, 0), 5.0);
        assert_eq!(cov.get(0, 1), 7.0);
        assert_eq!(cov.get(1, 0), 7.0);
        assert_eq!(cov.get(1, 1), 10.0);
    }

    #[test]
    fn covariance_trace_equals_mean_squared_norm() {
        let model = CovModel::custom(vec![3.0, 2.0, 1.0]).unwrap();
        let s = draw_gaussian_samples(&model, 500, &mut RngStream::new(11, 4)).unwrap();
        let cov = empirical_covariance(&s);
        let msn: f64 = (0..500)
            .map(|i| s.row(i).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / 500.0;
        assert!(((cov.trace() - msn) / msn).abs() <= 1e-12);
    }

    #[test]
    fn covariance_is_positive_semidefinite() {
        let model = CovModel::custom(vec![2.0, 1.0, 0.5, 0.25]).unwrap();
        for rep in 0..5 {
            let s = draw_gaussian_samples(&model, 6, &mut RngStream::new(100, rep)).unwrap();
            let cov = empirical_covariance(&s);
            let eig = sym_eig(&cov).unwrap();
            for v in eig.values {
                assert!(v >= -1e-10, "negative eigenvalue {v}");
            }
        }
    }

    #[test]
    fn covariance_concentrates_for_large_n() {
        let model = CovModel::custom(vec![2.0, 1.0]).unwrap();
        let s = draw_gaussian_samples(&model, 20_000, &mut RngStream::new(31, 0)).unwrap();
        let cov = empirical_covariance(&s);
        let sigma = model.covariance();
        let diff = crate::spectral::op_norm(&cov.sub(&sigma)).unwrap();
        assert!(diff <= 0.1, "‖Σ̂ − Σ‖_∞ = {diff}");
    }

    #[test]
    fn rotated_model_covariance_concentrates() {
        let frame = random_orthonormal_frame(3, &mut RngStream::new(8, 8));
        let model = CovModel::custom(vec![3.0, 1.5, 0.5])
            .unwrap()
            .with_basis(frame)
            .unwrap();
        let s = draw_gaussian_samples(&model, 40_000, &mut RngStream::new(12, 0)).unwrap();
        let cov = empirical_covariance(&s);
        let diff = crate::spectral::op_norm(&cov.sub(&model.covariance())).unwrap();
        assert!(diff <= 0.12, "‖Σ̂ − Σ‖_∞ = {diff}");
    }

    #[test]
    fn random_frame_is_orthonormal() {
        let frame = random_orthonormal_frame(6, &mut RngStream::new(55, 0));
        let gram = frame.transpose().mul(&frame);
        let res = gram.sub(&Mat::identity(6)).max_abs();
        assert!(res <= 1e-12, "gram residual {res}");
    }

    #[test]
    fn sample_csv_dump_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let model = CovModel::custom(vec![1.0, 1.0]).unwrap();
        let s = draw_gaussian_samples(&model, 3, &mut RngStream::new(1, 0)).unwrap();
        s.to_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2");
        assert_eq!(lines.count(), 3);
    }
}
