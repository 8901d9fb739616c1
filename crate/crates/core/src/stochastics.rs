//! Seeded random streams, elementary samplers and the shared moment/OLS
//! estimators.
//!
//! Every random quantity in the crate flows from an [`RngStream`]: a
//! `(seed, stream_id)` pair that keys a ChaCha20 generator. The seed is
//! expanded into the 256-bit key with SplitMix64 and the stream id is the
//! ChaCha nonce, so two streams that share a seed but differ in id never
//! overlap within 2^64 blocks. Parallel work is partitioned by stream id,
//! never by splitting one stream between threads.
//!
//! Normal deviates use the basic (trigonometric) Box–Muller transform on
//! 53-bit uniforms; both outputs of each pair are used, in order.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{LabError, Result};

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Steele, Lea & Flood constants).
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A sub-stream under the same key. Children of distinct parents or with
    /// distinct indices receive distinct nonces.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// A fresh sampler positioned at the start of this stream.
    pub fn sampler(&self) -> Sampler {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(SPLITMIX_GAMMA);
            chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        Sampler { rng, spare: None }
    }
}

/// Sequential draws from one [`RngStream`].
pub struct Sampler {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Sampler {
    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform01();
        let u2 = self.uniform01();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    /// An `rows x cols` matrix of standard normals filled row by row.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.standard_normal();
            }
        }
        m
    }

    pub fn bernoulli(&mut self, p: f64) -> f64 {
        if self.uniform01() < p {
            1.0
        } else {
            0.0
        }
    }
}

/// `n` i.i.d. standard normal draws from the start of `stream`.
pub fn standard_normal(stream: &RngStream, n: usize) -> Vec<f64> {
    stream.sampler().normals(n)
}

/// Independent Bernoulli draws, one per probability.
pub fn bernoulli_from_prob(stream: &RngStream, p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|&&pi| !(0.0..=1.0).contains(&pi)) {
        return Err(LabError::Domain(format!("probability {bad} outside [0, 1]")));
    }
    let mut sampler = stream.sampler();
    Ok(p.iter().map(|&pi| sampler.bernoulli(pi)).collect())
}

/// Observations in rows, variables in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePanel {
    values: DMatrix<f64>,
    column_names: Vec<String>,
}

impl SamplePanel {
    pub fn new(values: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if column_names.len() != values.ncols() {
            return Err(LabError::Shape(format!(
                "{} column names for {} columns",
                column_names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("sample panel".into()));
        }
        Ok(Self { values, column_names })
    }

    /// Builds a panel from equal-length columns.
    pub fn from_columns(column_names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(LabError::Shape("columns differ in length".into()));
        }
        let values = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
        Self::new(values, column_names)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_names.iter().position(|c| c == name).map(|j| self.column(j))
    }
}

/// Result of a one-regressor least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_obs: usize,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Regresses `y` on `x` with an intercept: slope = Cov(x, y) / Var(x) on
/// centered data.
pub fn ols_simple(y: &[f64], x: &[f64]) -> Result<OlsFit> {
    if y.len() != x.len() {
        return Err(LabError::Shape(format!("y has {} entries, x has {}", y.len(), x.len())));
    }
    if x.len() < 2 {
        return Err(LabError::InsufficientData { needed: 2, got: x.len() });
    }
    let x_bar = mean(x);
    let y_bar = mean(y);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let xc = xi - x_bar;
        sxy += xc * (yi - y_bar);
        sxx += xc * xc;
    }
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(LabError::Singular("regressor has zero sample variance".into()));
    }
    let slope = sxy / sxx;
    Ok(OlsFit { slope, intercept: y_bar - slope * x_bar, n_obs: x.len() })
}

/// Column means and the unbiased (n - 1) sample covariance.
pub fn empirical_moments(panel: &SamplePanel) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = panel.n_obs();
    if n < 2 {
        return Err(LabError::InsufficientData { needed: 2, got: n });
    }
    let values = panel.values();
    let k = values.ncols();
    let means = DVector::from_fn(k, |j, _| values.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, k, |i, j| values[(i, j)] - means[j]);
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s = centered.column(a).dot(&centered.column(b)) / (n - 1) as f64;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    Ok((means, cov))
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receive their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut out = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = avg;
        }
        start = end;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}
