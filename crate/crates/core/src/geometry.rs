//! Mean–variance geometry in the inner product `<u, v> = u' V^-1 v`.
//!
//! A tangency portfolio `V^-1 s` built from a surrogate signal `s` and scored
//! against the true mean `mu` has Sharpe ratio `|mu| * rho(mu, s)`, where
//! both the norm and the cosine `rho` are taken in this inner product. The
//! rotation family `cos(theta) mu + sin(theta) nu`, with `nu` orthogonal to
//! `mu` and of equal norm, therefore scales Sharpe by exactly `cos(theta)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{LabError, Result};
use crate::factor_bias::{attenuation_bias, CancellationParams};
use crate::stochastics::RngStream;

/// Symmetric positive-definite covariance with its inverse and Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdCovariance {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    cholesky: Cholesky<f64, Dyn>,
    eigenvalues: DVector<f64>,
    eigen_floor: f64,
}

impl SpdCovariance {
    pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-8;
    /// Max-norm tolerance on `V V^-1 - I` accepted at construction.
    pub const INVERSE_TOLERANCE: f64 = 1e-8;

    /// Symmetrizes `matrix`, floors its eigenvalues at `eigen_floor` and
    /// rebuilds both `V` and `V^-1` from the same eigendecomposition.
    pub fn from_matrix(matrix: DMatrix<f64>, eigen_floor: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(LabError::Shape(format!("covariance is {}x{}", n, matrix.ncols())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("covariance".into()));
        }
        if !(eigen_floor > 0.0) {
            return Err(LabError::Domain(format!("eigenvalue floor {eigen_floor} must be positive")));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let values = eig.eigenvalues.map(|w| w.max(eigen_floor));
        let q = &eig.eigenvectors;
        let v = mirror_upper(q * DMatrix::from_diagonal(&values) * q.transpose());
        let inverse = mirror_upper(q * DMatrix::from_diagonal(&values.map(|w| 1.0 / w)) * q.transpose());

        let residual = (&v * &inverse - DMatrix::identity(n, n)).amax();
        if !(residual <= Self::INVERSE_TOLERANCE) {
            return Err(LabError::Covariance(format!(
                "V V^-1 deviates from identity by {residual:e} (condition number too large)"
            )));
        }
        let cholesky = Cholesky::new(v.clone())
            .ok_or_else(|| LabError::Covariance("Cholesky factorization failed".into()))?;
        Ok(Self { matrix: v, inverse, cholesky, eigenvalues: values, eigen_floor })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(DMatrix::identity(n, n), Self::DEFAULT_EIGEN_FLOOR)
            .expect("identity is positive definite")
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)), Self::DEFAULT_EIGEN_FLOOR)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigen_floor(&self) -> f64 {
        self.eigen_floor
    }

    /// Solves `V x = b` with the cached Cholesky factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.cholesky.solve(b)
    }

    pub fn quad_form(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.matrix * w))
    }

    fn check_dim(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(LabError::Shape(format!("{what} has length {}, covariance is {}x{}", v.len(), self.dim(), self.dim())));
        }
        Ok(())
    }
}

/// Copies the upper triangle onto the lower one so symmetry is exact.
fn mirror_upper(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..m.nrows() {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    m
}

/// An expected-return or surrogate vector with a provenance label.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    pub values: DVector<f64>,
    pub label: String,
}

impl SignalVector {
    pub fn new(values: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("signal vector".into()));
        }
        Ok(Self { values, label: label.into() })
    }

    pub fn from_slice(values: &[f64], label: impl Into<String>) -> Result<Self> {
        Self::new(DVector::from_column_slice(values), label)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64, label: impl Into<String>) -> Self {
        Self { values: &self.values * factor, label: label.into() }
    }
}

/// Factor-model covariance `F L F' + D`: `F` is `n x n_factors` standard
/// normal (row by row), `L` is diagonal `U(0.6, 1.4)` and `D` is diagonal
/// `U(idio_scale, 2 idio_scale)`, drawn in that order.
pub fn make_spd_cov(stream: &RngStream, n: usize, n_factors: usize, idio_scale: f64) -> Result<SpdCovariance> {
    if n < 2 || n_factors < 1 || !(idio_scale > 0.0) {
        return Err(LabError::Domain(format!(
            "make_spd_cov needs n >= 2, n_factors >= 1, idio_scale > 0 (got {n}, {n_factors}, {idio_scale})"
        )));
    }
    let mut s = stream.sampler();
    let f = s.normal_matrix(n, n_factors);
    let lambda = DVector::from_fn(n_factors, |_, _| s.uniform(0.6, 1.4));
    let d = DVector::from_fn(n, |_, _| s.uniform(idio_scale, 2.0 * idio_scale));
    let v = &f * DMatrix::from_diagonal(&lambda) * f.transpose() + DMatrix::from_diagonal(&d);
    SpdCovariance::from_matrix(v, SpdCovariance::DEFAULT_EIGEN_FLOOR)
}

/// Standard normal draws rescaled to Euclidean norm `scale`.
pub fn generate_mu(stream: &RngStream, n: usize, scale: f64) -> Result<SignalVector> {
    let raw = DVector::from_vec(stream.sampler().normals(n));
    let norm = raw.norm();
    if norm == 0.0 {
        return Err(LabError::DegenerateSignal("zero draw".into()));
    }
    SignalVector::new(raw * (scale / norm), "mu_true")
}

/// `u' V^-1 v`.
pub fn vm_inner(u: &DVector<f64>, v: &DVector<f64>, cov: &SpdCovariance) -> Result<f64> {
    cov.check_dim(u, "u")?;
    cov.check_dim(v, "v")?;
    Ok(u.dot(&(cov.inverse() * v)))
}

pub fn vm_norm(u: &DVector<f64>, cov: &SpdCovariance) -> Result<f64> {
    Ok(vm_inner(u, u, cov)?.max(0.0).sqrt())
}

/// Cosine between two signals in the `V^-1` inner product, clamped to `[-1, 1]`.
pub fn cosine_alignment(mu: &SignalVector, mu_tilde: &SignalVector, cov: &SpdCovariance) -> Result<f64> {
    let nm = vm_norm(&mu.values, cov)?;
    let nt = vm_norm(&mu_tilde.values, cov)?;
    if nm == 0.0 || nt == 0.0 {
        return Err(LabError::DegenerateSignal(format!(
            "cosine of zero vector ({} / {})",
            mu.label, mu_tilde.label
        )));
    }
    Ok((vm_inner(&mu.values, &mu_tilde.values, cov)? / (nm * nt)).clamp(-1.0, 1.0))
}

/// Unnormalized tangency direction `V^-1 signal`.
pub fn tangency_direction(signal: &SignalVector, cov: &SpdCovariance) -> Result<DVector<f64>> {
    cov.check_dim(&signal.values, "signal")?;
    Ok(cov.inverse() * &signal.values)
}

pub const DEFAULT_RISK_AVERSION: f64 = 0.5;

/// Mean-variance optimal weights `V^-1 signal / (2 lambda)`; the default
/// `lambda = 0.5` gives the bare tangency direction.
pub fn tangency_weights(signal: &SignalVector, cov: &SpdCovariance, risk_aversion: f64) -> Result<DVector<f64>> {
    if !(risk_aversion > 0.0 && risk_aversion.is_finite()) {
        return Err(LabError::Domain(format!("risk aversion must be positive, got {risk_aversion}")));
    }
    Ok(tangency_direction(signal, cov)? / (2.0 * risk_aversion))
}

/// Mean, volatility and Sharpe ratio of a weight vector under `mu` and `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioStats {
    pub mean: f64,
    pub vol: f64,
    pub sharpe: f64,
}

pub fn sharpe_of_weights(w: &DVector<f64>, mu: &SignalVector, cov: &SpdCovariance) -> Result<PortfolioStats> {
    cov.check_dim(w, "weights")?;
    cov.check_dim(&mu.values, "mu")?;
    let mean = mu.values.dot(w);
    let vol = cov.quad_form(w).max(0.0).sqrt();
    if vol == 0.0 {
        return Err(LabError::Singular("portfolio has zero volatility".into()));
    }
    Ok(PortfolioStats { mean, vol, sharpe: mean / vol })
}

/// Rescales `signal` so that its `V^-1` norm equals `target_norm`.
pub fn rescale_to_vm_norm(signal: &SignalVector, target_norm: f64, cov: &SpdCovariance) -> Result<SignalVector> {
    let norm = vm_norm(&signal.values, cov)?;
    if norm == 0.0 {
        return Err(LabError::DegenerateSignal(format!("{} has zero norm", signal.label)));
    }
    Ok(signal.scaled(target_norm / norm, signal.label.clone()))
}

/// The rotation family `mu(theta) = cos(theta) mu + sin(theta) nu`.
#[derive(Debug, Clone)]
pub struct AlignmentFamily {
    pub mu: SignalVector,
    pub nu: SignalVector,
    pub theta_grid: Vec<f64>,
}

impl AlignmentFamily {
    pub fn surrogate(&self, theta: f64) -> SignalVector {
        let values = &self.mu.values * theta.cos() + &self.nu.values * theta.sin();
        SignalVector { values, label: format!("mu_theta_{theta:.6}") }
    }

    pub fn surrogates(&self) -> Vec<(f64, SignalVector)> {
        self.theta_grid.iter().map(|&t| (t, self.surrogate(t))).collect()
    }
}

/// `count` evenly spaced angles covering `[0, pi]`.
pub fn theta_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|k| std::f64::consts::PI * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Draws a random direction, removes its `V^-1` projection on `mu` (twice,
/// for numerical orthogonality) and rescales it to the `V^-1` norm of `mu`.
/// Draws again if the residual is negligible.
pub fn build_alignment_family(
    mu: &SignalVector,
    cov: &SpdCovariance,
    stream: &RngStream,
    theta_grid: &[f64],
) -> Result<AlignmentFamily> {
    let n = mu.len();
    cov.check_dim(&mu.values, "mu")?;
    if n < 2 {
        return Err(LabError::NoComplement(n));
    }
    let mu_norm = vm_norm(&mu.values, cov)?;
    if mu_norm == 0.0 {
        return Err(LabError::DegenerateSignal("mu is zero".into()));
    }
    if let Some(bad) = theta_grid.iter().find(|t| !(0.0..=std::f64::consts::PI).contains(*t)) {
        return Err(LabError::Domain(format!("theta {bad} outside [0, pi]")));
    }
    let mu_sq = mu_norm * mu_norm;
    let mut sampler = stream.sampler();
    for _ in 0..64 {
        let mut r = DVector::from_vec(sampler.normals(n));
        for _ in 0..2 {
            let proj = vm_inner(&mu.values, &r, cov)? / mu_sq;
            r -= &mu.values * proj;
        }
        let r_norm = vm_norm(&r, cov)?;
        if r_norm > 1e-10 * mu_norm {
            let nu = SignalVector::new(r * (mu_norm / r_norm), "nu")?;
            return Ok(AlignmentFamily { mu: mu.clone(), nu, theta_grid: theta_grid.to_vec() });
        }
    }
    Err(LabError::NoComplement(n))
}

/// `epsilon * mu`, tagged with `epsilon`.
pub fn epsilon_scaled_signal(mu: &SignalVector, epsilon: f64) -> SignalVector {
    mu.scaled(epsilon, format!("{}_eps{epsilon}", mu.label))
}

/// Sharpe ratio of `V^-1 mu(sigma)`, scored against `mu`, where the surrogate
/// `mu(sigma) = mu + bias(sigma) nu` carries the attenuated omitted-variable
/// bias along a fixed direction `nu`.
pub fn attenuation_sharpe_profile(
    mu: &SignalVector,
    nu: &SignalVector,
    cov: &SpdCovariance,
    params: &CancellationParams,
    sigma_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    sigma_grid
        .iter()
        .map(|&s| {
            let bias = attenuation_bias(&params.with_sigma_zeta(s));
            let surrogate = SignalVector::new(&mu.values + &nu.values * bias, "mu_attenuated")?;
            let w = tangency_direction(&surrogate, cov)?;
            Ok((s, sharpe_of_weights(&w, mu, cov)?.sharpe))
        })
        .collect()
}

/// Largest absolute finite-difference slope along a profile.
pub fn max_difference_slope(profile: &[(f64, f64)]) -> f64 {
    profile
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}
