//! Confounded signal generators, a logistic fitter, and the probability and
//! power maps that turn model output into portfolio signals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{
    rescale_to_vm_norm, sharpe_of_weights, tangency_direction, vm_norm, SignalVector, SpdCovariance,
};
use crate::stochastics::{pearson, spearman, RngStream, SamplePanel};

/// Coefficient norm past which the fit is declared separated and capped.
pub const SEPARATION_CAP: f64 = 1e3;
/// Diagonal jitter applied once when the weighted normal equations are singular.
pub const RIDGE_JITTER: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-8;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationDgpConfig {
    pub n: usize,
    pub alpha: f64,
    /// Outcome loading on `X`.
    pub b_x: f64,
    /// Outcome loading on the confounder `Z'`.
    pub b_z: f64,
}

impl Default for CancellationDgpConfig {
    fn default() -> Self {
        Self { n: 1000, alpha: 0.6, b_x: 1.0, b_z: 0.3 }
    }
}

/// `X ~ N(0,1)`, `Z' = -alpha X + eta` with `eta ~ N(0, 1 - alpha^2)`, and
/// `Y ~ Bernoulli(sigmoid(b_x X + b_z Z'))`.
///
/// The panel holds the columns `x`, `z`, `y`; the second value is the true
/// probability per row.
pub fn generate_cancellation_dataset(stream: &RngStream, config: &CancellationDgpConfig) -> Result<(SamplePanel, Vec<f64>)> {
    let alpha = config.alpha;
    if !(alpha.abs() < 1.0) {
        return Err(LabError::Domain(format!("|alpha| must be below 1, got {alpha}")));
    }
    if config.n == 0 {
        return Err(LabError::InsufficientData { needed: 1, got: 0 });
    }
    let n = config.n;
    let mut s = stream.sampler();
    let x = s.normals(n);
    let eta_sd = (1.0 - alpha * alpha).sqrt();
    let z: Vec<f64> = x.iter().map(|xi| -alpha * xi + eta_sd * s.standard_normal()).collect();
    let p: Vec<f64> = x
        .iter()
        .zip(&z)
        .map(|(xi, zi)| sigmoid(config.b_x * xi + config.b_z * zi))
        .collect();
    let y: Vec<f64> = p.iter().map(|&pi| s.bernoulli(pi)).collect();
    let panel = SamplePanel::from_columns(vec!["x".into(), "z".into(), "y".into()], &[x, z, y])?;
    Ok((panel, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearDgpConfig {
    pub n_obs: usize,
    /// Number of features, one per asset.
    pub n_features: usize,
    /// Confounder loadings on the leading features.
    pub alpha_weights: Vec<f64>,
    pub noise_scale: f64,
    pub return_scale: f64,
    pub return_noise: f64,
}

impl Default for NonlinearDgpConfig {
    fn default() -> Self {
        Self {
            n_obs: 1000,
            n_features: 5,
            alpha_weights: vec![0.7, 0.3],
            noise_scale: 1.0,
            return_scale: 2.0,
            return_noise: 0.05,
        }
    }
}

impl NonlinearDgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs < 10 {
            return Err(LabError::InsufficientData { needed: 10, got: self.n_obs });
        }
        if self.n_features == 0 {
            return Err(LabError::Domain("need at least one feature".into()));
        }
        if self.alpha_weights.len() > self.n_features {
            return Err(LabError::Shape(format!(
                "{} confounder weights for {} features",
                self.alpha_weights.len(),
                self.n_features
            )));
        }
        for (name, v) in [("noise_scale", self.noise_scale), ("return_noise", self.return_noise)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(LabError::Domain(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !self.return_scale.is_finite() || self.alpha_weights.iter().any(|a| !a.is_finite()) {
            return Err(LabError::NonFinite("nonlinear config".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearDataset {
    pub features: SamplePanel,
    pub confounder: Vec<f64>,
    /// Bernoulli draws per observation and asset.
    pub outcomes: DMatrix<f64>,
    pub p_true: DMatrix<f64>,
    pub returns: SamplePanel,
}

/// Features and returns follow the order of the reference simulation: the
/// feature matrix, the confounder noise, then the return noise, all from
/// `stream`. Outcomes come from `stream.child(0)` so they do not disturb it.
pub fn generate_nonlinear_dataset(config: &NonlinearDgpConfig, stream: &RngStream) -> Result<NonlinearDataset> {
    config.validate()?;
    let (n, k) = (config.n_obs, config.n_features);
    let mut s = stream.sampler();
    let x = s.normal_matrix(n, k);
    let z: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = config.alpha_weights.iter().enumerate().map(|(j, a)| a * x[(i, j)]).sum();
            signal + config.noise_scale * s.standard_normal()
        })
        .collect();
    let p_true = DMatrix::from_fn(n, k, |i, j| sigmoid(x[(i, j)].tanh() + 0.5 * z[i].sin()));
    let noise = s.normal_matrix(n, k);
    let returns = DMatrix::from_fn(n, k, |i, j| {
        config.return_scale * (2.0 * p_true[(i, j)] - 1.0) + config.return_noise * noise[(i, j)]
    });
    let mut o = stream.child(0).sampler();
    let mut outcomes = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            outcomes[(i, j)] = o.bernoulli(p_true[(i, j)]);
        }
    }
    let feature_names = (0..k).map(|j| format!("x{j}")).collect();
    let asset_names = (0..k).map(|j| format!("asset{j}")).collect();
    Ok(NonlinearDataset {
        features: SamplePanel::new(x, feature_names)?,
        confounder: z,
        outcomes,
        p_true,
        returns: SamplePanel::new(returns, asset_names)?,
    })
}

/// How the per-asset misspecified models are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSource {
    /// Coefficients drawn from `N(1, 0.5)`, no intercept.
    #[default]
    Drawn,
    /// One logistic fit per asset on the features alone.
    Fitted,
}

/// Per-observation signals `2 p_pred - 1`, one column per asset, from models
/// that see only the features.
pub fn misspecified_signals(dataset: &NonlinearDataset, source: BetaSource, stream: &RngStream) -> Result<DMatrix<f64>> {
    let x = dataset.features.values();
    let k = dataset.outcomes.ncols();
    let logits = match source {
        BetaSource::Drawn => {
            let betas = stream.sampler().normal_matrix(k, x.ncols()).map(|b| 1.0 + 0.5 * b);
            x * betas.transpose()
        }
        BetaSource::Fitted => {
            let mut logits = DMatrix::zeros(x.nrows(), k);
            for j in 0..k {
                let y: Vec<f64> = dataset.outcomes.column(j).iter().copied().collect();
                let model = fit_logistic(&dataset.features, &y, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
                logits.set_column(j, &model.linear_predictor(x));
            }
            logits
        }
    };
    Ok(logits.map(|l| 2.0 * sigmoid(l) - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Set when the fit hit the coefficient cap or fits the labels perfectly.
    pub separated: bool,
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coefficients + DVector::from_element(x.nrows(), self.intercept)
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.linear_predictor(x).map(sigmoid)
    }
}

fn log_likelihood(design: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = design * beta;
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Maximum-likelihood logistic regression with an intercept, by iteratively
/// reweighted least squares with step halving.
pub fn fit_logistic(features: &SamplePanel, outcomes: &[f64], max_iter: usize, tol: f64) -> Result<LogisticModel> {
    let n = features.n_obs();
    let p = features.n_vars();
    if outcomes.len() != n {
        return Err(LabError::Shape(format!("{} outcomes for {n} rows", outcomes.len())));
    }
    if n < p + 1 {
        return Err(LabError::InsufficientData { needed: p + 1, got: n });
    }
    if let Some(bad) = outcomes.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(LabError::Domain(format!("outcomes must be 0 or 1, got {bad}")));
    }
    let x = features.values();
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let y = DVector::from_column_slice(outcomes);
    let mut beta = DVector::zeros(p + 1);
    let mut ll = log_likelihood(&design, &y, &beta);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let probs = (&design * &beta).map(sigmoid);
        let grad = design.transpose() * (&y - &probs);
        if grad.norm() / n as f64 <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let w = probs.map(|q| q * (1.0 - q));
        let weighted = DMatrix::from_fn(n, p + 1, |i, j| design[(i, j)] * w[i]);
        let hessian = design.transpose() * weighted;
        let step = match hessian.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                let jittered = hessian + DMatrix::identity(p + 1, p + 1) * RIDGE_JITTER;
                jittered
                    .cholesky()
                    .ok_or_else(|| LabError::Singular("weighted normal equations".into()))?
                    .solve(&grad)
            }
        };
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut candidate_ll = log_likelihood(&design, &y, &candidate);
        while candidate_ll < ll && t > 1e-10 {
            t *= 0.5;
            candidate = &beta + &step * t;
            candidate_ll = log_likelihood(&design, &y, &candidate);
        }
        if !(candidate_ll >= ll) {
            break;
        }
        beta = candidate;
        ll = candidate_ll;
        if beta.norm() > SEPARATION_CAP {
            beta *= SEPARATION_CAP / beta.norm();
            separated = true;
            break;
        }
    }
    if !separated && ll / n as f64 > -1e-6 {
        separated = true;
    }
    if separated {
        converged = false;
        log::warn!("logistic fit separated after {iterations} iterations");
    }
    Ok(LogisticModel {
        intercept: beta[0],
        coefficients: beta.rows(1, p).into_owned(),
        converged,
        n_iterations: iterations,
        separated,
    })
}

/// Elementwise `2p - 1`.
pub fn prob_to_weight(p: &[f64]) -> Result<Vec<f64>> {
    p.iter()
        .map(|&q| {
            if (0.0..=1.0).contains(&q) {
                Ok(2.0 * q - 1.0)
            } else {
                Err(LabError::Domain(format!("probability {q} outside [0, 1]")))
            }
        })
        .collect()
}

/// Signed power `sign(mu) |mu|^p`.
pub fn power_transform(mu: &SignalVector, p: f64) -> Result<SignalVector> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(LabError::Domain(format!("power must be positive, got {p}")));
    }
    let values = mu.values.map(|m| if m == 0.0 { 0.0 } else { m.signum() * m.abs().powf(p) });
    SignalVector::new(values, format!("{}^{p}", mu.label))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub omega_true: Vec<f64>,
    pub omega_pred: Vec<f64>,
}

impl WeightPair {
    pub fn new(omega_true: Vec<f64>, omega_pred: Vec<f64>) -> Result<Self> {
        if omega_true.len() != omega_pred.len() {
            return Err(LabError::Shape(format!("{} true weights, {} predicted", omega_true.len(), omega_pred.len())));
        }
        if omega_true.is_empty() {
            return Err(LabError::InsufficientData { needed: 1, got: 0 });
        }
        if omega_true.iter().chain(&omega_pred).any(|w| !(-1.0..=1.0).contains(w)) {
            return Err(LabError::Domain("weights must lie in [-1, 1]".into()));
        }
        Ok(Self { omega_true, omega_pred })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignAgreement {
    pub rate: f64,
    /// `None` when either vector has zero variance.
    pub correlation: Option<f64>,
}

fn sign_class(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn sign_agreement(pair: &WeightPair) -> SignAgreement {
    let matches = pair
        .omega_true
        .iter()
        .zip(&pair.omega_pred)
        .filter(|(a, b)| sign_class(**a) == sign_class(**b))
        .count();
    SignAgreement {
        rate: matches as f64 / pair.omega_true.len() as f64,
        correlation: pearson(&pair.omega_true, &pair.omega_pred),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub power: f64,
    /// Tangency Sharpe of the transformed signal over that of the true one,
    /// both realized under the true signal.
    pub relative_sharpe: f64,
    pub spearman: f64,
}

/// Power transforms of `mu`, each rescaled to the V^-1 norm of `mu`.
pub fn normalized_transforms(mu: &SignalVector, cov: &SpdCovariance, powers: &[f64]) -> Result<Vec<SignalVector>> {
    let norm = vm_norm(&mu.values, cov)?;
    powers
        .iter()
        .map(|&p| rescale_to_vm_norm(&power_transform(mu, p)?, norm, cov))
        .collect()
}

pub fn calibration_curve(mu: &SignalVector, cov: &SpdCovariance, powers: &[f64]) -> Result<Vec<CalibrationPoint>> {
    if powers.is_empty() {
        return Err(LabError::Domain("empty exponent grid".into()));
    }
    let base = sharpe_of_weights(&tangency_direction(mu, cov)?, mu, cov)?.sharpe;
    let mu_slice: Vec<f64> = mu.values.iter().copied().collect();
    normalized_transforms(mu, cov, powers)?
        .iter()
        .zip(powers)
        .map(|(t, &power)| {
            let s = sharpe_of_weights(&tangency_direction(t, cov)?, mu, cov)?.sharpe;
            let t_slice: Vec<f64> = t.values.iter().copied().collect();
            Ok(CalibrationPoint {
                power,
                relative_sharpe: s / base,
                spearman: spearman(&mu_slice, &t_slice).unwrap_or(f64::NAN),
            })
        })
        .collect()
}
