//! Closed-form omitted-variable-bias algebra.
//!
//! Covers the single-confounder loading bias, the exposure a two-asset
//! portfolio actually delivers when it is built from biased loadings, the
//! structural-cancellation slope `beta - alpha * gamma`, and the attenuation
//! law for a confounder diluted by independent noise. Each closed form has a
//! matching simulator so Monte Carlo regressions can be checked against it.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stochastics::{ols_simple, OlsFit, RngStream};

/// Return `X_n = gamma_n Z + beta_n F2 + eps` where the observed factor
/// `F2 = delta Z + eta` has unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfounderModel {
    pub beta_n: f64,
    pub gamma_n: f64,
    pub delta: f64,
}

impl ConfounderModel {
    pub fn new(beta_n: f64, gamma_n: f64, delta: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&delta) {
            return Err(LabError::Domain(format!("|delta| = {} exceeds 1", delta.abs())));
        }
        Ok(Self { beta_n, gamma_n, delta })
    }
}

/// Loading estimated by regressing `X_n` on `F2` alone: `beta_n + gamma_n delta`.
pub fn biased_loading(model: &ConfounderModel) -> f64 {
    model.beta_n + model.gamma_n * model.delta
}

/// The same estimate under the mistaken normalization `Var(F2) = 1 + delta^2`.
/// Kept only so the two conventions can be tabulated side by side.
pub fn biased_loading_lopez_variant(model: &ConfounderModel) -> f64 {
    biased_loading(model) / (1.0 + model.delta * model.delta)
}

/// Simulates the factor model with `n` draws and returns the OLS slope of
/// `X_n` on `F2`. The residual noise `eps` is standard normal.
pub fn simulate_biased_loading(model: &ConfounderModel, stream: &RngStream, n: usize) -> Result<OlsFit> {
    let mut s = stream.sampler();
    let eta_sd = (1.0 - model.delta * model.delta).sqrt();
    let z = s.normals(n);
    let f2: Vec<f64> = z.iter().map(|&zi| model.delta * zi + eta_sd * s.standard_normal()).collect();
    let x: Vec<f64> = z
        .iter()
        .zip(&f2)
        .map(|(&zi, &fi)| model.gamma_n * zi + model.beta_n * fi + s.standard_normal())
        .collect();
    ols_simple(&x, &f2)
}

/// Two assets with true loadings on `(Z, F2)`: row `i` is `[gamma_i, beta_i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoAssetStructure {
    pub loadings: [[f64; 2]; 2],
    /// Intended exposure `(c0, c1)`: `c0` on the budget/level column, `c1` on `F2`.
    pub target_exposure: [f64; 2],
}

impl TwoAssetStructure {
    pub fn new(gamma: [f64; 2], beta: [f64; 2]) -> Self {
        Self { loadings: [[gamma[0], beta[0]], [gamma[1], beta[1]]], target_exposure: [0.0, 1.0] }
    }

    pub fn gamma(&self, i: usize) -> f64 {
        self.loadings[i][0]
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.loadings[i][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisspecifiedExposure {
    pub weights: [f64; 2],
    /// Exposure actually delivered on `(Z, F2)` under the true loadings.
    pub realized_exposure: [f64; 2],
}

/// Solves for the weights that hit the target exposure under the biased
/// loadings `beta_i + gamma_i delta`, then evaluates them under the truth.
///
/// With the default target `(0, 1)` the weights are `(-1, 1) / (b2 - b1)` and
/// the realized exposure is `(gamma2 - gamma1, beta2 - beta1) / (b2 - b1)`.
pub fn misspecified_exposure(structure: &TwoAssetStructure, delta: f64) -> Result<MisspecifiedExposure> {
    let b1 = structure.beta(0) + structure.gamma(0) * delta;
    let b2 = structure.beta(1) + structure.gamma(1) * delta;
    let spread = b2 - b1;
    let scale = b1.abs().max(b2.abs()).max(1.0);
    if spread.abs() <= 1e-14 * scale {
        return Err(LabError::DegenerateStructure(b1));
    }
    let [c0, c1] = structure.target_exposure;
    let w2 = (c1 - b1 * c0) / spread;
    let w1 = c0 - w2;
    // w1 B1k + w2 B2k = c0 B1k + (c1 - b1 c0) (B2k - B1k) / spread
    let lever = c1 - b1 * c0;
    let realized = [
        c0 * structure.gamma(0) + lever * ((structure.gamma(1) - structure.gamma(0)) / spread),
        c0 * structure.beta(0) + lever * ((structure.beta(1) - structure.beta(0)) / spread),
    ];
    Ok(MisspecifiedExposure { weights: [w1, w2], realized_exposure: realized })
}

/// Generic 2x2 solve of the same system, used to cross-check the closed form.
pub fn misspecified_exposure_dense(structure: &TwoAssetStructure, delta: f64) -> Result<MisspecifiedExposure> {
    let b1 = structure.beta(0) + structure.gamma(0) * delta;
    let b2 = structure.beta(1) + structure.gamma(1) * delta;
    let system = Matrix2::new(1.0, 1.0, b1, b2);
    let rhs = Vector2::new(structure.target_exposure[0], structure.target_exposure[1]);
    let w = system
        .lu()
        .solve(&rhs)
        .ok_or(LabError::DegenerateStructure(b1))?;
    let truth = Matrix2::new(structure.gamma(0), structure.beta(0), structure.gamma(1), structure.beta(1));
    let realized = truth.transpose() * w;
    Ok(MisspecifiedExposure { weights: [w[0], w[1]], realized_exposure: [realized[0], realized[1]] })
}

/// How the noisy confounder `Z' = -alpha X + eta + zeta` is rescaled before it
/// enters the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfounderNormalization {
    /// Divide by `sqrt(1 + sigma_eta^2 + sigma_zeta^2)`, the constant written
    /// in the closed-form attenuation law.
    UnitPlusNoise,
    /// Divide by `sqrt(Var Z') = sqrt(alpha^2 + sigma_eta^2 + sigma_zeta^2)`.
    /// With `sigma_eta^2 = 1 - alpha^2` this is `sqrt(1 + sigma_zeta^2)`, the
    /// convention used by the attenuation experiment.
    VarianceExact,
    /// No rescaling; reduces to the structural-cancellation model.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancellationParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_eta: f64,
    pub sigma_zeta: f64,
    pub sigma_eps: f64,
    pub normalization: ConfounderNormalization,
}

impl CancellationParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        sigma_eta: f64,
        sigma_zeta: f64,
        sigma_eps: f64,
        normalization: ConfounderNormalization,
    ) -> Result<Self> {
        for (name, v) in [("sigma_eta", sigma_eta), ("sigma_zeta", sigma_zeta), ("sigma_eps", sigma_eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LabError::Domain(format!("{name} = {v} must be a finite non-negative number")));
            }
        }
        Ok(Self { alpha, beta, gamma, sigma_eta, sigma_zeta, sigma_eps, normalization })
    }

    /// `alpha = 0.6, beta = 0.2, gamma = 0.7`, `sigma_eta^2 = 1 - alpha^2`,
    /// unit outcome noise and the variance-exact rescaling.
    pub fn monte_carlo_table(sigma_zeta: f64) -> Self {
        let alpha: f64 = 0.6;
        Self {
            alpha,
            beta: 0.2,
            gamma: 0.7,
            sigma_eta: (1.0 - alpha * alpha).sqrt(),
            sigma_zeta,
            sigma_eps: 1.0,
            normalization: ConfounderNormalization::VarianceExact,
        }
    }

    pub fn with_sigma_zeta(self, sigma_zeta: f64) -> Self {
        Self { sigma_zeta, ..self }
    }

    /// Squared rescaling constant with the `sigma_zeta^2` term removed.
    fn base_variance(&self) -> f64 {
        match self.normalization {
            ConfounderNormalization::UnitPlusNoise => 1.0 + self.sigma_eta * self.sigma_eta,
            ConfounderNormalization::VarianceExact => {
                self.alpha * self.alpha + self.sigma_eta * self.sigma_eta
            }
            ConfounderNormalization::Raw => 1.0,
        }
    }

    fn noise_variance(&self) -> f64 {
        match self.normalization {
            ConfounderNormalization::Raw => 0.0,
            _ => self.sigma_zeta * self.sigma_zeta,
        }
    }

    /// The divisor applied to `Z'`.
    pub fn normalizer(&self) -> f64 {
        (self.base_variance() + self.noise_variance()).sqrt()
    }
}

/// Population slope of the misspecified regression of `Y` on `X`:
/// `beta - alpha gamma / normalizer`.
pub fn attenuated_slope(params: &CancellationParams) -> f64 {
    params.beta - params.alpha * params.gamma / params.normalizer()
}

/// Bias of the misspecified slope relative to `beta`.
pub fn attenuation_bias(params: &CancellationParams) -> f64 {
    attenuated_slope(params) - params.beta
}

/// `d slope / d sigma_zeta = alpha gamma sigma_zeta / normalizer^3`.
pub fn attenuated_slope_derivative(params: &CancellationParams) -> f64 {
    match params.normalization {
        ConfounderNormalization::Raw => 0.0,
        _ => params.alpha * params.gamma * params.sigma_zeta / params.normalizer().powi(3),
    }
}

/// `(lower, upper)` bounds on the slope over all `sigma_zeta >= 0`. For
/// `alpha gamma > 0` the lower bound is attained at `sigma_zeta = 0` and the
/// upper bound `beta` is the large-noise limit; the order flips for
/// `alpha gamma < 0`.
pub fn attenuation_bounds(params: &CancellationParams) -> (f64, f64) {
    let at_zero = params.beta - params.alpha * params.gamma / params.base_variance().sqrt();
    if params.alpha * params.gamma >= 0.0 {
        (at_zero, params.beta)
    } else {
        (params.beta, at_zero)
    }
}

/// True when the misspecified slope keeps the sign of `beta` for every
/// `sigma_zeta >= 0`. For `beta > 0` this is `alpha gamma <= beta * sqrt(base)`,
/// mirrored for `beta < 0`.
pub fn non_inversion_check(params: &CancellationParams) -> bool {
    let ag = params.alpha * params.gamma;
    let threshold = params.beta * params.base_variance().sqrt();
    if params.beta > 0.0 {
        ag <= threshold
    } else if params.beta < 0.0 {
        ag >= threshold
    } else {
        ag == 0.0
    }
}

/// Structural-cancellation slope `beta - alpha gamma`.
pub fn cancellation_slope(beta: f64, alpha: f64, gamma: f64) -> f64 {
    beta - alpha * gamma
}

/// Draws `X, eta, zeta, eps` (in that order, `n` each) and regresses
/// `Y = beta X + gamma Z' / normalizer + eps` on `X` alone.
pub fn simulate_attenuation(params: &CancellationParams, stream: &RngStream, n: usize) -> Result<OlsFit> {
    let mut s = stream.sampler();
    let x = s.normals(n);
    let eta = s.normals(n);
    let zeta = s.normals(n);
    let eps = s.normals(n);
    let norm = params.normalizer();
    let zeta_sd = match params.normalization {
        ConfounderNormalization::Raw => 0.0,
        _ => params.sigma_zeta,
    };
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let z = -params.alpha * x[i] + params.sigma_eta * eta[i] + zeta_sd * zeta[i];
            params.beta * x[i] + params.gamma * z / norm + params.sigma_eps * eps[i]
        })
        .collect();
    ols_simple(&y, &x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(sigma_zeta: f64) -> CancellationParams {
        CancellationParams::monte_carlo_table(sigma_zeta)
    }

    #[test]
    fn loading_without_confounding() {
        assert_eq!(biased_loading(&ConfounderModel::new(0.5, 0.0, 0.9).unwrap()), 0.5);
        assert_eq!(biased_loading(&ConfounderModel::new(0.5, 0.3, 0.0).unwrap()), 0.5);
        assert!(matches!(ConfounderModel::new(0.5, 0.3, 1.2), Err(LabError::Domain(_))));
    }

    #[test]
    fn loading_matches_regression() {
        let model = ConfounderModel::new(0.2, 0.7, 0.6).unwrap();
        assert!((biased_loading(&model) - 0.62).abs() < 1e-15);
        let fit = simulate_biased_loading(&model, &RngStream::new(42, 9), 200_000).unwrap();
        assert!((fit.slope - 0.62).abs() < 0.01, "{}", fit.slope);
    }

    #[test]
    fn lopez_variant_values() {
        let m = ConfounderModel::new(0.5, 0.3, 0.0).unwrap();
        assert_eq!(biased_loading_lopez_variant(&m), 0.5);
        let m = ConfounderModel::new(0.2, 0.7, 1.0).unwrap();
        assert!((biased_loading_lopez_variant(&m) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn lopez_variant_never_larger() {
        for i in 0..=20 {
            for j in 0..=20 {
                for k in 1..=20 {
                    let beta = -1.0 + 0.1 * i as f64;
                    let gamma = -1.0 + 0.1 * j as f64;
                    let delta = -1.0 + 0.1 * k as f64;
                    if delta.abs() < 1e-12 {
                        continue;
                    }
                    let m = ConfounderModel::new(beta, gamma, delta).unwrap();
                    assert!(biased_loading_lopez_variant(&m).abs() <= biased_loading(&m).abs());
                }
            }
        }
    }

    #[test]
    fn exposure_without_confounding_is_intended() {
        let s = TwoAssetStructure::new([0.0, 0.0], [0.4, 1.3]);
        let e = misspecified_exposure(&s, 0.7).unwrap();
        assert_eq!(e.realized_exposure, [0.0, 1.0]);
    }

    #[test]
    fn equal_confounder_exposure_cancels() {
        let s = TwoAssetStructure::new([0.35, 0.35], [0.5, 1.0]);
        let e = misspecified_exposure(&s, 0.4).unwrap();
        assert_eq!(e.realized_exposure[0], 0.0);
    }

    #[test]
    fn exposure_closed_form_and_dense_agree() {
        let s = TwoAssetStructure::new([0.2, 0.6], [0.5, 1.0]);
        let e = misspecified_exposure(&s, 0.5).unwrap();
        assert!((e.realized_exposure[0] - 0.4 / 0.7).abs() < 1e-12);
        assert!((e.realized_exposure[1] - 0.5 / 0.7).abs() < 1e-12);
        assert!((e.weights[0] + 1.0 / 0.7).abs() < 1e-12);
        assert!((e.weights[1] - 1.0 / 0.7).abs() < 1e-12);
        let d = misspecified_exposure_dense(&s, 0.5).unwrap();
        for k in 0..2 {
            assert!((e.weights[k] - d.weights[k]).abs() < 1e-12);
            assert!((e.realized_exposure[k] - d.realized_exposure[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_structure_rejected() {
        // b1 = 0.5 + 0.4 * 0.5 = 0.7, b2 = 0.6 + 0.2 * 0.5 = 0.7
        let s = TwoAssetStructure::new([0.4, 0.2], [0.5, 0.6]);
        assert!(matches!(misspecified_exposure(&s, 0.5), Err(LabError::DegenerateStructure(_))));
    }

    #[test]
    fn attenuation_table_convention() {
        assert!((attenuated_slope(&table(0.0)) + 0.22).abs() < 1e-15);
        let expected = 0.2 - 0.42 / 1.16_f64.sqrt();
        assert!((attenuated_slope(&table(0.4)) - expected).abs() < 1e-15);
        assert!((attenuated_slope(&table(0.4)) + 0.189_960_210_171_808_8).abs() < 1e-12);
        assert!((attenuated_slope(&table(1e8)) - 0.2).abs() < 1e-8);
    }

    #[test]
    fn unit_plus_noise_convention() {
        let p = CancellationParams::new(0.6, 0.2, 0.7, 0.8, 0.0, 1.0, ConfounderNormalization::UnitPlusNoise)
            .unwrap();
        assert!((attenuated_slope(&p) - (0.2 - 0.42 / 1.64_f64.sqrt())).abs() < 1e-15);
        // the two conventions agree once sigma_eta^2 + 1 equals Var Z'
        let q = CancellationParams::new(1.0, 0.2, 0.7, 0.3, 0.5, 1.0, ConfounderNormalization::UnitPlusNoise)
            .unwrap();
        let r = CancellationParams { normalization: ConfounderNormalization::VarianceExact, ..q };
        assert!((attenuated_slope(&q) - attenuated_slope(&r)).abs() < 1e-15);
    }

    #[test]
    fn negative_sigma_rejected() {
        let r = CancellationParams::new(0.6, 0.2, 0.7, -0.1, 0.0, 1.0, ConfounderNormalization::Raw);
        assert!(matches!(r, Err(LabError::Domain(_))));
    }

    #[test]
    fn bounds_sandwich_grid() {
        let (lo, hi) = attenuation_bounds(&table(0.0));
        assert_eq!(lo, attenuated_slope(&table(0.0)));
        assert_eq!(hi, 0.2);
        for k in 0..17 {
            let s = attenuated_slope(&table(0.05 * k as f64));
            assert!(lo <= s && s <= hi);
        }
        let flat = CancellationParams { gamma: 0.0, ..table(0.3) };
        assert_eq!(attenuation_bounds(&flat), (0.2, 0.2));
    }

    #[test]
    fn bounds_flip_for_negative_channel() {
        let p = CancellationParams { gamma: -0.7, ..table(0.0) };
        let (lo, hi) = attenuation_bounds(&p);
        assert_eq!(lo, 0.2);
        for k in 0..17 {
            let s = attenuated_slope(&p.with_sigma_zeta(0.05 * k as f64));
            assert!(lo <= s && s <= hi);
        }
    }

    #[test]
    fn non_inversion_cases() {
        let safe = CancellationParams::new(0.5, 1.0, 0.5, 0.0, 0.0, 1.0, ConfounderNormalization::UnitPlusNoise)
            .unwrap();
        assert!(non_inversion_check(&safe));
        for k in 0..50 {
            assert!(attenuated_slope(&safe.with_sigma_zeta(0.1 * k as f64)) >= 0.75);
        }

        let inverted = CancellationParams::new(0.6, 0.2, 0.7, 0.8, 0.0, 1.0, ConfounderNormalization::UnitPlusNoise)
            .unwrap();
        assert!(!non_inversion_check(&inverted));
        assert!(!non_inversion_check(&table(0.0)));
        assert!(attenuated_slope(&table(0.0)) < 0.0);

        let no_channel = CancellationParams { gamma: 0.0, ..inverted };
        assert!(non_inversion_check(&no_channel));
        let negative = CancellationParams { beta: -0.5, gamma: -0.1, ..inverted };
        assert!(non_inversion_check(&negative));
        assert!(attenuated_slope(&negative) <= 0.0);
    }

    #[test]
    fn cancellation_slope_cases() {
        assert!((cancellation_slope(1.0, 0.8, 0.5) - 0.6).abs() < 1e-15);
        assert!((cancellation_slope(1.0, 1.5, 1.0) + 0.5).abs() < 1e-15);
        assert!((cancellation_slope(0.8, 0.6, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cancellation_slope_matches_regression() {
        let p = CancellationParams::new(0.6, 0.8, 0.5, 0.8, 0.0, 1.0, ConfounderNormalization::Raw).unwrap();
        let fit = simulate_attenuation(&p, &RngStream::new(42, 3), 200_000).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.01, "{}", fit.slope);
        assert_eq!(attenuated_slope(&p), cancellation_slope(0.8, 0.6, 0.5));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-5;
        assert_eq!(attenuated_slope_derivative(&table(0.0)), 0.0);
        for k in 1..=16 {
            let s = 0.05 * k as f64;
            let p = table(s);
            let fd = (attenuated_slope(&p.with_sigma_zeta(s + h)) - attenuated_slope(&p.with_sigma_zeta(s - h))) / (2.0 * h);
            assert!((fd - attenuated_slope_derivative(&p)).abs() < 1e-6, "{s}");
        }
    }
}
