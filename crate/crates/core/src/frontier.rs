//! Markowitz frontier with the budget and target-return equality constraints.
//!
//! Only two equality constraints are present, so the minimum-variance
//! portfolio at target `R` has the closed form
//! `w = V^-1 A (A' V^-1 A)^-1 b` with `A = [1 | mu_hat]` and `b = (1, R)`.
//! The covariance is factored once and both `V^-1 1` and `V^-1 mu_hat` are
//! reused for every target in a sweep.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{LabError, Result};
use crate::geometry::{AlignmentFamily, SignalVector, SpdCovariance};
use crate::stochastics::RngStream;

/// Relative tolerance below which `det(A' V^-1 A)` counts as singular.
const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub target_return: f64,
    /// `mu' w` under the evaluation signal.
    pub realized_return: f64,
    pub volatility: f64,
    pub weights: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Frontier {
    /// Sorted by increasing target return.
    pub points: Vec<FrontierPoint>,
    /// Targets for which no valid portfolio was produced.
    pub skipped: Vec<f64>,
    pub optimization_signal: SignalVector,
    pub evaluation_signal: SignalVector,
}

/// Cached closed-form solver for one `(mu_hat, V)` pair.
#[derive(Debug, Clone)]
pub struct MinVarianceSolver<'a> {
    cov: &'a SpdCovariance,
    mu_hat: SignalVector,
    inv_ones: DVector<f64>,
    inv_mu: DVector<f64>,
    gram_inv: Matrix2<f64>,
}

impl<'a> MinVarianceSolver<'a> {
    pub fn new(mu_hat: &SignalVector, cov: &'a SpdCovariance) -> Result<Self> {
        let n = cov.dim();
        if mu_hat.len() != n {
            return Err(LabError::Shape(format!("signal has length {}, covariance is {n}x{n}", mu_hat.len())));
        }
        let ones = DVector::from_element(n, 1.0);
        let inv_ones = cov.solve(&ones);
        let inv_mu = cov.solve(&mu_hat.values);
        let a = ones.dot(&inv_ones);
        let b = ones.dot(&inv_mu);
        let c = mu_hat.values.dot(&inv_mu);
        let det = a * c - b * b;
        if !(det > DEGENERACY_TOL * a * c) {
            return Err(LabError::DegenerateConstraints);
        }
        let gram_inv = Matrix2::new(c, -b, -b, a) / det;
        Ok(Self { cov, mu_hat: mu_hat.clone(), inv_ones, inv_mu, gram_inv })
    }

    /// Weights of the minimum-variance portfolio with `mu_hat' w = target`.
    pub fn weights(&self, target: f64) -> DVector<f64> {
        let coef = self.gram_inv * Vector2::new(1.0, target);
        &self.inv_ones * coef[0] + &self.inv_mu * coef[1]
    }

    /// `b' (A' V^-1 A)^-1 b`, the frontier variance at `target`.
    pub fn variance(&self, target: f64) -> f64 {
        let b = Vector2::new(1.0, target);
        b.dot(&(self.gram_inv * b))
    }

    /// Target return of the global minimum-variance portfolio.
    pub fn gmv_target(&self) -> f64 {
        let g = &self.gram_inv;
        -g[(0, 1)] / g[(1, 1)]
    }

    pub fn gmv_weights(&self) -> DVector<f64> {
        &self.inv_ones / self.inv_ones.sum()
    }

    pub fn point(&self, target: f64, evaluation: &SignalVector) -> FrontierPoint {
        let weights = self.weights(target);
        FrontierPoint {
            target_return: target,
            realized_return: evaluation.values.dot(&weights),
            volatility: self.cov.quad_form(&weights).max(0.0).sqrt(),
            weights,
        }
    }

    fn satisfies_constraints(&self, target: f64, w: &DVector<f64>) -> bool {
        (w.sum() - 1.0).abs() <= 1e-10 && (self.mu_hat.values.dot(w) - target).abs() <= 1e-8 * target.abs().max(1.0)
    }
}

/// Minimum-variance portfolio at one target, realized under `mu_hat` itself.
pub fn min_variance_at_target(mu_hat: &SignalVector, cov: &SpdCovariance, target: f64) -> Result<FrontierPoint> {
    let solver = MinVarianceSolver::new(mu_hat, cov)?;
    Ok(solver.point(target, mu_hat))
}

/// `n_points` evenly spaced targets over `[min(mu_hat) lo, max(mu_hat) hi]`.
pub fn target_grid(mu_hat: &SignalVector, n_points: usize, span: (f64, f64)) -> Vec<f64> {
    let lo = mu_hat.values.min() * span.0;
    let hi = mu_hat.values.max() * span.1;
    if n_points == 1 {
        return vec![lo];
    }
    (0..n_points)
        .map(|k| lo + (hi - lo) * k as f64 / (n_points - 1) as f64)
        .collect()
}

pub const DEFAULT_SPAN: (f64, f64) = (1.5, 1.5);

/// Sweeps the frontier, realizing returns under `mu_hat`.
pub fn sweep_frontier(mu_hat: &SignalVector, cov: &SpdCovariance, n_points: usize, span: (f64, f64)) -> Result<Frontier> {
    sweep_frontier_evaluated(mu_hat, mu_hat, cov, n_points, span)
}

/// Sweeps the frontier built from `mu_hat` but reports realized returns
/// under `evaluation`.
pub fn sweep_frontier_evaluated(
    mu_hat: &SignalVector,
    evaluation: &SignalVector,
    cov: &SpdCovariance,
    n_points: usize,
    span: (f64, f64),
) -> Result<Frontier> {
    if n_points < 3 {
        return Err(LabError::InsufficientPoints(n_points));
    }
    if evaluation.len() != mu_hat.len() {
        return Err(LabError::Shape("evaluation and optimization signals differ in length".into()));
    }
    let solver = MinVarianceSolver::new(mu_hat, cov)?;
    let mut targets = target_grid(mu_hat, n_points, span);
    targets.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(targets.len());
    let mut skipped = Vec::new();
    for target in targets {
        if !target.is_finite() {
            skipped.push(target);
            continue;
        }
        let point = solver.point(target, evaluation);
        let finite = point.weights.iter().all(|w| w.is_finite()) && point.volatility.is_finite();
        if finite && solver.satisfies_constraints(target, &point.weights) {
            points.push(point);
        } else {
            skipped.push(target);
        }
    }
    if points.is_empty() {
        return Err(LabError::EmptyFrontier(skipped.len()));
    }
    Ok(Frontier {
        points,
        skipped,
        optimization_signal: mu_hat.clone(),
        evaluation_signal: evaluation.clone(),
    })
}

/// One frontier per angle, optimized on `mu(theta)` and realized under `mu`.
pub fn frontier_under_misalignment(
    mu: &SignalVector,
    family: &AlignmentFamily,
    cov: &SpdCovariance,
    n_points: usize,
) -> Result<Vec<(f64, Frontier)>> {
    family
        .surrogates()
        .into_iter()
        .map(|(theta, surrogate)| {
            sweep_frontier_evaluated(&surrogate, mu, cov, n_points, DEFAULT_SPAN).map(|f| (theta, f))
        })
        .collect()
}

/// Shape diagnostics of a swept frontier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub n_points: usize,
    /// Smallest second divided difference of variance against target return.
    pub min_second_difference: f64,
    /// Leading coefficient of the least-squares quadratic `var ~ R`.
    pub leading_coefficient: f64,
    pub fit_r_squared: f64,
    /// Largest absolute fit residual relative to the largest variance.
    pub max_relative_residual: f64,
    /// Change in realized return per unit of target return; realized return
    /// is affine in the target along the frontier.
    pub realized_slope: f64,
    /// Realized return rises along the efficient branch, i.e. efficient
    /// portfolios earn more than the minimum-variance one.
    pub positive_realized_return: bool,
}

impl ConvexityReport {
    pub const SECOND_DIFFERENCE_FLOOR: f64 = -1e-10;
    pub const R_SQUARED_FLOOR: f64 = 1.0 - 1e-9;

    pub fn is_convex(&self) -> bool {
        self.min_second_difference >= Self::SECOND_DIFFERENCE_FLOOR
            && self.leading_coefficient > 0.0
            && self.fit_r_squared >= Self::R_SQUARED_FLOOR
    }

    pub fn passes(&self) -> bool {
        self.is_convex() && self.positive_realized_return
    }
}

/// Divided differences of variance along the sweep, a quadratic fit, and the
/// direction of realized return.
pub fn convexity_report(frontier: &Frontier) -> Result<ConvexityReport> {
    let pts = &frontier.points;
    if pts.len() < 3 {
        return Err(LabError::InsufficientPoints(pts.len()));
    }
    let r: Vec<f64> = pts.iter().map(|p| p.target_return).collect();
    let v: Vec<f64> = pts.iter().map(|p| p.volatility * p.volatility).collect();

    let min_second_difference = (1..r.len() - 1)
        .map(|i| {
            let left = (v[i] - v[i - 1]) / (r[i] - r[i - 1]);
            let right = (v[i + 1] - v[i]) / (r[i + 1] - r[i]);
            (right - left) / (r[i + 1] - r[i - 1])
        })
        .fold(f64::INFINITY, f64::min);

    let (coef, r_squared, max_residual) = quadratic_fit(&r, &v)?;
    let v_scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);

    let first = &pts[0];
    let last = &pts[pts.len() - 1];
    let realized_slope = (last.realized_return - first.realized_return) / (last.target_return - first.target_return);
    let realized_scale = pts.iter().fold(0.0_f64, |m, p| m.max(p.realized_return.abs()));
    let target_span = last.target_return - first.target_return;
    let positive_realized_return = realized_slope * target_span > 1e-12 * realized_scale.max(f64::MIN_POSITIVE);

    Ok(ConvexityReport {
        n_points: pts.len(),
        min_second_difference,
        leading_coefficient: coef[2],
        fit_r_squared: r_squared,
        max_relative_residual: max_residual / v_scale,
        realized_slope,
        positive_realized_return,
    })
}

/// Least-squares `y = c0 + c1 x + c2 x^2`, fitted on a standardized abscissa.
/// Returns coefficients in the original scale, R^2 and the max residual.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<([f64; 3], f64, f64)> {
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let sx = (x.iter().map(|xi| (xi - mx) * (xi - mx)).sum::<f64>() / n as f64).sqrt();
    if !(sx > 0.0) {
        return Err(LabError::Singular("quadratic fit on a single abscissa".into()));
    }
    let design = DMatrix::from_fn(n, 3, |i, j| ((x[i] - mx) / sx).powi(j as i32));
    let rhs = DVector::from_column_slice(y);
    let t = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| LabError::Singular(e.to_string()))?;
    let fitted = &design * &t;
    let my = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|yi| (yi - my) * (yi - my)).sum();
    let residuals = &rhs - &fitted;
    let ss_res = residuals.norm_squared();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let max_residual = residuals.amax();
    // y = t0 + t1 u + t2 u^2 with u = (x - mx) / sx
    let c2 = t[2] / (sx * sx);
    let c1 = t[1] / sx - 2.0 * t[2] * mx / (sx * sx);
    let c0 = t[0] - t[1] * mx / sx + t[2] * mx * mx / (sx * sx);
    Ok(([c0, c1, c2], r_squared, max_residual))
}

/// Random portfolios satisfying `1' w = 1` and `mu_hat' w = target`: standard
/// normal draws scaled by `spread`, projected onto the constraint set in the
/// Euclidean metric.
pub fn random_feasible_portfolios(
    mu_hat: &SignalVector,
    target: f64,
    stream: &RngStream,
    count: usize,
    spread: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = mu_hat.len();
    let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { mu_hat.values[i] });
    let gram = a.transpose() * &a;
    let gram_inv = gram
        .try_inverse()
        .ok_or(LabError::DegenerateConstraints)?;
    let b = DVector::from_column_slice(&[1.0, target]);
    let mut s = stream.sampler();
    Ok((0..count)
        .map(|_| {
            let w = DVector::from_vec(s.normals(n)) * spread;
            let gap = a.transpose() * &w - &b;
            &w - &a * (&gram_inv * gap)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_alignment_family, generate_mu, make_spd_cov, theta_grid};

    fn sig(v: &[f64]) -> SignalVector {
        SignalVector::from_slice(v, "s").unwrap()
    }

    #[test]
    fn two_asset_hand_solution() {
        let cov = SpdCovariance::identity(2);
        let mu = sig(&[0.0, 1.0]);
        for k in 0..=10 {
            let r = k as f64 / 10.0;
            let p = min_variance_at_target(&mu, &cov, r).unwrap();
            assert!((p.weights[0] - (1.0 - r)).abs() < 1e-12);
            assert!((p.weights[1] - r).abs() < 1e-12);
            let var = (1.0 - r).powi(2) + r * r;
            assert!((p.volatility.powi(2) - var).abs() < 1e-12);
        }
    }

    #[test]
    fn two_asset_grid_oracle() {
        // brute force over w1 in [-2, 3] with w2 = 1 - w1 for the target R = w2
        let cov = SpdCovariance::identity(2);
        let mu = sig(&[0.0, 1.0]);
        let r = 0.3;
        let p = min_variance_at_target(&mu, &cov, r).unwrap();
        let best = (0..=50_000)
            .map(|k| -2.0 + 5.0 * k as f64 / 50_000.0)
            .filter(|w1| ((1.0 - w1) - r).abs() < 1e-9)
            .map(|w1| w1 * w1 + (1.0 - w1) * (1.0 - w1))
            .fold(f64::INFINITY, f64::min);
        assert!((p.volatility.powi(2) - best).abs() < 1e-9);
    }

    #[test]
    fn gmv_target_gives_gmv_weights() {
        let cov = make_spd_cov(&RngStream::new(8, 0), 6, 2, 0.2).unwrap();
        let mu = generate_mu(&RngStream::new(8, 1), 6, 0.25).unwrap();
        let solver = MinVarianceSolver::new(&mu, &cov).unwrap();
        let w = solver.weights(solver.gmv_target());
        assert!((w - solver.gmv_weights()).amax() < 1e-10);
    }

    #[test]
    fn proportional_to_ones_is_degenerate() {
        let cov = SpdCovariance::identity(3);
        assert!(matches!(
            min_variance_at_target(&sig(&[0.2, 0.2, 0.2]), &cov, 0.2),
            Err(LabError::DegenerateConstraints)
        ));
    }

    #[test]
    fn symmetric_three_point_sweep() {
        let cov = SpdCovariance::diagonal(&[1.0, 1.0]).unwrap();
        let f = sweep_frontier(&sig(&[-1.0, 1.0]), &cov, 3, DEFAULT_SPAN).unwrap();
        let v: Vec<f64> = f.points.iter().map(|p| p.volatility).collect();
        assert!(v[1] < v[0] && v[1] < v[2]);
        assert!(f.points[1].target_return.abs() < 1e-15);
    }

    #[test]
    fn sweep_requires_three_points() {
        let cov = SpdCovariance::identity(2);
        assert!(matches!(sweep_frontier(&sig(&[0.0, 1.0]), &cov, 2, DEFAULT_SPAN), Err(LabError::InsufficientPoints(2))));
    }

    #[test]
    fn sweep_records_non_finite_targets() {
        let cov = SpdCovariance::identity(2);
        let f = sweep_frontier(&sig(&[0.1, 1.0]), &cov, 5, (f64::INFINITY, 1.5));
        // inf low end: linspace from inf yields NaN/inf targets that are skipped
        match f {
            Ok(frontier) => assert!(!frontier.skipped.is_empty()),
            Err(e) => assert!(matches!(e, LabError::EmptyFrontier(_))),
        }
    }

    #[test]
    fn sweep_is_exact_quadratic_and_convex() {
        let cov = make_spd_cov(&RngStream::new(4, 0), 12, 3, 0.2).unwrap();
        let mu = generate_mu(&RngStream::new(4, 1), 12, 0.25).unwrap();
        let f = sweep_frontier(&mu, &cov, 50, DEFAULT_SPAN).unwrap();
        assert_eq!(f.points.len(), 50);
        let solver = MinVarianceSolver::new(&mu, &cov).unwrap();
        for p in &f.points {
            let exact = solver.variance(p.target_return);
            assert!((p.volatility.powi(2) - exact).abs() <= 1e-10 * exact);
            assert!((p.weights.sum() - 1.0).abs() <= 1e-10);
            assert!((mu.values.dot(&p.weights) - p.target_return).abs() <= 1e-8);
        }
        let report = convexity_report(&f).unwrap();
        assert!(report.is_convex(), "{report:?}");
        assert!(report.positive_realized_return);
        assert!((report.realized_slope - 1.0).abs() < 1e-8);
    }

    #[test]
    fn antialigned_evaluation_flags_negative() {
        let cov = make_spd_cov(&RngStream::new(4, 0), 12, 3, 0.2).unwrap();
        let mu = generate_mu(&RngStream::new(4, 1), 12, 0.25).unwrap();
        let neg = mu.scaled(-1.0, "neg");
        let f = sweep_frontier_evaluated(&neg, &mu, &cov, 20, DEFAULT_SPAN).unwrap();
        let report = convexity_report(&f).unwrap();
        assert!(report.is_convex());
        assert!(!report.positive_realized_return);
    }

    #[test]
    fn report_needs_three_points() {
        let cov = SpdCovariance::identity(2);
        let mut f = sweep_frontier(&sig(&[0.0, 1.0]), &cov, 3, DEFAULT_SPAN).unwrap();
        f.points.truncate(2);
        assert!(matches!(convexity_report(&f), Err(LabError::InsufficientPoints(2))));
    }

    #[test]
    fn misalignment_at_zero_matches_true_frontier() {
        let cov = make_spd_cov(&RngStream::new(6, 0), 10, 3, 0.2).unwrap();
        let mu = generate_mu(&RngStream::new(6, 1), 10, 0.25).unwrap();
        let fam = build_alignment_family(&mu, &cov, &RngStream::new(6, 2), &theta_grid(5)).unwrap();
        let frontiers = frontier_under_misalignment(&mu, &fam, &cov, 20).unwrap();
        let truth = sweep_frontier(&mu, &cov, 20, DEFAULT_SPAN).unwrap();
        let (theta, first) = &frontiers[0];
        assert_eq!(*theta, 0.0);
        for (a, b) in first.points.iter().zip(&truth.points) {
            assert_eq!(a.realized_return, b.realized_return);
            assert_eq!(a.volatility, b.volatility);
        }
        for (_, f) in &frontiers {
            assert!(convexity_report(f).unwrap().is_convex());
        }
    }

    #[test]
    fn random_feasible_points_are_feasible() {
        let mu = sig(&[0.1, -0.2, 0.05, 0.3]);
        let pts = random_feasible_portfolios(&mu, 0.07, &RngStream::new(1, 2), 100, 1.0).unwrap();
        for w in pts {
            assert!((w.sum() - 1.0).abs() < 1e-12);
            assert!((mu.values.dot(&w) - 0.07).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let x: Vec<f64> = (0..20).map(|i| 1e-3 * i as f64 - 0.004).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v + 500.0 * v * v).collect();
        let (c, r2, res) = quadratic_fit(&x, &y).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-9 && (c[1] + 2.0).abs() < 1e-7 && (c[2] - 500.0).abs() < 1e-4);
        assert!(r2 > 1.0 - 1e-12 && res < 1e-12);
    }
}
