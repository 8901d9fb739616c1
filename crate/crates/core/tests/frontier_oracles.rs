use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use frontier_lab::frontier::{
    frontier_under_misalignment, min_variance_at_target, sweep_frontier, sweep_frontier_evaluated, MinVarianceSolver,
    DEFAULT_SPAN,
};
use frontier_lab::geometry::{
    build_alignment_family, cosine_alignment, generate_mu, make_spd_cov, tangency_direction, vm_norm, AlignmentFamily,
    SignalVector, SpdCovariance,
};
use frontier_lab::stochastics::RngStream;

fn universe(seed: u64, n: usize) -> (SpdCovariance, SignalVector) {
    let cov = make_spd_cov(&RngStream::new(seed, 0), n, 2, 0.3).unwrap();
    let mu = generate_mu(&RngStream::new(seed, 1), n, 0.2).unwrap();
    (cov, mu)
}

/// Projected gradient descent on the affine constraint set, starting from the
/// least-norm feasible point.
fn projected_gradient(cov: &DMatrix<f64>, mu: &DVector<f64>, target: f64) -> DVector<f64> {
    let n = mu.len();
    let a = DMatrix::from_fn(2, n, |i, j| if i == 0 { 1.0 } else { mu[j] });
    let aat_inv = (&a * a.transpose()).try_inverse().unwrap();
    let proj = DMatrix::identity(n, n) - a.transpose() * &aat_inv * &a;
    let mut w = a.transpose() * (&aat_inv * DVector::from_vec(vec![1.0, target]));
    let lmax = cov.clone().symmetric_eigenvalues().max();
    let step = 1.0 / (2.0 * lmax);
    for _ in 0..200_000 {
        let g = &proj * (cov * &w * 2.0);
        if g.norm() < 1e-14 {
            break;
        }
        w -= g * step;
    }
    w
}

#[test]
fn closed_form_matches_projected_gradient() {
    let (cov, mu) = universe(3, 8);
    for target in [-0.1, 0.0, 0.05, 0.2] {
        let closed = min_variance_at_target(&mu, &cov, target).unwrap();
        let oracle = projected_gradient(cov.matrix(), &mu.values, target);
        assert!((&closed.weights - &oracle).amax() < 1e-8, "target {target}");
        assert_relative_eq!(closed.volatility.powi(2), cov.quad_form(&oracle), max_relative = 1e-10);
    }
}

#[test]
fn feasible_null_space_perturbations_never_lower_variance() {
    let (cov, mu) = universe(11, 12);
    let target = 0.08;
    let p = min_variance_at_target(&mu, &cov, target).unwrap();
    let base = cov.quad_form(&p.weights);
    let n = mu.len();
    let a = DMatrix::from_fn(2, n, |i, j| if i == 0 { 1.0 } else { mu.values[j] });
    let proj = DMatrix::identity(n, n) - a.transpose() * (&a * a.transpose()).try_inverse().unwrap() * &a;
    let mut s = RngStream::new(11, 9).sampler();
    for _ in 0..1000 {
        let d = &proj * DVector::from_vec(s.normals(n)) * s.uniform(1e-4, 1.0);
        let w = &p.weights + d;
        assert!((w.sum() - 1.0).abs() < 1e-10);
        assert!((mu.values.dot(&w) - target).abs() < 1e-10);
        assert!(cov.quad_form(&w) >= base * (1.0 - 1e-12));
    }
}

#[test]
fn sweep_bottoms_out_at_the_global_minimum_variance() {
    let (cov, mu) = universe(5, 10);
    let ones = DVector::from_element(10, 1.0);
    let gmv_var = 1.0 / ones.dot(&cov.solve(&ones));
    let solver = MinVarianceSolver::new(&mu, &cov).unwrap();
    assert_relative_eq!(solver.variance(solver.gmv_target()), gmv_var, max_relative = 1e-10);
    assert!((solver.weights(solver.gmv_target()) - solver.gmv_weights()).amax() < 1e-10);

    let frontier = sweep_frontier(&mu, &cov, 401, DEFAULT_SPAN).unwrap();
    let lowest = frontier.points.iter().map(|p| p.volatility.powi(2)).fold(f64::INFINITY, f64::min);
    assert!(lowest >= gmv_var * (1.0 - 1e-12));
    assert!(lowest <= gmv_var * 1.01);
}

#[test]
fn misaligned_frontier_reaches_the_cosine_sharpe_at_its_tangency() {
    let (cov, mu) = universe(8, 15);
    let family = build_alignment_family(&mu, &cov, &RngStream::new(8, 2), &[std::f64::consts::FRAC_PI_3]).unwrap();
    let (_, surrogate) = family.surrogates().remove(0);
    assert_relative_eq!(cosine_alignment(&mu, &surrogate, &cov).unwrap(), 0.5, epsilon = 1e-12);

    let solver = MinVarianceSolver::new(&surrogate, &cov).unwrap();
    let dir = tangency_direction(&surrogate, &cov).unwrap();
    let tangent = &dir / dir.sum();
    let p = solver.point(surrogate.values.dot(&tangent), &mu);
    assert!((&p.weights - &tangent).amax() < 1e-10);
    let realized = p.realized_return.abs() / p.volatility;
    assert_relative_eq!(realized, 0.5 * vm_norm(&mu.values, &cov).unwrap(), max_relative = 1e-10);

    // no point of the misaligned frontier beats the true tangency Sharpe
    let frontier = sweep_frontier_evaluated(&surrogate, &mu, &cov, 200, DEFAULT_SPAN).unwrap();
    let best = vm_norm(&mu.values, &cov).unwrap();
    assert!(frontier.points.iter().all(|q| q.realized_return.abs() / q.volatility <= best * (1.0 + 1e-12)));
}

#[test]
fn opposed_signal_earns_no_more_than_the_minimum_variance_portfolio() {
    let (cov, raw) = universe(21, 9);
    // remove the V^-1 component of mu along the budget vector
    let ones = DVector::from_element(9, 1.0);
    let inv_ones = cov.solve(&ones);
    let shift = raw.values.dot(&inv_ones) / ones.dot(&inv_ones);
    let mu = SignalVector::new(&raw.values - &ones * shift, "mu").unwrap();
    assert!(mu.values.dot(&inv_ones).abs() < 1e-12);

    let family = build_alignment_family(&mu, &cov, &RngStream::new(21, 2), &[0.6 * std::f64::consts::PI, std::f64::consts::PI]).unwrap();
    for (theta, surrogate) in family.surrogates() {
        assert!(cosine_alignment(&mu, &surrogate, &cov).unwrap() < 0.0);
        let solver = MinVarianceSolver::new(&surrogate, &cov).unwrap();
        let gmv_realized = mu.values.dot(&solver.gmv_weights());
        for k in 0..50 {
            let target = solver.gmv_target() + 0.01 * k as f64;
            let p = solver.point(target, &mu);
            assert!(p.realized_return <= gmv_realized + 1e-12, "theta {theta} target {target}");
        }
    }
}

#[test]
fn zero_angle_reproduces_the_true_frontier() {
    let (cov, mu) = universe(4, 20);
    let nu = SignalVector::from_slice(&[0.0; 20], "nu").unwrap();
    let family = AlignmentFamily { mu: mu.clone(), nu, theta_grid: vec![0.0] };
    let misaligned = frontier_under_misalignment(&mu, &family, &cov, 30).unwrap();
    let truth = sweep_frontier(&mu, &cov, 30, DEFAULT_SPAN).unwrap();
    for (a, b) in misaligned[0].1.points.iter().zip(&truth.points) {
        assert_eq!(a.target_return, b.target_return);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.realized_return, b.realized_return);
    }
}
