//! The six experiment runners.
//!
//! Every runner is a pure function of its config. Independent units of work
//! (repetitions, grid points, frontier targets) run on the rayon pool and are
//! collected by index, so results do not depend on the thread count.

use nalgebra::DVector;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::factor_bias::{
    attenuated_slope, attenuated_slope_derivative, attenuation_bias, attenuation_bounds, simulate_attenuation,
    CancellationParams,
};
use crate::frontier::{
    convexity_report, frontier_under_misalignment, random_feasible_portfolios, sweep_frontier, sweep_frontier_evaluated, Frontier,
};
use crate::geometry::{
    build_alignment_family, cosine_alignment, generate_mu, make_spd_cov, sharpe_of_weights, tangency_direction, theta_grid,
    vm_norm, SignalVector, SpdCovariance,
};
use crate::harness::config::{
    AlignmentSettings, AttenuationSettings, CalibrationSettings, CancellationSettings, ExperimentConfig, ExperimentParams,
    NonlinearSettings, RealDataSettings, RealDataSignal, UniverseSettings,
};
use crate::harness::report::{Cell, ExperimentReport, Table};
use crate::market_data::{lagged_features, load_price_csv, subset, to_simple_returns, ReturnsPanel};
use crate::signals::{
    calibration_curve, fit_logistic, generate_cancellation_dataset, generate_nonlinear_dataset, misspecified_signals,
    normalized_transforms, prob_to_weight, sigmoid, sign_agreement, CancellationDgpConfig, WeightPair, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::stochastics::{empirical_moments, spearman, RngStream, SamplePanel};

pub const THREADS_ENV: &str = "FRONTIER_LAB_THREADS";

/// A pool capped by `FRONTIER_LAB_THREADS` when it is set to a positive integer.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| LabError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| LabError::Config(e.to_string()))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let pool = thread_pool()?;
    pool.install(|| match &config.params {
        ExperimentParams::Cancellation(s) => run_cancellation(config, s),
        ExperimentParams::Attenuation(s) => run_attenuation(config, s),
        ExperimentParams::Calibration(s) => run_calibration(config, s),
        ExperimentParams::NonlinearFrontier(s) => run_nonlinear_frontier(config, s),
        ExperimentParams::Alignment(s) => run_alignment(config, s),
        ExperimentParams::RealDataFrontier(s) => run_real_data_frontier(config, s),
    })
}

fn require_repetitions(config: &ExperimentConfig) -> Result<()> {
    if config.repetitions == 0 {
        return Err(LabError::Config("repetitions must be at least 1, an empty report has nothing to check".into()));
    }
    Ok(())
}

fn stats(xs: &[f64]) -> (f64, f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

struct CancellationRep {
    omega_true: Vec<f64>,
    omega_pred: Vec<f64>,
    rate: f64,
    correlation: Option<f64>,
    slope: f64,
    intercept: f64,
}

pub fn run_cancellation(config: &ExperimentConfig, s: &CancellationSettings) -> Result<ExperimentReport> {
    require_repetitions(config)?;
    let dgp = CancellationDgpConfig { n: s.n, alpha: s.alpha, b_x: s.b_x, b_z: s.b_z };
    let reps: Vec<CancellationRep> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (panel, p_true) = generate_cancellation_dataset(&RngStream::new(config.seed, rep as u64), &dgp)?;
            let x = panel.column(0);
            let features = SamplePanel::from_columns(vec!["x".into()], std::slice::from_ref(&x))?;
            let model = fit_logistic(&features, &panel.column(2), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
            let omega_true = prob_to_weight(&p_true)?;
            let omega_pred: Vec<f64> = x
                .iter()
                .map(|xi| 2.0 * sigmoid(model.intercept + model.coefficients[0] * xi) - 1.0)
                .collect();
            let agreement = sign_agreement(&WeightPair::new(omega_true.clone(), omega_pred.clone())?);
            Ok(CancellationRep {
                omega_true,
                omega_pred,
                rate: agreement.rate,
                correlation: agreement.correlation,
                slope: model.coefficients[0],
                intercept: model.intercept,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new(config);
    let mut weights = Table::new(&["rep", "index", "omega_true", "omega_pred"]);
    let mut per_rep = Table::new(&["rep", "rate", "correlation", "fitted_slope", "fitted_intercept"]);
    for (r, rep) in reps.iter().enumerate() {
        for (i, (t, p)) in rep.omega_true.iter().zip(&rep.omega_pred).enumerate() {
            weights.push(vec![r.into(), i.into(), (*t).into(), (*p).into()]);
        }
        per_rep.push(vec![
            r.into(),
            rep.rate.into(),
            rep.correlation.map_or(Cell::from("undefined"), Cell::from),
            rep.slope.into(),
            rep.intercept.into(),
        ]);
    }
    report.add_table("weights", weights);
    report.add_table("repetitions", per_rep);

    let rates: Vec<f64> = reps.iter().map(|r| r.rate).collect();
    let corrs: Vec<f64> = reps.iter().map(|r| r.correlation.unwrap_or(f64::NAN)).collect();
    let slopes: Vec<f64> = reps.iter().map(|r| r.slope).collect();
    let (mean_rate, min_rate, _) = stats(&rates);
    let (mean_corr, min_corr, _) = stats(&corrs);
    report.set("mean_rate", mean_rate);
    report.set("min_rate", min_rate);
    report.set("mean_correlation", mean_corr);
    report.set("min_correlation", min_corr);
    report.set("mean_fitted_slope", stats(&slopes).0);
    report.set("true_x_loading", s.b_x);

    let all_defined = corrs.iter().all(|c| c.is_finite());
    report.check("sign_agreement_rate", 7, min_rate > s.min_rate, format!("min rate {min_rate:.4} vs floor {}", s.min_rate));
    report.check(
        "weight_correlation",
        7,
        all_defined && min_corr > s.min_correlation,
        format!("min correlation {min_corr:.4} vs floor {}", s.min_correlation),
    );
    report.check("no_sign_inversion", 7, all_defined && min_corr > 0.0, format!("min correlation {min_corr:.4}"));
    Ok(report)
}

pub fn run_attenuation(config: &ExperimentConfig, s: &AttenuationSettings) -> Result<ExperimentReport> {
    require_repetitions(config)?;
    let grid = s.sigma_grid();
    if grid.is_empty() {
        return Err(LabError::Config("sigma_zeta grid is empty".into()));
    }
    if !(s.alpha.abs() < 1.0) {
        return Err(LabError::Config(format!("|alpha| must be below 1, got {}", s.alpha)));
    }
    if s.n < 3 {
        return Err(LabError::InsufficientData { needed: 3, got: s.n });
    }
    let base = CancellationParams::new(
        s.alpha,
        s.beta,
        s.gamma,
        (1.0 - s.alpha * s.alpha).sqrt(),
        0.0,
        s.sigma_eps,
        s.normalization,
    )?;
    let reps = config.repetitions;
    let root = RngStream::new(config.seed, 0);
    let slopes: Vec<f64> = (0..grid.len() * reps)
        .into_par_iter()
        .map(|k| {
            let (g, r) = (k / reps, k % reps);
            let params = base.with_sigma_zeta(grid[g]);
            simulate_attenuation(&params, &root.child(g as u64).child(r as u64), s.n).map(|f| f.slope)
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new(config);
    let mut table = Table::new(&[
        "sigma_zeta",
        "mc_slope",
        "mc_std_error",
        "theory_slope",
        "mc_bias",
        "theory_bias",
        "abs_deviation",
        "derivative",
        "lower_bound",
        "upper_bound",
    ]);
    let mut replicates = Table::new(&["sigma_zeta", "rep", "slope"]);
    let mut max_dev: f64 = 0.0;
    let mut theory = Vec::with_capacity(grid.len());
    let mut bounds_ok = true;
    for (g, &sz) in grid.iter().enumerate() {
        let params = base.with_sigma_zeta(sz);
        let reps_slopes = &slopes[g * reps..(g + 1) * reps];
        let mc = reps_slopes.iter().sum::<f64>() / reps as f64;
        let se = if reps > 1 {
            let var = reps_slopes.iter().map(|x| (x - mc) * (x - mc)).sum::<f64>() / (reps - 1) as f64;
            (var / reps as f64).sqrt()
        } else {
            f64::NAN
        };
        let th = attenuated_slope(&params);
        let (lo, hi) = attenuation_bounds(&params);
        bounds_ok &= lo <= th && th <= hi;
        let dev = (mc - th).abs();
        max_dev = max_dev.max(dev);
        theory.push(th);
        table.push(vec![
            sz.into(),
            mc.into(),
            se.into(),
            th.into(),
            (mc - s.beta).into(),
            attenuation_bias(&params).into(),
            dev.into(),
            attenuated_slope_derivative(&params).into(),
            lo.into(),
            hi.into(),
        ]);
        for (r, v) in reps_slopes.iter().enumerate() {
            replicates.push(vec![sz.into(), r.into(), (*v).into()]);
        }
    }
    report.add_table("attenuation", table);
    report.add_table("replicates", replicates);

    let ag = s.alpha * s.gamma;
    let monotone = theory.windows(2).all(|w| if ag > 0.0 { w[1] > w[0] } else if ag < 0.0 { w[1] < w[0] } else { w[1] == w[0] });
    let h = 1e-5;
    let max_fd_gap = grid
        .iter()
        .map(|&sz| {
            let p = base.with_sigma_zeta(sz);
            let lo = (sz - h).max(0.0);
            let fd = (attenuated_slope(&base.with_sigma_zeta(sz + h)) - attenuated_slope(&base.with_sigma_zeta(lo))) / (sz + h - lo);
            // a one-sided difference at zero estimates the derivative at h/2
            let analytic = if sz < h { attenuated_slope_derivative(&base.with_sigma_zeta(h / 2.0)) } else { attenuated_slope_derivative(&p) };
            (fd - analytic).abs()
        })
        .fold(0.0_f64, f64::max);

    report.set("max_abs_deviation", max_dev);
    report.set("max_derivative_gap", max_fd_gap);
    report.set("grid_points", grid.len());
    report.check("mc_matches_theory", 1, max_dev <= s.tolerance, format!("max |MC - theory| = {max_dev:.3e}, tolerance {}", s.tolerance));
    report.check("theory_monotone", 2, monotone, format!("{} grid points", grid.len()));
    report.check("bounds_sandwich", 2, bounds_ok, "lower <= slope <= upper at every grid point");
    report.check("derivative_matches_finite_difference", 2, max_fd_gap <= 1e-6, format!("max gap {max_fd_gap:.3e}"));
    Ok(report)
}

fn universe(seed: u64, u: &UniverseSettings) -> Result<(SpdCovariance, SignalVector)> {
    if u.n_assets < 2 {
        return Err(LabError::Config(format!("need at least 2 assets, got {}", u.n_assets)));
    }
    let cov = make_spd_cov(&RngStream::new(seed, 0), u.n_assets, u.n_factors, u.idio_scale)?;
    let mu = generate_mu(&RngStream::new(seed, 1), u.n_assets, u.mu_scale)?;
    Ok((cov, mu))
}

pub fn run_calibration(config: &ExperimentConfig, s: &CalibrationSettings) -> Result<ExperimentReport> {
    if s.powers.is_empty() {
        return Err(LabError::Config("exponent grid is empty".into()));
    }
    let (cov, mu) = universe(config.seed, &s.universe)?;
    let curve = calibration_curve(&mu, &cov, &s.powers)?;
    let transforms = normalized_transforms(&mu, &cov, &s.powers)?;
    let cosines: Vec<f64> = transforms.iter().map(|t| cosine_alignment(&mu, t, &cov)).collect::<Result<_>>()?;

    let mut report = ExperimentReport::new(config);
    let mut table = Table::new(&["power", "relative_sharpe", "cosine", "spearman"]);
    for (c, cos) in curve.iter().zip(&cosines) {
        table.push(vec![c.power.into(), c.relative_sharpe.into(), (*cos).into(), c.spearman.into()]);
    }
    report.add_table("curve", table);
    let mut scatter = Table::new(&["power", "asset", "mu", "mu_tilde"]);
    for (&p, t) in s.scatter_powers.iter().zip(normalized_transforms(&mu, &cov, &s.scatter_powers)?.iter()) {
        for i in 0..mu.len() {
            scatter.push(vec![p.into(), i.into(), mu.values[i].into(), t.values[i].into()]);
        }
    }
    report.add_table("scatter", scatter);

    let argmax = |xs: &[f64]| xs.iter().enumerate().fold(0, |best, (i, v)| if *v > xs[best] { i } else { best });
    let rel: Vec<f64> = curve.iter().map(|c| c.relative_sharpe).collect();
    let best = argmax(&rel);
    let best_power = s.powers[best];
    let peak_ok = match s.powers.iter().position(|&p| p == 1.0) {
        Some(one) => best == one && (rel[one] - 1.0).abs() <= 1e-10,
        None => best == argmax(&cosines),
    };
    let bounded = rel.iter().all(|&r| r <= 1.0 + 1e-10);
    let ranked = curve.iter().all(|c| c.spearman == 1.0);
    // one surrogate that breaks the ordering: largest and smallest entries swapped
    let (hi, lo) = (mu.values.imax(), mu.values.imin());
    let mut swapped = mu.values.clone();
    swapped.swap_rows(hi, lo);
    let swapped = SignalVector::new(swapped, "mu_rank_violation")?;
    let base = sharpe_of_weights(&tangency_direction(&mu, &cov)?, &mu, &cov)?.sharpe;
    let violated = sharpe_of_weights(&tangency_direction(&swapped, &cov)?, &mu, &cov)?.sharpe / base;
    let mu_slice: Vec<f64> = mu.values.iter().copied().collect();
    let swapped_slice: Vec<f64> = swapped.values.iter().copied().collect();
    report.set("argmax_power", best_power);
    report.set("max_relative_sharpe", rel[best]);
    report.set("rank_violation_relative_sharpe", violated);
    report.set("rank_violation_spearman", spearman(&mu_slice, &swapped_slice));
    report.check("peak_at_calibrated_power", 5, peak_ok, format!("argmax p = {best_power}, value {:.12}", rel[best]));
    report.check("relative_sharpe_at_most_one", 5, bounded, format!("max {:.12}", rel[best]));
    report.check("ranking_preserved", 5, ranked, "Spearman correlation 1 for every exponent");
    Ok(report)
}

fn frontier_rows(table: &mut Table, series: Cell, frontier: &Frontier, true_mu: Option<&DVector<f64>>) {
    for p in &frontier.points {
        let mut row = vec![series.clone(), p.target_return.into(), p.realized_return.into(), p.volatility.into()];
        if let Some(m) = true_mu {
            row.push(m.dot(&p.weights).into());
        }
        row.push(false.into());
        table.push(row);
    }
    for &t in &frontier.skipped {
        let mut row = vec![series.clone(), t.into(), Cell::from(""), Cell::from("")];
        if true_mu.is_some() {
            row.push(Cell::from(""));
        }
        row.push(true.into());
        table.push(row);
    }
}

pub fn run_nonlinear_frontier(config: &ExperimentConfig, s: &NonlinearSettings) -> Result<ExperimentReport> {
    require_repetitions(config)?;
    let mut report = ExperimentReport::new(config);
    let mut frontier_table = Table::new(&["series", "target_return", "realized_return", "volatility", "realized_true", "skipped"]);
    let mut weights = Table::new(&["rep", "obs", "asset", "omega_true", "omega_pred"]);
    let mut min_sdd = f64::INFINITY;
    let mut all_convex = true;
    let mut no_skips = true;
    let mut min_random_gap = f64::INFINITY;
    let mut min_corr = f64::INFINITY;
    let mut min_rate = f64::INFINITY;

    for rep in 0..config.repetitions {
        let data = generate_nonlinear_dataset(&s.dgp, &RngStream::new(config.seed, 2 * rep as u64))?;
        let signals = misspecified_signals(&data, s.beta_source, &RngStream::new(config.seed, 2 * rep as u64 + 1))?;
        let mu_hat = SignalVector::new(signals.row_mean().transpose(), "mu_hat")?;
        let (mu_true, cov) = empirical_moments(&data.returns)?;
        let cov = SpdCovariance::from_matrix(cov, SpdCovariance::DEFAULT_EIGEN_FLOOR)?;
        let frontier = sweep_frontier(&mu_hat, &cov, s.n_points, s.span)?;
        let conv = convexity_report(&frontier)?;
        min_sdd = min_sdd.min(conv.min_second_difference);
        all_convex &= conv.passes();
        no_skips &= frontier.skipped.is_empty();
        frontier_rows(&mut frontier_table, Cell::from(format!("rep{rep}")), &frontier, Some(&mu_true));

        let feasible_root = RngStream::new(config.seed, 1_000_000 + rep as u64);
        let gaps: Vec<f64> = frontier
            .points
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let var = p.volatility * p.volatility;
                let draws = random_feasible_portfolios(&mu_hat, p.target_return, &feasible_root.child(k as u64), s.random_portfolios, 1.0)?;
                let best = draws.iter().map(|w| cov.quad_form(w)).fold(f64::INFINITY, f64::min);
                Ok((best - var) / var)
            })
            .collect::<Result<_>>()?;
        min_random_gap = min_random_gap.min(gaps.iter().copied().fold(f64::INFINITY, f64::min));

        let omega_true = data.p_true.map(|p| 2.0 * p - 1.0);
        let agreement = sign_agreement(&WeightPair::new(omega_true.iter().copied().collect(), signals.iter().copied().collect())?);
        min_corr = min_corr.min(agreement.correlation.unwrap_or(f64::NAN));
        min_rate = min_rate.min(agreement.rate);
        for i in 0..signals.nrows() {
            for j in 0..signals.ncols() {
                weights.push(vec![rep.into(), i.into(), j.into(), omega_true[(i, j)].into(), signals[(i, j)].into()]);
            }
        }
    }
    report.add_table("frontier", frontier_table);
    report.add_table("weights", weights);
    report.set("min_second_difference", min_sdd);
    report.set("min_relative_gap_to_random", min_random_gap);
    report.set("min_weight_correlation", min_corr);
    report.set("min_sign_agreement_rate", min_rate);
    report.check("frontier_convex", 6, all_convex && no_skips && min_sdd >= -1e-10, format!("min second difference {min_sdd:.3e}"));
    report.check(
        "beats_random_feasible",
        6,
        min_random_gap >= -1e-12,
        format!("smallest relative variance gap to {} random portfolios: {min_random_gap:.3e}", s.random_portfolios),
    );
    report.check("weights_not_inverted", 6, min_corr > 0.0, format!("min correlation {min_corr:.4}"));
    Ok(report)
}

pub fn run_alignment(config: &ExperimentConfig, s: &AlignmentSettings) -> Result<ExperimentReport> {
    if s.n_theta == 0 {
        return Err(LabError::Config("theta grid is empty".into()));
    }
    let (cov, mu) = universe(config.seed, &s.universe)?;
    let family = build_alignment_family(&mu, &cov, &RngStream::new(config.seed, 2), &theta_grid(s.n_theta))?;
    let base = sharpe_of_weights(&tangency_direction(&mu, &cov)?, &mu, &cov)?.sharpe;

    let mut report = ExperimentReport::new(config);
    let mut table = Table::new(&["theta", "cos_theta", "sharpe", "ratio", "abs_deviation"]);
    let mut max_dev: f64 = 0.0;
    let mut sign_ok = true;
    let (mut cs, mut rs) = (Vec::new(), Vec::new());
    for (theta, surrogate) in family.surrogates() {
        let sharpe = sharpe_of_weights(&tangency_direction(&surrogate, &cov)?, &mu, &cov)?.sharpe;
        let ratio = sharpe / base;
        let c = theta.cos();
        let dev = (ratio - c).abs();
        max_dev = max_dev.max(dev);
        sign_ok &= if c.abs() <= s.tolerance { ratio.abs() <= s.tolerance } else { (sharpe <= 0.0) == (c <= 0.0) };
        table.push(vec![theta.into(), c.into(), sharpe.into(), ratio.into(), dev.into()]);
        cs.push(c);
        rs.push(ratio);
    }
    report.add_table("sharpe", table);

    let (slope, intercept, max_resid) = linear_fit(&cs, &rs);
    report.set("base_sharpe", base);
    report.set("max_abs_deviation", max_dev);
    report.set("fit_slope", slope);
    report.set("fit_intercept", intercept);
    report.set("fit_max_residual", max_resid);
    report.check("sharpe_ratio_equals_cosine", 3, max_dev <= s.tolerance, format!("max |ratio - cos| = {max_dev:.3e}"));
    report.check("sharpe_sign_follows_cosine", 3, sign_ok, "Sharpe <= 0 exactly when cos <= 0");

    let mu_norm = vm_norm(&mu.values, &cov)?;
    let sur_root = RngStream::new(config.seed, 3);
    let mut surrogates = Table::new(&["index", "sharpe", "norm_times_cosine", "relative_deviation"]);
    let mut max_rel: f64 = 0.0;
    for k in 0..s.random_surrogates {
        let draw = sur_root.child(k as u64).sampler().normals(mu.len());
        let tilde = SignalVector::from_slice(&draw, "random")?;
        let sharpe = sharpe_of_weights(&tangency_direction(&tilde, &cov)?, &mu, &cov)?.sharpe;
        let predicted = mu_norm * cosine_alignment(&mu, &tilde, &cov)?;
        let rel = (sharpe - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE);
        max_rel = max_rel.max(rel);
        surrogates.push(vec![k.into(), sharpe.into(), predicted.into(), rel.into()]);
    }
    report.add_table("surrogates", surrogates);
    report.set("surrogate_max_relative_deviation", max_rel);
    report.check(
        "surrogate_sharpe_identity",
        4,
        max_rel <= 1e-10,
        format!("{} random surrogates, max relative deviation {max_rel:.3e}", s.random_surrogates),
    );

    let frontiers = frontier_under_misalignment(&mu, &family, &cov, s.frontier_points)?;
    let mut frontier_table = Table::new(&["series", "target_return", "realized_return", "volatility", "skipped"]);
    let mut min_sdd = f64::INFINITY;
    for (theta, f) in &frontiers {
        min_sdd = min_sdd.min(convexity_report(f)?.min_second_difference);
        frontier_rows(&mut frontier_table, Cell::num(*theta), f, None);
    }
    report.add_table("frontier", frontier_table);
    report.set("min_second_difference", min_sdd);
    report.check("frontiers_convex", 6, min_sdd >= -1e-10, format!("min second difference {min_sdd:.3e}"));
    Ok(report)
}

/// Ordinary least squares line `y = a x + b`; returns `(a, b, max |residual|)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let intercept = my - slope * mx;
    let resid = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).abs()).fold(0.0, f64::max);
    (slope, intercept, resid)
}

pub fn run_real_data_frontier(config: &ExperimentConfig, s: &RealDataSettings) -> Result<ExperimentReport> {
    let path = s
        .csv_path
        .as_ref()
        .ok_or_else(|| LabError::Config("real-data-frontier needs a price CSV (csv_path or --csv)".into()))?;
    let bytes = std::fs::read(path).map_err(|e| LabError::Data { path: path.clone(), message: e.to_string() })?;
    let prices = load_price_csv(path, &s.date_column, &s.date_format)?;
    let returns = to_simple_returns(&prices)?;
    let sub = subset(&returns, s.n_days, s.n_assets)?;
    let (mu, cov) = empirical_moments(&sub.to_sample_panel()?)?;
    let cov = SpdCovariance::from_matrix(cov, SpdCovariance::DEFAULT_EIGEN_FLOOR)?;
    let empirical = SignalVector::new(mu, "empirical mean")?;
    let mu_hat = match s.signal {
        RealDataSignal::EmpiricalMean => empirical.clone(),
        RealDataSignal::LaggedLogistic => lagged_logistic_signal(&sub, s.volatility_window)?,
    };
    let frontier = sweep_frontier_evaluated(&mu_hat, &empirical, &cov, s.n_points, s.span)?;
    let conv = convexity_report(&frontier)?;

    let mut report = ExperimentReport::new(config);
    let mut assets = Table::new(&["ticker", "mean", "signal", "volatility"]);
    for (j, t) in sub.tickers.iter().enumerate() {
        assets.push(vec![
            t.as_str().into(),
            empirical.values[j].into(),
            mu_hat.values[j].into(),
            cov.matrix()[(j, j)].sqrt().into(),
        ]);
    }
    report.add_table("assets", assets);
    let mut table = Table::new(&["series", "target_return", "realized_return", "volatility", "skipped"]);
    let series = match s.signal {
        RealDataSignal::EmpiricalMean => "empirical",
        RealDataSignal::LaggedLogistic => "lagged-logistic",
    };
    frontier_rows(&mut table, Cell::from(series), &frontier, None);
    report.add_table("frontier", table);

    report.set("data_sha256", hex::encode(Sha256::digest(&bytes)));
    report.set("n_days", sub.n_days());
    report.set("n_assets", sub.n_assets());
    report.set("dropped_rows", returns.dropped);
    report.set("first_date", sub.dates.first().map(|d| d.to_string()));
    report.set("last_date", sub.dates.last().map(|d| d.to_string()));
    report.set("min_second_difference", conv.min_second_difference);
    report.set("fit_r_squared", conv.fit_r_squared);
    report.set("signal", s.signal);
    report.check(
        "frontier_convex",
        6,
        conv.passes() && frontier.skipped.is_empty(),
        format!("min second difference {:.3e}, R^2 {:.12}", conv.min_second_difference, conv.fit_r_squared),
    );
    Ok(report)
}

/// Per-asset logistic up-day model on lagged features; the average signed
/// conviction `2p - 1` is scaled by the asset's mean absolute return.
fn lagged_logistic_signal(panel: &ReturnsPanel, window: usize) -> Result<SignalVector> {
    let values: Vec<f64> = (0..panel.n_assets())
        .into_par_iter()
        .map(|j| {
            let (x, y) = lagged_features(panel, j, window)?;
            let model = fit_logistic(&x, &y, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
            let p: Vec<f64> = model.predict_proba(x.values()).iter().copied().collect();
            let conviction = prob_to_weight(&p)?.iter().sum::<f64>() / p.len() as f64;
            let scale = panel.returns.column(j).iter().map(|r| r.abs()).sum::<f64>() / panel.n_days() as f64;
            Ok(conviction * scale)
        })
        .collect::<Result<_>>()?;
    SignalVector::from_slice(&values, "lagged logistic")
}
