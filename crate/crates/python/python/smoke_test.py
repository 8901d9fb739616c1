"""Smoke test for the frontier_lab_py extension.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or copy target/release/libfrontier_lab_py.so next to this file as
frontier_lab_py.so.
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import frontier_lab_py as fl


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    cov = fl.Covariance.random(seed=42, n=20)
    mu = fl.generate_mu(seed=42, n=20)
    assert cov.dim == 20
    assert min(cov.eigenvalues()) >= 1e-8

    w = fl.tangency_direction(mu, cov)
    mean, vol, sharpe = fl.portfolio_stats(w, mu, cov)
    assert close(fl.cosine_alignment(mu, mu, cov), 1.0, 1e-12)
    assert sharpe > 0 and vol > 0

    ident = fl.Covariance([[1.0, 0.0], [0.0, 1.0]])
    p = fl.min_variance_at_target([0.0, 1.0], ident, 0.3)
    assert close(p["weights"][0], 0.7, 1e-12) and close(p["weights"][1], 0.3, 1e-12)

    front = fl.sweep_frontier(mu, cov, n_points=25)
    assert len(front["points"]) == 25 and front["convex"]

    assert close(fl.attenuated_slope(0.6, 0.2, 0.7, 0.0), -0.22, 1e-12)
    mc = fl.simulate_attenuation(0.6, 0.2, 0.7, 0.4, n=50_000, seed=1)
    assert close(mc, fl.attenuated_slope(0.6, 0.2, 0.7, 0.4), 0.02)
    exposure = fl.misspecified_exposure((0.0, 0.0), (0.4, 1.3), 0.7)
    assert close(exposure[0], 0.0, 1e-15) and close(exposure[1], 1.0, 1e-15)

    xs = [[-1.5], [-0.3], [0.2], [0.8], [1.4], [-0.9], [0.0], [2.1]]
    ys = [0, 1, 0, 1, 1, 0, 1, 0]
    model = fl.fit_logistic(xs, [float(y) for y in ys])
    assert model["converged"]

    assert fl.prob_to_weight([0.0, 0.5, 1.0]) == [-1.0, 0.0, 1.0]
    assert fl.power_transform([0.25, -0.5, 0.0], 1.0) == [0.25, -0.5, 0.0]
    rate, corr = fl.sign_agreement([0.5, -0.2], [0.4, -0.1])
    assert rate == 1.0 and close(corr, 1.0, 1e-12)
    try:
        fl.prob_to_weight([1.5])
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    cfg = json.loads(fl.default_config("calibration"))
    report = json.loads(fl.run_experiment(json.dumps(cfg)))
    assert report["config_hash"] == fl.config_hash(json.dumps(cfg))
    assert all(c["passed"] for c in report["checks"])
    assert not math.isnan(report["summary"]["max_relative_sharpe"])

    print("frontier_lab_py", fl.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
