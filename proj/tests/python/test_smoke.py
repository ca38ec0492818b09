import json
import math

import numpy as np
import pytest

import slowman


def linear_root(a, c, eps, m, x0):
    r = -eps * a
    return c * x0 * (1.0 - r ** (m + 1)) / (1.0 - r)


def test_project_matches_power_root():
    sys = slowman.linear_test(1.0, 1.0, 0.01)
    for m in range(4):
        tr = slowman.project(sys, np.array([1.0]), np.array([1.0]), m=m, H_over_eps=0.5, tol=1e-12)
        assert tr["converged"]
        assert tr["outcome"] == "converged"
        assert abs(tr["output"][0] - linear_root(1.0, 1.0, 0.01, m, 1.0)) < 1e-9
        assert len(tr["residuals"]) == len(tr["iterates"]) - 1


def test_validation_maps_to_python_exception():
    sys = slowman.linear_test(1.0, 1.0, 0.01)
    with pytest.raises(slowman.ValidationError):
        slowman.project(sys, np.array([1.0]), np.array([1.0]), tol=0.0)
    with pytest.raises(slowman.Error):
        slowman.make_system("vdp", {}, 0.01)


def test_rpm_rescues_complex_pair():
    sys = slowman.complex_pair_test(0.7 * math.pi, -1.0, 0.01)
    seed = np.array([0.2, 0.2])
    plain = slowman.project(sys, np.array([1.0]), seed, m=1, H_over_eps=0.5, tol=1e-12, max_iters=300)
    assert not plain["converged"]
    rpm = slowman.rpm_iterate(sys, np.array([1.0]), seed, m=1, H_over_eps=0.5, tol=1e-12)
    assert rpm["converged"]
    assert np.allclose(rpm["output"], [1.0, 1.0], atol=1e-8)


def test_stability_formulas():
    assert slowman.in_sector(1, math.pi)
    assert not slowman.in_sector(1, 0.7 * math.pi)
    assert slowman.h_max_over_eps(1, 1.0, math.pi) == pytest.approx(math.sqrt(2.0))
    assert slowman.uniform_bound(1, 1.0) == pytest.approx(-math.log(math.sqrt(2.0) - 1.0))
    assert abs(slowman.mu_hat(1, 50.0, math.pi, 1.6) - (1 - 1.6**2)) < 1e-6
    s, th = 1.3, 0.9 * math.pi
    mh = slowman.mu_hat(1, s, th, 1.0)
    assert slowman.boundary_residual(1, s, th, 1.0) == pytest.approx(abs(mh) ** 2 - 1.0, abs=1e-12)
    rows = slowman.raster_region(1, "differenced", 1.0, 0.5 * math.pi, 1.5 * math.pi, 0.0, 3.0, 8)
    assert len(rows) == 64
    assert all(stable == (abs_mu < 1.0) for _, _, abs_mu, stable in rows)


def test_order_of_accuracy():
    fit = slowman.order_of_accuracy("linear", {"a": 1.0, "c": 1.0}, [1e-2, 5e-3, 2e-3, 1e-3], 1)
    assert abs(fit["slope"] - 2.0) < 0.3
    assert fit["r_squared"] > 0.99


def test_cli_roundtrip():
    code, out, err = slowman.run_cli(
        ["project", "--system", "linear", "--eps", "0.01", "--m", "1", "--x0", "1", "--tol", "1e-8"]
    )
    assert code == 0, err
    assert json.loads(out)["output"][0] == pytest.approx(0.99, abs=1e-6)
    code, _, _ = slowman.run_cli(["project", "--tol", "0"])
    assert code == 2
