import numpy as np
import pytest

from vecmap.gradcheck import COMPONENTS, numeric_gradient, relative_error, run_grad_check


def test_numeric_gradient_quadratic():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    g = numeric_gradient(lambda b: (b**2).sum(axis=(1, 2)), x)
    np.testing.assert_allclose(g, 2 * x, atol=1e-8)


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.full(3, 1e-9)) == pytest.approx(1e-3)


def test_report_covers_everything():
    report = run_grad_check(trials=15, densities=(3, 9))
    assert {(e.component, e.density) for e in report.entries} == {(c, d) for c in COMPONENTS for d in (3, 9)}
    assert report.passed
    assert report.to_text().rstrip().endswith("PASS (tolerance 0.0001)")


def test_detects_wrong_gradient(monkeypatch):
    import vecmap.gradcheck as gc

    real = gc._KERNELS["edge_slope"]
    monkeypatch.setitem(gc._KERNELS, "edge_slope", lambda p, t, m: (real(p, t, m)[0], 1.01 * real(p, t, m)[1]))
    report = run_grad_check(trials=5, densities=(5,))
    assert not report.passed
