from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mpoqem.fit import arithmetic_stats, fit_power_law, geometric_stats, intercept_gap


@given(st.floats(-4, 4), st.floats(1e-6, 1e3), st.lists(st.floats(1.0, 100.0), min_size=3, max_size=8, unique=True))
def test_recovers_exact_power_law(k, a, xs):
    if np.ptp(np.log10(xs)) < 1e-3:
        return
    fit = fit_power_law([(x, a * x**k) for x in xs])
    assert fit.exponent == pytest.approx(k, abs=1e-10)
    assert 10**fit.intercept == pytest.approx(a, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0, abs=1e-9) or abs(k) < 1e-8


def test_synthetic_depth_sweep():
    depths = [4, 8, 12, 16]
    unmit = fit_power_law([(d, 3e-4 * d**2.8) for d in depths])
    mit = fit_power_law([(d, 1e-4 * d**2.8) for d in depths])
    assert unmit.exponent == pytest.approx(2.8, abs=1e-10)
    assert 10 ** intercept_gap(unmit, mit) == pytest.approx(3.0, rel=1e-10)
    assert np.allclose(unmit.predict(depths), [3e-4 * d**2.8 for d in depths])


def test_noisy_fit_quality():
    rng = np.random.default_rng(0)
    xs = np.arange(4, 21, 4)
    ys = 1e-3 * xs**2.5 * np.exp(rng.normal(0, 0.05, xs.size))
    fit = fit_power_law(list(zip(xs, ys)))
    assert abs(fit.exponent - 2.5) < 0.2 and 0.95 < fit.r2 <= 1.0


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 0), (3, 1)])
    with pytest.raises(ValueError):
        fit_power_law([(2, 1), (2, 2), (2, 3)])


def test_statistics():
    gm, gsd = geometric_stats([1e-2, 1e-4])
    assert gm == pytest.approx(1e-3)
    assert gsd == pytest.approx(np.exp(np.std(np.log([1e-2, 1e-4]), ddof=1)))
    assert geometric_stats([0.0, 1e-2], floor=1e-16)[0] == pytest.approx(1e-9)
    with pytest.raises(ValueError):
        geometric_stats([0.0, 1.0])
    assert arithmetic_stats([1.0, 3.0]) == (2.0, pytest.approx(np.sqrt(2)))
    assert geometric_stats([5.0]) == (pytest.approx(5.0), 1.0)
    assert arithmetic_stats([5.0]) == (5.0, 0.0)
