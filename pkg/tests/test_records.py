import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mourrelab.records import (INCONCLUSIVE, SATISFIED, VIOLATED, SweepRecord, decay_verdict,
                               fit_loglog, format_number, slope_verdict, tail)


def test_fit_recovers_power_law():
    x = np.geomspace(1, 100, 12)
    fit = fit_loglog(x, 3.0 * x**-1.7)
    assert fit.slope == pytest.approx(-1.7, abs=1e-12)
    assert fit.ci_low <= fit.slope <= fit.ci_high and fit.points == 12


def test_fit_with_two_points_has_infinite_interval():
    fit = fit_loglog([1, 2], [1, 4])
    assert fit.slope == pytest.approx(2.0) and math.isinf(fit.ci_high)
    assert slope_verdict(fit, 0.0, "above") == INCONCLUSIVE


def test_fit_drops_nonpositive_values():
    fit = fit_loglog([1, 2, 4, 8], [0.0, 1.0, 0.5, 0.25])
    assert fit.points == 3 and fit.slope == pytest.approx(-1.0)


def test_slope_verdicts():
    x = np.geomspace(1, 1000, 10)
    down = fit_loglog(x, x**-2.0)
    assert slope_verdict(down, -1.0) == SATISFIED
    assert slope_verdict(down, -3.0) == VIOLATED
    assert slope_verdict(down, -1.0, "above") == VIOLATED
    flat = fit_loglog(x, np.full(10, 5.0))
    # a profile pinned at the threshold does not decay
    assert slope_verdict(flat, 0.0) == VIOLATED


def test_tail_and_decay():
    x = np.geomspace(1, 1000, 13)
    ax, _ = tail(x, x, 1.0, "high")
    assert ax.min() >= 100 - 1e-9
    ax, _ = tail(x, x, 1.0, "low")
    assert ax.max() <= 10 + 1e-9
    verdict, _ = decay_verdict(x, np.where(x > 50, 0.0, 1.0 / x), 0.0)
    assert verdict == SATISFIED


def test_record_validation_and_csv():
    rec = SweepRecord("mu", [1.0, 0.5, 0.25], [1.0, 1.5, 1.75], {"lam": 1.0},
                      {"residual": [1e-12, 2e-12, 3e-12]}, value_name="norm")
    lines = rec.to_csv().splitlines()
    assert lines[0] == "mu,norm,residual" and lines[2] == "0.5,1.5,2e-12"
    assert rec.to_dict()["metadata"] == {"lam": 1.0}
    with pytest.raises(ValueError):
        SweepRecord("r", [1, 2, 2], [1, 1, 1])
    with pytest.raises(ValueError):
        SweepRecord("r", [1, 2], [1])
    with pytest.raises(ValueError):
        SweepRecord("r", [1, 2], [1, 2], columns={"c": [1]})


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_number_round_trips(x):
    assert float(format_number(x)) == x
    assert format_number(np.float64(x)) == format_number(x)
