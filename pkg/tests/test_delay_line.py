"""Tests for the delay line and the RK4 method-of-steps integrator"""
import math

import numpy as np
import pytest

from app.exceptions import QueryOutOfRange
from app.services.delay_line import DelayLine, delay_sample
from app.services.simulator import MethodOfStepsRK4, calibration_reference, run_calibration


def filled(h, n, f, capacity=None):
    line = DelayLine(h, capacity or n + 4)
    for k in range(n):
        line.push(f(k * h))
    return line


def test_cubic_interpolation_is_exact_for_cubics():
    f = lambda t: 2.0 * t ** 3 - t ** 2 + 0.5 * t - 3.0
    line = filled(0.1, 40, f)
    for t in np.linspace(0.35, 3.9, 37):
        assert line.sample(t, 0.3) == pytest.approx(f(t - 0.3), abs=1e-12)


def test_samples_on_the_grid_are_returned_exactly():
    line = filled(0.5, 10, math.sin)
    assert line.sample(3.0, 1.0) == pytest.approx(math.sin(2.0), abs=1e-15)
    assert delay_sample(line, 4.5, 0.0) == pytest.approx(math.sin(4.5), abs=1e-15)


def test_prehistory_constant_and_callable():
    line = DelayLine(0.1, 16, prehistory=0.7)
    line.push(1.0)
    assert line.sample(0.05, 0.1) == 0.7
    line = DelayLine(0.1, 16, prehistory=lambda t: 2.0 * t)
    assert line.sample(0.0, 0.5) == pytest.approx(-1.0)


def test_query_ahead_of_newest_sample():
    line = filled(0.1, 5, lambda t: t)
    with pytest.raises(QueryOutOfRange):
        line.sample(0.5, 0.0)


def test_query_before_retained_history():
    line = filled(0.1, 50, lambda t: t, capacity=8)
    assert len(line) == 8
    with pytest.raises(QueryOutOfRange):
        line.sample(4.9, 4.0)


def test_few_samples_use_lower_order():
    line = filled(0.1, 2, lambda t: 3.0 * t)
    assert line.sample(0.1, 0.05) == pytest.approx(0.15)


def test_for_delay_capacity_covers_the_delay():
    line = DelayLine.for_delay(1e-3, 0.5)
    assert line.capacity >= 500 + 4


def test_rejects_bad_step():
    with pytest.raises(ValueError):
        DelayLine(0.0, 16)


def test_calibration_matches_method_of_steps():
    t, y = run_calibration(h=1e-3, horizon=3.0)
    assert t[-1] == pytest.approx(3.0)
    assert np.max(np.abs(y - calibration_reference(t))) <= 1e-6


def test_calibration_reference_pieces():
    assert calibration_reference(1.0) == pytest.approx(0.0)
    assert calibration_reference(2.0) == pytest.approx(-0.5)
    assert calibration_reference(3.0) == pytest.approx(-1.0 / 6.0)


def test_zero_delay_uses_current_stage():
    solver = MethodOfStepsRK4(
        rhs=lambda t, x, d: [-d[0]],
        observe=lambda x: (x[0],),
        tau=0.0, h=0.01, prehistory=(1.0,),
    )
    x = solver.run([1.0], 100)
    assert x[0] == pytest.approx(math.exp(-1.0), abs=1e-9)


def test_smooth_signal_interpolation():
    line = filled(1e-3, 2101, lambda t: math.sin(5.0 * t))
    assert line.sample(2.0, 0.2) == pytest.approx(math.sin(9.0), abs=1e-9)
    assert line.sample(2.0003, 0.2) == pytest.approx(math.sin(5.0 * 1.8003), abs=1e-9)
