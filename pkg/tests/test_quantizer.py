"""Quantizer unit tests: frozen values, grid laws, dither whitening."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcslab.quantizer import (
    QuantizedObservation,
    Quantizer,
    QuantizerError,
    dithered_quantize,
    quantize_scalar,
)


def test_cell_midpoint_frozen_values():
    assert quantize_scalar(Quantizer(delta=1.0), 0.4) == 0.5
    assert quantize_scalar(Quantizer(delta=1.0), -0.4) == -0.5
    # frozen by enumerating the grid 0.25*(k+1/2), k in [-8, 8], and picking
    # the unique cell [0.25k, 0.25(k+1)) containing 0.93
    assert quantize_scalar(Quantizer(delta=0.25), 0.93) == pytest.approx(0.875, abs=1e-12)


def test_boundary_maps_into_upper_cell():
    # exact boundary a = k*delta belongs to cell k
    q = Quantizer(delta=0.5)
    assert quantize_scalar(q, 0.0) == 0.25
    assert quantize_scalar(q, 0.5) == 0.75
    assert quantize_scalar(q, -0.5) == -0.25


def test_grid_membership_and_bounded_distortion_bulk():
    rng = np.random.default_rng(7)
    a = rng.uniform(-50, 50, size=200_000)
    for delta in (0.05, 0.1, 1.0):
        out = quantize_scalar(Quantizer(delta=delta), a)
        # independent grid check: (out/delta - 1/2) must be an integer
        frac = out / delta - 0.5
        assert np.all(np.abs(frac - np.round(frac)) < 1e-6)
        assert np.all(np.abs(out - a) <= delta / 2 + 1e-9 * delta)


def test_idempotence_on_grid_points():
    q = Quantizer(delta=0.3)
    for k in range(-5, 6):
        g = 0.3 * (k + 0.5)
        assert quantize_scalar(q, g) == pytest.approx(g, abs=1e-12)


@settings(max_examples=200)
@given(
    a=st.floats(min_value=-100, max_value=100, allow_nan=False),
    k=st.integers(min_value=-20, max_value=20),
    delta=st.sampled_from([0.05, 0.25, 1.0, 3.0]),
)
def test_shift_equivariance_property(a, k, delta):
    q = Quantizer(delta=delta)
    lhs = quantize_scalar(q, a + k * delta)
    rhs = quantize_scalar(q, a) + k * delta
    # grid shifts commute with quantization; float rounding of a + k*delta can
    # move an input that sits exactly on a cell boundary into the adjacent cell
    diff = abs(lhs - rhs)
    tol = 1e-9 * max(1.0, abs(rhs))
    assert diff <= tol or abs(diff - delta) <= tol


@settings(max_examples=200)
@given(
    a=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
    delta=st.floats(min_value=1e-3, max_value=100.0),
)
def test_distortion_property(a, delta):
    out = quantize_scalar(Quantizer(delta=delta), a)
    assert abs(out - a) <= delta / 2 + 1e-9 * max(delta, abs(a))


def test_non_finite_input_rejected():
    q = Quantizer(delta=1.0)
    for bad in (np.nan, np.inf, -np.inf):
        with pytest.raises(QuantizerError):
            quantize_scalar(q, bad)


def test_invalid_delta_rejected():
    with pytest.raises(QuantizerError):
        Quantizer(delta=0.0)
    with pytest.raises(QuantizerError):
        Quantizer(delta=-1.0)
    # pass-through mode does not need a positive delta
    Quantizer(delta=0.0, unquantized_mode=True)


def test_unquantized_mode_passthrough():
    q = Quantizer(unquantized_mode=True)
    y = np.array([0.3, -1.7, 2.2])
    obs = dithered_quantize(q, y, np.zeros(3))
    assert np.array_equal(obs.y_dot, y)
    assert np.all(obs.xi == 0)
    assert np.array_equal(obs.y_clean, y)
    assert quantize_scalar(q, 0.37) == 0.37


def test_dithered_quantize_frozen_examples():
    q = Quantizer(delta=1.0)
    obs = dithered_quantize(q, np.array([0.0]), np.array([0.0]))
    assert obs.y_dot[0] == 0.5 and obs.xi[0] == 0.5
    obs = dithered_quantize(q, np.array([0.3]), np.array([0.4]))
    assert obs.y_dot[0] == 0.5
    assert obs.xi[0] == pytest.approx(0.2, abs=1e-12)


def test_dithered_quantize_invariants():
    rng = np.random.default_rng(0)
    q = Quantizer(delta=0.1)
    y = rng.normal(size=500)
    tau = rng.uniform(-0.05, 0.05, size=500)
    obs = dithered_quantize(q, y, tau)
    assert isinstance(obs, QuantizedObservation)
    assert np.allclose(obs.y_dot, obs.y_clean + obs.xi)
    assert np.max(np.abs(obs.xi)) <= q.delta + 1e-12


def test_dithered_quantize_shape_mismatch():
    with pytest.raises(QuantizerError):
        dithered_quantize(Quantizer(delta=1.0), np.zeros(3), np.zeros(4))


def test_dither_makes_noise_zero_mean():
    # fixed y, many dithers: empirical mean of xi within 4*delta/sqrt(12N)
    delta = 0.5
    n_draws = 1000
    q = Quantizer(delta=delta)
    bound = 4 * delta / np.sqrt(12 * n_draws)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=n_draws)
        tau = rng.uniform(-delta / 2, delta / 2, size=n_draws)
        obs = dithered_quantize(q, y, tau)
        assert abs(obs.xi.mean()) <= bound
