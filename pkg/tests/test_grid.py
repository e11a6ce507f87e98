import numpy as np
import pytest

from gridcast import GridSeries, InputError, denormalize, minmax_stats, normalize


def series(values, **kw):
    return GridSeries(np.asarray(values, dtype=float), **kw)


def test_midpoint_maps_to_half():
    vals = np.zeros((2, 1, 2, 1))
    vals[0, 0, 0, 0] = 0.0
    vals[0, 0, 1, 0] = 10.0
    vals[1, 0, 0, 0] = 5.0
    vals[1, 0, 1, 0] = 10.0
    gs = normalize(series(vals))
    assert gs.values[1, 0, 0, 0] == pytest.approx(0.5)
    assert gs.values.min() == 0.0 and gs.values.max() == 1.0


def test_round_trip_identity():
    rng = np.random.default_rng(0)
    vals = rng.uniform(-4, 7, (6, 5, 5, 2))
    gs = series(vals)
    back = denormalize(normalize(gs))
    assert np.allclose(back.values, vals, rtol=1e-9, atol=1e-12)


def test_out_of_window_values_are_not_clipped():
    vals = np.zeros((4, 2, 2, 1))
    vals[:3] = np.linspace(0, 1, 3).reshape(3, 1, 1, 1)
    vals[3] = 2.0  # beyond the training max
    gs = series(vals)
    stats = minmax_stats(gs, n_frames=3)
    normed = normalize(gs, stats)
    assert normed.values[3].max() > 1.0
    assert normed.values[:3].max() <= 1.0


def test_constant_variable_raises():
    vals = np.zeros((3, 2, 2, 2))
    vals[..., 0] = np.arange(3).reshape(3, 1, 1)
    vals[..., 1] = 5.0
    with pytest.raises(InputError, match="degenerate"):
        minmax_stats(series(vals, var_names=["ok", "flat"]))


def test_per_variable_statistics():
    vals = np.zeros((2, 1, 1, 2))
    vals[..., 0] = [[[0.0]], [[2.0]]]
    vals[..., 1] = [[[10.0]], [[30.0]]]
    normed = normalize(series(vals))
    assert np.allclose(normed.values[..., 0].ravel(), [0.0, 1.0])
    assert np.allclose(normed.values[..., 1].ravel(), [0.0, 1.0])


def test_double_normalize_rejected():
    gs = normalize(series(np.random.default_rng(1).random((3, 2, 2, 1))))
    with pytest.raises(InputError):
        normalize(gs)


def test_denormalize_requires_record():
    with pytest.raises(InputError):
        denormalize(series(np.zeros((2, 2, 2, 1)) + np.arange(2).reshape(2, 1, 1, 1)))


def test_window_copies():
    gs = series(np.random.default_rng(2).random((5, 3, 3, 1)))
    w = gs.window(1, 3)
    w.values[:] = 0
    assert gs.values[1:3].any()
