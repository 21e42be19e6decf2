from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from spinrelax.deadtime import (
    DetectorSpec,
    measured_rate,
    monte_carlo_counts,
    steady_state_rate,
    t1_bias,
    window_integral,
)
from spinrelax.errors import InvalidScenarioError, ResolutionError
from spinrelax.experiment import reference_config
from spinrelax.traces import TimeTrace

DT = 10e-6
DET = DetectorSpec(dead_time=DT)


def square(rate=1e5, pre=20e-6, on=150e-6, h=DT / 100):
    n_pre, n_on = round(pre / h), round(on / h)
    counts = np.concatenate([np.zeros(n_pre), np.full(n_on, rate)])
    return TimeTrace(-pre, h, counts)


def test_steady_state_rate_examples():
    assert steady_state_rate(0.0, DET) == 0.0
    assert steady_state_rate(1e5, DetectorSpec()) == 1e5
    assert steady_state_rate(1e5, DET) == pytest.approx(5e4, rel=1e-15)


def test_trivial_inputs():
    zero = measured_rate(TimeTrace(0, DT / 100, np.zeros(300)), DET)
    assert np.all(zero.counts == 0)
    tr = square()
    assert measured_rate(tr, DetectorSpec()) == tr


def test_resolution_error():
    with pytest.raises(ResolutionError):
        measured_rate(TimeTrace(0, DT / 10, np.ones(100)), DET)


def test_square_pulse_shape():
    out = measured_rate(square(), DET)
    on = out.counts[out.index_of(0.0):]
    h = out.bin_width
    # onset: the detector is idle, so the first sample sees the full input
    assert on[0] == pytest.approx(1e5, rel=1e-2)
    # dips recur with the dead-time period and damp out
    m = int(round(DT / h))
    first_dip = on[m // 2: 3 * m // 2].min()
    later_dip = on[5 * m // 2: 7 * m // 2].min()
    assert first_dip < later_dip < 5e4
    assert on[-m:].mean() == pytest.approx(5e4, rel=5e-3)


def test_monte_carlo_constant_rate():
    tr = TimeTrace(0, DT / 50, np.full(50 * 10, 1e5))  # 100 us
    mc = monte_carlo_counts(tr, DET, trials=20_000, seed=1, bin_width=DT)
    steady = mc.counts[3:]
    sig = mc.sigma[3:]
    assert np.all(np.abs(steady - 5e4) < 4.5 * sig)


def test_monte_carlo_matches_solver_binwise():
    photon = square()
    solver = measured_rate(photon, DET).rebin(20)
    mc = monte_carlo_counts(photon, DET, trials=100_000, seed=7, bin_width=20 * photon.bin_width)
    n = min(len(mc), len(solver))
    z = (mc.counts[:n] - solver.counts[:n]) / np.where(mc.sigma[:n] > 0, mc.sigma[:n], np.inf)
    assert np.all(np.abs(z) < 4.5)
    # the share of |z| > 3 must be compatible with Gaussian tails
    k = int(np.sum(np.abs(z) > 3))
    assert stats.binom.sf(k - 1, n, 2 * stats.norm.sf(3)) > 1e-3


def test_monte_carlo_deterministic_and_zero():
    tr = square(on=40e-6)
    a = monte_carlo_counts(tr, DET, 500, seed=3)
    b = monte_carlo_counts(tr, DET, 500, seed=3)
    assert a == b and np.array_equal(a.sigma, b.sigma)
    z = monte_carlo_counts(TimeTrace(0, DT / 50, np.zeros(200)), DET, 100, seed=0)
    assert np.all(z.counts == 0)


@given(
    st.lists(st.floats(0, 3e6), min_size=1, max_size=6),
    st.floats(1e-6, 20e-6),
)
def test_saturation_bound(levels, dead):
    det = DetectorSpec(dead_time=dead)
    h = dead / 60
    seg = 40
    photon = TimeTrace(0, h, np.repeat(levels, seg))
    out = measured_rate(photon, det)
    assert np.all(out.counts >= 0)
    assert np.all(out.counts <= photon.counts * (1 + 1e-12))
    slack = 2 * h / dead
    assert np.all(window_integral(out, det) <= 1 + slack)


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1e-4))
def test_steady_state_monotone(a, b, dead):
    lo, hi = sorted([a, b])
    det = DetectorSpec(dead_time=dead)
    assert steady_state_rate(lo, det) <= steady_state_rate(hi, det)


def test_bias_zero_without_dead_time():
    res = t1_bias(reference_config(detector=DetectorSpec()))
    assert abs(res.bias_fraction) < 1e-6
    assert res.epsilon1 == 0 and np.all(res.epsilon2 == 0)


def test_bias_paper_like_and_correction():
    res = t1_bias(reference_config())
    assert 0.01 <= res.bias_fraction <= 0.10
    assert res.fitted_t1 < res.true_t1
    assert abs(res.corrected_t1 - res.true_t1) < abs(res.fitted_t1 - res.true_t1)
    assert res.corrected_t1 == pytest.approx(res.true_t1, rel=1e-3)


def test_bias_monotone_in_dead_time():
    fine = 6  # common fine grid so every dead time is solved on the same steps
    values = [
        t1_bias(reference_config(detector=DetectorSpec(dead_time=d), substeps_override=fine)).bias_fraction
        for d in (0.0, 2e-6, 5e-6, 10e-6)
    ]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
    assert values[-1] > 0


@pytest.mark.parametrize("fraction", [0.05, 0.10])
def test_bias_robust_to_background(fraction):
    base = reference_config()
    ref = t1_bias(base)
    peak = 1e5
    res = t1_bias(replace(base, background=fraction * peak), true_t1=ref.true_t1)
    assert abs(res.bias_fraction - ref.bias_fraction) < 0.01


def test_bias_degenerate_scenario():
    cfg = reference_config(pump_rate=0.0)
    with pytest.raises(InvalidScenarioError):
        t1_bias(cfg)
