"""Single-photon-counter dead time: integral-equation model and Monte-Carlo detector.

The count density obeys

    P_count(t) = P_photon(t) * (1 - integral_{t - dead_time}^{t} P_count(s) ds)

which is solved by forward recurrence on the input grid. For a
non-paralyzable detector fed by a Poisson stream the equation is exact (at
most one detection fits in any dead-time window), so the Monte-Carlo
detector is an independent check of the same quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidScenarioError, ResolutionError
from .traces import TimeTrace

#: Minimum number of grid steps per dead time.
MIN_STEPS_PER_DEADTIME = 50


@dataclass(frozen=True)
class DetectorSpec:
    dead_time: float = 0.0
    max_rate: float | None = None

    def __post_init__(self):
        if not (self.dead_time >= 0 and math.isfinite(self.dead_time)):
            raise ValueError("dead_time must be finite and >= 0")
        if self.max_rate is not None and not self.max_rate > 0:
            raise ValueError("max_rate must be positive")


# A photon-detection rate on a uniform grid is just a TimeTrace in Hz.
RateFunction = TimeTrace


def _check_rates(photon: TimeTrace, det: DetectorSpec):
    if det.max_rate is not None and np.any(photon.counts > det.max_rate):
        raise ValueError(f"photon rate exceeds the detector cap {det.max_rate} Hz")


def steady_state_rate(p: float, det: DetectorSpec) -> float:
    """Constant-input fixed point p / (1 + p * dead_time)."""
    if p < 0:
        raise ValueError("rate must be >= 0")
    return p / (1.0 + p * det.dead_time)


def measured_rate(photon: TimeTrace, det: DetectorSpec, initial_rate: float = 0.0) -> TimeTrace:
    """Solve the dead-time integral equation on the grid of ``photon``.

    Values are taken at the left edge of each bin and the trailing window is
    integrated with the trapezoidal rule; the current point enters
    implicitly. Before the first bin the photon rate is ``initial_rate``
    (default: detector idle).
    """
    _check_rates(photon, det)
    p = photon.counts
    if det.dead_time == 0:
        return TimeTrace(photon.t0, photon.bin_width, p.copy(), unit="Hz")
    h = photon.bin_width
    m = det.dead_time / h
    if m < MIN_STEPS_PER_DEADTIME * (1 - 1e-9):
        raise ResolutionError(
            f"grid step {h:g} s is coarser than dead_time/{MIN_STEPS_PER_DEADTIME}"
        )
    M = int(math.floor(m + 1e-9))
    frac = max(m - M, 0.0)
    n = len(p)
    c_pre = steady_state_rate(initial_rate, det)

    # history padded in front so every window index is valid
    pad = M + 2
    c = np.empty(n + pad)
    c[:pad] = c_pre
    csum = np.zeros(n + pad + 1)  # csum[i] = sum(c[:i])
    csum[1 : pad + 1] = np.cumsum(c[:pad])
    for k in range(n):
        i = k + pad
        # nodes i-M+1 .. i-1 at full weight, node i-M at half weight
        inner = csum[i] - csum[i - M + 1]
        window = h * (inner + 0.5 * c[i - M])
        if frac:
            window += frac * h * 0.5 * (c[i - M] + c[i - M - 1])
        value = p[k] * (1.0 - window) / (1.0 + 0.5 * h * p[k])
        if value < 0.0:
            value = 0.0
        c[i] = value
        csum[i + 1] = csum[i] + value
    return TimeTrace(photon.t0, h, c[pad:], unit="Hz")


def window_integral(counts: TimeTrace, det: DetectorSpec) -> np.ndarray:
    """Trailing dead-time-window integral of a measured-rate trace (left Riemann sum)."""
    M = max(int(round(det.dead_time / counts.bin_width)), 1)
    cs = np.concatenate([[0.0], np.cumsum(counts.counts)])
    idx = np.arange(1, len(cs))
    lo = np.maximum(idx - M, 0)
    return counts.bin_width * (cs[idx] - cs[lo])


def monte_carlo_counts(
    photon: TimeTrace,
    det: DetectorSpec,
    trials: int,
    seed: int,
    bin_width: float | None = None,
) -> TimeTrace:
    """Trial-averaged detection rate of a non-paralyzable detector.

    Photon arrivals are an inhomogeneous Poisson process with the
    piecewise-constant rate ``photon``; after each detection the detector
    ignores photons for ``dead_time``. Arrivals are drawn by inverting the
    integrated rate, using memorylessness to restart at each ready time.
    Output bins have width ``bin_width`` (default: the input grid), and
    ``sigma`` holds the standard error of each bin's mean rate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_rates(photon, det)
    h = photon.bin_width
    rates = photon.counts
    n = len(rates)
    t_end = n * h
    out_w = h if bin_width is None else float(bin_width)
    n_out = int(math.floor(t_end / out_w + 1e-9))
    if n_out < 1:
        raise ValueError("bin_width exceeds the trace duration")

    lam_edges = np.concatenate([[0.0], np.cumsum(rates * h)])
    lam_total = lam_edges[-1]
    rng = np.random.default_rng(seed)

    def lam_at(t):
        k = np.clip((t / h).astype(np.int64), 0, n - 1)
        return np.where(t >= t_end, lam_total, lam_edges[k] + rates[k] * (t - k * h))

    def invert(lam):
        k = np.searchsorted(lam_edges, lam, side="left") - 1
        k = np.clip(k, 0, n - 1)
        return k * h + (lam - lam_edges[k]) / rates[k]

    trial_ids = np.arange(trials)
    lam_ready = np.zeros(trials)
    hit_trials = []
    hit_bins = []
    while trial_ids.size:
        target = lam_ready + rng.exponential(size=trial_ids.size)
        alive = target < lam_total
        trial_ids, target = trial_ids[alive], target[alive]
        if not trial_ids.size:
            break
        t_hit = invert(target)
        b = (t_hit / out_w).astype(np.int64)
        keep = b < n_out
        hit_trials.append(trial_ids[keep])
        hit_bins.append(b[keep])
        lam_ready = lam_at(t_hit + det.dead_time) if det.dead_time > 0 else target

    if hit_bins:
        trials_all = np.concatenate(hit_trials)
        bins_all = np.concatenate(hit_bins)
    else:
        trials_all = bins_all = np.zeros(0, dtype=np.int64)
    total = np.bincount(bins_all, minlength=n_out).astype(float)
    # per-(trial, bin) counts for the variance
    key = trials_all * n_out + bins_all
    _, per_cell = np.unique(key, return_counts=True)
    cell_bins = np.unique(key) % n_out if key.size else np.zeros(0, dtype=np.int64)
    sq = np.bincount(cell_bins, weights=per_cell.astype(float) ** 2, minlength=n_out)
    mean_k = total / trials
    var_k = np.maximum(sq / trials - mean_k**2, 0.0)
    rate = mean_k / out_w
    sigma = np.sqrt(var_k / trials) / out_w
    return TimeTrace(photon.t0, out_w, rate, unit="Hz", sigma=sigma)


@dataclass(frozen=True)
class BiasResult:
    epsilon1: float
    epsilon2: np.ndarray
    bias_fraction: float
    true_t1: float
    fitted_t1: float
    corrected_t1: float
    taus: np.ndarray


def t1_bias(scenario, true_t1: float | None = None) -> BiasResult:
    """T1 error caused by detector pile-up in a pump-probe scenario.

    Synthesises noiseless pulse-pair responses for ``scenario`` (an
    ExperimentConfig), measures leading-edge heights with and without the
    detector, and fits both. ``epsilon1`` and ``epsilon2`` are the
    leading-edge losses (true minus measured) of the first and second
    pulse; ``bias_fraction`` is (true_t1 - fitted_t1) / true_t1 for the
    uncorrected fit. ``corrected_t1`` comes from the pile-up-aware fit fed
    with the same epsilons. ``true_t1`` defaults to the model's relaxation
    time.
    """
    from .experiment import pulse_pair_heights
    from .t1fit import PulsePairRecord, fit_t1, fit_t1_corrected

    heights = pulse_pair_heights(scenario)
    if heights.h1_true <= 0 or np.any(heights.h2_true <= 0):
        raise InvalidScenarioError("scenario produces a zero leading-edge height")
    if true_t1 is None:
        true_t1 = heights.relaxation_time
    taus = heights.taus
    records = [
        PulsePairRecord(float(t), heights.h1_measured, float(h2))
        for t, h2 in zip(taus, heights.h2_measured)
    ]
    eps1 = heights.h1_true - heights.h1_measured
    eps2 = heights.h2_true - heights.h2_measured
    fit = fit_t1(records)
    lookup = dict(zip(taus.tolist(), eps2.tolist()))
    corrected = fit_t1_corrected(records, eps1, lambda tau: lookup[float(tau)])
    return BiasResult(
        epsilon1=float(eps1),
        epsilon2=eps2,
        bias_fraction=(true_t1 - fit.t1) / true_t1,
        true_t1=true_t1,
        fitted_t1=fit.t1,
        corrected_t1=corrected.t1,
        taus=taus,
    )
