"""Leading-edge extraction and recovery/decay fits for pump-probe PLE data."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RangeError, RankDeficiencyError
from .lsq import covariance, levenberg_marquardt
from .traces import TimeTrace

__all__ = [
    "TimeTrace",
    "PulsePairRecord",
    "T1FitResult",
    "MultiExpResult",
    "leading_edge_height",
    "t1_model",
    "t1_model_jacobian",
    "fit_t1",
    "fit_t1_corrected",
    "multi_exp_model",
    "multi_exp_jacobian",
    "fit_multi_exponential",
]


@dataclass(frozen=True)
class PulsePairRecord:
    tau: float
    h1: float
    h2: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.h1 > 0:
            raise ValueError(f"h1 must be positive, got {self.h1}")
        if not self.h2 > 0:
            raise ValueError(f"h2 must be positive, got {self.h2}")

    @property
    def ratio(self) -> float:
        return self.h2 / self.h1


@dataclass(frozen=True)
class T1FitResult:
    t1: float
    q: float
    stderr_t1: float
    stderr_q: float
    rss: float
    converged: bool
    n_points: int = 0
    iterations: int = 0

    def as_dict(self) -> dict:
        return {
            "t1_s": self.t1,
            "q": self.q,
            "stderr_t1_s": self.stderr_t1,
            "stderr_q": self.stderr_q,
            "rss": self.rss,
            "converged": self.converged,
        }


def leading_edge_height(trace: TimeTrace, pulse_start: float, n_bins: int = 20) -> float:
    """Mean of the first ``n_bins`` bins at or after ``pulse_start``."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    i = trace.index_of(pulse_start)
    if i + n_bins > len(trace.counts):
        raise RangeError(
            f"need {n_bins} bins after t={pulse_start:g}, trace has {len(trace.counts) - i}"
        )
    return float(np.mean(trace.counts[i : i + n_bins]))


def t1_model(tau, t1, q):
    """Recovery ratio h2/h1 = q (1 - exp(-tau/T1)) + 1 - q."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 - q * np.exp(-tau / t1)


def t1_model_jacobian(tau, t1, q):
    """Columns d/dT1 and d/dq of :func:`t1_model`."""
    tau = np.asarray(tau, dtype=float)
    e = np.exp(-tau / t1)
    return np.column_stack([-q * e * tau / t1**2, -e])


def _initial_guess(tau, ratio):
    q0 = float(np.clip(1.0 - ratio.min(), 1e-3, 1.0))
    # log-linear slope of the normalised deficit over points away from the ends
    y = (1.0 - ratio) / q0
    ok = (y > 0.02) & (y < 0.98)
    if ok.sum() >= 2:
        slope = np.polyfit(tau[ok], np.log(y[ok]), 1)[0]
        if slope < 0:
            return -1.0 / slope, q0
    return float(np.median(tau)), q0


def _fit_ratio(tau, ratio, x0=None, weights=None) -> T1FitResult:
    tau = np.asarray(tau, dtype=float)
    ratio = np.asarray(ratio, dtype=float)
    if len(tau) < 3:
        raise ValueError("need at least 3 records")
    if len(np.unique(tau)) < 2:
        raise RankDeficiencyError("all records share one tau; T1 is not identifiable")
    if len(np.unique(tau)) < 3:
        raise ValueError("need at least 3 distinct tau values")
    w = np.ones_like(tau) if weights is None else np.asarray(weights, dtype=float)
    if x0 is None:
        x0 = _initial_guess(tau, ratio)

    def fun(x):
        return w * (t1_model(tau, x[0], x[1]) - ratio)

    def jac(x):
        return w[:, None] * t1_model_jacobian(tau, x[0], x[1])

    def valid(x):
        return x[0] > 0 and 0.0 <= x[1] <= 1.0

    res = levenberg_marquardt(fun, jac, np.array(x0, dtype=float), valid=valid, atol=1e-32)
    cov = covariance(res.jac, res.rss, len(tau))
    return T1FitResult(
        t1=float(res.x[0]),
        q=float(res.x[1]),
        stderr_t1=float(np.sqrt(cov[0, 0])),
        stderr_q=float(np.sqrt(cov[1, 1])),
        rss=res.rss,
        converged=res.converged,
        n_points=len(tau),
        iterations=res.iterations,
    )


def fit_t1(records, weights=None) -> T1FitResult:
    """Fit T1 and q to h2/h1 against tau.

    ``weights`` multiplies each residual (e.g. 1/sigma of the ratio);
    unweighted by default.
    """
    records = list(records)
    tau = np.array([r.tau for r in records])
    ratio = np.array([r.ratio for r in records])
    return _fit_ratio(tau, ratio, weights=weights)


def fit_t1_corrected(records, epsilon1: float, epsilon2_model, weights=None) -> T1FitResult:
    """Fit with the pile-up correction term.

    The measured ratio equals the ideal recovery curve (with corrected
    fraction q') plus (eps1 - eps2(tau)) / h1_measured, where eps1, eps2
    are the leading-edge count losses of the two pulses. That term is
    subtracted before fitting, so the returned ``q`` is q'.
    """
    records = list(records)
    tau = np.array([r.tau for r in records])
    ratio = np.array([r.ratio for r in records])
    eps2 = np.array([float(epsilon2_model(t)) for t in tau])
    h1 = np.array([r.h1 for r in records])
    correction = (epsilon1 - eps2) / h1
    return _fit_ratio(tau, ratio - correction, weights=weights)


# --- multi-exponential decay with baseline --------------------------------


@dataclass
class MultiExpResult:
    amplitudes: np.ndarray
    taus: np.ndarray
    baseline: float
    stderr: dict
    rss: float
    converged: bool
    warnings: list = field(default_factory=list)

    @property
    def n_terms(self):
        return len(self.taus)


def multi_exp_model(t, amplitudes, taus, baseline):
    t = np.asarray(t, dtype=float)
    y = np.full_like(t, baseline)
    for a, tau in zip(amplitudes, taus):
        y = y + a * np.exp(-t / tau)
    return y


def multi_exp_jacobian(t, amplitudes, taus, fit_baseline=True):
    """Columns: d/dA_i, d/dtau_i for each term, then d/dbaseline if fitted."""
    t = np.asarray(t, dtype=float)
    cols = []
    for a, tau in zip(amplitudes, taus):
        e = np.exp(-t / tau)
        cols.append(e)
        cols.append(a * e * t / tau**2)
    if fit_baseline:
        cols.append(np.ones_like(t))
    return np.column_stack(cols)


def _varpro_single(t, y, tau_grid, with_baseline):
    """Best single exponential over a grid of time constants (linear solve per tau)."""
    best = None
    for tau in tau_grid:
        cols = [np.exp(-t / tau)]
        if with_baseline:
            cols.append(np.ones_like(t))
        X = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        rss = float(np.sum((X @ coef - y) ** 2))
        if best is None or rss < best[0]:
            best = (rss, tau, coef)
    _, tau, coef = best
    return coef[0], tau, (coef[1] if with_baseline else 0.0)


def _peel(t, y, n_terms, baseline):
    """Initial guess by peeling: slow term from the tail first, then the fast term."""
    span = t[-1] - t[0]
    dt = t[1] - t[0]
    grid = np.geomspace(max(dt, span * 1e-4), span * 10, 120)
    fixed = baseline is not None
    target = y - baseline if fixed else y
    if n_terms == 1:
        a, tau, b = _varpro_single(t, target, grid, not fixed)
        return [a], [tau], (baseline if fixed else b)
    tail = t >= t[0] + span / 3
    a2, tau2, b = _varpro_single(t[tail], target[tail], grid, not fixed)
    a2 = a2 * np.exp(t[0] / tau2)  # tail amplitude referred to t = t0
    rest = target - a2 * np.exp(-(t - t[0]) / tau2) - b
    fast = grid[grid < tau2]
    a1, tau1, _ = _varpro_single(t - t[0], rest, fast if fast.size else grid, False)
    return [a1, a2], [tau1, tau2], (baseline if fixed else b)


def fit_multi_exponential(
    trace: TimeTrace,
    n_terms: int = 1,
    baseline: str | float = "fit",
) -> MultiExpResult:
    """Least-squares fit of sum_i A_i exp(-t/tau_i) + baseline.

    ``t`` is measured from the start of the trace. ``baseline`` is ``"fit"``
    or a fixed value. For two terms the result is ordered tau1 < tau2; a
    near-collapse of the two time constants is reported in ``warnings``.
    """
    if n_terms not in (1, 2):
        raise ValueError("n_terms must be 1 or 2")
    fit_b = isinstance(baseline, str)
    if fit_b and baseline != "fit":
        raise ValueError("baseline must be 'fit' or a number")
    n_par = 2 * n_terms + (1 if fit_b else 0)
    y = np.asarray(trace.counts, dtype=float)
    if len(y) < 3 * (2 * n_terms + 1):
        raise RangeError(f"need at least {3 * (2 * n_terms + 1)} bins")
    t = trace.bin_width * np.arange(len(y))
    fixed_b = None if fit_b else float(baseline)

    amps, taus, b0 = _peel(t, y, n_terms, fixed_b)
    # internal parameters: A_i, log(tau_i), [baseline]
    x0 = []
    for a, tau in zip(amps, taus):
        x0 += [a, math.log(tau)]
    if fit_b:
        x0.append(b0)

    def unpack(x):
        a = x[0 : 2 * n_terms : 2]
        tt = np.exp(x[1 : 2 * n_terms : 2])
        bb = x[-1] if fit_b else fixed_b
        return a, tt, bb

    def fun(x):
        a, tt, bb = unpack(x)
        return multi_exp_model(t, a, tt, bb) - y

    def jac(x):
        a, tt, _ = unpack(x)
        J = multi_exp_jacobian(t, a, tt, fit_b)
        for i in range(n_terms):
            J[:, 2 * i + 1] *= tt[i]  # chain rule for log(tau)
        return J

    scale = max(float(np.sum(y**2)), 1e-300)
    res = levenberg_marquardt(fun, jac, np.array(x0), atol=1e-28 * scale)
    a, tt, bb = unpack(res.x)
    J_nat = multi_exp_jacobian(t, a, tt, fit_b)
    cov = covariance(J_nat, res.rss, len(y))
    err = np.sqrt(np.clip(np.diag(cov), 0, None))

    order = np.argsort(tt)
    names = {}
    for new, old in enumerate(order, start=1):
        names[f"A{new}"] = float(err[2 * old])
        names[f"tau{new}"] = float(err[2 * old + 1])
    if fit_b:
        names["baseline"] = float(err[-1])
    notes = []
    if n_terms == 2:
        t_sorted = tt[order]
        if abs(t_sorted[1] - t_sorted[0]) / t_sorted[1] < 1e-3:
            notes.append("degenerate: tau1 and tau2 collapsed")
            warnings.warn("multi-exponential fit: time constants collapsed", RuntimeWarning)
    return MultiExpResult(
        amplitudes=np.asarray(a)[order],
        taus=tt[order],
        baseline=float(bb),
        stderr=names,
        rss=res.rss,
        converged=res.converged,
        warnings=notes,
    )
