"""Spin-lattice relaxation rate versus temperature.

Two models are fitted to (T, 1/T1) data in log-rate space:

* direct + Raman + Orbach + floor:
  rate = cD*T + cR*T**n + cO*exp(-delta/(kB*T)) + gamma0 with n in {5, 9}
* power law: rate = alpha*T + beta*T**gamma

Nonnegative coefficients are softplus-reparameterised and scaled to the
data, and delta is squashed into (0, 50] meV.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .constants import K_B_MEV
from .errors import UsageError
from .lsq import covariance, gauss_newton_polish, levenberg_marquardt

DELTA_MAX = 50.0  # meV
_TEMP_NAMES = ("cD", "cR", "cO", "delta", "gamma0")
_DELTA_STARTS = (2.0, 4.0, 7.0, 10.0, 15.0, 25.0)
# the optimum sits in a shallow valley; polish hard so refits are stable
_TIGHT = dict(max_iter=2000, xtol=1e-14, ftol=1e-16)


@dataclass(frozen=True)
class TempModelParams:
    cD: float = 0.0
    cR: float = 0.0
    n: int = 5
    cO: float = 0.0
    delta: float = 7.0
    gamma0: float = 0.0

    def __post_init__(self):
        if self.n not in (5, 9):
            raise ValueError("n must be 5 or 9")
        for name in ("cD", "cR", "cO", "gamma0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def scaled(self, factor: float) -> "TempModelParams":
        """Same curve with every rate multiplied by ``factor``."""
        return TempModelParams(
            self.cD * factor, self.cR * factor, self.n, self.cO * factor, self.delta,
            self.gamma0 * factor,
        )


@dataclass(frozen=True)
class PowerLawParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")


@dataclass(frozen=True)
class RelaxationPoint:
    temperature: float
    rate: float
    sigma: float | None = None

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.rate > 0:
            raise ValueError("rate must be positive")


@dataclass
class FitReport:
    """Outcome of one temperature-model fit, in natural units."""

    model: str
    params: object
    stderr: dict
    rss: float
    n_params: int
    n_points: int
    data_hash: str
    converged: bool
    warnings: list = field(default_factory=list)

    @property
    def aicc(self) -> float:
        return aicc(self.rss, self.n_points, self.n_params)

    def as_dict(self) -> dict:
        p = self.params
        params = {k: getattr(p, k) for k in p.__dataclass_fields__} if p is not None else {}
        return {
            "model": self.model,
            "params": params,
            "stderr": self.stderr,
            "rss": self.rss,
            "n_params": self.n_params,
            "n_points": self.n_points,
            "aicc": self.aicc,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


# --- model evaluation --------------------------------------------------------


def model_rate(params: TempModelParams, temperature):
    """Relaxation rate (Hz) at ``temperature`` (K)."""
    T = np.asarray(temperature, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    out = (
        params.cD * T
        + params.cR * T**params.n
        + params.cO * np.exp(-params.delta / (K_B_MEV * T))
        + params.gamma0
    )
    return float(out) if out.ndim == 0 else out


def model_rate_gradient(params: TempModelParams, temperature):
    """d rate / d(cD, cR, cO, delta, gamma0), one row per temperature."""
    T = np.atleast_1d(np.asarray(temperature, dtype=float))
    boltz = np.exp(-params.delta / (K_B_MEV * T))
    return np.column_stack(
        [
            T,
            T**params.n,
            boltz,
            -params.cO * boltz / (K_B_MEV * T),
            np.ones_like(T),
        ]
    )


def power_law_rate(params: PowerLawParams, temperature):
    T = np.asarray(temperature, dtype=float)
    out = params.alpha * T + params.beta * T**params.gamma
    return float(out) if out.ndim == 0 else out


def power_law_gradient(params: PowerLawParams, temperature):
    """d rate / d(alpha, beta, gamma)."""
    T = np.atleast_1d(np.asarray(temperature, dtype=float))
    tg = T**params.gamma
    return np.column_stack([T, tg, params.beta * tg * np.log(T)])


def orbach_factor(delta: float, temperature: float) -> float:
    return math.exp(-delta / (K_B_MEV * temperature))


# --- helpers -----------------------------------------------------------------


def _softplus(u):
    return np.logaddexp(0.0, u)


def _dsoftplus(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))  # logistic sigmoid, overflow-free


def _inv_softplus(c):
    c = max(c, 1e-300)
    return c + math.log(-math.expm1(-c)) if c < 30 else c


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def _logit(p):
    p = min(max(p, 1e-12), 1 - 1e-12)
    return math.log(p / (1 - p))


def _unpack_data(data):
    pts = list(data)
    T = np.array([p.temperature for p in pts], dtype=float)
    r = np.array([p.rate for p in pts], dtype=float)
    return T, r


def data_hash(data) -> str:
    T, r = _unpack_data(data)
    payload = np.concatenate([T, r]).astype("<f8").tobytes()
    return hashlib.sha256(payload).hexdigest()[:16]


def _check_span(T):
    notes = []
    if len(T) < 6:
        raise ValueError("need at least 6 data points")
    if T.max() / T.min() < 2:
        msg = "ill-conditioned: temperatures span less than a factor 2"
        warnings.warn(msg, RuntimeWarning)
        notes.append(msg)
    return notes


def _stderr_from(J_nat, rss, n, names):
    cov = covariance(J_nat, rss, n)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    return {k: float(v) for k, v in zip(names, err)}


# --- direct + Raman + Orbach + floor ------------------------------------------


class _TempProblem:
    """Log-space residuals in the reparameterised coordinates."""

    def __init__(self, T, r, n):
        self.T, self.r, self.n = T, r, n
        self.logr = np.log(r)
        i_lo, i_hi = np.argmin(T), np.argmax(T)
        mid = np.argsort(T)[len(T) // 2]
        self.scales = np.array(
            [
                r[i_lo] / T[i_lo],  # cD
                r[mid] / T[mid] ** n,  # cR
                1.0,  # cO handled through log-scale below
                1.0,  # delta
                r[i_lo],  # gamma0
            ]
        )
        self.t_hi, self.r_hi = T[i_hi], r[i_hi]

    def orbach_scale(self, delta):
        return self.r_hi * math.exp(delta / (K_B_MEV * self.t_hi))

    def natural(self, x):
        delta = DELTA_MAX * float(_sigmoid(x[3]))
        s = self.scales
        return np.array(
            [
                s[0] * _softplus(x[0]),
                s[1] * _softplus(x[1]),
                self._so * _softplus(x[2]),
                delta,
                s[4] * _softplus(x[4]),
            ]
        )

    def encode(self, nat):
        cD, cR, cO, delta, g0 = nat
        self._so = self.orbach_scale(delta)
        s = self.scales
        return np.array(
            [
                _inv_softplus(cD / s[0]),
                _inv_softplus(cR / s[1]),
                _inv_softplus(cO / self._so),
                _logit(delta / DELTA_MAX),
                _inv_softplus(g0 / s[4]),
            ]
        )

    def rate(self, nat):
        return model_rate(TempModelParams(nat[0], nat[1], self.n, nat[2], nat[3], nat[4]), self.T)

    def fun(self, x):
        nat = self.natural(x)
        return np.log(self.rate(nat)) - self.logr

    def jac(self, x):
        nat = self.natural(x)
        p = TempModelParams(nat[0], nat[1], self.n, nat[2], nat[3], nat[4])
        g = model_rate_gradient(p, self.T)
        rate = self.rate(nat)
        sig = float(_sigmoid(x[3]))
        dnat = np.array(
            [
                self.scales[0] * _dsoftplus(x[0]),
                self.scales[1] * _dsoftplus(x[1]),
                self._so * _dsoftplus(x[2]),
                DELTA_MAX * sig * (1 - sig),
                self.scales[4] * _dsoftplus(x[4]),
            ]
        )
        return g * dnat / rate[:, None]

    def natural_jac(self, nat):
        p = TempModelParams(nat[0], nat[1], self.n, nat[2], nat[3], nat[4])
        return model_rate_gradient(p, self.T) / self.rate(nat)[:, None]


def _starts(problem: _TempProblem, keep: int = 4):
    """Starting points from a scan over delta.

    For fixed delta the model is linear in (cD, cR, cO, gamma0), so each
    scan point is a nonnegative least-squares solve on relative residuals.
    The best few scan points seed the full fit.
    """
    T, r, n = problem.T, problem.r, problem.n
    scored = []
    for d0 in np.geomspace(0.5, 0.98 * DELTA_MAX, 48):
        basis = np.column_stack([T, T**n, np.exp(-d0 / (K_B_MEV * T)), np.ones_like(T)])
        colmax = basis.max(axis=0)
        A = basis / colmax / r[:, None]
        coef, res = nnls(A, np.ones_like(r))
        coef = coef / colmax
        scored.append((res, d0, coef))
    scored.sort(key=lambda item: item[0])
    out = []
    for _, d0, (cD, cR, cO, g0) in scored[:keep]:
        out.append(np.array([cD, cR, cO, d0, g0]))
    # coarse generic starts guard against a misleading scan
    for d0 in _DELTA_STARTS:
        so = problem.orbach_scale(d0)
        out.append(np.array([problem.scales[0] * 0.5, problem.scales[1] * 0.1, so * 0.5, d0,
                             problem.scales[4] * 0.1]))
    return out


def fit_temp_model(data, n: int = 5, start: TempModelParams | None = None) -> FitReport:
    """Fit direct + Raman(T**n) + Orbach + floor in log-rate space.

    Tries several activation-energy starts and keeps the lowest RSS. With
    ``start`` given, only that point is used (re-fitting from an optimum).
    """
    if n not in (5, 9):
        raise ValueError("n must be 5 or 9")
    T, r = _unpack_data(data)
    notes = _check_span(T)
    problem = _TempProblem(T, r, n)
    if start is not None:
        starts = [np.array([start.cD, start.cR, start.cO, start.delta, start.gamma0])]
    else:
        starts = _starts(problem)

    best = None
    failures = 0
    for nat0 in starts:
        x0 = problem.encode(nat0)
        try:
            res = levenberg_marquardt(
                problem.fun, problem.jac, x0, atol=1e-28 * len(T), **_TIGHT
            )
        except Exception as exc:  # noqa: BLE001 - a failing start is not fatal
            failures += 1
            last_exc = exc
            continue
        so = problem._so
        if best is None or res.rss < best[0].rss:
            best = (res, so)
        problem._so = so
    if best is None:
        raise last_exc
    res, problem._so = best
    x, rss = gauss_newton_polish(problem.fun, problem.jac, res.x)
    nat = problem.natural(x)
    params = TempModelParams(*(float(v) for v in nat[:2]), n, *(float(v) for v in nat[2:]))
    stderr = _stderr_from(problem.natural_jac(nat), rss, len(T), _TEMP_NAMES)
    return FitReport(
        model=f"orbach_raman{n}",
        params=params,
        stderr=stderr,
        rss=rss,
        n_params=5,
        n_points=len(T),
        data_hash=data_hash(data),
        converged=res.converged,
        warnings=notes,
    )


def fit_temp_model_both(data) -> dict:
    """Fits for n = 5 and n = 9 on the same data."""
    return {n: fit_temp_model(data, n) for n in (5, 9)}


# --- power law ----------------------------------------------------------------


def fit_power_law(data, start: PowerLawParams | None = None) -> FitReport:
    """Fit alpha*T + beta*T**gamma in log-rate space.

    beta is carried as the value of the power-law term at the highest
    temperature, so it stays well scaled for any exponent. A vanishing
    power-law term leaves gamma unidentifiable; the report flags it.
    """
    T, r = _unpack_data(data)
    notes = _check_span(T)
    logr = np.log(r)
    t_ref = T.max()
    i_lo = np.argmin(T)
    s_a = r[i_lo] / T[i_lo]
    s_b = r.max()

    def natural(x):
        a = s_a * _softplus(x[0])
        b_ref = s_b * _softplus(x[1])
        g = 1.0 + _softplus(x[2])
        return a, b_ref, g

    def rate(x):
        a, b_ref, g = natural(x)
        return a * T + b_ref * (T / t_ref) ** g

    def fun(x):
        return np.log(rate(x)) - logr

    def jac(x):
        a, b_ref, g = natural(x)
        tr = (T / t_ref) ** g
        cols = np.column_stack(
            [
                T * s_a * _dsoftplus(x[0]),
                tr * s_b * _dsoftplus(x[1]),
                b_ref * tr * np.log(T / t_ref) * _dsoftplus(x[2]),
            ]
        )
        return cols / rate(x)[:, None]

    if start is not None:
        g0 = start.gamma
        starts = [(start.alpha, start.beta * t_ref**g0, g0)]
    else:
        starts = [(s_a * 0.5, s_b * 0.5, g) for g in (3.0, 6.0, 10.0, 15.0, 25.0)]
    best = None
    last_exc = None
    for a0, b0, g0 in starts:
        x0 = np.array([_inv_softplus(a0 / s_a), _inv_softplus(b0 / s_b), _inv_softplus(g0 - 1.0)])
        try:
            res = levenberg_marquardt(fun, jac, x0, atol=1e-28 * len(T), **_TIGHT)
        except Exception as exc:  # noqa: BLE001
            last_exc = exc
            continue
        if best is None or res.rss < best.rss:
            best = res
    if best is None:
        raise last_exc
    x, rss = gauss_newton_polish(fun, jac, best.x)
    a, b_ref, g = natural(x)
    beta = math.exp(max(math.log(b_ref) - g * math.log(t_ref), -745.0)) if b_ref > 0 else 0.0
    params = PowerLawParams(float(a), float(beta), float(g))
    with np.errstate(over="ignore", invalid="ignore"):
        J_nat = power_law_gradient(params, T) / rate(x)[:, None]
    J_nat = np.nan_to_num(J_nat, nan=0.0, posinf=0.0, neginf=0.0)
    stderr = _stderr_from(J_nat, rss, len(T), ("alpha", "beta", "gamma"))
    if b_ref < 1e-6 * r.min():
        notes.append("degenerate: power-law term vanishes, gamma unidentifiable")
    return FitReport(
        model="power_law",
        params=params,
        stderr=stderr,
        rss=rss,
        n_params=3,
        n_points=len(T),
        data_hash=data_hash(data),
        converged=best.converged,
        warnings=notes,
    )


@dataclass(frozen=True)
class ConstantParams:
    gamma0: float


def fit_constant(data) -> FitReport:
    """Temperature-independent rate (geometric mean, the log-space optimum)."""
    T, r = _unpack_data(data)
    logr = np.log(r)
    g0 = float(np.exp(logr.mean()))
    rss = float(np.sum((logr - logr.mean()) ** 2))
    n = len(r)
    err = float(g0 * np.sqrt(rss / (n - 1) / n)) if n > 1 else math.nan
    return FitReport(
        model="constant",
        params=ConstantParams(g0),
        stderr={"gamma0": err},
        rss=rss,
        n_params=1,
        n_points=n,
        data_hash=data_hash(data),
        converged=True,
    )


# --- model comparison ----------------------------------------------------------


def aicc(rss: float, n: int, k: int) -> float:
    """Small-sample corrected Akaike criterion for Gaussian residuals."""
    rss = max(rss, 1e-300)
    value = n * math.log(rss / n) + 2 * k
    if n - k - 1 > 0:
        value += 2 * k * (k + 1) / (n - k - 1)
    else:
        value = math.inf
    return value


def compare_models(data, fits) -> list:
    """Rank fits by AICc (ties to fewer parameters, then model name)."""
    fits = list(fits)
    if len(fits) < 2:
        raise UsageError("need at least two fits to compare")
    h = data_hash(data)
    for f in fits:
        if f.data_hash != h:
            raise UsageError(f"fit {f.model!r} was made on different data")
    rows = []
    for f in fits:
        rows.append(
            {
                "model": f.model,
                "rss": f.rss,
                "n_params": f.n_params,
                "aicc": f.aicc,
            }
        )
    rows.sort(key=lambda row: (round(row["aicc"], 9), row["n_params"], row["model"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows
