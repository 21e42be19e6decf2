"""Three-level rate-equation model of a spin-selective optical cycle.

State 1 is the optically addressed ground level, state 2 the shelving
(dark spin or second orbital) level, state 3 the optically excited level.
The laser pumps 1 <-> 3 at rate W, with equal stimulated emission. A
fraction ``shelving_drive`` of W also drives 2 <-> 3; 0 models a fully
spin-selective laser, 1 models degenerate levels (zero field).

Units: seconds, Hz, Tesla, Kelvin; energies in meV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import H_MEV_PER_HZ, K_B_MEV, MU_B_OVER_H
from .errors import AmbiguousSteadyStateError, InvalidParametersError
from .traces import TimeTrace

_DEGENERACY_TOL = 1e-9
_CONSERVATION_TOL = 1e-12


@dataclass(frozen=True)
class RateParams:
    gamma31: float
    gamma32: float
    gamma21: float
    delta: float = 0.0
    temperature: float = 0.0
    rabi: float = 0.0
    shelving_drive: float = 0.0

    def __post_init__(self):
        for name in ("gamma31", "gamma32", "gamma21", "delta", "temperature", "rabi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParametersError(f"{name} must be finite, got {value}")
            if value < 0:
                raise InvalidParametersError(f"{name} must be >= 0, got {value}")
        if not 0.0 <= self.shelving_drive <= 1.0:
            raise InvalidParametersError("shelving_drive must lie in [0, 1]")

    @property
    def gamma12(self) -> float:
        """Thermally activated 1 -> 2 rate, Boltzmann-weighted from gamma21."""
        if self.delta == 0.0:
            return self.gamma21
        kt = K_B_MEV * self.temperature
        if kt == 0.0:  # also catches subnormal temperatures that underflow
            return 0.0
        return self.gamma21 * math.exp(-self.delta / kt)

    @property
    def optical_decay(self) -> float:
        return self.gamma31 + self.gamma32

    def relaxation_time(self) -> float:
        """Time constant of 1 <-> 2 relaxation with the laser off."""
        total = self.gamma21 + self.gamma12
        return math.inf if total == 0 else 1.0 / total

    def replace(self, **changes) -> "RateParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Populations:
    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        values = (self.p1, self.p2, self.p3)
        if not all(math.isfinite(v) for v in values):
            raise InvalidParametersError("populations must be finite")
        if any(v < -1e-12 or v > 1 + 1e-12 for v in values):
            raise InvalidParametersError(f"populations out of [0, 1]: {values}")
        if abs(sum(values) - 1.0) > 1e-9:
            raise InvalidParametersError(f"populations must sum to 1, got {sum(values)!r}")

    @classmethod
    def from_array(cls, arr) -> "Populations":
        a = np.clip(np.asarray(arr, dtype=float), 0.0, 1.0)
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])


GROUND = Populations(1.0, 0.0, 0.0)


@dataclass(frozen=True)
class DriveSchedule:
    """Ordered constant-drive segments ``(duration_s, pump_rate_hz)``."""

    segments: tuple

    def __post_init__(self):
        segs = tuple((float(d), float(w)) for d, w in self.segments)
        if not segs:
            raise InvalidParametersError("schedule needs at least one segment")
        for d, w in segs:
            if not (d > 0 and math.isfinite(d)):
                raise InvalidParametersError(f"segment duration must be > 0, got {d}")
            if not (w >= 0 and math.isfinite(w)):
                raise InvalidParametersError(f"pump rate must be >= 0, got {w}")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.segments)


@dataclass(frozen=True)
class FieldConfig:
    b: float = 0.0
    theta: float = 0.0
    g_parallel: float = 1.6

    def __post_init__(self):
        if not self.b >= 0:
            raise InvalidParametersError("b must be >= 0")
        if not 0 <= self.theta <= math.pi / 2 + 1e-12:
            raise InvalidParametersError("theta must lie in [0, pi/2]")
        if not 0 < self.g_parallel <= 2:
            raise InvalidParametersError("g_parallel must lie in (0, 2]")


def pump_rate_from_rabi(rabi: float, params: RateParams) -> float:
    """Incoherent pump rate W = rabi**2 / (gamma31 + gamma32)."""
    if rabi < 0 or not math.isfinite(rabi):
        raise InvalidParametersError("rabi must be finite and >= 0")
    if rabi == 0:
        return 0.0
    total = params.optical_decay
    if total <= 0:
        raise InvalidParametersError("zero optical decay rate with nonzero drive")
    return rabi * rabi / total


def zeeman_splitting(field: FieldConfig) -> float:
    """Ground-doublet splitting in Hz; only the axial field component counts."""
    return field.g_parallel * abs(math.cos(field.theta)) * MU_B_OVER_H * field.b


def zeeman_energy(field: FieldConfig) -> float:
    """Same as :func:`zeeman_splitting`, in meV."""
    return zeeman_splitting(field) * H_MEV_PER_HZ


def generator(params: RateParams, pump_rate: float) -> np.ndarray:
    """3x3 rate matrix G with dP/dt = G @ P; columns sum to zero."""
    w1 = pump_rate
    w2 = pump_rate * params.shelving_drive
    g31, g32, g21, g12 = params.gamma31, params.gamma32, params.gamma21, params.gamma12
    G = np.array(
        [
            [-(w1 + g12), g21, w1 + g31],
            [g12, -(w2 + g21), w2 + g32],
            [w1, w2, -(w1 + w2 + g31 + g32)],
        ]
    )
    if not np.all(np.isfinite(G)):
        raise InvalidParametersError("rate generator is not finite")
    return G


def _expm_series(A: np.ndarray) -> np.ndarray:
    # scaling and squaring around a truncated Taylor series
    norm = np.abs(A).sum(axis=0).max()
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    B = A / (2.0**s)
    result = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, 30):
        term = term @ B / k
        result = result + term
        if np.abs(term).max() < 1e-18 * np.abs(result).max():
            break
    for _ in range(s):
        result = result @ result
    return result


def propagator(G: np.ndarray, dt: float, integral: bool = False):
    """exp(G dt) and, if ``integral``, also the bin average (1/dt) * int_0^dt exp(G s) ds.

    Short steps (||G dt|| <= 1) use the Taylor series directly, which is
    accurate to rounding there. Longer steps use the eigendecomposition,
    which stays exact across the widely separated rates of a stiff gap;
    it falls back to the scaled series when eigenvalues nearly coincide or
    the result fails to conserve probability.
    """
    short = np.abs(G).sum(axis=0).max() * dt <= 1.0
    if not short:
        lam, V = np.linalg.eig(G)
        scale = max(np.abs(lam).max(), 1e-300)
        close = any(
            abs(lam[i] - lam[j]) < _DEGENERACY_TOL * scale
            for i in range(3)
            for j in range(i + 1, 3)
        )
        if not close and np.linalg.cond(V) <= 1e8:
            Vinv = np.linalg.inv(V)
            z = lam * dt
            P = np.real((V * np.exp(z)) @ Vinv)
            if np.abs(P.sum(axis=0) - 1.0).max() <= _CONSERVATION_TOL:
                if not integral:
                    return P
                with np.errstate(divide="ignore", invalid="ignore"):
                    phi = np.where(np.abs(z) < 1e-8, 1.0 + z / 2.0, np.expm1(z) / z)
                return P, np.real((V * phi) @ Vinv)
    P = _expm_series(G * dt)
    if not integral:
        return P
    # augmented-matrix trick: the top-right block of exp([[G, I], [0, 0]] dt)
    aug = np.zeros((6, 6))
    aug[:3, :3] = G * dt
    aug[:3, 3:] = np.eye(3)
    E = _expm_series(aug)
    return P, E[:3, 3:]


def evolve(
    params: RateParams,
    schedule: DriveSchedule,
    init: Populations = GROUND,
    bin_width: float = 1e-6,
    average: bool = False,
) -> np.ndarray:
    """Populations on a uniform grid, exact within each constant-drive segment.

    Returns an (N, 3) array. With ``average=False`` row k is the state at
    t = k * bin_width for k = 0..N-1 where N = round(duration / bin_width)
    + 1. With ``average=True`` row k is the mean over bin
    [k * bin_width, (k + 1) * bin_width) for N = floor(duration / bin_width)
    bins. Segment edges need not align with bin edges.
    """
    if not bin_width > 0:
        raise InvalidParametersError("bin_width must be positive")
    durations = [d for d, _ in schedule.segments]
    rates = [w for _, w in schedule.segments]
    # segment edges in units of bins, snapped to integers when within rounding
    edges = np.concatenate([[0.0], np.cumsum(durations)]) / bin_width
    snapped = np.round(edges)
    edges = np.where(np.abs(edges - snapped) < 1e-9 * np.maximum(1.0, snapped), snapped, edges)
    total = edges[-1]
    n_bins = int(math.floor(total))
    n_out = n_bins if average else int(round(total)) + 1

    cache = {}

    def props(w, frac):
        key = (w, frac)
        if key not in cache:
            cache[key] = propagator(generator(params, w), frac * bin_width, integral=True)
        return cache[key]

    def advance(p, k):
        """Evolve across bin [k, k+1); returns new p and the bin-mean populations."""
        a, b = float(k), float(k + 1)
        ia = int(np.searchsorted(edges, a, side="right")) - 1
        ib = int(np.searchsorted(edges, b, side="left")) - 1
        ia = min(ia, len(rates) - 1)
        ib = min(max(ib, ia), len(rates) - 1)
        if ia == ib:
            P, M = props(rates[ia], 1.0)
            return P @ p, M @ p
        acc = np.zeros(3)
        t = a
        for s in range(ia, ib + 1):
            t_next = min(b, edges[s + 1]) if s < ib else b
            frac = t_next - t
            if frac > 0:
                P, M = props(rates[s], frac)
                acc += (M @ p) * frac
                p = P @ p
            t = t_next
        return p, acc

    out = np.empty((n_out, 3))
    p = init.as_array()
    if average:
        for k in range(n_out):
            p, out[k] = advance(p, k)
    else:
        out[0] = p
        for k in range(1, n_out):
            p, _ = advance(p, k - 1)
            out[k] = p
    np.clip(out, 0.0, 1.0, out=out)
    return out


def evolve_to(params: RateParams, schedule: DriveSchedule, init: Populations = GROUND) -> Populations:
    """State at the end of ``schedule`` (no sampling)."""
    p = init.as_array()
    for d, w in schedule.segments:
        p = propagator(generator(params, w), d) @ p
    return Populations.from_array(_renormalise(p))


def _renormalise(p):
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def steady_state(params: RateParams, pump_rate: float) -> Populations:
    """Normalised null vector of the rate generator."""
    G = generator(params, pump_rate)
    if not np.any(G):
        raise AmbiguousSteadyStateError("all rates are zero; every state is stationary")
    _, s, vh = np.linalg.svd(G)
    tol = 3 * np.finfo(float).eps * 3 * s[0]
    nullity = int(np.sum(s <= tol))
    if nullity > 1:
        raise AmbiguousSteadyStateError(
            f"rate generator has a {nullity}-dimensional null space"
        )
    # solve with the normalisation row replacing one balance equation
    A = G.copy()
    A[2, :] = 1.0
    p = np.linalg.solve(A, np.array([0.0, 0.0, 1.0]))
    return Populations.from_array(_renormalise(p))


def thermal_populations(params: RateParams) -> Populations:
    """Laser-off equilibrium: p3 = 0 and p2/p1 = gamma12/gamma21."""
    g12, g21 = params.gamma12, params.gamma21
    if g21 == 0 and g12 == 0:
        return GROUND
    return Populations(g21 / (g12 + g21), g12 / (g12 + g21), 0.0)


def ple_signal(traj, scale: float, t0: float = 0.0, bin_width: float = 1.0) -> TimeTrace:
    """PLE rate trace ``scale * p3`` from an (N, 3) trajectory or Populations list."""
    if not scale > 0:
        raise InvalidParametersError("scale must be positive")
    if isinstance(traj, np.ndarray):
        p3 = traj[:, 2]
    else:
        p3 = np.array([p.p3 for p in traj])
    return TimeTrace(t0, bin_width, scale * np.clip(p3, 0.0, None), unit="Hz")
