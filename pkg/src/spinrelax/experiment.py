"""Pump-probe experiment description and noiseless pulse-pair synthesis.

Each delay tau is one measurement: populations start at laser-off thermal
equilibrium (the repump reset between runs), pulse P1 is applied, the
system relaxes in the dark for tau, and pulse P2 is applied. Only the two
pulse windows are sampled; the gap is propagated in one step, so delays of
seconds cost nothing extra.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .deadtime import DetectorSpec, measured_rate
from .errors import InvalidParametersError
from .ratemodel import (
    DriveSchedule,
    FieldConfig,
    Populations,
    RateParams,
    evolve,
    evolve_to,
    pump_rate_from_rabi,
    thermal_populations,
    zeeman_energy,
    zeeman_splitting,
)
from .t1fit import leading_edge_height
from .traces import TimeTrace

# fine-grid steps per dead time used when the detector model is applied
STEPS_PER_DEADTIME = 100


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    seed: int = 0
    repetitions: int = 100_000

    def __post_init__(self):
        if self.kind not in ("none", "poisson"):
            raise InvalidParametersError(f"unknown noise kind {self.kind!r}")
        if self.repetitions < 1:
            raise InvalidParametersError("repetitions must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative pump-probe experiment.

    ``pump_rate`` overrides the Rabi-derived drive when given. ``scale``
    converts excited-state population into detected photons per second.
    ``background`` is a constant photon rate added everywhere (dark counts,
    stray light). ``lead_in`` is the dark time recorded before each pulse
    (default: ``n_edge_bins`` bins).
    """

    rate_params: RateParams
    taus: tuple
    p1_duration: float
    p2_duration: float | None = None
    field: FieldConfig = FieldConfig(b=0.1, theta=math.radians(57.0))
    detector: DetectorSpec = DetectorSpec()
    noise: NoiseSpec = NoiseSpec()
    scale: float = 3.0e5
    bin_width: float = 0.12e-6
    n_edge_bins: int = 20
    background: float = 0.0
    pump_rate: float | None = None
    lead_in: float | None = None
    substeps_override: int | None = None

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        object.__setattr__(self, "taus", taus)
        if not taus:
            raise InvalidParametersError("taus must not be empty")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise InvalidParametersError("taus must be strictly increasing")
        if taus[0] <= 0:
            raise InvalidParametersError("taus must be positive")
        if not self.p1_duration > 0:
            raise InvalidParametersError("p1_duration must be positive")
        if self.p2_duration is not None and not self.p2_duration > 0:
            raise InvalidParametersError("p2_duration must be positive")
        if not self.scale > 0:
            raise InvalidParametersError("scale must be positive")
        if not self.bin_width > 0:
            raise InvalidParametersError("bin_width must be positive")
        if self.background < 0:
            raise InvalidParametersError("background must be >= 0")
        if self.n_edge_bins < 1:
            raise InvalidParametersError("n_edge_bins must be >= 1")
        if self.substeps_override is not None:
            if self.substeps_override < 1:
                raise InvalidParametersError("substeps_override must be >= 1")
            fine = self.bin_width / self.substeps_override
            if self.detector.dead_time > 0 and fine > self.detector.dead_time / 50 * (1 + 1e-9):
                raise InvalidParametersError("substeps_override too small for the dead time")
        if self.taus[0] < self.lead_in_time:
            raise InvalidParametersError("shortest tau is shorter than the recorded lead-in")

    # --- derived quantities -------------------------------------------------

    @property
    def lead_in_time(self) -> float:
        if self.lead_in is not None:
            return self.bin_width * math.ceil(self.lead_in / self.bin_width - 1e-9)
        return self.n_edge_bins * self.bin_width

    @property
    def p2_time(self) -> float:
        return self.p1_duration if self.p2_duration is None else self.p2_duration

    @property
    def effective_params(self) -> RateParams:
        """Rate parameters with the field geometry applied.

        With no axial field the two spin levels are degenerate: both are
        driven by the laser and there is no energy gap between them.
        """
        if zeeman_splitting(self.field) == 0.0:
            return replace(self.rate_params, delta=0.0, shelving_drive=1.0)
        return self.rate_params

    @property
    def drive(self) -> float:
        if self.pump_rate is not None:
            return self.pump_rate
        return pump_rate_from_rabi(self.rate_params.rabi, self.rate_params)

    @property
    def substeps(self) -> int:
        """Fine-grid steps per output bin needed by the detector model."""
        if self.substeps_override is not None:
            return self.substeps_override
        if self.detector.dead_time == 0:
            return 1
        return max(1, math.ceil(self.bin_width * STEPS_PER_DEADTIME / self.detector.dead_time - 1e-9))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["rate_params"] = RateParams(**d["rate_params"])
        if "field" in d:
            d["field"] = FieldConfig(**d["field"])
        if "detector" in d:
            d["detector"] = DetectorSpec(**d["detector"])
        if "noise" in d:
            d["noise"] = NoiseSpec(**d["noise"])
        d["taus"] = tuple(d["taus"])
        return cls(**d)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def pulse_schedule(self, tau: float) -> DriveSchedule:
        """Whole P1 - gap - P2 sequence as a drive schedule."""
        w = self.drive
        return DriveSchedule([(self.p1_duration, w), (tau, 0.0), (self.p2_time, w)])


def reference_config(**overrides) -> ExperimentConfig:
    """Pump-probe scenario with magnitudes typical of a Mo defect in SiC.

    Optical decay 20 MHz with 0.3 % branching into the dark spin level, T1
    = 2.4 s, tilted 100 mT field, ~100 kHz leading-edge photon rate, a
    10 us detector dead time, and leading edges averaged over 20 bins of
    0.12 us. The spin bath is at T = 0 in the model so the laser-off
    recovery time equals 1/gamma21 exactly.
    """
    field = FieldConfig(b=0.1, theta=math.radians(57.0))
    params = RateParams(
        gamma31=2.0e7,
        gamma32=0.003 * 2.0e7,
        gamma21=1 / 2.4,
        delta=zeeman_energy(field),
        temperature=0.0,
        rabi=2.0e7,
        shelving_drive=0.002,
    )
    base = dict(
        rate_params=params,
        taus=(0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0),
        p1_duration=400e-6,
        field=field,
        detector=DetectorSpec(dead_time=10e-6),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- synthesis ---------------------------------------------------------------


def _window_photon_rate(config: ExperimentConfig, init: Populations, duration: float):
    """Photon rate on the fine grid for lead-in + pulse, starting from ``init``.

    Returns the fine TimeTrace (t0 = -lead_in, relative to pulse onset) and
    the populations at the end of the pulse.
    """
    params = config.effective_params
    lead = config.lead_in_time
    fine = config.bin_width / config.substeps
    n_pulse = int(round(duration / config.bin_width))
    pulse_time = n_pulse * config.bin_width
    segments = []
    if lead > 0:
        segments.append((lead, 0.0))
    segments.append((pulse_time, config.drive))
    sched = DriveSchedule(segments)
    traj = evolve(params, sched, init, fine, average=True)
    rate = config.scale * traj[:, 2] + config.background
    end = evolve_to(params, sched, init)
    return TimeTrace(-lead, fine, rate, unit="Hz"), end


def _after_gap(config: ExperimentConfig, start: Populations, tau: float) -> Populations:
    gap = tau - config.lead_in_time
    if gap <= 0:
        return start
    return evolve_to(config.effective_params, DriveSchedule([(gap, 0.0)]), start)


@dataclass
class PulseWindows:
    """Fine-grid photon rates for P1 and each P2, all relative to pulse onset."""

    p1: TimeTrace
    p2: list
    taus: np.ndarray


def pulse_windows(config: ExperimentConfig) -> PulseWindows:
    params = config.effective_params
    init = thermal_populations(params)
    p1, end1 = _window_photon_rate(config, init, config.p1_duration)
    p2 = []
    for tau in config.taus:
        start = _after_gap(config, end1, tau)
        trace, _ = _window_photon_rate(config, start, config.p2_time)
        p2.append(trace)
    return PulseWindows(p1, p2, np.array(config.taus))


def detect(config: ExperimentConfig, photon: TimeTrace) -> TimeTrace:
    """Detector response on the fine grid, then averaged to output bins."""
    measured = measured_rate(photon, config.detector, initial_rate=config.background)
    return measured.rebin(config.substeps)


@dataclass
class PulsePairHeights:
    taus: np.ndarray
    h1_true: float
    h2_true: np.ndarray
    h1_measured: float
    h2_measured: np.ndarray
    relaxation_time: float


def pulse_pair_heights(config: ExperimentConfig) -> PulsePairHeights:
    """Noiseless leading-edge heights with and without the detector model."""
    win = pulse_windows(config)
    n = config.n_edge_bins

    def heights(trace):
        true = leading_edge_height(trace.rebin(config.substeps), 0.0, n)
        meas = leading_edge_height(detect(config, trace), 0.0, n)
        return true, meas

    h1_true, h1_meas = heights(win.p1)
    pairs = [heights(tr) for tr in win.p2]
    return PulsePairHeights(
        taus=win.taus,
        h1_true=h1_true,
        h2_true=np.array([p[0] for p in pairs]),
        h1_measured=h1_meas,
        h2_measured=np.array([p[1] for p in pairs]),
        relaxation_time=config.effective_params.relaxation_time(),
    )

