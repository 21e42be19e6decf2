"""Uniformly binned time series used as the common I/O record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeTrace:
    """Photon counts or rates on a uniform grid starting at ``t0``.

    ``unit`` is ``"Hz"`` for rates or ``"counts"`` for raw counts per bin.
    ``sigma`` optionally carries a per-bin standard error in the same unit.
    """

    t0: float
    bin_width: float
    counts: np.ndarray
    unit: str = "Hz"
    sigma: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if not (self.bin_width > 0 and np.isfinite(self.bin_width)):
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if not np.all(np.isfinite(counts)):
            raise ValueError("counts must be finite")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != counts.shape:
                raise ValueError("sigma must match counts in shape")
            sigma.setflags(write=False)
            object.__setattr__(self, "sigma", sigma)

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, TimeTrace):
            return NotImplemented
        return (
            self.t0 == other.t0
            and self.bin_width == other.bin_width
            and self.unit == other.unit
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None

    @property
    def times(self) -> np.ndarray:
        """Left edge of every bin."""
        return self.t0 + self.bin_width * np.arange(len(self.counts))

    @property
    def duration(self) -> float:
        return self.bin_width * len(self.counts)

    def index_of(self, t: float) -> int:
        """Index of the first bin whose left edge is at or after ``t``."""
        x = (t - self.t0) / self.bin_width
        i = int(np.ceil(x - 1e-9))
        return max(i, 0)

    def slice(self, t_start: float, t_stop: float | None = None) -> "TimeTrace":
        i = self.index_of(t_start)
        j = len(self.counts) if t_stop is None else self.index_of(t_stop)
        return TimeTrace(
            self.t0 + i * self.bin_width,
            self.bin_width,
            self.counts[i:j],
            self.unit,
            None if self.sigma is None else self.sigma[i:j],
        )

    def rebin(self, factor: int) -> "TimeTrace":
        """Average groups of ``factor`` bins; a trailing partial group is dropped."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        n = len(self.counts) // factor
        values = self.counts[: n * factor].reshape(n, factor)
        if self.unit == "counts":
            merged = values.sum(axis=1)
        else:
            merged = values.mean(axis=1)
        return TimeTrace(self.t0, self.bin_width * factor, merged, self.unit)
