"""End-to-end synthesis, file I/O and the T1 fitting workflow."""

from __future__ import annotations

import io
import json
import math
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from .errors import FitConvergenceError, ParseError, RankDeficiencyError
from .ratemodel import Populations, thermal_populations
from .experiment import ExperimentConfig, NoiseSpec, detect, pulse_pair_heights, pulse_windows
from .t1fit import PulsePairRecord, T1FitResult, fit_t1, fit_t1_corrected, leading_edge_height
from .tempfit import RelaxationPoint
from .traces import TimeTrace

__version__ = "0.1.0"


def _fmt(x: float) -> str:
    """Shortest round-tripping decimal for a float."""
    return repr(float(x))


# --- synthesis -----------------------------------------------------------------------


@dataclass
class PulsePair:
    tau: float
    p1: TimeTrace
    p2: TimeTrace


@dataclass
class Synthesis:
    config: ExperimentConfig
    pairs: list
    records: list


def clean_traces(config: ExperimentConfig):
    """Detected (noiseless) P1 trace and one P2 trace per delay."""
    win = pulse_windows(config)
    p1 = detect(config, win.p1)
    return p1, [detect(config, tr) for tr in win.p2]


def thermal_start(config: ExperimentConfig) -> Populations:
    """Laser-off equilibrium that the repump reset returns to before each run."""
    return thermal_populations(config.effective_params)


def apply_noise(trace: TimeTrace, config: ExperimentConfig, rng: np.random.Generator) -> TimeTrace:
    """Poisson counts on rate * bin_width * repetitions, returned as a rate."""
    exposure = trace.bin_width * config.noise.repetitions
    counts = rng.poisson(trace.counts * exposure)
    return TimeTrace(trace.t0, trace.bin_width, counts / exposure, unit="Hz")


def _records(config, pairs):
    n = config.n_edge_bins
    out = []
    for pair in pairs:
        h1 = leading_edge_height(pair.p1, 0.0, n)
        h2 = leading_edge_height(pair.p2, 0.0, n)
        out.append(PulsePairRecord(pair.tau, h1, h2))
    return out


def synthesize(config: ExperimentConfig, clean=None) -> Synthesis:
    """Simulate one P1/P2 measurement per delay.

    Every delay is an independent run after a repump reset, so P1 is
    re-measured (and re-drawn under noise) for each one. Noise draws use a
    single generator seeded from the config, in delay order. ``clean`` may
    pass precomputed :func:`clean_traces` output to skip the simulation.
    """
    p1, p2s = clean if clean is not None else clean_traces(config)
    rng = np.random.default_rng(config.noise.seed)
    pairs = []
    for tau, p2 in zip(config.taus, p2s):
        if config.noise.kind == "poisson":
            a, b = apply_noise(p1, config, rng), apply_noise(p2, config, rng)
        else:
            a, b = p1, p2
        pairs.append(PulsePair(tau, a, b))
    return Synthesis(config, pairs, _records(config, pairs))


# --- run report ------------------------------------------------------------------------


@dataclass
class RunReport:
    records: list
    fit: T1FitResult | None
    corrected_fit: T1FitResult | None = None
    provenance: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "config_hash": self.provenance.get("config_hash"),
            "seed": self.provenance.get("seed"),
            "records": [
                {"tau_s": r.tau, "h1_hz": r.h1, "h2_hz": r.h2, "ratio": r.ratio} for r in self.records
            ],
            "fit": None if self.fit is None else self.fit.as_dict(),
            "corrected_fit": None if self.corrected_fit is None else self.corrected_fit.as_dict(),
            "provenance": self.provenance,
            "errors": list(self.errors),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"


def provenance(config: ExperimentConfig) -> dict:
    return {
        "config_hash": config.config_hash(),
        "seed": config.noise.seed,
        "config": config.to_dict(),
        "versions": {
            "spinrelax": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _try_fit(fn, errors, label):
    try:
        return fn()
    except (FitConvergenceError, RankDeficiencyError, ValueError) as exc:
        errors.append(f"{label}: {exc}")
        return None


def run_t1_pipeline(config: ExperimentConfig, corrected: bool = False, synthesis=None) -> RunReport:
    """Synthesise, extract leading edges and fit T1.

    With ``corrected`` the pile-up-aware fit is added, using the leading-edge
    losses of the noiseless model. A failing fit is recorded in ``errors``
    and the rest of the report is still returned.
    """
    syn = synthesis if synthesis is not None else synthesize(config)
    errors = []
    fit = _try_fit(lambda: fit_t1(syn.records), errors, "fit_t1")
    corr = None
    if corrected:
        clean = replace(config, noise=NoiseSpec())
        heights = pulse_pair_heights(clean)
        eps1 = heights.h1_true - heights.h1_measured
        eps2 = dict(zip(heights.taus.tolist(), (heights.h2_true - heights.h2_measured).tolist()))
        corr = _try_fit(
            lambda: fit_t1_corrected(syn.records, eps1, lambda t: eps2[float(t)]),
            errors,
            "fit_t1_corrected",
        )
    return RunReport(syn.records, fit, corr, provenance(config), errors)


def write_run(report: RunReport, syn: Synthesis, out_dir) -> list:
    """Write report JSON, pulse-pair CSV and every trace; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json", out / "pulse_pairs.csv"]
    paths[0].write_text(report.to_json())
    save_pulse_pairs(paths[1], report.records)
    for i, pair in enumerate(syn.pairs):
        for name, tr in (("p1", pair.p1), ("p2", pair.p2)):
            p = out / f"trace_{i:03d}_{name}.csv"
            save_trace(p, tr)
            paths.append(p)
    return paths


# --- CSV I/O -------------------------------------------------------------------------------


def _lines(text: str):
    """Non-blank lines with 1-based numbers; CRLF and LF alike."""
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line:
            out.append((i, line))
    if not out:
        raise ParseError("empty file", line=1)
    return out


def _float(s: str, line: int, what: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"cannot parse {what} {s!r} as a number", line=line) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} is not finite", line=line)
    return v


def _read(path_or_text):
    if isinstance(path_or_text, io.StringIO):
        return path_or_text.getvalue()
    return Path(path_or_text).read_text()


def trace_to_csv(trace: TimeTrace) -> str:
    rows = ["t0_s,bin_width_s", f"{_fmt(trace.t0)},{_fmt(trace.bin_width)}", "counts"]
    rows += [_fmt(v) for v in trace.counts]
    return "\n".join(rows) + "\n"


def trace_from_csv(text: str) -> TimeTrace:
    lines = _lines(text)
    n0, header = lines[0]
    if header.replace(" ", "") != "t0_s,bin_width_s":
        raise ParseError(f"expected header 't0_s,bin_width_s', got {header!r}", line=n0)
    if len(lines) < 2:
        raise ParseError("missing t0/bin_width row", line=n0 + 1)
    n1, row = lines[1]
    parts = row.split(",")
    if len(parts) != 2:
        raise ParseError("expected two values: t0_s,bin_width_s", line=n1)
    t0 = _float(parts[0], n1, "t0_s")
    bw = _float(parts[1], n1, "bin_width_s")
    if bw <= 0:
        raise ParseError("bin_width_s must be positive", line=n1)
    body = lines[2:]
    if body and body[0][1].lower() == "counts":
        body = body[1:]
    if not body:
        raise ParseError("trace has no counts", line=lines[-1][0] + 1)
    counts = []
    for n, s in body:
        if "," in s:
            raise ParseError("expected one counts value per line", line=n)
        v = _float(s, n, "counts")
        if v < 0:
            raise ParseError("counts must be non-negative", line=n)
        counts.append(v)
    return TimeTrace(t0, bw, np.array(counts))


def save_trace(path, trace: TimeTrace) -> None:
    Path(path).write_text(trace_to_csv(trace))


def load_trace(path) -> TimeTrace:
    return trace_from_csv(_read(path))


def _table_from_csv(text, required, optional=()):
    lines = _lines(text)
    n0, header = lines[0]
    cols = [c.strip().lower() for c in header.split(",")]
    want = [c.lower() for c in required]
    allowed = [want, want + [c.lower() for c in optional]]
    if cols not in allowed:
        raise ParseError(f"expected header {','.join(required)}, got {header!r}", line=n0)
    rows = []
    for n, s in lines[1:]:
        parts = s.split(",")
        if len(parts) != len(cols):
            raise ParseError(f"expected {len(cols)} fields, got {len(parts)}", line=n)
        vals = []
        for p, c in zip(parts, cols):
            p = p.strip()
            # optional columns may be left blank
            vals.append(None if (p == "" and c not in want) else _float(p, n, c))
        rows.append((n, vals))
    if not rows:
        raise ParseError("no data rows", line=n0 + 1)
    return cols, rows


def pulse_pairs_to_csv(records) -> str:
    rows = ["tau_s,h1_hz,h2_hz"] + [f"{_fmt(r.tau)},{_fmt(r.h1)},{_fmt(r.h2)}" for r in records]
    return "\n".join(rows) + "\n"


def pulse_pairs_from_csv(text: str) -> list:
    _, rows = _table_from_csv(text, ("tau_s", "h1_hz", "h2_hz"))
    out = []
    for n, (tau, h1, h2) in rows:
        try:
            out.append(PulsePairRecord(tau, h1, h2))
        except ValueError as exc:
            raise ParseError(str(exc), line=n) from None
    return out


def save_pulse_pairs(path, records) -> None:
    Path(path).write_text(pulse_pairs_to_csv(records))


def load_pulse_pairs(path) -> list:
    return pulse_pairs_from_csv(_read(path))


def relaxation_to_csv(points) -> str:
    points = list(points)
    with_sigma = any(p.sigma is not None for p in points)
    header = "temperature_K,rate_hz" + (",sigma_hz" if with_sigma else "")
    rows = [header]
    for p in points:
        row = f"{_fmt(p.temperature)},{_fmt(p.rate)}"
        if with_sigma:
            row += "," + ("" if p.sigma is None else _fmt(p.sigma))
        rows.append(row)
    return "\n".join(rows) + "\n"


def relaxation_from_csv(text: str) -> list:
    cols, rows = _table_from_csv(text, ("temperature_K", "rate_hz"), ("sigma_hz",))
    out = []
    for n, vals in rows:
        try:
            out.append(RelaxationPoint(vals[0], vals[1], vals[2] if len(vals) > 2 else None))
        except ValueError as exc:
            raise ParseError(str(exc), line=n) from None
    return out


def load_relaxation(path) -> list:
    return relaxation_from_csv(_read(path))


def populations_to_csv(times, traj) -> str:
    rows = ["t_s,p1,p2,p3"]
    for t, (a, b, c) in zip(times, traj):
        rows.append(f"{_fmt(t)},{_fmt(a)},{_fmt(b)},{_fmt(c)}")
    return "\n".join(rows) + "\n"


def load_config(path) -> ExperimentConfig:
    text = _read(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return ExperimentConfig.from_dict(doc)
