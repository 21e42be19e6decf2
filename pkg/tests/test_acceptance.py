"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from spinrelax import grouptheory as gt
from spinrelax import pipeline as pl
from spinrelax.cli import main
from spinrelax.deadtime import DetectorSpec, measured_rate, monte_carlo_counts, t1_bias
from spinrelax.experiment import NoiseSpec, reference_config
from spinrelax.ratemodel import GROUND, DriveSchedule, FieldConfig, RateParams, evolve_to, pump_rate_from_rabi
from spinrelax.t1fit import PulsePairRecord, fit_t1, t1_model
from spinrelax.tempfit import RelaxationPoint, TempModelParams, fit_temp_model, model_rate
from spinrelax.traces import TimeTrace

RESULTS: list = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# --- 1 -------------------------------------------------------------------------------


def test_criterion_1_dead_time_fixed_point():
    dt = 10e-6
    det = DetectorSpec(dead_time=dt)
    h = dt / 100
    n_on = int(round(200e-6 / h))
    photon = TimeTrace(0.0, h, np.full(n_on, 1e5))
    solver = measured_rate(photon, det)
    m = int(round(dt / h))
    steady = solver.counts[-m:].mean()
    solver_ok = abs(steady - 5e4) <= 0.005 * 5e4
    # curve shape: full rate at onset, then damped dips at the dead-time period
    dips = [solver.counts[k * m + m // 2: (k + 1) * m + m // 2].min() for k in range(4)]
    shape_ok = solver.counts[0] == pytest.approx(1e5, rel=1e-2) and all(
        a < b for a, b in zip(dips, dips[1:])
    )

    t0 = time.perf_counter()
    mc = monte_carlo_counts(photon, det, trials=100_000, seed=2024, bin_width=dt)
    elapsed = time.perf_counter() - t0
    tail = slice(len(mc) - 10, len(mc))  # last 100 us, long after the transient
    mean = mc.counts[tail].mean()
    sigma = math.sqrt(np.sum(mc.sigma[tail] ** 2)) / 10
    z = (mean - 5e4) / sigma
    mc_ok = abs(z) <= 3 and elapsed < 10
    record(
        1,
        "dead-time fixed point",
        solver_ok and shape_ok and mc_ok,
        f"solver {steady:.1f} Hz (target 50000 +/- 0.5%), MC {mean:.1f} Hz z={z:+.2f} "
        f"in {elapsed:.2f} s, onset {solver.counts[0]:.0f} Hz, dips {[round(d) for d in dips]}",
    )


# --- 2 -------------------------------------------------------------------------------


def reference_sweep():
    base = reference_config()
    for scale, rabi, bg in itertools.product((2e5, 3e5, 4.5e5), (1e7, 2e7), (0.0, 5e3)):
        yield replace(base, scale=scale, background=bg, rate_params=replace(base.rate_params, rabi=rabi))


def test_criterion_2_pile_up_bias():
    t0 = time.perf_counter()
    results = [t1_bias(cfg) for cfg in reference_sweep()]
    elapsed = time.perf_counter() - t0
    biases = np.array([r.bias_fraction for r in results])
    shorter = all(r.fitted_t1 < r.true_t1 for r in results)
    in_band = np.all((biases >= 0.01) & (biases <= 0.10))
    corr_err = max(abs(r.corrected_t1 - r.true_t1) / r.true_t1 for r in results)
    ok = shorter and in_band and corr_err < 0.01 and elapsed < 60
    record(
        2,
        "pile-up T1 bias",
        ok,
        f"{len(results)} scenarios, bias {biases.min():.2%}..{biases.max():.2%}, all shorter={shorter}, "
        f"corrected max error {corr_err:.1e}, {elapsed:.1f} s",
    )


# --- 3 -------------------------------------------------------------------------------


def test_criterion_3_t1_round_trip():
    t0 = time.perf_counter()
    taus = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    recs = [PulsePairRecord(t, 1e5, 1e5 * float(t1_model(t, 2.4, 0.6))) for t in taus]
    fit = fit_t1(recs)
    err_t1 = abs(fit.t1 - 2.4) / 2.4
    err_q = abs(fit.q - 0.6) / 0.6

    cfg = reference_config(detector=DetectorSpec(), noise=NoiseSpec("poisson", seed=0))
    clean = pl.clean_traces(cfg)
    fitted = []
    for seed in range(200):
        c = replace(cfg, noise=replace(cfg.noise, seed=seed))
        rep = pl.run_t1_pipeline(c, synthesis=pl.synthesize(c, clean))
        fitted.append(rep.fit.t1 if rep.fit else math.nan)
    elapsed = time.perf_counter() - t0
    median = float(np.nanmedian(fitted))
    ok = err_t1 < 1e-6 and err_q < 1e-6 and abs(median - 2.4) / 2.4 < 0.02 and elapsed < 60
    record(
        3,
        "T1 round trip",
        ok,
        f"noiseless rel err T1 {err_t1:.1e} q {err_q:.1e}; Poisson median T1 {median:.4f} s "
        f"over {np.isfinite(fitted).sum()} seeds; {elapsed:.1f} s",
    )


# --- 4 -------------------------------------------------------------------------------

TRUE_TEMP = TempModelParams(cD=0.2, cR=1e-3, n=5, cO=1.3e9, delta=7.0, gamma0=0.0)


def test_criterion_4_temperature_model():
    t0 = time.perf_counter()
    grid = np.arange(2.0, 7.0001, 0.5)
    clean = model_rate(TRUE_TEMP, grid)
    deltas, ratios = [], []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        noisy = clean * np.exp(0.1 * rng.standard_normal(len(grid)))
        data = [RelaxationPoint(float(t), float(r)) for t, r in zip(grid, noisy)]
        f5, f9 = fit_temp_model(data, 5), fit_temp_model(data, 9)
        deltas.append(f5.params.delta)
        ratios.append(f9.rss / f5.rss)
    med_delta = float(np.median(deltas))
    med_ratio = float(np.median(ratios))

    anchors = {2.0: 1 / 2.4, 7.0: 1 / 83e-6}
    data = [RelaxationPoint(t, anchors.get(float(t), float(model_rate(TRUE_TEMP, t)))) for t in grid]
    fit = fit_temp_model(data, 5)
    miss = {t: abs(model_rate(fit.params, t) / r - 1) for t, r in anchors.items()}
    elapsed = time.perf_counter() - t0
    ok = (
        6.0 <= med_delta <= 8.0
        and 0.5 <= med_ratio <= 2.0
        and max(miss.values()) < 0.15
        and elapsed < 120
    )
    record(
        4,
        "temperature model",
        ok,
        f"median delta {med_delta:.3f} meV, median RSS(n=9)/RSS(n=5) {med_ratio:.3f}, "
        f"anchor misses 2 K {miss[2.0]:.1%} 7 K {miss[7.0]:.1%}; {elapsed:.1f} s",
    )


# --- 5 -------------------------------------------------------------------------------

TABLE_S2 = {
    ("Γ4", "Γ4"): "A1 + A2 + E",
    ("Γ4", "Γ5"): "E",
    ("Γ4", "Γ6"): "E",
    ("Γ5", "Γ4"): "E",
    ("Γ5", "Γ5"): "A1",
    ("Γ5", "Γ6"): "A2",
    ("Γ6", "Γ4"): "E",
    ("Γ6", "Γ5"): "A2",
    ("Γ6", "Γ6"): "A1",
}


def test_criterion_5_group_theory():
    t0 = time.perf_counter()
    table = gt.character_table()
    labels = [ir.label for ir in table.irreps]
    ortho = all(
        table.inner(table.irrep(a).characters, table.irrep(b).characters) == (1 if a == b else 0)
        for a, b in itertools.combinations_with_replacement(labels, 2)
    )
    n_pairs = sum(1 for _ in itertools.combinations(labels, 2))
    dims_ok = True
    for a, b in itertools.product(labels, repeat=2):
        mult = gt.decompose(gt.product(a, b))
        dim = sum(m * table.irrep(k).dimension for k, m in mult.items())
        dims_ok &= dim == table.irrep(a).dimension * table.irrep(b).dimension
    s2_ok = all(gt.format_decomposition(gt.decompose(gt.product(*k))) == v for k, v in TABLE_S2.items())

    rule = gt.selection_rule
    g56 = ("Γ5", "Γ6")
    within = [(a, b) for a in g56 for b in g56]
    doublet_ok = (
        not any(rule(a, b, "B⊥").allowed for a, b in within)
        and not any(rule(a, b, "E⊥").allowed for a, b in within)
        and any(rule(a, b, "B∥").allowed for a, b in within)
    )
    g4_ok = all(rule("Γ4", "Γ4", op).allowed for op in gt.FIELD_OPERATORS)
    cross_ok = all(
        rule("Γ4", k, op).allowed == op.endswith("⊥") for k in g56 for op in gt.FIELD_OPERATORS
    )
    elapsed = time.perf_counter() - t0
    ok = ortho and n_pairs == 15 and dims_ok and s2_ok and doublet_ok and g4_ok and cross_ok and elapsed < 1
    record(
        5,
        "group theory, exact",
        ok,
        f"orthogonality {ortho} ({n_pairs} pairs), 36 products integral {dims_ok}, product table {s2_ok}, "
        f"doublet {doublet_ok}, Γ4 {g4_ok}, Γ4-Γ5,6 {cross_ok}; {elapsed * 1e3:.0f} ms",
    )


# --- 6 -------------------------------------------------------------------------------


def test_criterion_6_rate_model_scenarios():
    t0 = time.perf_counter()
    clean = dict(detector=DetectorSpec(), noise=NoiseSpec())
    zero = pl.synthesize(reference_config(field=FieldConfig(b=0.0), **clean))
    on = zero.pairs[0].p1.slice(0.0).counts
    peak_excess = on.max() / on[-200:].mean() - 1

    infield = pl.run_t1_pipeline(reference_config(**clean))
    edge = pl.synthesize(reference_config(**clean)).pairs[0].p1.slice(0.0).counts
    infield_excess = edge.max() / edge[-200:].mean() - 1
    gamma21 = 1 / 2.4
    t1_err = abs(infield.fit.t1 * gamma21 - 1)

    base = RateParams(gamma31=2e7, gamma32=0.0, gamma21=gamma21, delta=0.01, temperature=0.0)
    w = pump_rate_from_rabi(2e7, replace(base, gamma32=6e4))
    ratios = np.geomspace(1e-3, 1e3, 31)
    p2 = np.array(
        [evolve_to(replace(base, gamma32=r * gamma21), DriveSchedule([(0.5, w)]), GROUND).p2 for r in ratios]
    )
    monotone = bool(np.all(np.diff(p2) >= -1e-12))
    crossing = ratios[np.argmax(p2 > 0.5)] if np.any(p2 > 0.5) else math.nan
    only_above_one = bool(np.all(ratios[p2 > 0.5] > 1.0)) and np.any(p2 > 0.5)
    elapsed = time.perf_counter() - t0
    ok = peak_excess < 1e-3 and infield_excess > 0.1 and t1_err < 0.02 and monotone and only_above_one and elapsed < 60
    record(
        6,
        "rate-model scenarios",
        ok,
        f"peak/baseline-1 zero field {peak_excess:.1e} (in field {infield_excess:.2f}), in-field T1 error {t1_err:.2%}, "
        f"shelving p2>0.5 first at gamma32/gamma21={crossing:.3g}, monotone {monotone}; {elapsed:.1f} s",
    )


# --- 7 -------------------------------------------------------------------------------


def test_criterion_7_determinism(tmp_path):
    cfg = reference_config(noise=NoiseSpec("poisson", seed=77))
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2))
    blobs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = main(["synth", str(cfg_path), "--corrected", "--out", str(out)])
        assert code == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = blobs[0] == blobs[1]
    record(
        7,
        "full-pipeline determinism",
        same,
        f"CLI synth twice: {len(blobs[0])} files, {sum(len(b) for b in blobs[0].values())} bytes, "
        f"byte-identical {same}",
    )


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failures = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_criterion_"):
            continue
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
