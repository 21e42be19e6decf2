"""Command-line interface: ``spinrelax <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import grouptheory as gt
from . import pipeline as pl
from .deadtime import DetectorSpec, measured_rate, monte_carlo_counts
from .errors import ParseError, SpinRelaxError, UsageError
from .ratemodel import evolve
from .t1fit import fit_t1
from .tempfit import compare_models, fit_constant, fit_power_law, fit_temp_model


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _config(args):
    cfg = pl.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, noise=replace(cfg.noise, seed=args.seed))
    return cfg


# --- commands ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _config(args)
    syn = pl.synthesize(cfg)
    report = pl.run_t1_pipeline(cfg, corrected=args.corrected, synthesis=syn)
    if args.out:
        pl.write_run(report, syn, args.out)
    else:
        text = report.to_json() if args.format == "json" else pl.pulse_pairs_to_csv(report.records)
        sys.stdout.write(text)
    return 0 if not report.errors else 1


def cmd_fit_t1(args) -> int:
    records = pl.load_pulse_pairs(args.pairs)
    fit = fit_t1(records)
    if args.format == "json":
        text = _dumps({"records": len(records), "fit": fit.as_dict()})
    else:
        d = fit.as_dict()
        keys = list(d)
        text = ",".join(keys) + "\n" + ",".join(str(d[k]) for k in keys) + "\n"
    _emit(text, args.out)
    return 0


def cmd_fit_temp(args) -> int:
    data = pl.load_relaxation(args.data)
    ns = (5, 9) if args.n == "both" else (int(args.n),)
    fits = [fit_temp_model(data, n) for n in ns]
    if args.power_law:
        fits.append(fit_power_law(data))
    fits.append(fit_constant(data))
    ranking = compare_models(data, fits)
    if args.format == "json":
        text = _dumps({"fits": [f.as_dict() for f in fits], "ranking": ranking})
    else:
        rows = ["rank,model,n_params,rss,aicc"]
        rows += [f"{r['rank']},{r['model']},{r['n_params']},{r['rss']!r},{r['aicc']!r}" for r in ranking]
        text = "\n".join(rows) + "\n"
    _emit(text, args.out)
    return 0


def cmd_deadtime(args) -> int:
    photon = pl.load_trace(args.trace)
    det = DetectorSpec(dead_time=args.dead_time)
    if args.mc:
        result = monte_carlo_counts(photon, det, args.mc, seed=args.seed or 0)
    else:
        result = measured_rate(photon, det)
    if args.format == "json":
        doc = {"t0_s": result.t0, "bin_width_s": result.bin_width, "rate_hz": result.counts.tolist()}
        if result.sigma is not None:
            doc["sigma_hz"] = result.sigma.tolist()
        text = _dumps(doc)
    else:
        text = pl.trace_to_csv(result)
    _emit(text, args.out)
    return 0


def cmd_rules(args) -> int:
    if args.product:
        a, b = args.product
        mult = gt.decompose(gt.product(a, b, conj_a=not args.no_conj))
        doc = {"a": a, "b": b, "conjugate_a": not args.no_conj, "decomposition": gt.format_decomposition(mult)}
        text = _dumps(doc) if args.format == "json" else doc["decomposition"] + "\n"
    elif args.rule:
        res = gt.selection_rule(*args.rule)
        d = res.as_dict()
        text = _dumps(d) if args.format == "json" else (
            f"<{d['bra']}|{d['operator']}|{d['ket']}>: {'allowed' if d['allowed'] else 'forbidden'}"
            f" ({d['decomposition']})\n"
        )
    elif args.doublet:
        prof = gt.kd_field_profile(args.doublet).as_dict()
        if args.format == "json":
            text = _dumps(prof)
        else:
            rows = [f"{k}: {'allowed' if v else 'forbidden'}" for k, v in prof["allowed"].items()]
            text = f"doublet {prof['doublet']}\n" + "\n".join(rows) + "\n"
    else:
        if args.format == "json":
            text = gt.rules_json() + "\n"
        else:
            text = "\n\n".join(
                [gt.render_character_table(), gt.render_product_table(), gt.render_selection_matrix()]
            ) + "\n"
    _emit(text, args.out)
    return 0


MAX_SIM_POINTS = 5_000_000


def cmd_simulate(args) -> int:
    cfg = _config(args)
    tau = cfg.taus[0] if args.tau is None else args.tau
    bw = cfg.bin_width if args.bin_width is None else args.bin_width
    sched = cfg.pulse_schedule(tau)
    if sched.duration / bw > MAX_SIM_POINTS:
        raise UsageError(f"{sched.duration / bw:.3g} samples requested; raise --bin-width")
    traj = evolve(cfg.effective_params, sched, pl.thermal_start(cfg), bw)
    times = bw * np.arange(len(traj))
    if args.format == "json":
        text = _dumps({"t_s": times.tolist(), "populations": traj.tolist()})
    else:
        text = pl.populations_to_csv(times, traj)
    _emit(text, args.out)
    return 0


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the noise seed")
    common.add_argument("--out", default=None, help="output file (directory for synth)")
    common.add_argument("--format", choices=("csv", "json"), default=None)

    p = argparse.ArgumentParser(prog="spinrelax", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="config JSON -> traces + T1 report")
    s.add_argument("config")
    s.add_argument("--corrected", action="store_true", help="also run the pile-up-corrected fit")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit-t1", parents=[common], help="pulse-pair CSV -> T1 fit")
    s.add_argument("pairs")
    s.set_defaults(func=cmd_fit_t1)

    s = sub.add_parser("fit-temp", parents=[common], help="relaxation CSV -> temperature model fits")
    s.add_argument("data")
    s.add_argument("--n", choices=("5", "9", "both"), default="both")
    s.add_argument("--power-law", action="store_true")
    s.set_defaults(func=cmd_fit_temp)

    s = sub.add_parser("deadtime", parents=[common], help="photon-rate trace -> measured rate")
    s.add_argument("trace")
    s.add_argument("--dead-time", type=float, required=True, help="seconds")
    s.add_argument("--mc", type=int, default=0, metavar="TRIALS", help="Monte-Carlo detector instead")
    s.set_defaults(func=cmd_deadtime, default_format="csv")

    s = sub.add_parser("rules", parents=[common], help="character table and selection rules")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--product", nargs=2, metavar=("A", "B"), help="decompose A* x B")
    g.add_argument("--rule", nargs=3, metavar=("BRA", "KET", "OP"), help="e.g. G5 G5 B_perp")
    g.add_argument("--doublet", help="Γ56 or Γ4")
    s.add_argument("--no-conj", action="store_true", help="do not conjugate A in --product")
    s.set_defaults(func=cmd_rules, default_format="csv")

    s = sub.add_parser("simulate", parents=[common], help="config -> population CSV for one delay")
    s.add_argument("config")
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--bin-width", type=float, default=None)
    s.set_defaults(func=cmd_simulate, default_format="csv")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    try:
        return args.func(args)
    except (ParseError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SpinRelaxError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
