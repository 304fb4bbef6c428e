"""Command-line entry point: ``unicity <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import time

from . import __version__
from .engine import DEFAULT_SEED, Strategy, unicity_curve
from .io import (file_digest, ingest, load_dataset, read_categories, read_id_list,
                 save_dataset, write_events)
from .scaling import (Form, FitError, FitResult, ScalingCurve, ScheduleError, default_schedule,
                      extrapolation_table, fit_scaling, schedule_for, scaling_curves)
from .synth import ConfigError, GeneratorConfig, generate, plant_unique_users
from .temporal import (DriftMode, category_fractions, jaccard_drift, popularity_histogram,
                       seasonal_curves, usage_stats)
from .tensor import DatasetError, Window

log = logging.getLogger("unicity")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _int_list(text: str) -> list[int]:
    """``"1-10"``, ``"1,2,5"`` or a mix like ``"1-3,8"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _strategies(text: str) -> list[Strategy]:
    return list(Strategy) if text == "both" else [Strategy(text)]


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _table(columns: list[str], rows: list[dict], comment: str = "") -> str:
    out = io.StringIO()
    out.write("# " + ",".join(columns) + (f"  ({comment})" if comment else "") + "\n")
    for r in rows:
        out.write(",".join("" if r.get(c) is None else str(r.get(c)) for c in columns) + "\n")
    return out.getvalue()


class _Run:
    """Collects input digests and output text for one invocation."""

    def __init__(self, args):
        self.args = args
        self.inputs = {}

    def note_input(self, path):
        if path:
            self.inputs[str(path)] = file_digest(path)

    def load(self, path):
        self.note_input(path)
        return load_dataset(path)


def cmd_ingest(run: _Run):
    a = run.args
    run.note_input(a.input)
    if a.exclusions:
        run.note_input(a.exclusions)
    tensor, report = ingest(a.input, a.exclusions, a.min_items, a.periods)
    save_dataset(tensor, a.dataset)
    summary = {"dataset": a.dataset, "users": tensor.n_users, "items": tensor.n_items,
               "periods": tensor.n_periods, "entries": tensor.nnz, **report.as_dict()}
    return _dump_json(summary)


def cmd_unicity(run: _Run):
    a = run.args
    tensor = run.load(a.dataset)
    window = Window.parse(a.window, tensor.n_periods)
    users = read_id_list(a.users) if a.users else None
    if a.users:
        run.note_input(a.users)
    pop = tensor.popularity(Window.parse(a.popularity_window, tensor.n_periods)) \
        if a.popularity_window else None
    records = []
    for strategy in _strategies(a.strategy):
        ests = unicity_curve(tensor, window, a.n, strategy, a.s, a.sample_size, a.seed,
                             users=users, popularity=pop, workers=a.workers)
        records.extend(e.as_record() for e in ests)
    return _dump_json({"command": "unicity", "records": records})


def cmd_seasonal(run: _Run):
    a = run.args
    tensor = run.load(a.dataset)
    rows = []
    for strategy in _strategies(a.strategy):
        for curve in seasonal_curves(tensor, a.n, strategy, a.s, a.sample_size, a.seed,
                                     a.workers):
            rows.extend(curve.rows())
    cols = ["period", "n_apps", "strategy", "u", "u_std", "n_items", "u_rescaled"]
    return _table(cols, rows, "u_rescaled = u / (n_items / n_items[period 0])")


def _fit_all(curve: ScalingCurve, forms, weighted):
    fits, errors = [], {}
    for form in forms:
        try:
            fits.append(fit_scaling(curve, form, weighted))
        except (FitError, ValueError) as exc:
            errors[form.value] = str(exc)
    return fits, errors


def _forms(text: str) -> list[Form]:
    return list(Form) if text == "all" else [Form(f) for f in text.split(",")]


def cmd_scaling(run: _Run):
    a = run.args
    tensor = run.load(a.dataset)
    window = Window.parse(a.window, tensor.n_periods)
    population = len(tensor.present_users(window))
    schedule = schedule_for(a.sizes, a.realizations) if a.sizes else default_schedule(population)
    curves = []
    for strategy in _strategies(a.strategy):
        for curve in scaling_curves(tensor, schedule, a.n, strategy, a.s, a.sample_size,
                                    a.seed, window, a.popularity_from, a.workers):
            fits, errors = _fit_all(curve, list(Form), a.weighted)
            curves.append({**curve.as_dict(), "fits": [f.as_dict() for f in fits],
                           "fit_errors": errors,
                           "extrapolation": extrapolation_table(fits, a.extrapolate or [])})
    report = {"command": "scaling", "window": str(window), "population": population,
              "schedule": [{"population": n, "realizations": r} for n, r in schedule],
              "curves": curves}
    return _dump_json(report)


def _load_curves(path) -> list[ScalingCurve]:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    items = d["curves"] if "curves" in d else [d]
    return [ScalingCurve.from_dict(c) for c in items]


def cmd_fit(run: _Run):
    a = run.args
    run.note_input(a.curve)
    out = []
    for curve in _load_curves(a.curve):
        fits = []
        for form in _forms(a.forms):
            fits.append(fit_scaling(curve, form, a.weighted).as_dict())
        out.append({"n_apps": curve.n_apps, "strategy": curve.strategy.value, "fits": fits})
    return _dump_json({"command": "fit", "results": out})


def cmd_extrapolate(run: _Run):
    a = run.args
    run.note_input(a.fit)
    with open(a.fit, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    fit_dicts = []
    if "results" in d:
        for res in d["results"]:
            fit_dicts.extend(res["fits"])
    elif "fits" in d:
        fit_dicts = d["fits"]
    else:
        fit_dicts = [d]
    fits = [FitResult.from_dict(f) for f in fit_dicts]
    return _dump_json({"command": "extrapolate", "rows": extrapolation_table(fits, a.x)})


def cmd_synth(run: _Run):
    a = run.args
    cfg = GeneratorConfig(users=a.users, items=a.items, periods=a.periods, alpha=a.alpha,
                          mean_items=a.mean_items, union_target=a.union_target, churn=a.churn,
                          min_items_per_period=a.min_items, seed=a.seed)
    tensor = generate(cfg)
    planted = []
    if a.plant:
        tensor, planted = plant_unique_users(tensor, a.plant, a.rarity, seed=a.seed)
    write_events(tensor, a.events)
    if a.dataset:
        save_dataset(tensor, a.dataset)
    truth = {"config": cfg.as_dict(), "planted_users": planted, "planted_rarity": a.rarity,
             "users": tensor.n_users, "items": tensor.n_items, "entries": tensor.nnz,
             "generator": "zipf-weights/shifted-poisson/binomial-churn"}
    with open(a.events + ".truth.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump_json(truth))
    return _dump_json({"command": "synth", "events": a.events, "truth": a.events + ".truth.json",
                       "dataset": a.dataset, "users": tensor.n_users, "entries": tensor.nnz})


def cmd_stats(run: _Run):
    a = run.args
    tensor = run.load(a.dataset)
    if a.table == "usage":
        return _table(["period", "users", "mean", "median"], usage_stats(tensor))
    if a.table == "drift":
        series = jaccard_drift(tensor, DriftMode(a.drift_mode))
        return _table(["period", "users", "empty", "mean", "median", "q25", "q75"],
                      series.summaries, f"Jaccard distance, {series.mode.value}")
    if a.table == "popularity":
        window = Window.parse(a.window, tensor.n_periods)
        h = popularity_histogram(tensor, window)
        rows = [{"lo": lo, "hi": hi, "items": c, "density": d}
                for lo, hi, c, d in zip(h["edges"][:-1], h["edges"][1:], h["counts"],
                                        h["density"])]
        return _table(["lo", "hi", "items", "density"], rows,
                      f"{h['scheme']}; tail_exponent={h['tail_exponent']}")
    cats = read_categories(a.categories) if a.categories else {}
    if a.categories:
        run.note_input(a.categories)
    rows = category_fractions(tensor, cats, a.weighting)
    cols = list(rows[0].keys()) if rows else ["period"]
    return _table(cols, rows, f"fraction of {'distinct items' if a.weighting == 'items' else 'user-item pairs'}")


def cmd_rerun(run: _Run):
    with open(run.args.manifest_file, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unicity",
                                description="Re-identification risk of binary usage fingerprints.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_, seeded=True):
        sp_.add_argument("-o", "--output", help="write the report here instead of stdout")
        sp_.add_argument("--manifest", help="run manifest path (default: OUTPUT.manifest.json)")
        sp_.add_argument("-v", "--verbose", action="store_true")
        if seeded:
            sp_.add_argument("--seed", type=int, default=DEFAULT_SEED,
                             help=f"random seed (default {DEFAULT_SEED:#x})")

    def estimator(sp_, n_default):
        sp_.add_argument("--n", type=_int_list, default=_int_list(n_default),
                         help=f"quasi-identifier sizes, e.g. 1-10 (default {n_default})")
        sp_.add_argument("--strategy", choices=["random", "popularity", "both"], default="both")
        sp_.add_argument("--s", type=int, default=20, help="samples per estimate")
        sp_.add_argument("--sample-size", type=int, default=10_000)
        sp_.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    s = sub.add_parser("ingest", help="build a dataset file from an event file")
    s.add_argument("input")
    s.add_argument("dataset", help="output dataset path")
    s.add_argument("--exclusions", help="file of item ids to drop, one per line")
    s.add_argument("--min-items", type=int, default=3)
    s.add_argument("--periods", type=int, help="period count; larger indices are rejected")
    common(s, seeded=False)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("unicity", help="unicity for each n and strategy")
    s.add_argument("dataset")
    s.add_argument("--window", default="all", help='"all", "t" or "first-last"')
    s.add_argument("--users", help="restrict sampled users to the ids in this file")
    s.add_argument("--popularity-window", help="rank items by popularity over this window")
    estimator(s, "1-10")
    common(s)
    s.set_defaults(func=cmd_unicity)

    s = sub.add_parser("seasonal", help="per-period unicity, raw and rescaled")
    s.add_argument("dataset")
    estimator(s, "1-10")
    common(s)
    s.set_defaults(func=cmd_seasonal)

    s = sub.add_parser("scaling", help="unicity against subsample size, with fits")
    s.add_argument("dataset")
    s.add_argument("--window", default="all")
    s.add_argument("--sizes", type=_int_list, help="subsample sizes (default: built-in schedule)")
    s.add_argument("--realizations", type=int, help="override realizations per size")
    s.add_argument("--popularity-from", choices=["subsample", "full"], default="subsample")
    s.add_argument("--extrapolate", type=_float_list, help="x values (millions) to extrapolate")
    s.add_argument("--weighted", action="store_true", help="1/std^2 weights in fits")
    estimator(s, "5")
    common(s)
    s.set_defaults(func=cmd_scaling)

    s = sub.add_parser("fit", help="fit functional forms to a scaling report")
    s.add_argument("curve")
    s.add_argument("--forms", default="all")
    s.add_argument("--weighted", action="store_true")
    common(s, seeded=False)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("extrapolate", help="evaluate fitted forms at new sizes")
    s.add_argument("fit")
    s.add_argument("--x", type=_float_list, required=True, help="x values in the fit's unit")
    common(s, seeded=False)
    s.set_defaults(func=cmd_extrapolate)

    s = sub.add_parser("synth", help="generate a synthetic event file")
    s.add_argument("events", help="output event file")
    s.add_argument("--dataset", help="also write a dataset file")
    s.add_argument("--users", type=int, default=10_000)
    s.add_argument("--items", type=int, default=50_000)
    s.add_argument("--periods", type=int, default=12)
    s.add_argument("--alpha", type=float, default=1.5)
    s.add_argument("--mean-items", type=float, default=23.0)
    s.add_argument("--union-target", type=float, default=76.0)
    s.add_argument("--churn", type=float)
    s.add_argument("--min-items", type=int, default=3)
    s.add_argument("--plant", type=int, default=0, help="users to give a private item")
    s.add_argument("--rarity", type=int, default=1)
    common(s)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("stats", help="descriptive tables")
    s.add_argument("dataset")
    s.add_argument("--table", choices=["usage", "drift", "popularity", "categories"],
                   default="usage")
    s.add_argument("--window", default="all")
    s.add_argument("--drift-mode", choices=[m.value for m in DriftMode], default="consecutive")
    s.add_argument("--categories", help="item_id,label file")
    s.add_argument("--weighting", choices=["items", "pairs"], default="items")
    common(s, seeded=False)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    s.add_argument("manifest_file")
    s.set_defaults(func=cmd_rerun)
    return p


def _write_manifest(args, argv, run: _Run, outputs: dict, duration: float):
    path = args.manifest or (f"{args.output}.manifest.json" if args.output else None)
    if not path and args.command == "ingest":
        path = f"{args.dataset}.manifest.json"
    elif not path and args.command == "synth":
        path = f"{args.events}.manifest.json"
    params = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "verbose")}
    manifest = {"subcommand": args.command, "argv": list(argv), "params": params,
                "seed": getattr(args, "seed", None), "inputs": run.inputs, "outputs": outputs,
                "tool_version": __version__, "duration_s": round(duration, 3)}
    text = json.dumps(manifest, indent=2, default=str) + "\n"
    if not path:
        # stdout holds the report, so the manifest goes to stderr
        sys.stderr.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "rerun":
        return cmd_rerun(_Run(args))
    start = time.perf_counter()
    run = _Run(args)
    try:
        text = args.func(run)
    except (FitError, FloatingPointError, ArithmeticError) as exc:
        print(f"unicity: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ScheduleError, ConfigError, KeyError, ValueError, OSError) as exc:
        print(f"unicity: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    outputs = {}
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        outputs[args.output] = file_digest(args.output)
    else:
        sys.stdout.write(text)
    for extra in ("dataset", "events"):
        path = getattr(args, extra, None)
        if args.command in ("ingest", "synth") and path and os.path.exists(path):
            outputs[path] = file_digest(path)
    if args.command == "synth":
        outputs[args.events + ".truth.json"] = file_digest(args.events + ".truth.json")
    _write_manifest(args, argv, run, outputs, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
