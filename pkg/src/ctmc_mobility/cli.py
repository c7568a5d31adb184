"""Command-line interface.

Subcommands::

    ctmc-mobility fit         CSV series -> per-site estimation reports and models
    ctmc-mobility indicators  model documents -> indicator time series
    ctmc-mobility validate    model documents -> Monte-Carlo comparison
    ctmc-mobility report      collect per-site results into one table
    ctmc-mobility simulate    model document -> synthetic hourly CSV

Settings come from built-in defaults, then an optional JSON file given by
``--config``, then command-line flags. Exit codes: 0 success, 1 usage,
2 data/model error, 3 numerical failure, 4 validation mismatch.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import __version__
from .core import InitialDistribution, StatePartition, stationary_distribution
from .errors import MobilityError, ModelError, NumericalError
from .estimation import BinningScheme, fit_series
from .io import (
    DataFormatError,
    ModelDocument,
    dump_json,
    read_model,
    read_series_csv,
    series_to_csv,
    series_to_json,
    write_model,
)
from .mobility import asymptotic_indicators, indicator_series, initial_indicator_comparison
from .oracle import empirical_rates, simulate_trajectory, values_from_states

log = logging.getLogger("ctmc_mobility")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL, EXIT_MISMATCH = 0, 1, 2, 3, 4
INDICATORS = ("rof", "ror", "roi", "tmr")

DEFAULTS = {
    "inputs": [],
    "output_dir": "out",
    "seed": 0,
    "working_states": [2, 3, 4, 5, 6, 7, 8],
    "initial_state": "all",
    "asymptotics": True,
    "columns": {"time": "timestamp", "value": "value"},
    "binning": {"bin_width": 2.0, "num_states": 11, "lower_bound": 0.0},
    "filter": {"max_speed": 50.0},
    "sampling": {"dt_hours": 1.0, "daily_breaks": True},
    "embedding": {"logm_method": "auto", "zero_row_policy": "self-loop"},
    "grid": {"start": 0.0, "stop": 72.0, "num": 289, "scale": "linear"},
    "tolerances": {"expm": 1e-12, "generator": 1e-10},
    "validate": {
        "ensemble": 100_000,
        "window": 0.01,
        "grid": {"start": 0.0, "stop": 5.0, "num": 10, "scale": "linear"},
        "reference": None,
        "z_threshold": 5.0,
    },
    "simulate": {"hours": 8760, "start": "2020-01-01T00:00:00", "top_width": 5.0},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"unknown configuration key {where + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where + key + ".")
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    """Defaults overlaid with a JSON configuration file (if given)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        user = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(user, dict):
        raise UsageError(f"{path}: configuration must be a JSON object")
    return _merge(DEFAULTS, user)


def parse_grid(spec) -> dict:
    """``"start:stop:num[:log]"`` (or a dict with the same keys)."""
    if isinstance(spec, dict):
        return spec
    parts = str(spec).split(":")
    if len(parts) not in (3, 4):
        raise UsageError(f"grid spec {spec!r} is not start:stop:num[:linear|log]")
    try:
        d = {"start": float(parts[0]), "stop": float(parts[1]), "num": int(parts[2])}
    except ValueError:
        raise UsageError(f"grid spec {spec!r} has non-numeric fields") from None
    d["scale"] = parts[3] if len(parts) == 4 else "linear"
    return d


def build_grid(spec: dict) -> np.ndarray:
    start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
    scale = spec.get("scale", "linear")
    if num < 1:
        raise UsageError("grid needs at least one point")
    if num == 1:
        grid = np.array([start])
    elif scale == "linear":
        grid = np.linspace(start, stop, num)
    elif scale == "log":
        if start <= 0:
            raise UsageError("a logarithmic grid needs start > 0")
        grid = np.geomspace(start, stop, num)
    else:
        raise UsageError(f"unknown grid scale {scale!r}")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise UsageError("grid must be nonnegative and strictly increasing")
    return grid


def parse_int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _initial_distributions(spec, doc: ModelDocument) -> list:
    """Resolve the initial-distribution spec into ``[(tag, distribution)]``.

    Accepted forms: ``"all"`` (one point mass per state), ``"alpha"`` (the
    model document's vector), ``"stationary"``, a list or comma-separated
    string of states, or an explicit ``"vector:p0,p1,..."`` /
    ``{"vector": [...]}``.
    """
    s = doc.generator.size
    if isinstance(spec, dict) or (isinstance(spec, str) and spec.startswith("vector:")):
        raw = spec["vector"] if isinstance(spec, dict) else spec[len("vector:"):].split(",")
        try:
            probs = np.array([float(x) for x in raw])
        except (TypeError, ValueError):
            raise UsageError(f"bad initial vector {raw!r}") from None
        return [("custom", InitialDistribution(probs))]
    if spec == "all":
        return [(f"init{k}", InitialDistribution.point_mass(s, k)) for k in range(s)]
    if spec == "alpha":
        return [("alpha", doc.alpha)]
    if spec == "stationary":
        return [("stationary", InitialDistribution(stationary_distribution(doc.generator)))]
    states = parse_int_list(spec)
    if not states or min(states) < 0 or max(states) >= s:
        raise UsageError(f"initial states {spec!r} must lie in 0..{s - 1}")
    return [(f"init{k}", InitialDistribution.point_mass(s, k)) for k in states]


def _site_name(path: Path) -> str:
    return path.stem


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _error_code(exc: BaseException) -> int:
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_DATA


def _load_doc(path, cfg, working_override) -> ModelDocument:
    from .core import validate_generator

    path = Path(path)
    doc = read_model(path)
    g = validate_generator(doc.generator.rates, cfg["tolerances"]["generator"])
    part = doc.partition
    if working_override is not None:
        part = StatePartition.from_working(working_override, g.size)
    return ModelDocument(g, doc.alpha, part, doc.labels, doc.name or _site_name(path))


def cmd_fit(cfg: dict, working_override=None) -> int:
    out = Path(cfg["output_dir"])
    scheme = BinningScheme(**cfg["binning"])
    working = working_override if working_override is not None else cfg["working_states"]
    rows, worst = [], EXIT_OK
    sites = sorted((Path(p) for p in cfg["inputs"]), key=_site_name)
    if not sites:
        raise UsageError("fit needs at least one --input CSV")
    for path in sites:
        site = _site_name(path)
        try:
            raw = read_series_csv(path, cfg["columns"]["time"], cfg["columns"]["value"])
            est = fit_series(
                raw.values,
                raw.timestamps,
                scheme=scheme,
                max_speed=cfg["filter"]["max_speed"],
                dt_hours=cfg["sampling"]["dt_hours"],
                daily_breaks=cfg["sampling"]["daily_breaks"],
                zero_row_policy=cfg["embedding"]["zero_row_policy"],
                logm_method=cfg["embedding"]["logm_method"],
            )
            part = StatePartition.from_working([w for w in working if w < scheme.num_states], scheme.num_states)
            doc = ModelDocument(
                est.embedding.generator,
                InitialDistribution(est.occupancy),
                part,
                labels=tuple(f"[{e:g},{e + scheme.bin_width:g})" for e in scheme.edges()[:-1])
                + (f"[{scheme.edges()[-1]:g},inf)",),
                name=site,
            )
        except (MobilityError, OSError) as exc:
            worst = max(worst, _error_code(exc))
            log.error("%s: %s: %s", site, type(exc).__name__, exc)
            rows.append({"site": site, "status": f"{type(exc).__name__}: {exc}"})
            continue
        report = est.report()
        report["site"] = site
        report["model_fingerprint"] = doc.fingerprint
        _write(out / site / "report.json", dump_json(report))
        write_model_path = out / site / "model.json"
        write_model_path.parent.mkdir(parents=True, exist_ok=True)
        write_model(write_model_path, doc)
        w = est.weibull
        rows.append(
            {
                "site": site,
                "status": "ok",
                "lambda": w.scale_lambda if w else "",
                "k": w.shape_k if w else "",
                "n": est.counts.total_observations,
                "dropped_outliers": est.dropped_outliers,
                "negativity_mass": est.embedding.negativity_mass,
                "reconstruction_error": est.embedding.reconstruction_error,
            }
        )
        log.info("%s: fitted %d observations", site, est.counts.total_observations)
    _write(out / "summary.csv", _table_csv(rows, ["site", "status", "lambda", "k", "n", "dropped_outliers",
                                                  "negativity_mass", "reconstruction_error"]))
    return worst


def _table_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_indicators(cfg: dict, working_override=None) -> int:
    out = Path(cfg["output_dir"])
    grid = build_grid(parse_grid(cfg["grid"]))
    tol = cfg["tolerances"]["expm"]
    if not cfg["inputs"]:
        raise UsageError("indicators needs at least one --input model document")
    worst = EXIT_OK
    for path in sorted((Path(p) for p in cfg["inputs"]), key=_site_name):
        doc = _load_doc(path, cfg, working_override)
        site = doc.name
        g, part = doc.generator, doc.partition
        summary = {"site": site, "model_fingerprint": doc.fingerprint, "grid": grid.tolist(), "initial": {}}
        for tag, alpha in _initial_distributions(cfg["initial_state"], doc):
            series = indicator_series(g, alpha, part, grid, tol=tol)
            fp = ModelDocument(g, alpha, part, doc.labels).fingerprint
            _write(out / site / f"indicators_{tag}.csv", series_to_csv(series))
            _write(out / site / f"indicators_{tag}.json", series_to_json(series, fp, {"site": site, "initial": tag}))
            summary["initial"][tag] = initial_indicator_comparison(g, alpha, part).as_dict()
        if cfg["asymptotics"]:
            try:
                summary["asymptotic"] = asymptotic_indicators(g, part).as_dict()
            except MobilityError as exc:
                summary["asymptotic"] = None
                summary["asymptotic_error"] = f"{type(exc).__name__}: {exc}"
                log.error("%s: %s", site, summary["asymptotic_error"])
                worst = max(worst, _error_code(exc))
        _write(out / site / "indicators_summary.json", dump_json(summary))
        log.info("%s: indicators on %d grid points", site, grid.size)
    return worst


def cmd_validate(cfg: dict, working_override=None) -> int:
    out = Path(cfg["output_dir"])
    vcfg = cfg["validate"]
    grid = build_grid(parse_grid(vcfg["grid"]))
    if not cfg["inputs"]:
        raise UsageError("validate needs at least one --input model document")
    worst = EXIT_OK
    for path in sorted((Path(p) for p in cfg["inputs"]), key=_site_name):
        doc = _load_doc(path, cfg, working_override)
        ref = _load_doc(vcfg["reference"], cfg, working_override) if vcfg["reference"] else doc
        if ref.generator.size != doc.generator.size:
            raise ModelError("reference model has a different number of states")
        site = doc.name
        closed = indicator_series(ref.generator, doc.alpha, doc.partition, grid, tol=cfg["tolerances"]["expm"])
        emp = empirical_rates(
            doc.generator, doc.alpha, doc.partition, grid,
            ensemble_size=int(vcfg["ensemble"]), window=float(vcfg["window"]), seed=int(cfg["seed"]),
        )
        rows, zmax, within = [], 0.0, 0
        for name in INDICATORS:
            exact, est, se = getattr(closed, name), emp.estimate(name), emp.standard_error(name)
            for k, t in enumerate(grid):
                z = _z_score(est[k], exact[k], se[k])
                zmax = max(zmax, abs(z))
                within += abs(z) <= 3
                rows.append({"t": float(t), "indicator": name, "closed_form": float(exact[k]),
                             "estimate": float(est[k]), "se": float(se[k]), "z": z})
        _write(out / site / "validate.csv", _table_csv(rows, ["t", "indicator", "closed_form", "estimate", "se", "z"]))
        _write(out / site / "empirical.csv", _empirical_csv(emp))
        ok = zmax <= float(vcfg["z_threshold"])
        summary = {
            "site": site,
            "model_fingerprint": doc.fingerprint,
            "reference_fingerprint": ModelDocument(ref.generator, doc.alpha, doc.partition).fingerprint,
            "ensemble": emp.ensemble_size,
            "window": emp.window,
            "seed": int(cfg["seed"]),
            "max_abs_z": zmax,
            "fraction_within_3se": within / len(rows),
            "passed": ok,
        }
        _write(out / site / "validate_summary.json", dump_json(summary))
        log.info("%s: max |z| = %.2f", site, zmax)
        if not ok:
            worst = EXIT_MISMATCH
    return worst


def _z_score(estimate: float, exact: float, se: float) -> float:
    diff = float(estimate) - float(exact)
    if se > 0:
        return diff / float(se)
    # no observed events: exact agreement only if the closed form is ~0 too
    return 0.0 if abs(diff) <= 1e-12 else float("inf") if diff > 0 else float("-inf")


def _empirical_csv(emp) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t"]
    for name in INDICATORS:
        header += [f"{name}_hat", f"{name}_se"]
    w.writerow(header)
    for k, t in enumerate(emp.grid):
        row = [repr(float(t))]
        for name in INDICATORS:
            row += [repr(float(emp.estimate(name)[k])), repr(float(emp.standard_error(name)[k]))]
        w.writerow(row)
    return buf.getvalue()


def cmd_report(cfg: dict, working_override=None) -> int:
    roots = [Path(p) for p in cfg["inputs"]] or [Path(cfg["output_dir"])]
    rows = []
    for root in roots:
        for site_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            row = {"site": site_dir.name}
            rep = site_dir / "report.json"
            if rep.exists():
                w = json.loads(rep.read_text()).get("weibull", {})
                row["lambda"] = w.get("scale_lambda", "")
                row["k"] = w.get("shape_k", "")
            summ = site_dir / "indicators_summary.json"
            if summ.exists():
                asym = json.loads(summ.read_text()).get("asymptotic") or {}
                for key in ("rof_inf", "ror_inf", "roi_inf", "tmr_inf", "availability_inf"):
                    row[key] = asym.get(key, "")
            if len(row) > 1:
                rows.append(row)
    columns = ["site", "lambda", "k", "rof_inf", "ror_inf", "roi_inf", "tmr_inf", "availability_inf"]
    text = _table_csv(rows, columns)
    _write(Path(cfg["output_dir"]) / "report.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(cfg: dict, working_override=None) -> int:
    """Sample a model's path every ``dt_hours`` and write it as a raw series."""
    scfg = cfg["simulate"]
    scheme = BinningScheme(**cfg["binning"])
    dt = float(cfg["sampling"]["dt_hours"])
    if not cfg["inputs"]:
        raise UsageError("simulate needs an --input model document")
    out = Path(cfg["output_dir"])
    for path in sorted((Path(p) for p in cfg["inputs"]), key=_site_name):
        doc = _load_doc(path, cfg, working_override)
        if doc.generator.size != scheme.num_states:
            raise ModelError(f"model has {doc.generator.size} states, binning has {scheme.num_states}")
        n = int(scfg["hours"])
        times = np.arange(n) * dt
        traj = simulate_trajectory(doc.generator, doc.alpha, times[-1] + dt, seed=int(cfg["seed"]))
        rng = np.random.default_rng(np.random.SeedSequence(int(cfg["seed"])).spawn(1)[0])
        values = values_from_states(traj.state_at(times), scheme, rng, top_width=scfg["top_width"])
        start = datetime.fromisoformat(scfg["start"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([cfg["columns"]["time"], cfg["columns"]["value"]])
        for h, v in zip(times, values):
            w.writerow([(start + timedelta(hours=float(h))).isoformat(), f"{v:.4f}"])
        _write(out / f"{doc.name}.csv", buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "indicators": cmd_indicators,
    "validate": cmd_validate,
    "report": cmd_report,
    "simulate": cmd_simulate,
}


HELP = {
    "fit": "estimate a generator and Weibull fit from each CSV series",
    "indicators": "evaluate rof/ror/roi/tmr on a time grid for each model document",
    "validate": "compare closed-form indicators with Monte-Carlo estimates",
    "report": "collect per-site results into report.csv",
    "simulate": "write a synthetic hourly CSV series from a model document",
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctmc-mobility", description="Mobility indicators for Markov reliability models.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--input", action="append", dest="inputs", metavar="PATH",
                        help="input file (repeatable)")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--working-states", help="comma-separated working state indices")
        sp.add_argument("--grid", help="start:stop:num[:linear|log]")
        sp.add_argument("--initial-state", help="'all', 'alpha', 'stationary', comma-separated states or 'vector:p0,p1,...'")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "validate":
            sp.add_argument("--ensemble", type=int)
            sp.add_argument("--window", type=float)
            sp.add_argument("--reference", help="model whose closed forms are compared")
        if name == "indicators":
            sp.add_argument("--no-asymptotics", action="store_true")
        if name == "simulate":
            sp.add_argument("--hours", type=int)
    return p


def resolve_config(args) -> tuple:
    cfg = load_config(args.config)
    if args.inputs:
        cfg["inputs"] = args.inputs
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.initial_state:
        cfg["initial_state"] = args.initial_state
    working = parse_int_list(args.working_states) if args.working_states else None
    if args.grid:
        target = cfg["validate"] if args.command == "validate" else cfg
        target["grid"] = parse_grid(args.grid)
    if args.command == "validate":
        for key in ("ensemble", "window", "reference"):
            if getattr(args, key) is not None:
                cfg["validate"][key] = getattr(args, key)
    if args.command == "indicators" and args.no_asymptotics:
        cfg["asymptotics"] = False
    if args.command == "simulate" and args.hours is not None:
        cfg["simulate"]["hours"] = args.hours
    return cfg, working


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg, working = resolve_config(args)
        return COMMANDS[args.command](cfg, working)
    except UsageError as exc:
        print(f"ctmc-mobility: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, ModelError, OSError) as exc:
        print(f"ctmc-mobility: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"ctmc-mobility: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
