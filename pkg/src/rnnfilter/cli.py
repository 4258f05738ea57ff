"""Command-line harness: ``rnnfilter run|sweep|validate``.

Settings come from three layers, later ones winning: built-in defaults, the
JSON file given by ``--config``, then command-line flags (``--seed``,
``--lambda-c``, ``--steps``, ``--out``).

Every run cell writes ``trace.csv``, ``tracks.csv``, ``ospa.csv`` and
``summary.json``; a sweep also writes ``sweep.csv`` with one row per
(lambda_c, seed). Exit codes: 0 success, 1 configuration error, 2 the filter
diverged.
"""
import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rnnfilter.lstm import ConfigError, DivergenceError, TrainConfig
from rnnfilter.ospa import OspaConfig
from rnnfilter.pipeline import TRACK_COLUMNS, run
from rnnfilter.scenario import DEFAULT_SCENARIO, TRACE_COLUMNS, Scenario
from rnnfilter.tracklets import AssociationConfig

DEFAULT_CONFIG = Path(__file__).parent / "data" / "default_config.json"

OSPA_COLUMNS = ("step", "total", "loc", "card")
SWEEP_COLUMNS = (
    "lambda_c", "seed", "scenario_hash", "status",
    "mean_total", "std_total", "mean_loc", "std_loc", "mean_card", "std_card", "message",
)
SUMMARY_STATS = ("mean_total", "std_total", "mean_loc", "std_loc", "mean_card", "std_card")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


@dataclass
class ExperimentConfig:
    scenario: str = str(DEFAULT_SCENARIO)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ospa: OspaConfig = field(default_factory=OspaConfig)
    lambda_c: list = None  # None: use the scenario file's intensity
    seeds: list = field(default_factory=lambda: [0])
    steps: int = None      # None: use the scenario file's length
    out: str = "runs"

    def cells(self, scenario):
        lams = self.lambda_c if self.lambda_c else [scenario.clutter.lambda_c]
        return [(float(lam), int(seed)) for lam in lams for seed in self.seeds]


def _section(cls, raw, name, problems):
    raw = dict(raw or {})
    known = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(set(raw) - known):
        problems.append((f"{name}.{key}", "unknown field"))
        raw.pop(key)
    try:
        return cls(**raw)
    except ConfigError as exc:
        problems.extend((f"{name}.{k}", msg) for k, msg in exc.problems)
    except TypeError as exc:
        problems.append((name, str(exc)))
    return None


def load_config(path=None, seeds=None, lambda_c=None, steps=None, out=None):
    """Build an :class:`ExperimentConfig`; returns ``(config, problems)``.

    ``problems`` is a list of ``(field path, message)``; the config is None
    when any are found.
    """
    problems = []
    path = Path(path) if path else DEFAULT_CONFIG
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return None, [("config", f"cannot read {path}: {exc}")]
    unknown = set(raw) - {"scenario", "association", "train", "ospa", "lambda_c", "seeds", "steps", "out"}
    problems.extend((k, "unknown field") for k in sorted(unknown))

    scen = raw.get("scenario", str(DEFAULT_SCENARIO))
    scen_path = Path(scen) if Path(scen).is_absolute() else (path.parent / scen)
    assoc = _section(AssociationConfig, raw.get("association"), "association", problems)
    train = _section(TrainConfig, raw.get("train"), "train", problems)
    ospa_cfg = _section(OspaConfig, raw.get("ospa"), "ospa", problems)

    lam = lambda_c if lambda_c is not None else raw.get("lambda_c")
    if lam is not None and not isinstance(lam, list):
        lam = [lam]
    if lam is not None:
        if not lam:
            problems.append(("lambda_c", "sweep list is empty"))
        for v in lam:
            if not isinstance(v, (int, float)) or v < 0:
                problems.append(("lambda_c", f"values must be numbers >= 0, got {v!r}"))
    seed_list = seeds if seeds is not None else raw.get("seeds", [0])
    if not isinstance(seed_list, list) or not seed_list:
        problems.append(("seeds", "at least one seed is required"))
    elif not all(isinstance(s, int) and s >= 0 for s in seed_list):
        problems.append(("seeds", f"seeds must be non-negative integers, got {seed_list!r}"))
    n_steps = steps if steps is not None else raw.get("steps")
    if n_steps is not None and (not isinstance(n_steps, int) or n_steps < 1):
        problems.append(("steps", f"must be a positive integer, got {n_steps!r}"))

    try:
        scenario = Scenario.load(scen_path)
        problems.extend((f"scenario.{k}", msg) for k, msg in scenario.check())
    except ConfigError as exc:
        problems.extend((f"scenario.{k}", msg) for k, msg in exc.problems)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        problems.append(("scenario", f"cannot load {scen_path}: {exc}"))

    if problems:
        return None, problems
    cfg = ExperimentConfig(str(scen_path), assoc, train, ospa_cfg, lam, seed_list, n_steps,
                           out if out is not None else raw.get("out", "runs"))
    return cfg, []


def _fmt(v):
    return repr(float(v))


def _write_atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summarize(series):
    """Mean and population standard deviation of each OSPA component."""
    out = {}
    for key in ("total", "loc", "card"):
        arr = np.asarray(series[key], dtype=np.float64)
        out[f"mean_{key}"] = float(np.mean(arr))
        out[f"std_{key}"] = float(np.std(arr))
    return out


def run_cell(cfg, lambda_c, seed, out_dir):
    """Simulate, filter and score one (lambda_c, seed) pair; returns the summary dict."""
    scenario = Scenario.load(cfg.scenario)
    trace = scenario.generate(seed, lambda_c=lambda_c, steps=cfg.steps)
    result = run(trace, cfg.association, cfg.train, seed)
    scores = result.ospa_series(cfg.ospa)
    series = {
        "total": [s.total for s in scores],
        "loc": [s.loc for s in scores],
        "card": [s.card for s in scores],
    }
    summary = {
        "lambda_c": float(lambda_c),
        "seed": int(seed),
        "steps": trace.steps,
        "scenario_hash": scenario.script_hash(),
        "ospa": {"p": cfg.ospa.p, "c": cfg.ospa.c},
        **summarize(series),
        "series": series,
    }

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    trace.write_csv(f"{trace_path}.tmp")
    os.replace(f"{trace_path}.tmp", trace_path)
    track_rows = [
        [k, tid, _fmt(x), _fmt(y), m, _fmt(g), f, est]
        for k, tid, x, y, m, g, f, est in result.tracks
    ]
    _write_atomic(out_dir / "tracks.csv", _csv_text(TRACK_COLUMNS, track_rows))
    ospa_rows = [[frame.step, _fmt(s.total), _fmt(s.loc), _fmt(s.card)]
                 for frame, s in zip(trace.frames, scores)]
    _write_atomic(out_dir / "ospa.csv", _csv_text(OSPA_COLUMNS, ospa_rows))
    _write_atomic(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _cell_dir(cfg, lam, seed, single):
    if single:
        return Path(cfg.out)
    return Path(cfg.out) / f"lambda_{lam:g}_seed_{seed}"


def _safe_cell(args):
    cfg, lam, seed, out_dir = args
    try:
        return run_cell(cfg, lam, seed, out_dir), None
    except DivergenceError as exc:
        return None, str(exc)


def cmd_run(cfg, stream=None):
    stream = stream or sys.stdout
    scenario = Scenario.load(cfg.scenario)
    cells = cfg.cells(scenario)
    status = EXIT_OK
    for lam, seed in cells:
        out_dir = _cell_dir(cfg, lam, seed, len(cells) == 1)
        summary, err = _safe_cell((cfg, lam, seed, out_dir))
        if err:
            print(f"lambda_c={lam:g} seed={seed}: diverged: {err}", file=sys.stderr)
            status = EXIT_DIVERGED
            continue
        print(f"lambda_c={lam:g} seed={seed}: OSPA {summary['mean_total']:.3f} +- {summary['std_total']:.3f} "
              f"(loc {summary['mean_loc']:.3f}, card {summary['mean_card']:.3f}) -> {out_dir}", file=stream)
    return status


def cmd_sweep(cfg, jobs=1, stream=None):
    stream = stream or sys.stdout
    scenario = Scenario.load(cfg.scenario)
    cells = cfg.cells(scenario)
    args = [(cfg, lam, seed, _cell_dir(cfg, lam, seed, False)) for lam, seed in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_cell, args))
    else:
        results = [_safe_cell(a) for a in args]

    rows, status = [], EXIT_OK
    for (lam, seed), (summary, err) in zip(cells, results):
        if err:
            status = EXIT_DIVERGED
            rows.append([_fmt(lam), seed, scenario.script_hash(), "diverged"] + [""] * 6 + [err])
            print(f"lambda_c={lam:g} seed={seed}: diverged: {err}", file=sys.stderr)
            continue
        rows.append([_fmt(lam), seed, summary["scenario_hash"], "ok"]
                    + [_fmt(summary[k]) for k in SUMMARY_STATS] + [""])
        print(f"lambda_c={lam:g} seed={seed}: OSPA {summary['mean_total']:.3f}", file=stream)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    _write_atomic(Path(cfg.out) / "sweep.csv", _csv_text(SWEEP_COLUMNS, rows))
    return status


def effective_table(cfg):
    rows = [("scenario", cfg.scenario)]
    for name in ("association", "train", "ospa"):
        for f in dataclasses.fields(getattr(cfg, name)):
            rows.append((f"{name}.{f.name}", getattr(getattr(cfg, name), f.name)))
    rows += [("lambda_c", cfg.lambda_c if cfg.lambda_c else "(scenario file)"),
             ("seeds", cfg.seeds), ("steps", cfg.steps or "(scenario file)"), ("out", cfg.out)]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def cmd_validate(cfg, problems, stream=None):
    stream = stream or sys.stdout
    if problems:
        print("configuration invalid:", file=stream)
        for key, msg in problems:
            print(f"  {key}: {msg}", file=stream)
        return EXIT_CONFIG
    print(effective_table(cfg), file=stream)
    print("configuration ok", file=stream)
    return EXIT_OK


def _number_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__} values, got {text!r}")
    return parse


def build_parser():
    parser = argparse.ArgumentParser(prog="rnnfilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run one experiment per (lambda_c, seed)"),
                            ("sweep", "run a lambda_c x seed grid and aggregate it"),
                            ("validate", "check a configuration and print the effective settings")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config (default: the bundled one)")
        p.add_argument("--seed", type=_number_list(int), help="seed or comma-separated seeds")
        p.add_argument("--lambda-c", type=_number_list(float), help="clutter intensity or comma-separated list")
        p.add_argument("--steps", type=int, help="number of time steps to simulate")
        p.add_argument("--out", help="output directory")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg, problems = load_config(args.config, args.seed, args.lambda_c, args.steps, args.out)
    if args.command == "validate":
        return cmd_validate(cfg, problems)
    if problems:
        cmd_validate(cfg, problems, stream=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return cmd_run(cfg)
    return cmd_sweep(cfg, jobs=max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
