"""Command-line entry point: ingest, adapt, detect, eval, sweep, sim.

Settings resolve as flags > ``SEIZKNN_*`` environment > ``--config`` file >
built-in defaults. The effective settings, each tagged with its source, are
written to stderr before a subcommand runs.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import make_surrogate, write_csv
from .detector import Detector, DetectorConfig, encode_frame
from .evaluation import Evaluator, build_store, sweep
from .exceptions import ConfigError, DataError, NotTrained, SeizknnError
from .knn_core import QFormat
from .model_store import memory_footprint, restore, snapshot
from .pipeline_sim import (
    DEFAULT_CLOCK_HZ,
    StageCostModel,
    reports_to_csv,
    simulate_classification,
    sweep_design_space,
)
from .signal import FilterSpec, load_dataset, load_raw

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
ENV_PREFIX = "SEIZKNN_"
REFERENCE_ACCURACY = 0.945


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _features(text: str) -> str:
    if text not in ("raw", "bands"):
        raise argparse.ArgumentTypeError("features must be 'raw' or 'bands'")
    return text


@dataclass(frozen=True)
class Setting:
    key: str
    default: object
    parse: object
    help: str

    @property
    def env(self) -> str:
        return ENV_PREFIX + self.key.replace(".", "_").upper()

    @property
    def dest(self) -> str:
        return self.key.replace(".", "_")


SETTINGS = {
    s.key: s
    for s in (
        Setting("sample_rate_hz", 178.0, float, "sampling rate in Hz"),
        Setting("window_len", 178, int, "samples per window"),
        Setting("filter.cutoff_hz", 40.0, float, "low-pass cutoff in Hz"),
        Setting("filter.order", 4, int, "low-pass order (positive, even)"),
        Setting("features", "raw", _features, "feature mode: raw | bands"),
        Setting("q_format", "13.3", str, "fixed-point format integer_bits.fraction_bits"),
        Setting("k", 3, int, "neighbours consulted (odd)"),
        Setting("alpha", 30, int, "exemplars kept per class"),
        Setting("threshold", Fraction(1, 2), _fraction, "minimum seizure vote share"),
        Setting("model_path", "model.knn", str, "model snapshot path"),
        Setting("seed", 0, int, "base random seed"),
        Setting("trials", 100, int, "evaluation trials"),
    )
}

_COMMON = ("sample_rate_hz", "window_len", "filter.cutoff_hz", "filter.order", "features", "q_format")
_FLAG_NAMES = {
    "filter.cutoff_hz": "--cutoff-hz",
    "filter.order": "--filter-order",
    "model_path": "--model",
}


def _flag(key: str) -> str:
    return _FLAG_NAMES.get(key, "--" + key.replace("_", "-"))


def _add_setting(parser: argparse.ArgumentParser, key: str) -> None:
    s = SETTINGS[key]
    default = str(s.default) if isinstance(s.default, Fraction) else s.default
    parser.add_argument(
        _flag(key), dest=s.dest, type=s.parse, default=None,
        help=f"{s.help} (default: {default}; env {s.env})",
    )


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in SETTINGS:
            raise ConfigError(f"{path}:{lineno}: unknown or malformed entry {line!r}")
        out[key] = value.strip()
    return out


def resolve_settings(args: argparse.Namespace, keys) -> dict[str, tuple[object, str]]:
    """Map each key to ``(value, source)`` by precedence."""
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key in keys:
        s = SETTINGS[key]
        flag_value = getattr(args, s.dest, None)
        try:
            if flag_value is not None:
                resolved[key] = (flag_value, "flag")
            elif s.env in os.environ:
                resolved[key] = (s.parse(os.environ[s.env]), "env")
            elif key in file_values:
                resolved[key] = (s.parse(file_values[key]), "config")
            else:
                resolved[key] = (s.default, "default")
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return resolved


def _jsonable(value):
    if isinstance(value, Fraction):
        return float(value)
    return value


def _announce(resolved, args) -> bool:
    """Report effective settings. Returns True when the run should stop here."""
    if getattr(args, "print_config", False):
        payload = {k: {"value": _jsonable(v), "source": src} for k, (v, src) in resolved.items()}
        print(json.dumps(payload, indent=2, sort_keys=True))
        return True
    for key, (value, source) in resolved.items():
        print(f"# {key} = {value} ({source})", file=sys.stderr)
    return False


def _detector_config(values: dict) -> DetectorConfig:
    fs = float(values["sample_rate_hz"])
    return DetectorConfig(
        k=values.get("k", 3),
        alpha=values.get("alpha", 30),
        window_len=values["window_len"],
        sample_rate_hz=fs,
        filter=FilterSpec(values["filter.cutoff_hz"], values["filter.order"], fs),
        q_format=QFormat.parse(values["q_format"]),
        threshold_confidence=values.get("threshold", Fraction(1, 2)),
        features=values["features"],
    ).validate()


def _load(path, values, fmt: str = "csv", source_class: int = 1):
    if fmt == "raw":
        return load_raw(path, source_class, values["window_len"], values["sample_rate_hz"])
    return load_dataset(path, values["window_len"], values["sample_rate_hz"])


def _write_or_print(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --- subcommands -------------------------------------------------------------


def cmd_ingest(args, values) -> int:
    dataset = _load(args.data, values, args.format, args.source_class)
    amps = np.concatenate([lw.window.samples for lw in dataset]) if dataset else np.zeros(1)
    classes = {str(c): sum(1 for lw in dataset if lw.source_class == c) for c in range(1, 6)}
    summary = {
        "path": str(args.data),
        "windows": len(dataset),
        "window_len": values["window_len"],
        "seizure": sum(1 for lw in dataset if lw.binary_label == 1),
        "nonseizure": sum(1 for lw in dataset if lw.binary_label == 0),
        "source_classes": classes,
        "min_uv": float(amps.min()),
        "max_uv": float(amps.max()),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_adapt(args, values) -> int:
    config = _detector_config(values)
    dataset = _load(args.data, values, args.format, args.source_class)
    start = time.perf_counter()
    store = build_store(dataset, config, None if args.all else values["seed"])
    duration = time.perf_counter() - start
    path = snapshot(store, values["model_path"])
    report = memory_footprint(store)
    print(json.dumps({
        "model_path": str(path),
        "entries": len(store),
        "alpha": store.alpha,
        "n": store.n,
        "q_format": str(store.q_format),
        "adapt_seconds": duration,
        "memory": {
            "vector_bytes": report.vector_bytes,
            "label_bytes": report.label_bytes,
            "index_bytes": report.index_bytes,
            "total_bytes": report.total_bytes,
            "fits_budget": report.fits_budget,
        },
    }, indent=2))
    return EXIT_OK


def _sample_stream(args, values):
    """Yield chunks of samples from a CSV, raw text file, or stdin."""
    if args.input == "-":
        for line in sys.stdin:
            parts = line.replace(",", " ").split()
            if parts:
                try:
                    yield [float(p) for p in parts]
                except ValueError:
                    raise DataError(f"non-numeric input line {line.strip()!r}") from None
        return
    for lw in _load(args.input, values, args.format, args.source_class):
        yield lw.window.samples


def cmd_detect(args, values) -> int:
    store = restore(values["model_path"])
    config = _detector_config({**values, "alpha": store.alpha})
    if store.n != config.feature_len or store.q_format != config.q_format:
        raise DataError(
            f"model (n={store.n}, q={store.q_format}) does not match settings "
            f"(n={config.feature_len}, q={config.q_format})"
        )
    detector = Detector(store, config)
    binary = bool(args.emit) and args.emit.endswith(".bin")
    out = open(args.emit, "wb" if binary else "w", encoding=None if binary else "utf-8") if args.emit else sys.stdout
    try:
        for chunk in _sample_stream(args, values):
            for event in detector.push_samples(chunk):
                if binary:
                    out.write(encode_frame(event))
                else:
                    out.write(json.dumps(event.to_json(not args.omit_latency)) + "\n")
    finally:
        if args.emit:
            out.close()
    if detector.pending:
        print(f"# {detector.pending} trailing samples did not fill a window", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args, values) -> int:
    config = _detector_config(values)
    evaluator = Evaluator(_load(args.data, values))
    summary = evaluator.trials(config, values["trials"], values["seed"], shuffle_labels=args.shuffle_labels)
    payload = summary.to_json(REFERENCE_ACCURACY)
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(
            f"trials={payload['n_trials']} mean_accuracy={payload['mean_accuracy']:.4f} "
            f"std={payload['std_accuracy']:.4f} sensitivity={payload['mean_sensitivity']} "
            f"specificity={payload['mean_specificity']} reference={REFERENCE_ACCURACY}"
        )
    return EXIT_OK


def cmd_sweep(args, values) -> int:
    config = _detector_config(values)
    grid = sweep(
        _load(args.data, values), args.k_values, args.alpha_values,
        values["trials"], values["seed"], config, n_jobs=args.threads,
    )
    grid.write_csv(args.out, args.agg_out)
    best = grid.best_cell()
    summary = {"trial_rows": len(grid.trial_rows), "aggregate_rows": len(grid.aggregate_rows),
               "best": {"k": best[0], "alpha": best[1], "mean": best[2], "std": best[3]}}
    try:
        ref = grid.cell(3, 30)
        summary["k3_alpha30"] = {"mean": ref[2], "std": ref[3], "delta_vs_best": ref[2] - best[2]}
    except KeyError:
        pass
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_sim(args, values) -> int:
    model = StageCostModel.from_pairs(args.costs or [])
    n = args.n if args.n is not None else values["window_len"]
    fs = values["sample_rate_hz"]
    if args.sweep:
        reports = sweep_design_space(args.m, args.k, n, model, args.clock_hz, fs)
    else:
        if len(args.m) != 1 or len(args.k) != 1:
            raise UsageError("pass single --m/--k values, or add --sweep")
        reports = [simulate_classification(args.m[0], n, args.k[0], model, args.clock_hz, fs)]
    if args.json:
        text = json.dumps([r.to_json() for r in reports], indent=2) + "\n"
    else:
        text = reports_to_csv(reports)
    _write_or_print(text, args.out)
    return EXIT_OK


def cmd_surrogate(args, values) -> int:
    dataset = make_surrogate(args.per_class, values["seed"], values["window_len"], values["sample_rate_hz"])
    write_csv(dataset, args.out)
    print(json.dumps({"path": args.out, "windows": len(dataset), "synthetic": True}))
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seizknn", description="Streaming kNN EEG seizure detection toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text, keys, func):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="key=value settings file (default: none)")
        p.add_argument("--print-config", action="store_true",
                       help="print effective settings as JSON and exit (default: off)")
        for key in keys:
            _add_setting(p, key)
        p.set_defaults(func=func, keys=keys)
        return p

    def data_flags(p, required=True):
        p.add_argument("--data", required=required, help="dataset path (default: required)")
        p.add_argument("--format", choices=("csv", "raw"), default="csv",
                       help="input layout (default: csv)")
        p.add_argument("--source-class", type=int, default=1,
                       help="class 1..5 assigned to raw-format windows (default: 1)")

    p = command("ingest", "Validate and summarise a dataset.", _COMMON, cmd_ingest)
    data_flags(p)

    p = command("adapt", "Build a model from labelled windows and snapshot it.",
                _COMMON + ("k", "alpha", "seed", "model_path"), cmd_adapt)
    data_flags(p)
    p.add_argument("--all", action="store_true",
                   help="insert every window in file order instead of a seeded alpha-per-class draw (default: off)")

    p = command("detect", "Stream samples through a saved model.",
                _COMMON + ("k", "threshold", "model_path"), cmd_detect)
    p.add_argument("--input", required=True, help="csv/raw file, or - for stdin (default: required)")
    p.add_argument("--format", choices=("csv", "raw"), default="csv", help="input file layout (default: csv)")
    p.add_argument("--source-class", type=int, default=1, help="class for raw input windows (default: 1)")
    p.add_argument("--emit", default=None,
                   help="events.jsonl or frames.bin output (default: JSON lines on stdout)")
    p.add_argument("--omit-latency", action="store_true",
                   help="drop measured latency from JSON events for reproducible output (default: off)")

    p = command("eval", "Repeated stratified train/test evaluation.",
                _COMMON + ("k", "alpha", "threshold", "seed", "trials"), cmd_eval)
    p.add_argument("--data", required=True, help="dataset CSV (default: required)")
    p.add_argument("--json", action="store_true", help="emit the full report as JSON (default: off)")
    p.add_argument("--shuffle-labels", action="store_true",
                   help="train on permuted labels as a leakage control (default: off)")

    p = command("sweep", "Accuracy over a k x alpha grid.",
                _COMMON + ("threshold", "seed", "trials"), cmd_sweep)
    p.add_argument("--data", required=True, help="dataset CSV (default: required)")
    p.add_argument("--k-values", type=_int_list, default=[1, 3, 5, 7], help="k grid (default: 1,3,5,7)")
    p.add_argument("--alpha-values", type=_int_list, default=[10, 20, 30, 50],
                   help="alpha grid (default: 10,20,30,50)")
    p.add_argument("--out", default="sweep_trials.csv", help="trial rows CSV (default: sweep_trials.csv)")
    p.add_argument("--agg-out", default="sweep_aggregate.csv",
                   help="aggregate rows CSV (default: sweep_aggregate.csv)")
    p.add_argument("--threads", type=int, default=1, help="parallel workers (default: 1)")

    p = command("sim", "Cycle-approximate datapath cost model.", ("sample_rate_hz", "window_len"), cmd_sim)
    p.add_argument("--m", type=_int_list, default=[60], help="stored exemplars; comma list with --sweep (default: 60)")
    p.add_argument("--k", type=_int_list, default=[3], help="neighbours; comma list with --sweep (default: 3)")
    p.add_argument("--n", type=int, default=None, help="feature length (default: window_len)")
    p.add_argument("--clock-hz", type=float, default=float(DEFAULT_CLOCK_HZ),
                   help=f"clock frequency (default: {DEFAULT_CLOCK_HZ})")
    p.add_argument("--costs", nargs="*", default=None, metavar="KEY=VALUE",
                   help="stage cost overrides, e.g. cycles_per_mac=2 (default: unit costs, overhead 10)")
    p.add_argument("--sweep", action="store_true", help="evaluate every (m, k) pair (default: off)")
    p.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV (default: off)")

    p = command("surrogate", "Write a synthetic Bonn-layout CSV for offline testing.",
                ("sample_rate_hz", "window_len", "seed"), cmd_surrogate)
    p.add_argument("--out", required=True, help="output CSV path (default: required)")
    p.add_argument("--per-class", type=int, default=200, help="windows per source class (default: 200)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        resolved = resolve_settings(args, args.keys)
        if _announce(resolved, args):
            return EXIT_OK
        values = {k: v for k, (v, _src) in resolved.items()}
        return args.func(args, values)
    except (UsageError, ConfigError) as exc:
        print(f"seizknn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NotTrained, OSError) as exc:
        print(f"seizknn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AssertionError, SeizknnError) as exc:
        print(f"seizknn: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
