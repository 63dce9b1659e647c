"""Command-line entry point.

    gradharmony train CONFIG.json [--parallel]
    gradharmony harmonize PAIR.json --method gh [--lambda 0.5]
    gradharmony analyze TRACE.jsonl --bins 20 [--method gh]

Exit codes: 0 success, 2 usage or input error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from . import __version__
from .analysis import GradientTrace, TraceEntry, histogram, load_trace, post_harmonization_trace, write_trace
from .harmonizer import DEFAULT_LAMBDA, GradientPair, HarmonizeMethod, harmonize
from .scenario import Dataset, load_csv, make_blobs, write_csv
from .trainer import TrainConfig, TrainingAborted, TrainReport, stream_seed, train
from .vecmath import DegenerateInputError, DimensionError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


SCENARIO_KEYS = {"num_classes", "per_class", "input_dim", "rotation", "translation", "noise_sigma"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"method", "seed"}
TOP_KEYS = {"seed", "output_dir", "methods", "lambda", "scenario", "csv", "train", "save_gradients"}


@dataclass
class RunConfig:
    seed: int
    output_dir: Path
    methods: list[HarmonizeMethod]
    scenario: dict[str, Any]
    csv: Path | None
    train: dict[str, Any]
    save_gradients: bool = False

    def train_config(self, method: HarmonizeMethod) -> TrainConfig:
        return TrainConfig(method=method, seed=self.seed, keep_gradients=self.save_gradients, **self.train)

    def dataset(self) -> Dataset:
        if self.csv is not None:
            return load_csv(self.csv)
        return make_blobs(stream_seed(self.seed, "data"), **self.scenario)


def _parse_method(spec: Any, default_lam: float, where: str) -> HarmonizeMethod:
    if isinstance(spec, str):
        name, lam = spec, default_lam
    elif isinstance(spec, dict) and isinstance(spec.get("name"), str):
        extra = set(spec) - {"name", "lambda"}
        if extra:
            raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
        name, lam = spec["name"], spec.get("lambda", default_lam)
    else:
        raise ConfigError(f"{where}: expected a method name or {{'name': ..., 'lambda': ...}}")
    try:
        return HarmonizeMethod.parse(name, lam)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_run_config(raw: Any, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    if "output_dir" not in raw:
        raise ConfigError("output_dir: required")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: must be a non-negative integer")
    lam = raw.get("lambda", DEFAULT_LAMBDA)
    methods_raw = raw.get("methods", ["none", "gh"])
    if not isinstance(methods_raw, list) or not methods_raw:
        raise ConfigError("methods: must be a non-empty list")
    methods = [_parse_method(m, lam, f"methods[{i}]") for i, m in enumerate(methods_raw)]
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError("methods: duplicate entries")

    scenario = raw.get("scenario", {})
    if not isinstance(scenario, dict) or set(scenario) - SCENARIO_KEYS:
        raise ConfigError(f"scenario: unknown field(s) {sorted(set(scenario) - SCENARIO_KEYS) if isinstance(scenario, dict) else scenario!r}")
    csv_path = raw.get("csv")
    if csv_path is not None:
        if scenario:
            raise ConfigError("csv: give either 'csv' or 'scenario', not both")
        csv_path = (base_dir / csv_path) if not Path(csv_path).is_absolute() else Path(csv_path)

    train_cfg = raw.get("train", {})
    if not isinstance(train_cfg, dict) or set(train_cfg) - TRAIN_KEYS:
        bad = sorted(set(train_cfg) - TRAIN_KEYS) if isinstance(train_cfg, dict) else train_cfg
        raise ConfigError(f"train: unknown field(s) {bad}")
    out_dir = Path(raw["output_dir"])
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    rc = RunConfig(seed, out_dir, methods, scenario, csv_path, dict(train_cfg), bool(raw.get("save_gradients", False)))
    try:
        for m in methods:
            rc.train_config(m)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from None
    return rc


def _file_label(method: HarmonizeMethod) -> str:
    return method.label.replace("@", "_")


def _write_report(rc: RunConfig, report: TrainReport) -> dict:
    label = _file_label(report.method)
    report.write_jsonl(rc.output_dir / f"report_{label}.jsonl")
    if rc.save_gradients:
        trace = GradientTrace.from_pairs(report.gradients)
    else:
        trace = GradientTrace(tuple(TraceEntry(r.iter, r.inner_product) for r in report.records))
    write_trace(trace, rc.output_dir / f"trace_{label}.jsonl")
    return report.summary()


def cmd_train(config_path: str | Path, parallel: bool = False) -> int:
    config_path = Path(config_path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
        rc = parse_run_config(raw, config_path.parent)
        data = rc.dataset()
        rc.output_dir.mkdir(parents=True, exist_ok=True)
    except (OSError, json.JSONDecodeError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    write_csv(data, rc.output_dir / "dataset.csv")
    cfgs = [rc.train_config(m) for m in rc.methods]
    try:
        if parallel and len(cfgs) > 1:
            with ThreadPoolExecutor(max_workers=len(cfgs)) as pool:
                reports = list(pool.map(lambda c: train(c, data), cfgs))
        else:
            reports = [train(c, data) for c in cfgs]
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    summary = {
        "seed": rc.seed,
        "dataset": data.meta,
        "train": {k: (v.value if hasattr(v, "value") else v) for k, v in rc.train.items()},
        "runs": [_write_report(rc, r) for r in reports],
    }
    (rc.output_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_harmonize(input_path: str | Path, method: str, lam: float = DEFAULT_LAMBDA) -> int:
    try:
        raw = json.loads(Path(input_path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict) or "g1" not in raw or "g2" not in raw:
            raise ValueError("input must be a JSON object with 'g1' and 'g2'")
        m = HarmonizeMethod.parse(method, lam)
        result = harmonize(m, GradientPair(raw["g1"], raw["g2"]))
    except (OSError, json.JSONDecodeError, DimensionError, DegenerateInputError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


def cmd_analyze(trace_path: str | Path, bins: int = 20, method: str | None = None,
                lam: float = DEFAULT_LAMBDA, csv_path: str | Path | None = None) -> int:
    try:
        trace = load_trace(trace_path)
        out = {"histogram": histogram(trace, bins).to_dict()}
        if method is not None:
            replay = post_harmonization_trace(trace, HarmonizeMethod.parse(method, lam))
            out["method"] = method
            out["post_harmonization"] = histogram(replay, bins).to_dict()
        if csv_path is not None:
            histogram(trace, bins).write_csv(csv_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _lambda(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError("lambda must be finite")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradharmony", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one or more methods on a scenario from a JSON config")
    p.add_argument("config")
    p.add_argument("--parallel", action="store_true", help="train methods concurrently")

    p = sub.add_parser("harmonize", help="harmonize a single gradient pair")
    p.add_argument("pair")
    p.add_argument("--method", required=True)
    p.add_argument("--lambda", dest="lam", type=_lambda, default=DEFAULT_LAMBDA)

    p = sub.add_parser("analyze", help="inner-product histogram of a gradient trace")
    p.add_argument("trace")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--method")
    p.add_argument("--lambda", dest="lam", type=_lambda, default=DEFAULT_LAMBDA)
    p.add_argument("--csv", help="also write the raw histogram as CSV")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        return cmd_train(args.config, args.parallel)
    if args.command == "harmonize":
        return cmd_harmonize(args.pair, args.method, args.lam)
    return cmd_analyze(args.trace, args.bins, args.method, args.lam, args.csv)


if __name__ == "__main__":
    sys.exit(main())
