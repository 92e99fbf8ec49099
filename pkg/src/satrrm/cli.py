"""Batch front-end: ``satrrm gen|label|train|eval|oracle-check``.

Every command reads a JSON run manifest. Intermediate products live in the
manifest's output directory:

    demands.csv          gen
    labels.csv           label
    model_<head>.json    train
    history_<head>.csv   train
    report_<head>.json   eval (plus classes_<head>.csv and beams_<head>.csv)

Grids are never stored; train and eval regenerate them from the demand seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .demand import DemandModelParams, default_demand_params, generate_demands, read_demands, write_demands
from .metrics import MetricsReport, evaluate, write_beam_csv, write_class_csv, write_report
from .ml.network import CLASSIFICATION, REGRESSION
from .ml.training import (
    ModelFormatError,
    TrainConfig,
    fit_model,
    load_model,
    save_model,
    split_indices,
    write_history,
)
from .optimizer import (
    InfeasibleScenarioError,
    LabeledSet,
    SystemScenario,
    label_dataset,
    load_scenario,
    oracle_check,
    read_labels,
    scenario_to_dict,
    write_labels,
)
from .pipeline import evaluation_records, generate_dataset, oracle_records

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

HEADS = {"cls": CLASSIFICATION, "reg": REGRESSION}

log = logging.getLogger("satrrm")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    out: Path
    scenario: Path | None = None
    seed: int = 0
    n_samples: int = 30_000
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    head: str = "reg"
    train_seed: int = 0
    demand: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def demand_params(self) -> DemandModelParams:
        return replace(default_demand_params(self.seed), **self.demand)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.train_seed, split=self.split, **self.train)


def _tuples(d: dict) -> dict:
    return {k: tuple(map(tuple, v)) if k == "hotspot_centers" else tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def load_manifest(path: str | Path, seed: int | None = None, out: str | None = None, head: str | None = None) -> RunManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc.strerror}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"manifest {path} is not valid JSON: {exc}", EXIT_VALIDATION) from None
    if not isinstance(raw, dict):
        raise CliError(f"manifest {path} must be a JSON object", EXIT_VALIDATION)
    known = {f.name for f in fields(RunManifest)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise CliError(f"manifest: unknown field(s) {', '.join(unknown)}", EXIT_VALIDATION)
    if out is not None:
        raw["out"] = out
    if seed is not None:
        raw["seed"] = seed
    if head is not None:
        raw["head"] = head
    if "out" not in raw:
        raise CliError("manifest: field 'out' is required (or pass --out)", EXIT_VALIDATION)
    base = path.parent
    try:
        m = RunManifest(
            out=base / raw["out"],
            scenario=None if raw.get("scenario") is None else base / raw["scenario"],
            seed=int(raw.get("seed", 0)),
            n_samples=int(raw.get("n_samples", 30_000)),
            split=tuple(float(x) for x in raw.get("split", (0.70, 0.15, 0.15))),
            head=str(raw.get("head", "reg")),
            train_seed=int(raw.get("train_seed", 0)),
            demand=_tuples(dict(raw.get("demand", {}))),
            train=_tuples(dict(raw.get("train", {}))),
        )
    except (TypeError, ValueError) as exc:
        raise CliError(f"manifest: {exc}", EXIT_VALIDATION) from None
    if m.n_samples < 10:
        raise CliError(f"manifest: n_samples must be >= 10, got {m.n_samples}", EXIT_VALIDATION)
    if m.head not in HEADS:
        raise CliError(f"unknown head {m.head!r}; choose cls or reg", EXIT_USAGE)
    if m.scenario is not None and not m.scenario.is_file():
        raise CliError(f"manifest: scenario file {m.scenario} does not exist", EXIT_VALIDATION)
    try:
        m.demand_params()
        m.train_config()
    except (TypeError, ValueError) as exc:
        raise CliError(f"manifest: {exc}", EXIT_VALIDATION) from None
    return m


def _scenario(m: RunManifest) -> SystemScenario:
    try:
        return load_scenario(m.scenario)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"scenario {m.scenario}: {exc}", EXIT_VALIDATION) from None


def scenario_hash(s: SystemScenario) -> str:
    text = json.dumps(scenario_to_dict(s), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _outdir(m: RunManifest) -> Path:
    try:
        m.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {m.out}: {exc.strerror}", EXIT_IO) from None
    return m.out


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise CliError(f"{what} {path} not found; run the earlier stage first", EXIT_IO)
    return path


def _write(fn, path: Path, *args):
    try:
        fn(path, *args)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


def _g(x) -> str:
    return f"{x:.6g}"


# -- commands ----------------------------------------------------------------


def cmd_gen(m: RunManifest) -> int:
    s = _scenario(m)
    params = m.demand_params()
    out = _outdir(m)
    demands = generate_demands(params, s.geometry, m.n_samples)
    _write(write_demands, out / "demands.csv", demands)
    R = np.array([d.requested for d in demands]) / 1e6
    print(f"wrote {len(demands)} samples to {out / 'demands.csv'}")
    print("beam  mean_Mbps  min_Mbps  max_Mbps")
    for b in range(R.shape[1]):
        print(f"{b + 1:4d}  {_g(R[:, b].mean()):>9}  {_g(R[:, b].min()):>8}  {_g(R[:, b].max()):>8}")
    return EXIT_OK


def cmd_label(m: RunManifest) -> int:
    s = _scenario(m)
    out = _outdir(m)
    demands = read_demands(_require(out / "demands.csv", "demand file"))
    if demands and len(demands[0].requested) != s.n_beams:
        raise CliError(f"demand file has {len(demands[0].requested)} beams, scenario has {s.n_beams}", EXIT_VALIDATION)
    labels = label_dataset(demands, s)
    n_bad = len(labels.infeasible)
    print(f"labeled {len(labels)} samples, {n_bad} infeasible, {len(labels.class_table)} classes")
    if n_bad * 2 > len(demands):
        raise CliError(f"{n_bad} of {len(demands)} samples are infeasible; check the scenario caps", EXIT_INFEASIBLE)
    _write(write_labels, out / "labels.csv", labels)
    return EXIT_OK


@dataclass
class _Prepared:
    scenario: SystemScenario
    labels: LabeledSet
    pooled: np.ndarray
    requested: np.ndarray
    demands: list


def _prepare(m: RunManifest) -> _Prepared:
    s = _scenario(m)
    out = m.out
    labels = read_labels(_require(out / "labels.csv", "label file"), s)
    by_id = {d.sample_id: d for d in read_demands(_require(out / "demands.csv", "demand file"))}
    missing = [i for i in labels.sample_ids if i not in by_id]
    if missing:
        raise CliError(f"labels reference {len(missing)} sample(s) absent from demands.csv", EXIT_VALIDATION)
    cfg = m.train_config()
    ds = generate_dataset(m.demand_params(), s, len(labels), cfg.pool_size, sample_ids=labels.sample_ids)
    # The regenerated demand must match the stored file, or the seed changed.
    stored = np.array([by_id[i].requested for i in labels.sample_ids])
    regen = np.array([d.requested for d in ds.demands])
    if stored.shape != regen.shape or not np.allclose(stored, regen, rtol=1e-12, atol=0):
        raise CliError("demands.csv does not match the manifest's demand seed", EXIT_VALIDATION)
    return _Prepared(s, labels, ds.pooled, stored, [by_id[i] for i in labels.sample_ids])


def cmd_train(m: RunManifest) -> int:
    p = _prepare(m)
    cfg = m.train_config()
    head = HEADS[m.head]
    model, hist, _ = fit_model(
        p.pooled, p.labels.class_ids, p.labels.capacities, p.requested, p.labels.class_table, cfg, head, p.scenario.c_max
    )
    out = _outdir(m)
    _write(save_model, out / f"model_{m.head}.json", model)
    _write(write_history, out / f"history_{m.head}.csv", hist)
    print(
        f"trained {m.head}: {len(hist.epochs)} epochs, best epoch {hist.best_epoch}, "
        f"val loss {_g(min(hist.val_loss, default=float('nan')))}"
    )
    return EXIT_OK


def _subset(labels: LabeledSet, idx) -> LabeledSet:
    return LabeledSet(
        [labels.sample_ids[i] for i in idx],
        [labels.assignments[i] for i in idx],
        labels.capacities[idx],
        labels.class_ids[idx],
        labels.class_table,
    )


def _head_comparison(reports: dict[str, MetricsReport]) -> dict:
    slots = {}
    for name in ("cls", "reg"):
        r = reports.get(name)
        slots[name] = {
            "balanced_accuracy": None if r is None else r.balanced_accuracy,
            "flexible_balanced_accuracy": None if r is None else r.flexible_balanced_accuracy,
            "nmse_avg": None if r is None else r.nmse_avg,
        }
    return slots


def cmd_eval(m: RunManifest, oracle: bool = False) -> int:
    p = _prepare(m)
    out = m.out
    _, _, te = split_indices(len(p.labels), m.split, m.train_seed)
    test_labels = _subset(p.labels, te)
    test_demands = [p.demands[i] for i in te]
    label_classes = range(len(p.labels.class_table))
    meta = {
        "seed": m.seed,
        "train_seed": m.train_seed,
        "n_samples": m.n_samples,
        "n_test": len(te),
        "scenario_sha256": scenario_hash(p.scenario),
        "version": __version__,
    }
    if oracle:
        report = evaluate(oracle_records(test_demands, test_labels), p.scenario.c_max, label_classes)
        report.extra["head_comparison"] = _head_comparison({})
        _write_reports(out, "oracle", report, {**meta, "head": "oracle"})
        _print_summary("oracle", report)
        return EXIT_OK

    reports = {}
    for name in sorted(HEADS):
        path = out / f"model_{name}.json"
        if name != m.head and not path.is_file():
            continue
        try:
            model = load_model(_require(path, "model file"))
        except ModelFormatError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
        if model.n_beams != p.scenario.n_beams:
            raise CliError(f"model {path} has {model.n_beams} beams, scenario has {p.scenario.n_beams}", EXIT_VALIDATION)
        if model.head != HEADS[name]:
            raise CliError(f"model {path} holds a {model.head} head, expected {HEADS[name]}", EXIT_VALIDATION)
        if model.class_table != p.labels.class_table:
            raise CliError(f"model {path} class table does not match labels.csv", EXIT_VALIDATION)
        records = evaluation_records(model, p.pooled[te], test_demands, test_labels, p.scenario)
        reports[name] = evaluate(records, p.scenario.c_max, label_classes)
    report = reports[m.head]
    report.extra["head_comparison"] = _head_comparison(reports)
    _write_reports(out, m.head, report, {**meta, "head": m.head})
    _print_summary(m.head, report)
    return EXIT_OK


def _write_reports(out: Path, name: str, report: MetricsReport, meta: dict):
    _write(write_report, out / f"report_{name}.json", report, meta)
    _write(write_class_csv, out / f"classes_{name}.csv", report)
    _write(write_beam_csv, out / f"beams_{name}.csv", report)


def _print_summary(name: str, r: MetricsReport):
    print(
        f"{name}: balanced accuracy {_g(r.balanced_accuracy)}, "
        f"flexible balanced accuracy {_g(r.flexible_balanced_accuracy)}, NMSE {_g(r.nmse_avg)}"
    )


def cmd_oracle_check(n_instances: int, seed: int) -> int:
    result = oracle_check(n_instances, seed)
    print(f"{result.instances} instances, {result.infeasible} infeasible, {len(result.mismatches)} mismatches")
    for line in result.mismatches[:20]:
        print("  " + line)
    return EXIT_OK if result.passed else EXIT_VALIDATION


# -- entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="satrrm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"satrrm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_cmd(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--manifest", required=True, help="run manifest (JSON)")
        p.add_argument("--seed", type=int, help="override the manifest demand seed")
        p.add_argument("--out", help="override the manifest output directory")
        return p

    run_cmd("gen", "generate the demand dataset")
    run_cmd("label", "label every sample with its optimal configuration")
    run_cmd("train", "train one model head").add_argument("--head", help="cls or reg")
    ev = run_cmd("eval", "evaluate a trained head on the test split")
    ev.add_argument("--head", help="cls or reg")
    ev.add_argument("--oracle", action="store_true", help="evaluate the optimal labels themselves")
    oc = sub.add_parser("oracle-check", help="cross-check the exact solver against brute force")
    oc.add_argument("--instances", type=int, default=500)
    oc.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle-check":
            return cmd_oracle_check(args.instances, args.seed)
        head = getattr(args, "head", None)
        if head is not None and head not in HEADS:
            raise CliError(f"unknown head {head!r}; choose cls or reg", EXIT_USAGE)
        m = load_manifest(args.manifest, seed=args.seed, out=args.out, head=head)
        if args.command == "gen":
            return cmd_gen(m)
        if args.command == "label":
            return cmd_label(m)
        if args.command == "train":
            return cmd_train(m)
        return cmd_eval(m, oracle=args.oracle)
    except CliError as exc:
        print(f"satrrm {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleScenarioError as exc:
        print(f"satrrm {args.command}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError) as exc:
        print(f"satrrm {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"satrrm {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
