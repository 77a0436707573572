"""Command-line interface.

Subcommands cover the deployment loop: ``calibrate`` builds the store
artifact, ``check`` validates its empirical coverage, ``detect`` flags
likely mispredictions, ``evaluate`` scores flags against ground truth,
``triage`` picks the relabelling batch and ``demo`` runs the synthetic
end-to-end walkthrough.

Exit codes: 0 on success, 2 on any input or configuration error, 3 when
the coverage check raises its alert.  Outputs are deterministic for
identical inputs and seeds.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .assessment import coverage_check, drift_metrics, label_mispredictions
from .calibration import build_store, load_store, save_store
from .config import DetectorConfig, load_config
from .conformal import DriftAssessment, assess_sample
from .core import TASK_CLASSIFICATION
from .errors import DriftGuardError, InputError
from .harness import run_demo, triage
from .records import (
    load_calibration_records,
    load_json_records,
    load_test_records,
    write_jsonl,
)
from .regression import regression_assess

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COVERAGE_ALERT = 3


def _emit(payload: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(payload)
    else:
        Path(path).write_text(payload)


def _emit_json(obj, path: str | None) -> None:
    _emit(json.dumps(obj, sort_keys=True, indent=2) + "\n", path)


def _base_config(args) -> DetectorConfig:
    config = load_config(args.config) if getattr(args, "config", None) else DetectorConfig()
    overrides = {}
    if getattr(args, "epsilon", None) is not None:
        overrides["epsilon"] = args.epsilon
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return config.replace(**overrides) if overrides else config.validate()


def cmd_calibrate(args) -> int:
    config = _base_config(args)
    samples, outputs = load_calibration_records(args.input)
    store = build_store(samples, outputs, config=config)
    save_store(store, args.store)
    _emit_json(
        {
            "store": str(args.store),
            "n": store.n,
            "task": store.task,
            "functions": [str(f) for f in store.functions],
        },
        getattr(args, "output", None),
    )
    return EXIT_OK


def cmd_check(args) -> int:
    store = load_store(args.store)
    config = store.config
    if args.epsilon is not None:
        config = config.replace(epsilon=args.epsilon)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    report = coverage_check(
        config=config, repeats=args.repeats, seed=config.seed, store=store
    )
    _emit_json(report.to_record(), args.output)
    return EXIT_COVERAGE_ALERT if report.alert else EXIT_OK


def cmd_detect(args) -> int:
    store = load_store(args.store)
    config = store.config
    if getattr(args, "config", None):
        config = load_config(args.config)
    if args.epsilon is not None:
        config = config.replace(epsilon=args.epsilon)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    ids, X, outputs = load_test_records(args.input)
    if outputs and outputs[0].task != store.task:
        raise InputError(f"input records are {outputs[0].task} but the store is {store.task}")
    assess = assess_sample if store.task == TASK_CLASSIFICATION else regression_assess
    results = [
        assess(store, X[i], outputs[i], config=config, sample_id=ids[i]).to_record()
        for i in range(len(ids))
    ]
    write_jsonl(results, args.output)
    return EXIT_OK


def _truth_mispredictions(path: str, kind: str, threshold: float) -> dict[str, bool]:
    """Read a truth file into id -> mispredicted, per the chosen kind."""
    flags: dict[str, bool] = {}
    for line_no, obj in load_json_records(path):
        if "id" not in obj:
            raise InputError(f"line {line_no}: truth record is missing 'id'")
        rid = str(obj["id"])
        if kind == "detection":
            if "label" not in obj:
                raise InputError(f"line {line_no}: detection truth needs 'label'")
            if "predicted" in obj:
                predicted = obj["predicted"]
            elif "proba" in obj:
                probs = obj["proba"]
                predicted = max(range(len(probs)), key=lambda i: (probs[i], -i))
            else:
                raise InputError(f"line {line_no}: detection truth needs 'predicted' or 'proba'")
            flag = label_mispredictions(
                "detection", predicted=[predicted], true_label=[obj["label"]]
            )
        else:
            if "achieved" not in obj or "reference" not in obj:
                raise InputError(
                    f"line {line_no}: {kind} truth needs 'achieved' and 'reference'"
                )
            flag = label_mispredictions(
                kind,
                achieved=[obj["achieved"]],
                reference=[obj["reference"]],
                threshold=threshold,
            )
        flags[rid] = bool(flag[0])
    return flags


def cmd_evaluate(args) -> int:
    assessments = [
        DriftAssessment.from_record(obj) for _, obj in load_json_records(args.assessments)
    ]
    truth = _truth_mispredictions(args.truth, args.kind, args.threshold)
    missing = [a.id for a in assessments if a.id not in truth]
    if missing:
        raise InputError(f"truth file has no record for ids: {', '.join(missing[:5])}")
    flagged = [a.drifting for a in assessments]
    mispredicted = [truth[a.id] for a in assessments]
    metrics = drift_metrics(flagged, mispredicted)
    _emit_json(metrics.to_record(), args.output)
    return EXIT_OK


def cmd_triage(args) -> int:
    assessments = [
        DriftAssessment.from_record(obj) for _, obj in load_json_records(args.assessments)
    ]
    batch = triage(assessments, budget=args.budget)
    _emit_json(list(batch.ids), args.output)
    return EXIT_OK


def cmd_demo(args) -> int:
    config = None
    if args.config:
        config = load_config(args.config)
    if args.epsilon is not None:
        config = (config or DetectorConfig()).replace(epsilon=args.epsilon)
    report = run_demo(
        seed=args.seed, drift_shift=args.drift_shift, budget=args.budget, config=config
    )
    _emit_json(report, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftguard",
        description="Conformal misprediction detection for deployed models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="build a calibration store from labelled records")
    p.add_argument("--input", required=True, help="JSON Lines calibration records")
    p.add_argument("--store", required=True, help="where to write the store artifact")
    p.add_argument("--config", help="JSON detector config")
    p.add_argument("--epsilon", type=float, help="override the significance level")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--output", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("check", help="empirical coverage self-check of a store")
    p.add_argument("--store", required=True)
    p.add_argument("--epsilon", type=float, help="override the significance level")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--repeats", type=int, default=3, help="internal splits to average over")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("detect", help="assess records against a store")
    p.add_argument("--store", required=True)
    p.add_argument("--input", required=True, help="JSON Lines records with model outputs")
    p.add_argument("--config", help="JSON detector config replacing the store's")
    p.add_argument("--epsilon", type=float, help="override the significance level")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--output", help="write assessments here instead of stdout")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score assessments against ground truth")
    p.add_argument("--assessments", required=True, help="JSON Lines output of detect")
    p.add_argument("--truth", required=True, help="JSON Lines ground-truth records")
    p.add_argument(
        "--kind",
        choices=("detection", "optimization", "cost"),
        default="detection",
        help="how truth records encode a misprediction",
    )
    p.add_argument("--threshold", type=float, default=0.2, help="relative deviation bound")
    p.add_argument("--output", help="write metrics here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("triage", help="pick the relabelling batch from assessments")
    p.add_argument("--assessments", required=True, help="JSON Lines output of detect")
    p.add_argument("--budget", type=float, default=0.05, help="fraction of flagged samples")
    p.add_argument("--output", help="write the id list here instead of stdout")
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("demo", help="synthetic end-to-end walkthrough")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift-shift", type=float, default=5.0, help="shift in blob sigmas")
    p.add_argument("--budget", type=float, default=0.05, help="triage budget")
    p.add_argument("--config", help="JSON detector config")
    p.add_argument("--epsilon", type=float, help="override the significance level")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DriftGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # keep the exit-code contract even for surprises
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry_point() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry_point()
