"""JSON Lines record handling.

One record per line::

    {"id": "s1", "features": [0.1, 2.3], "label": 4, "proba": [...]}
    {"id": "s2", "features": [0.4, 1.1], "target": 3.2, "pred": 3.0}

``label``/``proba`` mark classification records, ``target``/``pred``
regression ones.  A record may not mix the two kinds.  Unknown keys are
ignored so upstream tooling can annotate records freely.

All schema violations raise :class:`InputError` carrying the 1-based line
number of the offending record.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import LabeledSample, ModelOutput
from .errors import InputError


@dataclass
class RawRecord:
    """One parsed line, still unvalidated against a task kind."""

    line: int
    id: str
    features: list | None
    label: int | None
    target: float | None
    proba: list | None
    pred: float | None


def _fail(line: int, msg: str):
    raise InputError(f"line {line}: {msg}")


def iter_raw_records(path: str | Path, allow_empty: bool = False) -> list[RawRecord]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(line_no, f"invalid JSON ({exc.msg})")
        if not isinstance(obj, dict):
            _fail(line_no, "record must be a JSON object")
        if "id" not in obj:
            _fail(line_no, "record is missing 'id'")
        if obj.get("label") is not None and obj.get("target") is not None:
            _fail(line_no, "record carries both 'label' and 'target'")
        if obj.get("proba") is not None and obj.get("pred") is not None:
            _fail(line_no, "record carries both 'proba' and 'pred'")
        label = obj.get("label")
        if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
            _fail(line_no, "'label' must be an integer")
        records.append(
            RawRecord(
                line=line_no,
                id=str(obj["id"]),
                features=obj.get("features"),
                label=label,
                target=obj.get("target"),
                proba=obj.get("proba"),
                pred=obj.get("pred"),
            )
        )
    if not records and not allow_empty:
        raise InputError(f"{path}: no records found")
    return records


def _sample(rec: RawRecord) -> LabeledSample:
    if rec.features is None:
        _fail(rec.line, "record is missing 'features'")
    try:
        return LabeledSample(rec.id, rec.features, label=rec.label, target=rec.target)
    except InputError as exc:
        _fail(rec.line, str(exc))


def _output(rec: RawRecord) -> ModelOutput:
    try:
        return ModelOutput(
            proba=rec.proba, pred=float(rec.pred) if rec.pred is not None else None
        )
    except (InputError, TypeError, ValueError) as exc:
        _fail(rec.line, str(exc))


def load_calibration_records(
    path: str | Path,
) -> tuple[list[LabeledSample], list[ModelOutput]]:
    """Read calibration records: every line needs ground truth plus the
    matching model output, all of one task kind."""
    samples, outputs = [], []
    task = None
    for rec in iter_raw_records(path):
        if rec.label is None and rec.target is None:
            _fail(rec.line, "calibration record needs 'label' or 'target'")
        if rec.proba is None and rec.pred is None:
            _fail(rec.line, "calibration record needs 'proba' or 'pred'")
        sample = _sample(rec)
        output = _output(rec)
        if output.task != sample.task:
            _fail(rec.line, f"{sample.task} ground truth paired with a {output.task} model output")
        if task is None:
            task = sample.task
        elif sample.task != task:
            _fail(rec.line, f"mixed task kinds: file starts with {task} records")
        samples.append(sample)
        outputs.append(output)
    return samples, outputs


def load_test_records(
    path: str | Path,
) -> tuple[list[str], np.ndarray, list[ModelOutput]]:
    """Read records to assess: features plus a model output per line.
    Ground-truth fields may be present and are ignored here.  An empty
    file is a valid (empty) batch, not an error."""
    ids, rows, outputs = [], [], []
    task = None
    dim = None
    for rec in iter_raw_records(path, allow_empty=True):
        if rec.features is None:
            _fail(rec.line, "record is missing 'features'")
        if rec.proba is None and rec.pred is None:
            _fail(rec.line, "record needs 'proba' or 'pred'")
        output = _output(rec)
        if task is None:
            task = output.task
        elif output.task != task:
            _fail(rec.line, f"mixed task kinds: file starts with {task} records")
        try:
            features = np.asarray(rec.features, dtype=float)
        except (TypeError, ValueError):
            _fail(rec.line, "'features' must be a list of numbers")
        if features.ndim != 1 or features.size == 0 or not np.all(np.isfinite(features)):
            _fail(rec.line, "'features' must be a non-empty list of finite numbers")
        if dim is None:
            dim = features.size
        elif features.size != dim:
            _fail(rec.line, f"feature dimension {features.size} != {dim}")
        ids.append(rec.id)
        rows.append(features)
        outputs.append(output)
    stacked = np.stack(rows) if rows else np.empty((0, 0))
    return ids, stacked, outputs


def write_jsonl(records: Iterable[dict], path: str | Path | None) -> None:
    """Write records one JSON object per line, keys sorted so identical
    inputs produce byte-identical files.  ``None`` writes to stdout."""
    lines = [json.dumps(rec, sort_keys=True, allow_nan=False) for rec in records]
    payload = "\n".join(lines) + "\n" if lines else ""
    if path is None:
        sys.stdout.write(payload)
    else:
        Path(path).write_text(payload)


def load_json_records(path: str | Path) -> list[tuple[int, dict]]:
    """Parse a JSON Lines file into (line_no, dict) pairs without schema
    interpretation.  Used for assessment and truth files."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise InputError(f"line {line_no}: record must be a JSON object")
        out.append((line_no, obj))
    if not out:
        raise InputError(f"{path}: no records found")
    return out
