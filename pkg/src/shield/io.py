"""Vote file ingestion and JSON/CSV report writing.

Vote matrix CSV: header ``sample_id,teacher_id,class``, one row per vote.
Histogram JSON: ``{"K": 3, "counts": [5, 2, 0], "offset": 1}``, a list of
such objects, or ``{"schema": 1, "histograms": [...]}``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .core import ValidationError, VoteHistogram, VoteMatrix, histogram_from_votes

SCHEMA = 1
CSV_HEADER = ("sample_id", "teacher_id", "class")


@dataclass
class VoteInput:
    """Either a vote matrix (CSV) or bare histograms (JSON)."""

    sample_ids: list[str]
    class_names: list[str]
    matrix: VoteMatrix | None = None
    histograms: list[VoteHistogram] | None = None
    file_offset: int | None = None

    @property
    def num_samples(self) -> int:
        return len(self.sample_ids)

    def hists(self, offset: int | None) -> list[VoteHistogram]:
        """Histograms with ``offset`` (falls back to the file's, then 1)."""
        off = offset if offset is not None else (self.file_offset if self.file_offset is not None else 1)
        if self.matrix is not None:
            return [histogram_from_votes(self.matrix, i, off) for i in range(self.matrix.num_samples)]
        return [h.with_offset(off) for h in self.histograms]

    def as_matrix(self) -> VoteMatrix:
        """The vote matrix; histograms are expanded with teachers ordered by
        class, which requires the same number of real votes everywhere."""
        if self.matrix is not None:
            return self.matrix
        sizes = {h.n_real for h in self.histograms}
        if len(sizes) != 1:
            raise ValidationError("histograms with different vote totals cannot form a vote matrix")
        labels = [np.repeat(np.arange(1, h.num_classes + 1), h.counts) for h in self.histograms]
        return VoteMatrix.from_labels(labels, self.histograms[0].num_classes,
                                      sample_ids=tuple(self.sample_ids))


def _class_index(labels: list[str], num_classes: int | None) -> tuple[dict[str, int], list[str]]:
    uniq = sorted(set(labels))
    if all(l.lstrip("-").isdigit() for l in uniq):
        values = {l: int(l) for l in uniq}
        if min(values.values()) < 1:
            raise ValidationError("integer class labels must be >= 1")
        k = max(values.values()) if num_classes is None else num_classes
        if max(values.values()) > k:
            raise ValidationError(f"class label {max(values.values())} exceeds K={k}")
        return values, [str(i) for i in range(1, k + 1)]
    k = len(uniq) if num_classes is None else num_classes
    if len(uniq) > k:
        raise ValidationError(f"{len(uniq)} distinct class labels but K={k}")
    names = uniq + [f"unused{i}" for i in range(len(uniq) + 1, k + 1)]
    return {l: i + 1 for i, l in enumerate(uniq)}, names


def read_votes_csv(path: str | Path, num_classes: int | None = None) -> VoteInput:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValidationError(f"{path}: header must be {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            rows.append(tuple(c.strip() for c in row))
    if not rows:
        raise ValidationError(f"{path}: no votes")

    samples: dict[str, dict[str, str]] = {}
    for s, t, c in rows:
        votes = samples.setdefault(s, {})
        if t in votes:
            raise ValidationError(f"{path}: teacher {t!r} votes twice on sample {s!r}")
        votes[t] = c
    first = next(iter(samples.values()))
    teachers = list(first)
    tset = set(teachers)
    for s, votes in samples.items():
        if set(votes) != tset:
            raise ValidationError(f"{path}: sample {s!r} does not have the same teacher set")
    index, names = _class_index([c for _, _, c in rows], num_classes)
    labels = [[index[samples[s][t]] for t in teachers] for s in samples]
    matrix = VoteMatrix.from_labels(labels, len(names), sample_ids=tuple(samples),
                                    teacher_ids=tuple(teachers))
    return VoteInput(list(samples), names, matrix=matrix)


def read_histograms_json(path: str | Path) -> VoteInput:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict) and "histograms" in data:
        items = data["histograms"]
    elif isinstance(data, dict):
        items = [data]
    else:
        items = data
    if not isinstance(items, list) or not items:
        raise ValidationError(f"{path}: no histograms")
    hists, ids, offsets = [], [], set()
    for j, item in enumerate(items):
        if not isinstance(item, dict) or "counts" not in item:
            raise ValidationError(f"{path}: histogram {j} lacks 'counts'")
        counts = item["counts"]
        if not isinstance(counts, list) or not all(isinstance(c, int) for c in counts):
            raise ValidationError(f"{path}: histogram {j} counts must be integers")
        k = item.get("K", len(counts))
        if k != len(counts):
            raise ValidationError(f"{path}: histogram {j} has K={k} but {len(counts)} counts")
        off = item.get("offset")
        offsets.add(off)
        hists.append(VoteHistogram(tuple(counts), 1 if off is None else off))
        ids.append(str(item.get("sample_id", j)))
    if len({h.num_classes for h in hists}) != 1:
        raise ValidationError(f"{path}: histograms disagree on K")
    if len(offsets) > 1:
        raise ValidationError(f"{path}: histograms disagree on the offset")
    k = hists[0].num_classes
    return VoteInput(ids, [str(i) for i in range(1, k + 1)], histograms=hists,
                     file_offset=offsets.pop())


def read_votes(path: str | Path, num_classes: int | None = None) -> VoteInput:
    if not Path(path).is_file():
        raise ValidationError(f"{path}: no such file")
    if str(path).lower().endswith(".json"):
        return read_histograms_json(path)
    return read_votes_csv(path, num_classes)


def read_truth(path: str | Path, votes: VoteInput) -> list[int]:
    """Ground-truth CSV ``sample_id,class`` aligned to the vote samples."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("sample_id", "class"):
            raise ValidationError(f"{path}: header must be sample_id,class")
        truth = {r[0].strip(): r[1].strip() for r in reader if r}
    missing = [s for s in votes.sample_ids if s not in truth]
    if missing or len(truth) != votes.num_samples:
        raise ValidationError(f"{path}: labels do not match the vote samples")
    index = {name: i + 1 for i, name in enumerate(votes.class_names)}
    try:
        return [index[truth[s]] for s in votes.sample_ids]
    except KeyError as exc:
        raise ValidationError(f"{path}: unknown class {exc.args[0]!r}") from None


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def jsonable(obj: Any) -> Any:
    """Fractions become ``"a/b"`` strings; non-finite floats become ``None``
    (callers flag infinities explicitly)."""
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return jsonable(float(obj))
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
