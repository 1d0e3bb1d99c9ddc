"""File formats and their readers/writers.

All formats are line-oriented text. Floats are rendered with ``repr``, the
canonical shortest decimal that round-trips to the same IEEE-754 double, so
write-then-read is bit exact. Writers are atomic (temp file + ``os.replace``).
Readers raise :class:`~svbackend.errors.DataFormatError` with path and line
number for anything malformed; they never raise bare parse exceptions.

Formats:

* Embedding store: header line ``dim=<D>``, then one record per line,
  ``utt_id n_chunks v1 ... v_{n_chunks*D}`` with chunk vectors concatenated
  row-major (chunk 0 first).
* Trial list: ``enroll test`` per line, or ``label enroll test`` with label
  0 or 1 when labeled.
* Score file: ``enroll test score`` per line, aligned with a trial list.
* Speaker map: ``utt_id speaker_id`` per line.
* Attribute table: CSV with header ``utt_id,<name>,...``; blank cell means
  missing. A sidecar schema file declares each column as one line
  ``name kind transform`` with kind ``real`` (transform ``identity`` or
  ``log1p``) or ``categorical`` (transform ``match``).
* Trial feature table: CSV with header ``enroll,test,<feature>,...``; blank
  cell means missing.
* Fusion model: JSON object with keys ``feature_names``, ``weights``,
  ``intercept``, ``minmax`` (per-feature ``[lo, hi]``), ``medians`` and
  ``lambda``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

_REAL_TRANSFORMS = ("identity", "log1p")
_CATEGORICAL_TRANSFORMS = ("match",)


def format_float(value: float) -> str:
    """Shortest decimal string that parses back to exactly ``value``."""
    return repr(float(value))


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read file: {exc.strerror or exc}", path=str(path)) from exc


def _parse_float(token: str, path: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"invalid float {token!r}", path=path, line=line) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite value {token!r}", path=path, line=line)
    return value


def _data_lines(text: str, path: str) -> list[tuple[int, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == "":
            raise DataFormatError("blank line", path=path, line=lineno)
        out.append((lineno, raw))
    return out


# ---------------------------------------------------------------------------
# Embedding store


@dataclass(frozen=True)
class ChunkEmbeddings:
    """Per-chunk embedding matrix for one utterance, shape (n_chunks, dim)."""

    utt_id: str
    chunks: np.ndarray

    def __post_init__(self):
        if not self.utt_id or any(ch.isspace() for ch in self.utt_id):
            raise ValueError(f"utt_id must be non-empty without whitespace, got {self.utt_id!r}")
        chunks = np.asarray(self.chunks, dtype=np.float64)
        if chunks.ndim != 2 or chunks.shape[0] < 1 or chunks.shape[1] < 1:
            raise ValueError(f"chunks must be a (n_chunks, dim) matrix, got shape {chunks.shape}")
        if not np.all(np.isfinite(chunks)):
            raise ValueError(f"non-finite embedding values for {self.utt_id!r}")
        object.__setattr__(self, "chunks", chunks)

    @property
    def n_chunks(self) -> int:
        return self.chunks.shape[0]

    @property
    def dim(self) -> int:
        return self.chunks.shape[1]

    def mean_embedding(self) -> np.ndarray:
        return self.chunks.mean(axis=0)


def read_embeddings(path: str) -> list[ChunkEmbeddings]:
    path = str(path)
    lines = _data_lines(read_text(path), path)
    if not lines:
        raise DataFormatError("missing 'dim=<D>' header", path=path, line=1)
    header_no, header = lines[0]
    header = header.strip()
    if not header.startswith("dim="):
        raise DataFormatError(f"malformed header {header!r}, expected 'dim=<D>'", path=path, line=header_no)
    try:
        dim = int(header[len("dim="):])
    except ValueError:
        raise DataFormatError(f"malformed header {header!r}, expected 'dim=<D>'", path=path, line=header_no) from None
    if dim < 1:
        raise DataFormatError(f"dimension must be >= 1, got {dim}", path=path, line=header_no)

    records: list[ChunkEmbeddings] = []
    seen: set[str] = set()
    for lineno, raw in lines[1:]:
        tokens = raw.split()
        if len(tokens) < 2:
            raise DataFormatError("expected 'utt_id n_chunks v1 ...'", path=path, line=lineno)
        utt_id = tokens[0]
        try:
            n_chunks = int(tokens[1])
        except ValueError:
            raise DataFormatError(f"invalid chunk count {tokens[1]!r}", path=path, line=lineno) from None
        if n_chunks < 1:
            raise DataFormatError(f"chunk count must be >= 1, got {n_chunks}", path=path, line=lineno)
        expected = n_chunks * dim
        values = tokens[2:]
        if len(values) != expected:
            raise DataFormatError(
                f"expected {expected} values for {n_chunks} chunks of dim {dim}, found {len(values)}",
                path=path,
                line=lineno,
            )
        if utt_id in seen:
            raise DataFormatError(f"duplicate utt_id {utt_id!r}", path=path, line=lineno)
        seen.add(utt_id)
        flat = np.array([_parse_float(tok, path, lineno) for tok in values], dtype=np.float64)
        records.append(ChunkEmbeddings(utt_id, flat.reshape(n_chunks, dim)))
    return records


def write_embeddings(records: list[ChunkEmbeddings], path: str) -> None:
    if not records:
        raise ValueError("cannot write an empty embedding store")
    dim = records[0].dim
    seen: set[str] = set()
    parts = [f"dim={dim}\n"]
    for rec in records:
        if rec.dim != dim:
            raise ValueError(f"mixed dimensions in store: {dim} vs {rec.dim} ({rec.utt_id!r})")
        if rec.utt_id in seen:
            raise ValueError(f"duplicate utt_id {rec.utt_id!r}")
        seen.add(rec.utt_id)
        values = " ".join(format_float(v) for v in rec.chunks.ravel())
        parts.append(f"{rec.utt_id} {rec.n_chunks} {values}\n")
    atomic_write_text(str(path), "".join(parts))


def embeddings_by_id(records: list[ChunkEmbeddings]) -> dict[str, ChunkEmbeddings]:
    return {rec.utt_id: rec for rec in records}


# ---------------------------------------------------------------------------
# Trials and scores


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: bool | None = None

    def __post_init__(self):
        for name, value in (("enroll_id", self.enroll_id), ("test_id", self.test_id)):
            if not value or any(ch.isspace() for ch in value):
                raise ValueError(f"{name} must be non-empty without whitespace, got {value!r}")


def read_trials(path: str, expect_labels: bool) -> list[Trial]:
    path = str(path)
    trials = []
    for lineno, raw in _data_lines(read_text(path), path):
        tokens = raw.split()
        if expect_labels:
            if len(tokens) == 2:
                raise DataFormatError("missing label (expected 'label enroll test')", path=path, line=lineno)
            if len(tokens) != 3:
                raise DataFormatError(f"expected 3 fields, found {len(tokens)}", path=path, line=lineno)
            if tokens[0] not in ("0", "1"):
                raise DataFormatError(f"invalid label {tokens[0]!r}, expected 0 or 1", path=path, line=lineno)
            trials.append(Trial(tokens[1], tokens[2], tokens[0] == "1"))
        else:
            if len(tokens) != 2:
                raise DataFormatError(f"expected 2 fields, found {len(tokens)}", path=path, line=lineno)
            trials.append(Trial(tokens[0], tokens[1], None))
    return trials


def sniff_trial_labels(path: str) -> bool:
    """True when the first data line of a trial list carries a label column."""
    lines = _data_lines(read_text(str(path)), str(path))
    if not lines:
        return False
    lineno, raw = lines[0]
    n = len(raw.split())
    if n == 3:
        return True
    if n == 2:
        return False
    raise DataFormatError(f"expected 2 or 3 fields, found {n}", path=str(path), line=lineno)


def write_trials(trials: list[Trial], path: str) -> None:
    parts = []
    for trial in trials:
        if trial.label is None:
            parts.append(f"{trial.enroll_id} {trial.test_id}\n")
        else:
            parts.append(f"{int(trial.label)} {trial.enroll_id} {trial.test_id}\n")
    atomic_write_text(str(path), "".join(parts))


def read_scores(path: str) -> tuple[list[Trial], np.ndarray]:
    """Score file as (pair list without labels, score vector), in file order."""
    path = str(path)
    trials = []
    scores = []
    for lineno, raw in _data_lines(read_text(path), path):
        tokens = raw.split()
        if len(tokens) != 3:
            raise DataFormatError(f"expected 'enroll test score', found {len(tokens)} fields", path=path, line=lineno)
        trials.append(Trial(tokens[0], tokens[1], None))
        scores.append(_parse_float(tokens[2], path, lineno))
    return trials, np.asarray(scores, dtype=np.float64)


def write_scores(trials: list[Trial], scores, path: str) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or len(trials) != scores.shape[0]:
        raise ValueError(f"expected one score per trial, got {len(trials)} trials and {scores.shape} scores")
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite score")
    parts = [
        f"{trial.enroll_id} {trial.test_id} {format_float(score)}\n"
        for trial, score in zip(trials, scores)
    ]
    atomic_write_text(str(path), "".join(parts))


def check_score_alignment(trials: list[Trial], pairs: list[Trial], path: str) -> None:
    """Require that a score file's pairs line up with a trial list positionally."""
    if len(pairs) != len(trials):
        raise DataFormatError(f"expected {len(trials)} scored pairs, found {len(pairs)}", path=str(path))
    for i, (trial, pair) in enumerate(zip(trials, pairs), start=1):
        if (trial.enroll_id, trial.test_id) != (pair.enroll_id, pair.test_id):
            raise DataFormatError(
                f"pair mismatch vs trial list: expected '{trial.enroll_id} {trial.test_id}', "
                f"found '{pair.enroll_id} {pair.test_id}'",
                path=str(path),
                line=i,
            )


# ---------------------------------------------------------------------------
# Speaker map


def read_speaker_map(path: str) -> dict[str, str]:
    path = str(path)
    mapping: dict[str, str] = {}
    for lineno, raw in _data_lines(read_text(path), path):
        tokens = raw.split()
        if len(tokens) != 2:
            raise DataFormatError(f"expected 'utt_id speaker_id', found {len(tokens)} fields", path=path, line=lineno)
        utt_id, speaker_id = tokens
        if utt_id in mapping:
            raise DataFormatError(f"duplicate utt_id {utt_id!r}", path=path, line=lineno)
        mapping[utt_id] = speaker_id
    return mapping


def write_speaker_map(mapping: dict[str, str], path: str) -> None:
    parts = [f"{utt} {spk}\n" for utt, spk in mapping.items()]
    atomic_write_text(str(path), "".join(parts))


# ---------------------------------------------------------------------------
# Attribute schema and table


@dataclass(frozen=True)
class SchemaColumn:
    name: str
    kind: str
    transform: str

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name) or "," in self.name:
            raise ValueError(f"column name must be non-empty without whitespace or commas, got {self.name!r}")
        if self.kind == "real":
            allowed = _REAL_TRANSFORMS
        elif self.kind == "categorical":
            allowed = _CATEGORICAL_TRANSFORMS
        else:
            raise ValueError(f"unknown kind {self.kind!r}, expected 'real' or 'categorical'")
        if self.transform not in allowed:
            raise ValueError(f"transform {self.transform!r} not valid for kind {self.kind!r}")


def read_schema(path: str) -> list[SchemaColumn]:
    path = str(path)
    columns = []
    names: set[str] = set()
    for lineno, raw in _data_lines(read_text(path), path):
        tokens = raw.split()
        if len(tokens) != 3:
            raise DataFormatError(f"expected 'name kind transform', found {len(tokens)} fields", path=path, line=lineno)
        try:
            col = SchemaColumn(*tokens)
        except ValueError as exc:
            raise DataFormatError(str(exc), path=path, line=lineno) from None
        if col.name in names:
            raise DataFormatError(f"duplicate column {col.name!r}", path=path, line=lineno)
        names.add(col.name)
        columns.append(col)
    return columns


def write_schema(columns: list[SchemaColumn], path: str) -> None:
    parts = [f"{c.name} {c.kind} {c.transform}\n" for c in columns]
    atomic_write_text(str(path), "".join(parts))


@dataclass
class AttributeTable:
    """Per-utterance attribute values. Missing cells are ``None``."""

    columns: tuple[str, ...]
    rows: dict[str, dict[str, float | str | None]] = field(default_factory=dict)


def read_attributes(path: str, schema: list[SchemaColumn]) -> AttributeTable:
    path = str(path)
    by_name = {c.name: c for c in schema}
    text = read_text(path)
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("missing CSV header", path=path, line=1) from None
    if not header or header[0] != "utt_id":
        raise DataFormatError("first CSV column must be 'utt_id'", path=path, line=1)
    names = header[1:]
    seen_cols: set[str] = set()
    for name in names:
        if name not in by_name:
            raise DataFormatError(f"unknown attribute column {name!r}", path=path, line=1)
        if name in seen_cols:
            raise DataFormatError(f"duplicate attribute column {name!r}", path=path, line=1)
        seen_cols.add(name)
    for col in schema:
        if col.name not in seen_cols:
            raise DataFormatError(f"schema column {col.name!r} missing from table", path=path, line=1)

    table = AttributeTable(columns=tuple(names))
    for lineno, fields in enumerate(reader, start=2):
        if len(fields) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, found {len(fields)}", path=path, line=lineno)
        utt_id = fields[0]
        if not utt_id:
            raise DataFormatError("empty utt_id", path=path, line=lineno)
        if utt_id in table.rows:
            raise DataFormatError(f"duplicate utt_id {utt_id!r}", path=path, line=lineno)
        row: dict[str, float | str | None] = {}
        for name, cell in zip(names, fields[1:]):
            if cell == "":
                row[name] = None
            elif by_name[name].kind == "real":
                row[name] = _parse_float(cell, path, lineno)
            else:
                row[name] = cell
        table.rows[utt_id] = row
    return table


def write_attributes(table: AttributeTable, path: str) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("utt_id",) + table.columns)
    for utt_id, row in table.rows.items():
        rendered = []
        for name in table.columns:
            value = row.get(name)
            if value is None:
                rendered.append("")
            elif isinstance(value, float):
                rendered.append(format_float(value))
            else:
                rendered.append(str(value))
        writer.writerow([utt_id] + rendered)
    atomic_write_text(str(path), buf.getvalue())


# ---------------------------------------------------------------------------
# Trial feature table (per-trial quality features)


def write_trial_features(trials: list[Trial], names: list[str], matrix, path: str) -> None:
    """CSV of per-trial features; NaN cells are written blank (missing)."""
    import io

    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (len(trials), len(names)):
        raise ValueError(f"matrix shape {matrix.shape} does not match {len(trials)} trials x {len(names)} features")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["enroll", "test"] + list(names))
    for trial, row in zip(trials, matrix):
        cells = ["" if math.isnan(v) else format_float(v) for v in row]
        writer.writerow([trial.enroll_id, trial.test_id] + cells)
    atomic_write_text(str(path), buf.getvalue())


def read_trial_features(path: str) -> tuple[list[Trial], list[str], np.ndarray]:
    path = str(path)
    text = read_text(path)
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("missing CSV header", path=path, line=1) from None
    if len(header) < 2 or header[0] != "enroll" or header[1] != "test":
        raise DataFormatError("header must start with 'enroll,test'", path=path, line=1)
    names = header[2:]
    if len(set(names)) != len(names):
        raise DataFormatError("duplicate feature columns", path=path, line=1)
    trials = []
    rows = []
    for lineno, fields in enumerate(reader, start=2):
        if len(fields) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, found {len(fields)}", path=path, line=lineno)
        try:
            trials.append(Trial(fields[0], fields[1], None))
        except ValueError as exc:
            raise DataFormatError(str(exc), path=path, line=lineno) from None
        rows.append([math.nan if cell == "" else _parse_float(cell, path, lineno) for cell in fields[2:]])
    matrix = np.asarray(rows, dtype=np.float64).reshape(len(trials), len(names))
    return trials, names, matrix


# ---------------------------------------------------------------------------
# Fusion model file


@dataclass
class FusionModel:
    """Fitted fusion parameters plus the feature scaling fixed at fit time."""

    feature_names: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    feature_min: np.ndarray
    feature_max: np.ndarray
    medians: np.ndarray
    lam: float

    def __post_init__(self):
        k = len(self.feature_names)
        for attr in ("weights", "feature_min", "feature_max", "medians"):
            arr = np.asarray(getattr(self, attr), dtype=np.float64)
            if arr.shape != (k,):
                raise ValueError(f"{attr} must have shape ({k},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {attr}")
            setattr(self, attr, arr)
        if not math.isfinite(self.intercept):
            raise ValueError("non-finite intercept")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if np.any(self.feature_min > self.feature_max):
            raise ValueError("feature_min above feature_max")
        if len(set(self.feature_names)) != k:
            raise ValueError("duplicate feature names")


def save_fusion_model(model: FusionModel, path: str) -> None:
    payload = {
        "feature_names": list(model.feature_names),
        "weights": [float(w) for w in model.weights],
        "intercept": float(model.intercept),
        "minmax": [[float(lo), float(hi)] for lo, hi in zip(model.feature_min, model.feature_max)],
        "medians": [float(m) for m in model.medians],
        "lambda": float(model.lam),
    }
    atomic_write_text(str(path), json.dumps(payload, indent=2) + "\n")


def load_fusion_model(path: str) -> FusionModel:
    path = str(path)
    text = read_text(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc}", path=path, line=exc.lineno) from None
    if not isinstance(payload, dict):
        raise DataFormatError("model file must hold a JSON object", path=path)
    required = ("feature_names", "weights", "intercept", "minmax", "medians", "lambda")
    for key in required:
        if key not in payload:
            raise DataFormatError(f"missing key {key!r}", path=path)
    try:
        minmax = payload["minmax"]
        model = FusionModel(
            feature_names=tuple(str(n) for n in payload["feature_names"]),
            weights=np.asarray(payload["weights"], dtype=np.float64),
            intercept=float(payload["intercept"]),
            feature_min=np.asarray([pair[0] for pair in minmax], dtype=np.float64),
            feature_max=np.asarray([pair[1] for pair in minmax], dtype=np.float64),
            medians=np.asarray(payload["medians"], dtype=np.float64),
            lam=float(payload["lambda"]),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise DataFormatError(f"invalid model contents: {exc}", path=path) from None
    return model
