"""Configuration, dataset ingestion and result serialisation.

Configs are JSON objects tagged ``"schema": "roma.config/1"``.  Datasets are
CSV files with a header row; the config maps each role (exposure, mediator,
outcome) to a list of columns and an object type:

``euclidean``
    ``k`` columns, one vector per row.
``distribution_samples``
    ``m`` columns of i.i.d. draws per row; every row needs all ``m`` cells.
``distribution_quantiles``
    ``m`` columns of quantile values on the midpoint grid of size ``m`` (or
    on ``levels`` when given); rows must be nondecreasing.
``composition``
    ``k`` nonnegative columns summing to one.
``spd``
    ``p*p`` columns holding a row-major symmetric positive definite matrix.

Outputs are line-delimited JSON records (each carrying a ``schema`` tag) and
flat CSV tables.  Floats are written with ``repr``, the shortest decimal that
round-trips exactly.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigError, DataError
from .kernels import DISTANCE, GAUSSIAN, KernelSpec
from .object_spaces import MetricKind, PointCloud, midpoint_grid
from .tuning import SPLIT, STRATEGIES

CONFIG_SCHEMA = "roma.config/1"
FIT_SCHEMA = "roma.fit/1"
EFFECTS_SCHEMA = "roma.effects/1"
REPORT_SCHEMA = "roma.report/1"

COLUMN_TYPES = ("euclidean", "distribution_samples", "distribution_quantiles", "composition", "spd")
ROLES = ("exposure", "mediator", "outcome")
_TYPE_METRIC = {
    "euclidean": MetricKind.EUCLIDEAN,
    "distribution_samples": MetricKind.WASSERSTEIN,
    "distribution_quantiles": MetricKind.WASSERSTEIN,
    "composition": MetricKind.SPHERE,
    "spd": MetricKind.FROBENIUS,
}


# --------------------------------------------------------------------------
# Config
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    type: str
    columns: tuple
    levels: Optional[tuple] = None


@dataclass(frozen=True)
class RunConfig:
    data: Optional[str]
    columns: dict
    kernels: dict
    contrast: tuple = (1.0, 0.0)
    q: float = 0.05
    l: Optional[int] = None
    directions: object = "grid"
    eps: Optional[float] = None
    eps_tilde: Optional[float] = None
    eps_grid: Optional[tuple] = None
    eps_tilde_grid: Optional[tuple] = None
    bandwidths_x: Optional[tuple] = None
    bandwidths_m: Optional[tuple] = None
    strategy: str = SPLIT
    inference_shrink: float = 0.1
    seed: int = 0


def _default_kernel(ctype: str) -> dict:
    return {"kind": GAUSSIAN if ctype != "composition" else DISTANCE}


def _floats(v, name) -> Optional[tuple]:
    if v is None:
        return None
    try:
        out = tuple(float(a) for a in np.atleast_1d(v))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number or list of numbers") from exc
    if not out:
        raise ConfigError(f"{name} is empty")
    return out


def _positive(v, name) -> Optional[float]:
    if v is None:
        return None
    if not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
        raise ConfigError(f"{name} must be a positive number")
    return float(v)


def parse_config(raw: dict, base: Optional[Path] = None) -> RunConfig:
    """Validate a config mapping.  Relative data paths resolve against ``base``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"config schema must be {CONFIG_SCHEMA!r}, got {raw.get('schema')!r}")
    cols = raw.get("columns")
    if not isinstance(cols, dict):
        raise ConfigError("config needs a 'columns' object with exposure, mediator and outcome")
    columns, kernels = {}, {}
    for role in ROLES:
        c = cols.get(role)
        if not isinstance(c, dict) or "columns" not in c:
            raise ConfigError(f"columns.{role} must give 'type' and 'columns'")
        ctype = c.get("type", "euclidean")
        if ctype not in COLUMN_TYPES:
            raise ConfigError(f"columns.{role}.type must be one of {COLUMN_TYPES}, got {ctype!r}")
        names = c["columns"]
        if isinstance(names, str) or not names or not all(isinstance(n, str) for n in names):
            raise ConfigError(f"columns.{role}.columns must be a nonempty list of names")
        levels = _floats(c.get("levels"), f"columns.{role}.levels")
        columns[role] = ColumnSpec(ctype, tuple(names), levels)
    for role in ("exposure", "mediator"):
        kraw = dict((raw.get("kernels") or {}).get(role) or _default_kernel(columns[role].type))
        kraw.setdefault("metric", _TYPE_METRIC[columns[role].type].value)
        if kraw.get("kind") == GAUSSIAN:
            kraw.setdefault("bandwidth", 1.0)
        try:
            kernels[role] = KernelSpec.from_dict(kraw)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"kernels.{role}: {exc}") from exc
    q = raw.get("q", 0.05)
    if not isinstance(q, (int, float)) or not 0 < q < 1:
        raise ConfigError("q must lie in (0, 1)")
    l = raw.get("l")
    if l is not None and (not isinstance(l, int) or l < 1):
        raise ConfigError("l must be a positive integer")
    contrast = raw.get("contrast", [1.0, 0.0])
    if not isinstance(contrast, (list, tuple)) or len(contrast) != 2:
        raise ConfigError("contrast must be a pair [x, x_star]")
    directions = raw.get("directions", "grid")
    if not (directions == "grid" or isinstance(directions, list)):
        raise ConfigError("directions must be 'grid' or a list of vectors")
    strategy = raw.get("strategy", SPLIT)
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}")
    eps, eps_tilde = _positive(raw.get("eps"), "eps"), _positive(raw.get("eps_tilde"), "eps_tilde")
    if (eps is None) != (eps_tilde is None):
        raise ConfigError("give both eps and eps_tilde, or neither")
    data = raw.get("data")
    if data is not None and base is not None and not Path(data).is_absolute():
        data = str(base / data)
    shrink = raw.get("inference_shrink", 0.1)
    _positive(shrink, "inference_shrink")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    known = {"schema", "columns", "kernels", "q", "l", "contrast", "directions", "strategy", "eps",
             "eps_tilde", "eps_grid", "eps_tilde_grid", "bandwidths_x", "bandwidths_m", "data",
             "inference_shrink", "seed"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(
        data=data,
        columns=columns,
        kernels=kernels,
        contrast=tuple(contrast),
        q=float(q),
        l=l,
        directions=directions,
        eps=eps,
        eps_tilde=eps_tilde,
        eps_grid=_floats(raw.get("eps_grid"), "eps_grid"),
        eps_tilde_grid=_floats(raw.get("eps_tilde_grid"), "eps_tilde_grid"),
        bandwidths_x=_floats(raw.get("bandwidths_x"), "bandwidths_x"),
        bandwidths_m=_floats(raw.get("bandwidths_m"), "bandwidths_m"),
        strategy=strategy,
        inference_shrink=float(shrink),
        seed=seed,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, base=path.parent)


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DatasetFile:
    """Parsed dataset: one PointCloud per role."""

    exposure: PointCloud
    mediator: PointCloud
    outcome: PointCloud

    @property
    def n(self) -> int:
        return len(self.exposure)


def _cell(value: str, row: int, column: str) -> float:
    if value is None or value.strip() == "":
        raise DataError("missing value", row=row, column=column)
    try:
        out = float(value)
    except ValueError:
        raise DataError(f"not a number: {value!r}", row=row, column=column) from None
    if not math.isfinite(out):
        raise DataError(f"non-finite value {value!r}", row=row, column=column)
    return out


def _block(rows: list, spec: ColumnSpec, role: str) -> np.ndarray:
    out = np.empty((len(rows), len(spec.columns)))
    for i, r in enumerate(rows, start=1):
        missing = [c for c in spec.columns if r.get(c) in (None, "")]
        if missing:
            if spec.type.startswith("distribution"):
                raise DataError(
                    f"ragged {role} distribution: {len(spec.columns) - len(missing)} of "
                    f"{len(spec.columns)} values present", row=i, column=missing[0])
            raise DataError(f"missing {role} value", row=i, column=missing[0])
        for j, c in enumerate(spec.columns):
            out[i - 1, j] = _cell(r[c], i, c)
    return out


def _cloud(values: np.ndarray, spec: ColumnSpec, role: str) -> PointCloud:
    k = values.shape[1]
    if spec.type == "euclidean":
        return PointCloud.euclidean(values)
    if spec.type == "distribution_samples":
        return PointCloud.distributions(values)
    if spec.type == "distribution_quantiles":
        levels = np.asarray(spec.levels) if spec.levels is not None else midpoint_grid(k)
        if levels.size != k:
            raise DataError(f"{role}: {k} quantile columns but {levels.size} levels", column=spec.columns[0])
        bad = np.flatnonzero(np.any(np.diff(values, axis=1) < 0, axis=1))
        if bad.size:
            raise DataError(f"{role} quantiles are not nondecreasing", row=int(bad[0]) + 1)
        return PointCloud.quantiles(values, levels)
    if spec.type == "composition":
        bad = np.flatnonzero((values < 0).any(axis=1) | (np.abs(values.sum(axis=1) - 1.0) > 1e-9))
        if bad.size:
            raise DataError(f"{role} composition must be >= 0 and sum to 1", row=int(bad[0]) + 1)
        return PointCloud.compositions(values)
    p = int(round(math.sqrt(k)))
    if p * p != k:
        raise DataError(f"{role}: spd needs p*p columns, got {k}", column=spec.columns[0])
    mats = values.reshape(-1, p, p)
    for i, a in enumerate(mats):
        if not np.allclose(a, a.T, atol=1e-10) or np.linalg.eigvalsh(0.5 * (a + a.T))[0] <= 0:
            raise DataError(f"{role} matrix is not symmetric positive definite", row=i + 1)
    return PointCloud.spd(mats)


def read_dataset(path, cfg: RunConfig) -> DatasetFile:
    """Read the CSV at ``path``.  Row numbers in errors count data rows from 1."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = []
            for i, r in enumerate(reader, start=1):
                if None in r:
                    raise DataError(f"{len(header) + len(r[None])} fields, header has {len(header)}", row=i)
                rows.append(r)
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    for role, spec in cfg.columns.items():
        absent = [c for c in spec.columns if c not in header]
        if absent:
            raise DataError(f"{role} column not in header", column=absent[0])
    if len(rows) < 3:
        raise DataError(f"need at least 3 data rows, got {len(rows)}")
    clouds = {role: _cloud(_block(rows, spec, role), spec, role) for role, spec in cfg.columns.items()}
    return DatasetFile(clouds["exposure"], clouds["mediator"], clouds["outcome"])


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps_record(record: dict) -> str:
    """One JSON line; floats use ``repr`` so values round-trip exactly."""
    return json.dumps(_plain(record), sort_keys=True, separators=(",", ":"))


def write_jsonl(path, records: Iterable[dict]) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")


def read_jsonl(path) -> list:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header: list, rows: Iterable[list]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path) -> list:
    """Rows as dicts; numeric-looking cells become floats, empty cells ``None``."""
    out = []
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                if v == "":
                    row[k] = None
                    continue
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            out.append(row)
    return out


def load_records(path, schema: str) -> list:
    """Read JSONL records and check that every record carries ``schema``."""
    recs = read_jsonl(path)
    for i, r in enumerate(recs, start=1):
        if r.get("schema") != schema:
            raise DataError(f"expected schema {schema!r}, found {r.get('schema')!r}", row=i)
    return recs


__all__ = [
    "CONFIG_SCHEMA", "FIT_SCHEMA", "EFFECTS_SCHEMA", "REPORT_SCHEMA", "COLUMN_TYPES",
    "ColumnSpec", "RunConfig", "DatasetFile", "parse_config", "load_config", "read_dataset",
    "dumps_record", "write_jsonl", "read_jsonl", "write_csv", "read_csv", "load_records",
]
