"""Time-series datasets with column roles, CSV I/O, stationarity transforms and lags."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "DataError",
    "Role",
    "TimeSeriesDataset",
    "Transform",
    "TransformSpec",
    "load_csv",
    "transform_and_lag",
    "write_csv",
]


class DataError(ValueError):
    pass


class Role(str, Enum):
    OUTCOME = "outcome"
    POLICY = "policy"
    CONTROL = "control"
    CHANNEL = "channel"


class Transform(str, Enum):
    NONE = "none"
    DIFF = "diff"
    LOG_DIFF = "log_diff"


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Ordered observations with one outcome, one policy and any number of controls.

    ``columns`` keeps insertion order, which is also the CSV column order.
    Channel columns may be present in the raw data but are never part of
    :meth:`control_matrix`; they enter the model only through their lags.
    """

    columns: dict[str, NDArray[np.float64]]
    roles: dict[str, Role]
    index: tuple[str, ...]
    flags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        T = len(self.index)
        if set(self.columns) != set(self.roles):
            missing = set(self.columns) ^ set(self.roles)
            raise DataError(f"roles must cover exactly the data columns; mismatch on {sorted(missing)}")
        for name, v in self.columns.items():
            if v.shape != (T,):
                raise DataError(f"column {name!r} has shape {v.shape}, expected ({T},)")
            if not np.all(np.isfinite(v)):
                bad = int(np.flatnonzero(~np.isfinite(v))[0])
                raise DataError(f"column {name!r} has a missing/non-finite value at row {bad}")
        for role in (Role.OUTCOME, Role.POLICY):
            n = sum(r is role for r in self.roles.values())
            if n != 1:
                raise DataError(f"need exactly one {role.value} column, found {n}")
        if len(set(self.index)) != T:
            raise DataError("duplicate time labels")

    @property
    def T(self) -> int:
        return len(self.index)

    def _single(self, role: Role) -> str:
        return next(n for n, r in self.roles.items() if r is role)

    @property
    def outcome_name(self) -> str:
        return self._single(Role.OUTCOME)

    @property
    def policy_name(self) -> str:
        return self._single(Role.POLICY)

    @property
    def control_names(self) -> list[str]:
        return [n for n, r in self.roles.items() if r is Role.CONTROL]

    @property
    def outcome(self) -> NDArray[np.float64]:
        return self.columns[self.outcome_name]

    @property
    def policy(self) -> NDArray[np.float64]:
        return self.columns[self.policy_name]

    def control_matrix(self) -> NDArray[np.float64]:
        names = self.control_names
        if not names:
            return np.zeros((self.T, 0))
        return np.column_stack([self.columns[n] for n in names])

    def with_outcome(self, values) -> "TimeSeriesDataset":
        cols = dict(self.columns)
        cols[self.outcome_name] = np.asarray(values, dtype=np.float64)
        return TimeSeriesDataset(cols, dict(self.roles), self.index, dict(self.flags))

    def relabel(self, roles: Mapping[str, Role | str]) -> "TimeSeriesDataset":
        return TimeSeriesDataset(dict(self.columns), {k: Role(v) for k, v in roles.items()}, self.index)


def load_csv(path, role_map: Mapping[str, Role | str], time_column: str | None = None) -> TimeSeriesDataset:
    """Read a rectangular CSV with a header row. Lines starting with ``#`` are skipped.

    Every non-time column needs a role; row order is preserved.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    if time_column is not None and time_column not in header:
        raise DataError(f"{path}: time column {time_column!r} not in header")
    data_cols = [h for h in header if h != time_column]
    roles: dict[str, Role] = {}
    for name, role in role_map.items():
        try:
            roles[name] = Role(role)
        except ValueError:
            raise DataError(f"unknown role {role!r} for column {name!r}") from None
        if name not in data_cols:
            raise DataError(f"role given for column {name!r} which is not in {path}")
    unassigned = [c for c in data_cols if c not in roles]
    if unassigned:
        raise DataError(f"columns without a role: {unassigned}")

    values = {c: np.empty(len(body)) for c in data_cols}
    labels = []
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
        for name, cell in zip(header, row):
            if name == time_column:
                labels.append(cell)
                continue
            if cell.strip() == "":
                raise DataError(f"{path}: missing value at row {i + 1}, column {name!r}")
            try:
                values[name][i] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {i + 1}, column {name!r}") from None
    index = tuple(labels) if time_column is not None else tuple(str(i) for i in range(len(body)))
    if len(set(index)) != len(index):
        raise DataError(f"{path}: duplicate time labels")
    return TimeSeriesDataset({c: values[c] for c in data_cols}, {c: roles[c] for c in data_cols}, index)


def write_csv(data: TimeSeriesDataset, path, time_column: str = "t", header_comment: str | None = None) -> None:
    """Write ``data`` with full float precision (``repr`` round-trips exactly)."""
    path = Path(path)
    names = list(data.columns)
    with path.open("w", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow([time_column, *names])
        cols = [data.columns[n] for n in names]
        for i, label in enumerate(data.index):
            w.writerow([label, *(repr(float(c[i])) for c in cols)])


def write_roles(data: TimeSeriesDataset, path, **extra) -> None:
    payload = {"roles": {k: v.value for k, v in data.roles.items()}, **extra}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


@dataclass(frozen=True)
class TransformSpec:
    transforms: dict[str, Transform] = field(default_factory=dict)
    lags: int = 3

    def __post_init__(self):
        if self.lags < 0:
            raise ValueError("lags must be >= 0")
        object.__setattr__(self, "transforms", {k: Transform(v) for k, v in self.transforms.items()})

    @property
    def is_identity(self) -> bool:
        return self.lags == 0 and all(t is Transform.NONE for t in self.transforms.values())


def transform_and_lag(data: TimeSeriesDataset, spec: TransformSpec) -> TimeSeriesDataset:
    """Apply per-column transforms, then append lags ``1..L`` of every column as controls.

    Channel columns are dropped contemporaneously and survive only as lags.
    Rows made incomplete by differencing or lagging are trimmed from the start.
    """
    unknown = set(spec.transforms) - set(data.columns)
    if unknown:
        raise DataError(f"transforms given for unknown columns {sorted(unknown)}")
    transformed: dict[str, NDArray[np.float64]] = {}
    lost = 0
    flags: dict[str, str] = dict(data.flags)
    for name, v in data.columns.items():
        t = spec.transforms.get(name, Transform.NONE)
        if t is Transform.LOG_DIFF:
            if np.any(v <= 0):
                raise DataError(f"log_diff needs strictly positive values in column {name!r}")
            out = np.concatenate([[np.nan], np.diff(np.log(v))])
        elif t is Transform.DIFF:
            out = np.concatenate([[np.nan], np.diff(v)])
        else:
            out = v.copy()
        if t is not Transform.NONE:
            lost = 1
            if np.all(out[1:] == 0):
                flags[name] = "constant"
        transformed[name] = out

    L = spec.lags
    start = lost + L
    if start >= data.T:
        raise DataError(f"only {data.T} rows; transforms and {L} lags leave none")
    cols: dict[str, NDArray[np.float64]] = {}
    roles: dict[str, Role] = {}
    for name, role in data.roles.items():
        if role is not Role.CHANNEL:
            cols[name] = transformed[name][start:]
            roles[name] = role
    for lag in range(1, L + 1):
        for name in data.columns:
            lname = f"{name}_lag{lag}"
            if lname in cols:
                raise DataError(f"lag column {lname!r} collides with an existing column")
            cols[lname] = transformed[name][start - lag:data.T - lag]
            roles[lname] = Role.CONTROL
    for name, v in cols.items():
        if v.size and np.all(v == v[0]):
            flags.setdefault(name, "constant")
    return TimeSeriesDataset(cols, roles, data.index[start:], flags)
