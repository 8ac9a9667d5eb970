"""Typed tabular inputs: CSV loading, role assignment and validation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .reporting import ValidationError

MISSING_TOKENS = ("", "NA")


class ColumnRole(str, Enum):
    TREATMENT = "treatment"
    OUTCOME = "outcome"
    COVARIATE = "covariate"
    MEDIATOR = "mediator"
    TREATMENT_RECEIVED = "treatment_received"
    INSTRUMENT = "instrument"
    STRATUM = "stratum"
    PAIR_ID = "pair_id"
    RUNNING = "running"
    WEIGHT = "weight"


class DataError(ValidationError):
    """Malformed input file."""


@dataclass(frozen=True)
class Finding:
    code: str
    column: str
    rows: tuple
    message: str


@dataclass
class Dataset:
    """Named numeric columns plus a role for some of them.

    Missing cells are stored as NaN and recorded in ``missing``.
    """

    columns: dict
    roles: dict = field(default_factory=dict)
    missing: dict = field(default_factory=dict)
    order: list = field(default_factory=list)

    def __post_init__(self):
        if not self.order:
            self.order = list(self.columns)
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DataError("columns have different lengths")
        for name, col in list(self.columns.items()):
            self.columns[name] = np.asarray(col, dtype=float)
            if name not in self.missing:
                self.missing[name] = np.isnan(self.columns[name])
        for name in self.roles:
            if name not in self.columns:
                raise DataError(f"role assigned to unknown column '{name}'")

    @property
    def rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name) -> np.ndarray:
        if name not in self.columns:
            raise DataError(f"no column named '{name}'")
        return self.columns[name]

    def names_with_role(self, role) -> list:
        role = ColumnRole(role)
        return [c for c in self.order if self.roles.get(c) == role]

    def get(self, role, required=True):
        names = self.names_with_role(role)
        if not names:
            if required:
                raise DataError(f"no column has role '{ColumnRole(role).value}'")
            return None
        if len(names) > 1:
            raise DataError(f"several columns have role '{ColumnRole(role).value}'")
        return self.columns[names[0]]

    def covariates(self) -> np.ndarray:
        names = self.names_with_role(ColumnRole.COVARIATE)
        if not names:
            return np.zeros((self.rows, 0))
        return np.column_stack([self.columns[c] for c in names])

    def require_complete(self):
        """Raise if any role-assigned column still has missing cells."""
        bad = {c: np.flatnonzero(self.missing[c]).tolist() for c in self.roles if self.missing[c].any()}
        if bad:
            detail = "; ".join(f"{c}: rows {r[:5]}" for c, r in bad.items())
            raise DataError(f"missing values in role columns ({detail}); pass an imputation flag explicitly")

    def impute_mean(self, name, by=None) -> "Dataset":
        """Replace missing cells of ``name`` by observed means (within ``by``
        groups when given). Returns a new Dataset; the flag is recorded."""
        col = self.columns[name].copy()
        miss = self.missing[name]
        groups = np.zeros(self.rows) if by is None else self.columns[by]
        for g in np.unique(groups[~np.isnan(groups)]):
            sel = groups == g
            obs = sel & ~miss
            if not obs.any():
                raise DataError(f"cannot impute '{name}': group {g} has no observed values")
            col[sel & miss] = col[obs].mean()
        columns = dict(self.columns)
        columns[name] = col
        missing = dict(self.missing)
        missing[name] = np.zeros(self.rows, dtype=bool)
        return Dataset(columns, dict(self.roles), missing, list(self.order))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.order != other.order or self.roles != other.roles:
            return False
        for c in self.order:
            if not np.array_equal(self.missing[c], other.missing[c]):
                return False
            a, b = self.columns[c], other.columns[c]
            if not np.array_equal(a[~self.missing[c]], b[~other.missing[c]]):
                return False
        return True


def _normalise_roles(role_map) -> dict:
    """Turn {role: column or [columns]} into {column: ColumnRole}."""
    roles = {}
    for role, cols in (role_map or {}).items():
        role = ColumnRole(role)
        if cols is None:
            continue
        if isinstance(cols, str):
            cols = [cols]
        for c in cols:
            if c in roles:
                raise DataError(f"column '{c}' assigned two roles")
            roles[c] = role
    return roles


def _parse_cell(text, row, col):
    t = text.strip()
    if t in MISSING_TOKENS:
        return np.nan, True
    try:
        return float(t), False
    except ValueError:
        raise DataError(f"row {row}, column '{col}': cannot parse '{text}' as a number") from None


def load_csv(path, role_map=None) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file; a header row is required") from None
        seen = set()
        for h in header:
            if h in seen:
                raise DataError(f"duplicate header '{h}'")
            seen.add(h)
        values = {h: [] for h in header}
        missing = {h: [] for h in header}
        for i, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"row {i}: expected {len(header)} cells, found {len(rec)}")
            for h, cell in zip(header, rec):
                v, m = _parse_cell(cell, i, h)
                values[h].append(v)
                missing[h].append(m)
    roles = _normalise_roles(role_map)
    for c in roles:
        if c not in values:
            raise DataError(f"declared column '{c}' not found in {path.name}")
    columns = {h: np.array(values[h], dtype=float) for h in header}
    miss = {h: np.array(missing[h], dtype=bool) for h in header}
    return Dataset(columns, roles, miss, list(header))


def write_csv(ds: Dataset, path) -> None:
    """Write a Dataset so that load_csv reproduces it exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.order)
        for i in range(ds.rows):
            writer.writerow(
                ["NA" if ds.missing[c][i] else repr(float(ds.columns[c][i])) for c in ds.order]
            )


def validate(ds: Dataset) -> list:
    """Check role invariants; returns findings (never raises)."""
    findings = []
    for c, role in sorted(ds.roles.items(), key=lambda kv: ds.order.index(kv[0])):
        col = ds.columns[c]
        miss = ds.missing[c]
        if miss.any():
            rows = tuple(np.flatnonzero(miss).tolist())
            findings.append(Finding("missing", c, rows, f"{len(rows)} missing values in '{c}'"))
        if role == ColumnRole.TREATMENT:
            bad = ~miss & ~np.isin(col, (0.0, 1.0))
            if bad.any():
                rows = tuple(np.flatnonzero(bad).tolist())
                findings.append(Finding("non-binary treatment", c, rows,
                                        f"treatment '{c}' takes values outside {{0, 1}}"))
        if role == ColumnRole.PAIR_ID:
            ids, counts = np.unique(col[~miss], return_counts=True)
            for g in ids[counts < 2]:
                rows = tuple(np.flatnonzero(col == g).tolist())
                findings.append(Finding("singleton pair group", c, rows,
                                        f"pair id {g:g} has a single row"))
    return findings
