"""Three-dimensional panel container, CSV ingestion and pruning of uninformative cells.

Observations are indexed by a sender ``i``, a receiver ``j`` and a period ``t``.
Every observation belongs to exactly one cell of each of the three fixed-effect
families ``it``, ``jt`` and ``ij``. Cells are stored as dense integer codes per
observation, so the panel may be unbalanced (for example ``i == j`` excluded).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DuplicateKey, NoInformativeData, NonBinaryOutcome, NonFiniteRegressor

FAMILIES = ("it", "jt", "ij")


@dataclass(frozen=True)
class Observation:
    i: Any
    j: Any
    t: Any
    y: int
    x: tuple[float, ...]


@dataclass(frozen=True)
class Schema:
    """Column roles of a flat input table."""

    i: str = "i"
    j: str = "j"
    t: str = "t"
    y: str = "y"
    x: tuple[str, ...] = ("x",)

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))


def _dense_codes(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map integer keys to codes 0..G-1 in order of first appearance.

    Returns ``(codes, uniques)`` with ``uniques[codes] == keys``.
    """
    uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inv.ravel()], uniq[order]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Panel:
    """Validated, immutable three-dimensional panel.

    Attributes
    ----------
    i, j, t : ndarray of int
        Dense label codes per observation, assigned in first-appearance order.
    y : ndarray of float
        Binary outcome.
    X : ndarray, shape (n, K)
        Regressors.
    i_labels, j_labels, t_labels : tuple
        Original labels, ``i_labels[i[o]]`` is the sender of observation ``o``.
    x_names : tuple of str
    it, jt, ij : ndarray of int
        Cell code of every observation in each fixed-effect family.
    """

    i: np.ndarray
    j: np.ndarray
    t: np.ndarray
    y: np.ndarray
    X: np.ndarray
    i_labels: tuple
    j_labels: tuple
    t_labels: tuple
    x_names: tuple
    it: np.ndarray = field(init=False)
    jt: np.ndarray = field(init=False)
    ij: np.ndarray = field(init=False)
    it_keys: np.ndarray = field(init=False)
    jt_keys: np.ndarray = field(init=False)
    ij_keys: np.ndarray = field(init=False)

    def __post_init__(self):
        set_ = object.__setattr__
        for name in ("i", "j", "t"):
            set_(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int64)))
        set_(self, "y", _readonly(np.asarray(self.y, dtype=np.float64)))
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        set_(self, "X", _readonly(X))
        I, J, T = self.I, self.J, self.T
        pairs = {
            "it": (self.i * T + self.t, T),
            "jt": (self.j * T + self.t, T),
            "ij": (self.i * J + self.j, J),
        }
        for fam, (key, base) in pairs.items():
            codes, uniq = _dense_codes(key)
            set_(self, fam, _readonly(codes))
            set_(self, fam + "_keys", _readonly(np.column_stack([uniq // base, uniq % base])))

    # sizes
    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def K(self) -> int:
        return int(self.X.shape[1])

    @property
    def I(self) -> int:
        return len(self.i_labels)

    @property
    def J(self) -> int:
        return len(self.j_labels)

    @property
    def T(self) -> int:
        return len(self.t_labels)

    def n_cells(self, family: str) -> int:
        return int(getattr(self, family + "_keys").shape[0])

    def codes(self, family: str) -> np.ndarray:
        return getattr(self, family)

    def members(self, family: str) -> list[np.ndarray]:
        """Observation indexes of every cell of ``family``, in cell-code order."""
        return self._members[family]

    @cached_property
    def _members(self) -> dict[str, list[np.ndarray]]:
        out = {}
        for fam in FAMILIES:
            codes = self.codes(fam)
            order = np.argsort(codes, kind="stable")
            bounds = np.cumsum(np.bincount(codes, minlength=self.n_cells(fam)))[:-1]
            out[fam] = np.split(order, bounds)
        return out

    @property
    def it_cells(self) -> list[np.ndarray]:
        return self.members("it")

    @property
    def jt_cells(self) -> list[np.ndarray]:
        return self.members("jt")

    @property
    def ij_cells(self) -> list[np.ndarray]:
        return self.members("ij")

    def cell_label(self, family: str, g: int) -> tuple:
        a, b = getattr(self, family + "_keys")[g]
        first = {"it": self.i_labels, "jt": self.j_labels, "ij": self.i_labels}[family]
        second = {"it": self.t_labels, "jt": self.t_labels, "ij": self.j_labels}[family]
        return (first[a], second[b])

    def is_balanced(self) -> bool:
        return self.n == self.I * self.J * self.T

    def label_counts(self) -> dict[str, dict]:
        """Observation counts per sender, receiver and period label."""
        out = {}
        for name, codes, labels in (("i", self.i, self.i_labels), ("j", self.j, self.j_labels),
                                    ("t", self.t, self.t_labels)):
            counts = np.bincount(codes, minlength=len(labels))
            out[name] = {lab: int(c) for lab, c in zip(labels, counts)}
        return out

    def observations(self) -> list[Observation]:
        return [
            Observation(self.i_labels[a], self.j_labels[b], self.t_labels[c], int(yy), tuple(map(float, xx)))
            for a, b, c, yy, xx in zip(self.i, self.j, self.t, self.y, self.X)
        ]

    def to_rows(self, schema: Schema | None = None) -> list[dict]:
        schema = schema or Schema(x=self.x_names)
        rows = []
        for ob in self.observations():
            row = {schema.i: ob.i, schema.j: ob.j, schema.t: ob.t, schema.y: ob.y}
            row.update(zip(schema.x, ob.x))
            rows.append(row)
        return rows

    def subset(self, mask: np.ndarray) -> "Panel":
        """Panel restricted to ``mask``; labels that lose all observations disappear."""
        mask = np.asarray(mask, dtype=bool)
        new = {}
        for name in ("i", "j", "t"):
            codes, uniq = _dense_codes(getattr(self, name)[mask])
            labels = getattr(self, name + "_labels")
            new[name] = (codes, tuple(labels[u] for u in uniq))
        return Panel(
            i=new["i"][0], j=new["j"][0], t=new["t"][0],
            y=self.y[mask], X=self.X[mask],
            i_labels=new["i"][1], j_labels=new["j"][1], t_labels=new["t"][1],
            x_names=self.x_names,
        )

    @classmethod
    def from_arrays(cls, i, j, t, y, X, x_names: Sequence[str] | None = None) -> "Panel":
        """Build a panel from label arrays without per-row validation of labels.

        Outcomes and regressors are still validated, and duplicate keys rejected.
        """
        y = np.asarray(y, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        lengths = {len(i), len(j), len(t), y.shape[0], X.shape[0]}
        if len(lengths) != 1:
            raise DataError(f"label, outcome and regressor arrays differ in length: {sorted(lengths)}")
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise NonBinaryOutcome(int(bad[0]) + 1, y[bad[0]])
        nonfinite = np.argwhere(~np.isfinite(X))
        if nonfinite.size:
            r, k = nonfinite[0]
            raise NonFiniteRegressor(int(r) + 1, k, X[r, k])
        codes = {}
        for name, arr in (("i", i), ("j", j), ("t", t)):
            arr = np.asarray(arr)
            if arr.dtype.kind in "iu":
                c, uniq = _dense_codes(arr.astype(np.int64))
                codes[name] = (c, tuple(uniq.tolist()))
            else:
                lookup: dict = {}
                c = np.fromiter((lookup.setdefault(v, len(lookup)) for v in arr.tolist()),
                                dtype=np.int64, count=arr.size)
                codes[name] = (c, tuple(lookup))
        ci, cj, ct = codes["i"][0], codes["j"][0], codes["t"][0]
        key = (ci * len(codes["j"][1]) + cj) * len(codes["t"][1]) + ct
        uniq, first, counts = np.unique(key, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = int(np.flatnonzero(key == uniq[np.argmax(counts > 1)])[1])
            raise DuplicateKey((codes["i"][1][ci[dup]], codes["j"][1][cj[dup]], codes["t"][1][ct[dup]]), dup + 1)
        if x_names is None:
            x_names = tuple(f"x{k + 1}" for k in range(X.shape[1]))
        return cls(i=ci, j=cj, t=ct, y=y, X=X,
                   i_labels=codes["i"][1], j_labels=codes["j"][1], t_labels=codes["t"][1],
                   x_names=tuple(x_names))


def _parse_outcome(value, row: int) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, (int, np.integer)) and value in (0, 1):
        return int(value)
    if isinstance(value, (float, np.floating)) and value in (0.0, 1.0):
        return int(value)
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    raise NonBinaryOutcome(row, value)


def _parse_regressor(value, row: int, name: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise NonFiniteRegressor(row, name, value) from None
    if not math.isfinite(out):
        raise NonFiniteRegressor(row, name, value)
    return out


def build_panel(records: Iterable[Mapping], schema: Schema) -> Panel:
    """Validate raw rows and index them into a :class:`Panel`.

    Parameters
    ----------
    records : iterable of mappings
        One mapping per observation, keyed by the column names in ``schema``.
    schema : Schema
        Names of the sender, receiver, period, outcome and regressor columns.

    Raises
    ------
    DuplicateKey, NonBinaryOutcome, NonFiniteRegressor
        Row numbers in the errors are 1-based data rows.
    """
    seen: dict[tuple, int] = {}
    labels = {"i": {}, "j": {}, "t": {}}
    ci, cj, ct, ys, xs = [], [], [], [], []
    for row_no, rec in enumerate(records, start=1):
        try:
            key = (rec[schema.i], rec[schema.j], rec[schema.t])
        except KeyError as exc:
            raise DataError(f"row {row_no}: missing column {exc.args[0]!r}") from None
        if key in seen:
            raise DuplicateKey(key, row_no)
        seen[key] = row_no
        ys.append(_parse_outcome(rec.get(schema.y), row_no))
        xs.append([_parse_regressor(rec.get(name), row_no, name) for name in schema.x])
        for name, lab, out in (("i", key[0], ci), ("j", key[1], cj), ("t", key[2], ct)):
            out.append(labels[name].setdefault(lab, len(labels[name])))
    K = len(schema.x)
    X = np.asarray(xs, dtype=np.float64).reshape(len(ys), K)
    return Panel(i=np.asarray(ci, dtype=np.int64), j=np.asarray(cj, dtype=np.int64),
                 t=np.asarray(ct, dtype=np.int64), y=np.asarray(ys, dtype=np.float64), X=X,
                 i_labels=tuple(labels["i"]), j_labels=tuple(labels["j"]),
                 t_labels=tuple(labels["t"]), x_names=schema.x)


def read_csv(path, schema: Schema) -> Panel:
    """Read a headered UTF-8 CSV file into a panel."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in (schema.i, schema.j, schema.t, schema.y, *schema.x)
                   if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        return build_panel(reader, schema)


def write_csv(panel: Panel, path, schema: Schema | None = None) -> None:
    schema = schema or Schema(x=panel.x_names)
    rows = panel.to_rows(schema)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=[schema.i, schema.j, schema.t, schema.y, *schema.x])
        writer.writeheader()
        for row in rows:
            row = dict(row)
            for name in schema.x:
                row[name] = repr(row[name])
            writer.writerow(row)


@dataclass
class DropReport:
    """Record of the cells removed while pruning to the fixed point."""

    rounds: int = 1
    dropped_cells: list[tuple[str, tuple, str]] = field(default_factory=list)
    dropped_observation_count: int = 0
    dropped_labels: dict[str, list] = field(default_factory=lambda: {"i": [], "j": [], "t": []})

    @property
    def dropped(self) -> int:
        return self.dropped_observation_count

    def replay(self, panel: Panel) -> Panel:
        """Remove every observation of every listed cell from ``panel``."""
        listed = {fam: set() for fam in FAMILIES}
        for fam, label, _ in self.dropped_cells:
            listed[fam].add(label)
        keep = np.ones(panel.n, dtype=bool)
        for fam in FAMILIES:
            if not listed[fam]:
                continue
            bad = np.array([panel.cell_label(fam, g) in listed[fam] for g in range(panel.n_cells(fam))])
            keep &= ~bad[panel.codes(fam)]
        return panel.subset(keep)


def drop_uninformative(panel: Panel) -> tuple[Panel, DropReport]:
    """Iteratively remove cells whose outcomes are all 0 or all 1.

    Each pass scans all three families on the current panel and removes every
    observation of every constant cell; passes repeat until one removes nothing.
    ``rounds`` counts the passes that removed something (at least 1).

    Raises
    ------
    NoInformativeData
        If nothing survives.
    """
    report = DropReport()
    current = panel
    removing_passes = 0
    while True:
        keep = np.ones(current.n, dtype=bool)
        for fam in FAMILIES:
            codes = current.codes(fam)
            G = current.n_cells(fam)
            ones = np.bincount(codes, weights=current.y, minlength=G)
            size = np.bincount(codes, minlength=G)
            all_zero = ones == 0
            all_one = ones == size
            for g in np.flatnonzero(all_zero | all_one):
                reason = "all-zero" if all_zero[g] else "all-one"
                report.dropped_cells.append((fam, current.cell_label(fam, int(g)), reason))
            keep &= ~(all_zero | all_one)[codes]
        if keep.all():
            break
        removing_passes += 1
        current = current.subset(keep)
        if current.n == 0:
            raise NoInformativeData("no observations left after removing uninformative cells")
    report.rounds = max(removing_passes, 1)
    report.dropped_observation_count = panel.n - current.n
    for name in ("i", "j", "t"):
        left = set(getattr(current, name + "_labels"))
        report.dropped_labels[name] = [lab for lab in getattr(panel, name + "_labels") if lab not in left]
    return current, report


def panel_summary(panel: Panel, report: DropReport | None = None) -> dict:
    out = {"n": panel.n, "I": panel.I, "J": panel.J, "T": panel.T, "K": panel.K}
    if report is not None:
        out["rounds"] = report.rounds
        out["dropped"] = report.dropped_observation_count
    return out
