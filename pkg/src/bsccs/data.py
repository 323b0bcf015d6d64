"""Case-series data model.

A :class:`Dataset` is the immutable, indexed form of a cases-only
self-controlled case series: one row per constant-exposure era, rows of a
subject stored contiguously, and the 0/1 design matrix held only as the
row indices of its nonzeros (compressed columns). Each column also carries
its nonzeros as (subject, row) coordinate pairs so the per-subject
numerators of the gradient can be formed without touching the rest of the
data.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError

LONG_FORMAT_HEADER = ("subject_id", "length_days", "event_count", "exposures")


@dataclass(frozen=True)
class Era:
    """A stretch of observation with constant drug exposure."""

    length_days: int
    event_count: int
    exposures: tuple[int, ...] = ()


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    eras: tuple[Era, ...]

    @property
    def n_events(self) -> int:
        return sum(era.event_count for era in self.eras)


class DrugDictionary:
    """Bidirectional map between drug labels and column indices.

    New labels get the next free index (first-appearance order) unless the
    dictionary is frozen, in which case unknown labels are an error.
    """

    def __init__(self, labels: Iterable[str] = (), *, frozen: bool = False):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            if label in self._index:
                raise DatasetError(f"duplicate drug label {label!r} in dictionary")
            self._index[label] = len(self._labels)
            self._labels.append(label)
        self.frozen = frozen

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def index(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            if self.frozen:
                raise DatasetError(f"drug label {label!r} is not in the drug dictionary")
            idx = len(self._labels)
            self._index[label] = idx
            self._labels.append(label)
        return idx

    @classmethod
    def from_file(cls, path: str | PathLike) -> "DrugDictionary":
        with open(path, encoding="utf-8") as fh:
            labels = [line.rstrip("\r\n") for line in fh]
        while labels and not labels[-1]:
            labels.pop()
        for lineno, label in enumerate(labels, 1):
            if not label or label != label.strip():
                raise DatasetError(f"{path}:{lineno}: empty or padded drug label")
        return cls(labels, frozen=True)

    def to_file(self, path: str | PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for label in self._labels:
                fh.write(label + "\n")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable cases-only dataset.

    Row-level vectors have length ``K``; ``subject_offsets[i]:subject_offsets[i+1]``
    are the rows of subject ``i``. Column ``j`` of the design matrix is
    ``col_rows[col_ptr[j]:col_ptr[j+1]]`` (ascending), and
    ``col_subjects`` holds the subject of each of those rows.
    """

    J: int
    Y: np.ndarray
    L: np.ndarray
    subject_offsets: np.ndarray
    n: np.ndarray
    row_subject: np.ndarray
    col_ptr: np.ndarray
    col_rows: np.ndarray
    col_subjects: np.ndarray
    y_dot_x: np.ndarray
    row_ptr: np.ndarray
    row_drugs: np.ndarray
    drug_ids: tuple[str, ...]
    subject_ids: tuple[str, ...]
    x_max: int = field(default=0)

    @property
    def K(self) -> int:
        return int(self.Y.shape[0])

    @property
    def N(self) -> int:
        return int(self.n.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.col_rows.shape[0])

    def column(self, j: int) -> np.ndarray:
        """Ascending row indices of the nonzeros of column ``j``."""
        return self.col_rows[self.col_ptr[j]:self.col_ptr[j + 1]]

    def column_subject_pairs(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(subject, row) coordinates of the nonzeros of ``M X_j``."""
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.col_subjects[lo:hi], self.col_rows[lo:hi]

    def column_density(self) -> np.ndarray:
        return np.diff(self.col_ptr) / max(self.K, 1)

    def era_exposures(self, k: int) -> np.ndarray:
        return self.row_drugs[self.row_ptr[k]:self.row_ptr[k + 1]]

    def to_records(self) -> list[SubjectRecord]:
        records = []
        for i in range(self.N):
            eras = tuple(
                Era(int(self.L[k]), int(self.Y[k]), tuple(int(d) for d in self.era_exposures(k)))
                for k in range(self.subject_offsets[i], self.subject_offsets[i + 1])
            )
            records.append(SubjectRecord(self.subject_ids[i], eras))
        return records

    def validate(self) -> None:
        """Re-check every structural invariant; raise DatasetError on breach."""
        off = self.subject_offsets
        if off.shape != (self.N + 1,) or off[0] != 0 or off[-1] != self.K:
            raise DatasetError("subject_offsets must run from 0 to K")
        if np.any(np.diff(off) <= 0):
            raise DatasetError("subject_offsets must be strictly increasing")
        if np.any(self.n < 1):
            raise DatasetError("every subject must have at least one event")
        if not np.array_equal(np.add.reduceat(self.Y, off[:-1]), self.n):
            raise DatasetError("n does not match per-subject event totals")
        if np.any(self.L < 1):
            raise DatasetError("era lengths must be positive")
        if self.col_ptr.shape != (self.J + 1,) or self.col_ptr[-1] != self.nnz:
            raise DatasetError("col_ptr inconsistent with nonzero count")
        for j in range(self.J):
            rows = self.column(j)
            if rows.size and (np.any(np.diff(rows) <= 0) or rows[0] < 0 or rows[-1] >= self.K):
                raise DatasetError(f"column {j} row indices not strictly ascending in [0, K)")
        if not np.array_equal(self.col_subjects, self.row_subject[self.col_rows]):
            raise DatasetError("column subject pairs inconsistent with subject offsets")
        ydx = np.bincount(self.row_drugs, weights=self.Y[_entry_rows(self.row_ptr)],
                          minlength=self.J).astype(np.int64)
        if not np.array_equal(ydx, self.y_dot_x):
            raise DatasetError("y_dot_x does not match Y'X")
        counts = np.diff(self.col_ptr)
        if self.x_max != (int(counts.max()) if self.J else 0) or self.x_max > self.K:
            raise DatasetError("x_max inconsistent with column counts")

    def equals(self, other: "Dataset") -> bool:
        """Field-by-field equality (arrays compared exactly)."""
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if a.dtype != b.dtype or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True


def _entry_rows(row_ptr: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(row_ptr.shape[0] - 1, dtype=np.int64), np.diff(row_ptr))


def _assemble(Y, L, offsets, row_ptr, row_drugs, J, drug_ids, subject_ids) -> Dataset:
    K = Y.shape[0]
    N = offsets.shape[0] - 1
    row_subject = np.repeat(np.arange(N, dtype=np.int64), np.diff(offsets))
    n = np.add.reduceat(Y, offsets[:-1]) if N else np.zeros(0, np.int64)
    entry_rows = _entry_rows(row_ptr)
    # stable sort keeps rows ascending within each column
    order = np.argsort(row_drugs, kind="stable")
    col_rows = entry_rows[order]
    counts = np.bincount(row_drugs, minlength=J)
    col_ptr = np.zeros(J + 1, dtype=np.int64)
    np.cumsum(counts, out=col_ptr[1:])
    y_dot_x = np.bincount(row_drugs, weights=Y[entry_rows], minlength=J).astype(np.int64)
    return Dataset(
        J=J,
        Y=_readonly(Y),
        L=_readonly(L),
        subject_offsets=_readonly(offsets),
        n=_readonly(n.astype(np.int64)),
        row_subject=_readonly(row_subject),
        col_ptr=_readonly(col_ptr),
        col_rows=_readonly(col_rows.astype(np.int64)),
        col_subjects=_readonly(row_subject[col_rows]),
        y_dot_x=_readonly(y_dot_x),
        row_ptr=_readonly(row_ptr),
        row_drugs=_readonly(row_drugs),
        drug_ids=tuple(drug_ids),
        subject_ids=tuple(subject_ids),
        x_max=int(counts.max()) if J else 0,
    )


def build_dataset(records: Sequence[SubjectRecord], J: int,
                  drug_ids: Sequence[str] | None = None) -> Dataset:
    """Validate ``records`` and lay out the cases-only dataset.

    Subjects without events are dropped; subject and era order is kept.
    """
    if J < 1:
        raise DatasetError("drug count J must be at least 1")
    if drug_ids is None:
        drug_ids = [str(j) for j in range(J)]
    elif len(drug_ids) != J:
        raise DatasetError(f"expected {J} drug labels, got {len(drug_ids)}")

    Y, L, drugs, drug_counts, sizes, kept_ids = [], [], [], [], [], []
    for rec in records:
        if not rec.eras:
            raise DatasetError(f"subject {rec.subject_id!r} has no eras")
        for era in rec.eras:
            if era.length_days <= 0:
                raise DatasetError(
                    f"subject {rec.subject_id!r}: era length {era.length_days} must be >= 1 day")
            if era.event_count < 0:
                raise DatasetError(f"subject {rec.subject_id!r}: negative event count")
            ex = era.exposures
            if any(d < 0 or d >= J for d in ex):
                raise DatasetError(
                    f"subject {rec.subject_id!r}: exposure index out of range [0, {J})")
            if any(a >= b for a, b in zip(ex, ex[1:])):
                raise DatasetError(
                    f"subject {rec.subject_id!r}: exposures must be strictly ascending")
        if rec.n_events == 0:
            continue
        kept_ids.append(rec.subject_id)
        sizes.append(len(rec.eras))
        for era in rec.eras:
            Y.append(era.event_count)
            L.append(era.length_days)
            drugs.extend(era.exposures)
            drug_counts.append(len(era.exposures))
    if not kept_ids:
        raise DatasetError("no subject has an event; the cases-only dataset is empty")

    offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    row_ptr = np.zeros(len(Y) + 1, dtype=np.int64)
    np.cumsum(drug_counts, out=row_ptr[1:])
    return _assemble(np.asarray(Y, dtype=np.int64), np.asarray(L, dtype=np.int64), offsets,
                     row_ptr, np.asarray(drugs, dtype=np.int64), J, drug_ids, kept_ids)


def subset_dataset(ds: Dataset, subject_indices: Sequence[int] | np.ndarray) -> Dataset:
    """Dataset of the selected subjects, in the given order.

    Repeated indices produce repeated, independent subjects.
    """
    idx = np.asarray(subject_indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise DatasetError("subset is empty")
    if idx.min() < 0 or idx.max() >= ds.N:
        raise DatasetError(f"subject index out of range [0, {ds.N})")
    off = ds.subject_offsets
    sizes = off[idx + 1] - off[idx]
    new_off = np.zeros(idx.size + 1, dtype=np.int64)
    np.cumsum(sizes, out=new_off[1:])
    # row k of the new dataset comes from old row rows[k]
    rows = np.repeat(off[idx] - new_off[:-1], sizes) + np.arange(new_off[-1], dtype=np.int64)
    rp = ds.row_ptr
    per_row = rp[rows + 1] - rp[rows]
    new_rp = np.zeros(rows.size + 1, dtype=np.int64)
    np.cumsum(per_row, out=new_rp[1:])
    src = np.repeat(rp[rows] - new_rp[:-1], per_row) + np.arange(new_rp[-1], dtype=np.int64)
    return _assemble(ds.Y[rows].copy(), ds.L[rows].copy(), new_off, new_rp,
                     ds.row_drugs[src].copy(), ds.J, ds.drug_ids,
                     [ds.subject_ids[i] for i in idx])


# ---------------------------------------------------------------------------
# long-format era files
# ---------------------------------------------------------------------------

def _is_header(fields: list[str], expected: Sequence[str]) -> bool:
    return [f.strip().lower() for f in fields[:len(expected)]] == list(expected)


def read_records(path: str | PathLike, drugs: DrugDictionary) -> list[SubjectRecord]:
    """Parse a long-format era file into subject records.

    ``drugs`` is extended in first-appearance order unless frozen.
    """
    grouped: dict[str, list[Era]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if lineno == 1 and _is_header(fields, LONG_FORMAT_HEADER):
                continue
            if len(fields) not in (3, 4):
                raise DatasetError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields")
            sid = fields[0]
            try:
                length, count = int(fields[1]), int(fields[2])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: length_days and event_count must be integers")
            if length <= 0:
                raise DatasetError(f"{path}:{lineno}: subject {sid!r} has era length {length}")
            if count < 0:
                raise DatasetError(f"{path}:{lineno}: negative event count")
            labels = fields[3].split() if len(fields) == 4 else []
            try:
                exposures = tuple(sorted({drugs.index(lab) for lab in labels}))
            except DatasetError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            grouped.setdefault(sid, []).append(Era(length, count, exposures))
    return [SubjectRecord(sid, tuple(eras)) for sid, eras in grouped.items()]


def read_long_format(path: str | PathLike, drugs: DrugDictionary | None = None) -> Dataset:
    drugs = drugs if drugs is not None else DrugDictionary()
    records = read_records(path, drugs)
    if len(drugs) == 0:
        raise DatasetError(f"{path}: no drug labels found")
    return build_dataset(records, len(drugs), drugs.labels)


def format_long_format(records: Iterable[SubjectRecord], drug_ids: Sequence[str]) -> str:
    buf = io.StringIO()
    buf.write("\t".join(LONG_FORMAT_HEADER) + "\n")
    for rec in records:
        for era in rec.eras:
            labels = " ".join(drug_ids[d] for d in era.exposures)
            buf.write(f"{rec.subject_id}\t{era.length_days}\t{era.event_count}\t{labels}\n")
    return buf.getvalue()


def write_long_format(path: str | PathLike, records: Iterable[SubjectRecord],
                      drug_ids: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_long_format(records, drug_ids))
