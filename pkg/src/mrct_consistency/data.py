"""Subject-level trial data: model, CSV I/O, discretization and partitioning."""

from __future__ import annotations

import csv
import io
import os
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

ENDPOINT_KINDS = ("continuous", "binary", "survival")

# cut probabilities as exact fractions (numerator, denominator)
TERTILE_PROBS = ((33, 100), (66, 100))


@dataclass(frozen=True)
class Endpoint:
    kind: str
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in ENDPOINT_KINDS:
            raise ValueError(f"unknown endpoint kind {self.kind!r}")
        if self.kind == "survival":
            if self.tau is None or not self.tau > 0:
                raise ValueError("survival endpoint needs a truncation time tau > 0")
        elif self.tau is not None:
            raise ValueError("tau applies to survival endpoints only")

    @classmethod
    def continuous(cls) -> "Endpoint":
        return cls("continuous")

    @classmethod
    def binary(cls) -> "Endpoint":
        return cls("binary")

    @classmethod
    def survival(cls, tau: float) -> "Endpoint":
        return cls("survival", float(tau))

    def __str__(self) -> str:
        return f"survival(tau={self.tau:g})" if self.kind == "survival" else self.kind


@dataclass(frozen=True)
class SubjectRecord:
    outcome: float
    treatment: int
    region: str
    covariates: tuple[float, ...]
    event_status: int | None = None


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Column-oriented trial data.

    ``y`` holds the outcome (continuous value, 0/1 response or follow-up
    time), ``t`` the treatment coded -1/+1, ``region`` the region labels and
    ``X`` the ``n x p`` covariates. ``status`` (1 = event) is present for
    survival data. After :func:`discretize_covariates` the covariates are
    level codes 0/1/2 and ``cut_points`` records the cuts used.
    """

    y: np.ndarray
    t: np.ndarray
    region: np.ndarray
    X: np.ndarray
    endpoint: Endpoint
    covariate_names: tuple[str, ...] = ()
    pi1: float = 0.5
    status: np.ndarray | None = None
    discretized: bool = False
    cut_points: tuple | dict | None = None
    pseudo_tau: float | None = None

    def __post_init__(self):
        y = _frozen(np.array(self.y, dtype=float))
        t = _frozen(np.array(self.t, dtype=np.int64))
        region = _frozen(np.array(self.region, dtype=str))
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        X = _frozen(X)
        n = y.shape[0]
        if y.ndim != 1 or t.shape != (n,) or region.shape != (n,) or X.shape[0] != n:
            raise DataError("columns have inconsistent lengths")
        if n == 0:
            raise DataError("dataset is empty")
        if not np.all((t == 1) | (t == -1)):
            raise DataError("treatment must be coded -1/+1")
        if not 0.0 < self.pi1 < 1.0:
            raise DataError("pi1 must lie in (0, 1)")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise DataError("outcomes and covariates must be finite")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("covariate_names length does not match the covariate count")
        status = self.status
        kind = self.endpoint.kind
        if kind == "survival":
            if status is None:
                raise DataError("survival data requires event status", column="status")
            if np.any(y < 0):
                raise DataError("survival times must be non-negative")
        if status is not None:
            status = _frozen(np.array(status, dtype=np.int64))
            if status.shape != (n,) or not np.all((status == 0) | (status == 1)):
                raise DataError("event status must be 0/1 with one entry per subject")
        if kind == "binary" and not np.all((y == 0) | (y == 1)):
            raise DataError("binary outcomes must be 0 or 1")
        if self.discretized and not np.all((X == 0) | (X == 1) | (X == 2)):
            raise DataError("discretized covariates must take values 0, 1, 2")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def pi_minus1(self) -> float:
        return 1.0 - self.pi1

    @property
    def levels(self) -> np.ndarray:
        """Integer level codes of discretized covariates."""
        if not self.discretized:
            raise DataError("covariates are not discretized", stage="discretize")
        return self.X.astype(np.intp)

    @property
    def records(self) -> tuple[SubjectRecord, ...]:
        st = self.status
        return tuple(
            SubjectRecord(float(self.y[i]), int(self.t[i]), str(self.region[i]),
                          tuple(float(v) for v in self.X[i]),
                          None if st is None else int(st[i]))
            for i in range(self.n)
        )

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], endpoint: Endpoint,
                     covariate_names: Sequence[str] = (), pi1: float = 0.5) -> "TrialDataset":
        if not records:
            raise DataError("dataset is empty")
        p = len(records[0].covariates)
        if any(len(r.covariates) != p for r in records):
            raise DataError("records disagree on the number of covariates")
        status = None
        if endpoint.kind == "survival":
            if any(r.event_status is None for r in records):
                raise DataError("survival records need event_status", column="status")
            status = [r.event_status for r in records]
        return cls(
            y=[r.outcome for r in records],
            t=[r.treatment for r in records],
            region=[r.region for r in records],
            X=np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
            endpoint=endpoint,
            covariate_names=tuple(covariate_names),
            pi1=pi1,
            status=status,
        )

    def regions(self) -> list[str]:
        return sorted(set(self.region.tolist()))


# --------------------------------------------------------------------------
# CSV


def _required_columns(endpoint: Endpoint) -> tuple[str, ...]:
    if endpoint.kind == "survival":
        return ("time", "status", "t", "region")
    return ("y", "t", "region")


def load_csv(path, endpoint: Endpoint, pi1: float = 0.5) -> TrialDataset:
    """Read a trial CSV.

    Continuous/binary files carry ``y,t,region,<covariates...>``; survival
    files ``time,status,t,region,<covariates...>``. Every column not in the
    fixed set is a covariate, in header order. A 0/1 treatment coding is
    mapped to -1/+1 with a warning.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh, endpoint, pi1)


def read_csv(stream, endpoint: Endpoint, pi1: float = 0.5) -> TrialDataset:
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("file is empty (no header row)") from None
    required = _required_columns(endpoint)
    for name in required:
        if name not in header:
            raise DataError(f"missing required column {name!r}", column=name)
    idx = {name: header.index(name) for name in required}
    cov_cols = [j for j, h in enumerate(header) if h not in required]
    outcome_col = "time" if endpoint.kind == "survival" else "y"

    def number(cell: str, row: int, col: str) -> float:
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"cannot parse {cell!r} as a number", row=row, column=col) from None
        if not np.isfinite(v):
            raise DataError(f"non-finite value {cell!r}", row=row, column=col)
        return v

    ys, ts, regs, xs, sts = [], [], [], [], []
    for row, cells in enumerate(reader, start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(cells)}", row=row)
        cells = [c.strip() for c in cells]
        ys.append(number(cells[idx[outcome_col]], row, outcome_col))
        tv = number(cells[idx["t"]], row, "t")
        if tv not in (-1.0, 0.0, 1.0):
            raise DataError(f"treatment value {cells[idx['t']]!r} is not in {{-1, 1}}",
                            row=row, column="t")
        ts.append(int(tv))
        region = cells[idx["region"]]
        if not region:
            raise DataError("empty region label", row=row, column="region")
        regs.append(region)
        xs.append([number(cells[j], row, header[j]) for j in cov_cols])
        if endpoint.kind == "survival":
            sv = number(cells[idx["status"]], row, "status")
            if sv not in (0.0, 1.0):
                raise DataError("status must be 0 or 1", row=row, column="status")
            sts.append(int(sv))
    if not ys:
        raise DataError("file has a header but no data rows")

    t = np.array(ts)
    if np.any(t == 0):
        if np.any(t == -1):
            raise DataError("treatment mixes 0 and -1 codes", column="t")
        warnings.warn("treatment coded 0/1; mapping 0 -> -1 and 1 -> +1", UserWarning,
                      stacklevel=2)
        t = np.where(t == 0, -1, 1)
    return TrialDataset(
        y=ys, t=t, region=regs,
        X=np.array(xs, dtype=float).reshape(len(ys), len(cov_cols)),
        endpoint=endpoint,
        covariate_names=tuple(header[j] for j in cov_cols),
        pi1=pi1,
        status=sts if endpoint.kind == "survival" else None,
    )


def _fmt(v: float) -> str:
    # shortest decimal that round-trips to the same double
    return repr(float(v))


def write_csv(data: TrialDataset, path=None) -> str:
    """Serialize ``data`` in the loader's schema; returns the text and writes
    it to ``path`` when given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    survival = data.endpoint.kind == "survival"
    head = ["time", "status", "t", "region"] if survival else ["y", "t", "region"]
    w.writerow(head + list(data.covariate_names))
    for i in range(data.n):
        row = [_fmt(data.y[i])]
        if survival:
            row.append(str(int(data.status[i])))
        row += [str(int(data.t[i])), str(data.region[i])]
        row += [_fmt(v) for v in data.X[i]]
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------
# discretization


def inverted_cdf_quantile(sorted_values: np.ndarray, num: int, den: int) -> float:
    """Order statistic ``x_(ceil(n * num/den))`` of already sorted values."""
    n = sorted_values.shape[0]
    k = -(-n * num // den)  # exact ceil
    return float(sorted_values[max(k, 1) - 1])


def _cuts(values: np.ndarray, name: str) -> tuple[tuple[float, float], bool]:
    distinct = np.unique(values)
    if distinct.size == 1:
        raise DataError(f"constant covariate {name!r} cannot be discretized",
                        column=name, stage="discretize")
    if distinct.size <= 3:
        # already categorical: cut at the distinct values themselves
        return (float(distinct[0]), float(distinct[1])), True
    s = np.sort(values)
    (n1, d1), (n2, d2) = TERTILE_PROBS
    return (inverted_cdf_quantile(s, n1, d1), inverted_cdf_quantile(s, n2, d2)), False


def _apply_cuts(values: np.ndarray, cuts: tuple[float, float]) -> np.ndarray:
    return (values > cuts[0]).astype(float) + (values > cuts[1])


def discretize_covariates(data: TrialDataset, pooled: bool = True) -> TrialDataset:
    """Replace each covariate by a tertile level 0/1/2.

    Level 0 iff ``x <= q33``, level 1 iff ``q33 < x <= q66``, else level 2,
    with inverted-cdf empirical quantiles. Cuts come from the pooled sample
    unless ``pooled=False``, in which case each region is cut separately.
    Covariates with at most three distinct values are kept as categories.
    """
    if data.discretized:
        raise DataError("covariates are already discretized", stage="discretize")
    X = data.X
    levels = np.empty_like(X)
    notes = []
    if pooled:
        cuts = []
        for j, name in enumerate(data.covariate_names):
            c, categorical = _cuts(X[:, j], name)
            if categorical:
                notes.append(name)
            cuts.append(c)
            levels[:, j] = _apply_cuts(X[:, j], c)
        cut_points = tuple(cuts)
    else:
        cut_points = {}
        for reg in data.regions():
            mask = data.region == reg
            cuts = []
            for j, name in enumerate(data.covariate_names):
                c, categorical = _cuts(X[mask, j], name)
                if categorical:
                    notes.append(f"{name}@{reg}")
                cuts.append(c)
                levels[mask, j] = _apply_cuts(X[mask, j], c)
            cut_points[reg] = tuple(cuts)
    if notes:
        warnings.warn("covariates with at most 3 distinct values kept as categories: "
                      + ", ".join(notes), UserWarning, stacklevel=2)
    return replace(data, X=levels, discretized=True, cut_points=cut_points)


# --------------------------------------------------------------------------
# partition


@dataclass(frozen=True, eq=False)
class RegionPartition:
    region_of_interest: str
    in_region: np.ndarray
    complement: np.ndarray
    mask: np.ndarray
    n_r: int
    n_minus_r: int
    rho_r: float


MIN_ARM_SIZE = 2


def partition_by_region(data: TrialDataset, r: str) -> RegionPartition:
    """Split the sample into region ``r`` and its pooled complement."""
    mask = data.region == str(r)
    n_r = int(mask.sum())
    if n_r == 0:
        raise DataError(f"region {r!r} does not occur in the data", stage="partition")
    n_minus = data.n - n_r
    if n_minus == 0:
        raise DataError(f"region {r!r} has an empty complement", stage="partition")
    treated = data.t == 1
    for label, m in ((f"region {r!r}", mask), ("complement", ~mask)):
        n1 = int(np.count_nonzero(treated & m))
        n0 = int(np.count_nonzero(m)) - n1
        if min(n1, n0) < MIN_ARM_SIZE:
            raise DataError(f"{label} needs at least {MIN_ARM_SIZE} subjects per arm "
                            f"(treated {n1}, control {n0})", stage="partition")
    mask = _frozen(mask)
    return RegionPartition(
        region_of_interest=str(r),
        in_region=_frozen(np.flatnonzero(mask)),
        complement=_frozen(np.flatnonzero(~mask)),
        mask=mask,
        n_r=n_r,
        n_minus_r=n_minus,
        rho_r=n_r / data.n,
    )


def subset(data: TrialDataset, indices: Iterable[int]) -> TrialDataset:
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices)
    return replace(
        data, y=data.y[idx], t=data.t[idx], region=data.region[idx], X=data.X[idx],
        status=None if data.status is None else data.status[idx],
    )


__all__ = [
    "Endpoint", "SubjectRecord", "TrialDataset", "RegionPartition", "load_csv", "read_csv",
    "write_csv", "discretize_covariates", "partition_by_region", "inverted_cdf_quantile",
    "subset",
]
