"""Discrete density ratios, covariate-shift adjusted regional effects and
the step-2 criterion.

Covariate indices ``s`` are 0-based in function arguments and 1-based in
serialized diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ate import shifted_ratio
from .data import RegionPartition, TrialDataset
from .errors import AnalysisError, DataError
from .ite import IteProfile

N_LEVELS = 3


def _counts_to_freq(counts: np.ndarray, smoothing: float) -> np.ndarray:
    n = counts.sum()
    return (counts + smoothing) / (n + counts.size * smoothing)


def level_frequencies(data: TrialDataset, indices, s: int, smoothing: float = 0.0) -> np.ndarray:
    """Smoothed level proportions ``(count_l + c) / (n + 3c)`` of covariate ``s``."""
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    idx = np.asarray(indices)
    if idx.size == 0:
        raise DataError("level frequencies of an empty index set", stage="step2")
    counts = np.bincount(data.levels[idx, s], minlength=N_LEVELS).astype(float)
    return _counts_to_freq(counts, smoothing)


def _ratio(freq_minus: np.ndarray, freq_r: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(freq_r > 0, freq_minus / np.where(freq_r > 0, freq_r, 1.0), np.nan)


@dataclass(frozen=True, eq=False)
class DensityRatioTable:
    """Ratios ``f_{-r}/f_r`` per level of one covariate.

    ``ratio`` holds NaN where region ``r`` has no mass (only possible
    without smoothing). ``weights_r`` is the ratio evaluated at each
    region-``r`` subject, in partition order.
    """

    covariate_index: int
    freq_r: np.ndarray
    freq_minus_r: np.ndarray
    ratio: np.ndarray
    smoothing: float
    weights_r: np.ndarray

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(range(self.ratio.size))

    def undefined_levels(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.flatnonzero(np.isnan(self.ratio)))


def density_ratio(data: TrialDataset, partition: RegionPartition, s: int,
                  smoothing: float = 0.5) -> DensityRatioTable:
    fr = level_frequencies(data, partition.in_region, s, smoothing)
    fm = level_frequencies(data, partition.complement, s, smoothing)
    ratio = _ratio(fm, fr)
    weights = ratio[data.levels[partition.in_region, s]]
    return DensityRatioTable(s, fr, fm, ratio, smoothing, weights)


def joint_density_ratio(data: TrialDataset, partition: RegionPartition,
                        smoothing: float = 0.5) -> DensityRatioTable:
    """Ratio over the full ``3**p`` grid of level combinations.

    ``covariate_index`` is -1 for the joint table; cells are coded
    ``sum_j level_j * 3**j``.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    lv = data.levels
    codes = lv @ (N_LEVELS ** np.arange(data.p))
    cells = N_LEVELS ** data.p
    fr = _counts_to_freq(np.bincount(codes[partition.in_region], minlength=cells).astype(float),
                         smoothing)
    fm = _counts_to_freq(np.bincount(codes[partition.complement], minlength=cells).astype(float),
                         smoothing)
    ratio = _ratio(fm, fr)
    return DensityRatioTable(-1, fr, fm, ratio, smoothing, ratio[codes[partition.in_region]])


def adjusted_ate(ite: IteProfile, partition: RegionPartition, ratios: DensityRatioTable) -> float:
    """Mean over region ``r`` of ``ite_i * ratio(level_i)``."""
    w = ratios.weights_r
    if w.shape[0] != partition.n_r:
        raise ValueError("density ratio table does not belong to this partition")
    if np.any(np.isnan(w)):
        raise AnalysisError(f"density ratio undefined at an occupied level of covariate "
                            f"{ratios.covariate_index + 1}", stage="step2")
    return float(np.mean(ite.ite[partition.in_region] * w))


@dataclass(frozen=True)
class AdjustedAte:
    """Adjusted regional effects ``(s, delta_star)`` with 1-based ``s``."""

    per_covariate: tuple[tuple[int, float], ...]
    max_ratio_over_delta_minus_r: float | None
    best_covariate: int | None

    def to_dict(self) -> dict:
        return {
            "per_covariate": [{"s": s, "delta_star": d} for s, d in self.per_covariate],
            "max_ratio": self.max_ratio_over_delta_minus_r,
            "best_covariate": self.best_covariate,
        }


def adjusted_effects(data: TrialDataset, partition: RegionPartition, ite: IteProfile,
                     delta_minus_r: float, smoothing: float = 0.5,
                     margin: float = 0.0) -> AdjustedAte:
    """Per-covariate adjusted effects and their largest ratio to ``delta_minus_r``."""
    if data.p < 1:
        raise DataError("the step-2 criterion needs at least one covariate", stage="step2")
    per = tuple(
        (s + 1, adjusted_ate(ite, partition, density_ratio(data, partition, s, smoothing)))
        for s in range(data.p)
    )
    ratios = [shifted_ratio(d, delta_minus_r, margin) for _, d in per]
    if ratios[0] is None:
        return AdjustedAte(per, None, None)
    best = int(np.argmax(ratios))
    return AdjustedAte(per, float(ratios[best]), per[best][0])


@dataclass(frozen=True)
class Step2Result:
    passed: bool
    ranking: tuple[dict, ...]

    def to_list(self) -> list[dict]:
        return [dict(r) for r in self.ranking]


def step2_event(adjusted: AdjustedAte, delta_minus_r: float, q2: float = 0.5,
                margin: float = 0.0) -> Step2Result:
    """Passes iff some ``delta_star_s / delta_minus_r`` strictly exceeds ``q2``.

    The ranking lists every covariate by decreasing ratio (stable in ``s``
    on ties); ratios are None when ``delta_minus_r`` is not positive.
    """
    rows = [(s, d, shifted_ratio(d, delta_minus_r, margin)) for s, d in adjusted.per_covariate]
    defined = rows[0][2] is not None if rows else False
    if defined:
        rows.sort(key=lambda r: -r[2])
    ranking = tuple({"s": s, "delta_star": d, "ratio": ratio, "rank": k + 1}
                    for k, (s, d, ratio) in enumerate(rows))
    passed = defined and max(r[2] for r in rows) > q2
    return Step2Result(bool(passed), ranking)
