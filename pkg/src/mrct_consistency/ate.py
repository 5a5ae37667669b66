"""Average treatment effects, the global z test and the one-step criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import RegionPartition, TrialDataset
from .errors import AnalysisError, DataError
from .numerics import std_normal_quantile


@dataclass(frozen=True)
class AteEstimate:
    """Difference in arm means with its unpooled (Welch) standard error."""

    delta: float
    se: float
    n_treat: int
    n_control: int


def _ate_from_arrays(y: np.ndarray, treated: np.ndarray) -> AteEstimate:
    y1 = y[treated]
    y0 = y[~treated]
    n1, n0 = y1.shape[0], y0.shape[0]
    if n1 == 0 or n0 == 0:
        raise DataError(f"empty treatment arm (treated {n1}, control {n0})", stage="ate")
    delta = float(y1.mean() - y0.mean())
    v1 = float(y1.var(ddof=1)) if n1 > 1 else 0.0
    v0 = float(y0.var(ddof=1)) if n0 > 1 else 0.0
    return AteEstimate(delta, math.sqrt(v1 / n1 + v0 / n0), n1, n0)


def estimate_ate(data: TrialDataset, indices=None) -> AteEstimate:
    """Treated minus control mean over ``indices`` (all subjects when None).

    A zero standard error is returned as is; callers that divide by it
    decide how to fail.
    """
    if indices is None:
        return _ate_from_arrays(data.y, data.t == 1)
    idx = np.asarray(indices)
    return _ate_from_arrays(data.y[idx], data.t[idx] == 1)


def global_z(data: TrialDataset, margin: float = 0.0) -> float:
    """``(delta + margin) / se`` for the whole trial."""
    est = estimate_ate(data)
    return _z(est, margin)


def _z(est: AteEstimate, margin: float) -> float:
    if est.se == 0.0:
        raise AnalysisError("overall standard error is zero; z statistic undefined",
                            stage="one_step")
    # margin == 0 must take the same floating path as the superiority test
    num = est.delta + margin if margin else est.delta
    return num / est.se


def shifted_ratio(delta_r: float, delta_minus_r: float, margin: float = 0.0) -> float | None:
    """``(delta_r + M) / (delta_minus_r + M)``, or None when the denominator is not positive."""
    den = delta_minus_r + margin if margin else delta_minus_r
    if not den > 0:
        return None
    num = delta_r + margin if margin else delta_r
    return num / den


@dataclass(frozen=True)
class OneStepResult:
    z: float
    z_alpha: float
    overall_significant: bool
    delta_r: float
    delta_minus_r: float
    ratio: float | None
    threshold_q: float
    consistent: bool
    margin: float = 0.0

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "z_alpha": self.z_alpha,
            "delta_r": self.delta_r,
            "delta_minus_r": self.delta_minus_r,
            "ratio": self.ratio,
            "q": self.threshold_q,
            "consistent": self.consistent,
        }


def one_step_assess(data: TrialDataset, partition: RegionPartition, q: float = 0.5,
                    alpha: float = 0.025, margin: float = 0.0) -> OneStepResult:
    """Marginal consistency check conditional on overall significance.

    Consistency is claimed iff ``z > z_alpha`` and the (margin shifted)
    regional ratio strictly exceeds ``q``. A non-positive denominator makes
    the ratio undefined and the claim false.
    """
    if q < 0.5:
        raise ValueError("threshold q must be at least 0.5")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    overall = estimate_ate(data)
    z = _z(overall, margin)
    z_alpha = std_normal_quantile(1.0 - alpha)
    est_r = estimate_ate(data, partition.in_region)
    est_m = estimate_ate(data, partition.complement)
    significant = z > z_alpha
    ratio = shifted_ratio(est_r.delta, est_m.delta, margin) if significant else None
    return OneStepResult(
        z=z, z_alpha=z_alpha, overall_significant=significant,
        delta_r=est_r.delta, delta_minus_r=est_m.delta, ratio=ratio,
        threshold_q=q, consistent=ratio is not None and ratio > q, margin=margin,
    )


def equivalent_global_threshold(q: float, rho_r: float) -> float:
    """Threshold on ``delta_r / delta`` equivalent to ``delta_r / delta_minus_r > q``
    when ``delta = rho_r delta_r + (1 - rho_r) delta_minus_r``."""
    if not 0.0 < rho_r < 1.0:
        raise ValueError("rho_r must lie in (0, 1)")
    if q < 0:
        raise ValueError("q must be non-negative")
    return q / (1.0 - rho_r + q * rho_r)
