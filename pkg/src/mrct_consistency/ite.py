"""Transformed-outcome ITEs, LOOP outcome predictions and the working
interaction model with its Wald test."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import RegionPartition, TrialDataset
from .errors import AnalysisError, DataError, DegenerateModelError, RankDeficiencyError
from .numerics import (LEVERAGE_TOL, chi_square_sf, independent_columns, ols_fit)

log = logging.getLogger(__name__)

DESIGN_MODES = ("onehot", "raw")
COVARIANCE_KINDS = ("ols", "hc3")


def transformed_outcome(y, t, mhat, pi1: float):
    """``(t / pi_t) (y - mhat)``: ``(y - m)/pi1`` if treated, ``-(y - m)/(1 - pi1)`` otherwise."""
    if not 0.0 < pi1 < 1.0:
        raise ValueError("pi1 must lie in (0, 1)")
    y = np.asarray(y, dtype=float)
    t = np.asarray(t)
    resid = y - np.asarray(mhat, dtype=float)
    out = np.where(t == 1, resid / pi1, -resid / (1.0 - pi1))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# design


@dataclass(frozen=True, eq=False)
class InteractionDesign:
    matrix: np.ndarray
    labels: tuple[str, ...]
    # column roles: "intercept", "x", "region", "rx"
    roles: tuple[str, ...]


def interaction_design(data: TrialDataset, partition: RegionPartition,
                       mode: str = "onehot") -> InteractionDesign:
    """``[1, X, I(R=r), X * I(R=r)]`` with ``X`` either one-hot level
    indicators (levels 1 and 2 against reference level 0) or raw values."""
    if mode not in DESIGN_MODES:
        raise ValueError(f"design mode must be one of {DESIGN_MODES}")
    n = data.n
    if mode == "onehot":
        lv = data.levels
        cols, names = [], []
        for j, name in enumerate(data.covariate_names):
            for level in (1, 2):
                cols.append((lv[:, j] == level).astype(float))
                names.append(f"{name}={level}")
        xs = np.column_stack(cols) if cols else np.empty((n, 0))
    else:
        xs = data.X
        names = list(data.covariate_names)
    ind = partition.mask.astype(float)
    matrix = np.column_stack([np.ones(n), xs, ind, xs * ind[:, None]])
    labels = ("intercept", *names, "region", *(f"region:{c}" for c in names))
    roles = ("intercept",) + ("x",) * len(names) + ("region",) + ("rx",) * len(names)
    return InteractionDesign(matrix, labels, roles)


# --------------------------------------------------------------------------
# LOOP


@dataclass(frozen=True, eq=False)
class IteProfile:
    mhat: np.ndarray
    ite: np.ndarray
    pi1: float
    dropped_columns: dict

    @classmethod
    def from_mhat(cls, data: TrialDataset, mhat, dropped=None) -> "IteProfile":
        mhat = np.asarray(mhat, dtype=float)
        ite = transformed_outcome(data.y, data.t, mhat, data.pi1)
        return cls(mhat, ite, data.pi1, dict(dropped or {}))


def _arm_predictions(design: np.ndarray, idx: np.ndarray, y: np.ndarray,
                     labels: tuple[str, ...]) -> tuple[np.ndarray, list[str]]:
    """Full-fit predictions for every row plus leave-one-out values on the
    arm's own rows."""
    sub = design[idx]
    keep = independent_columns(sub)
    dropped = [labels[j] for j in range(design.shape[1]) if j not in keep]
    if sub.shape[0] < len(keep) + 2:
        raise DataError(f"treatment arm has {sub.shape[0]} subjects for a "
                        f"{len(keep)}-column outcome model", stage="loop")
    ya = y[idx]
    fit = ols_fit(sub[:, keep], ya)
    pred = design[:, keep] @ fit.coefficients
    h = fit.hat_diagonals
    e = ya - fit.fitted
    safe = h < 1.0 - LEVERAGE_TOL
    loo = np.empty_like(ya)
    loo[safe] = fit.fitted[safe] - h[safe] * e[safe] / (1.0 - h[safe])
    # a subject alone in its design cell: refit without it, dropping the
    # columns it alone supported, and predict from what remains
    for i in np.flatnonzero(~safe):
        rest = np.delete(np.arange(idx.size), i)
        rows = sub[rest]
        k2 = independent_columns(rows[:, keep])
        cols = [keep[j] for j in k2]
        if rows.shape[0] <= len(cols):
            raise DataError("leave-one-out refit has too few subjects", stage="loop")
        refit = ols_fit(rows[:, cols], ya[rest])
        loo[i] = float(sub[i, cols] @ refit.coefficients)
    pred[idx] = loo
    return pred, dropped


def loop_mhat(data: TrialDataset, partition: RegionPartition, mode: str = "onehot",
              design: InteractionDesign | None = None) -> IteProfile:
    """Leave-one-out potential outcome predictions.

    ``m_i = (1 - pi1) mu_1(x_i) + pi1 mu_{-1}(x_i)`` where ``mu_t`` is the
    linear fit on arm ``t`` of the interaction design; the fit of the arm
    containing subject ``i`` omits ``i``. Dependent columns are dropped per
    arm and reported in ``dropped_columns``.
    """
    if design is None:
        design = interaction_design(data, partition, mode)
    treated = data.t == 1
    dropped = {}
    try:
        pred1, dropped["treated"] = _arm_predictions(design.matrix, np.flatnonzero(treated),
                                                     data.y, design.labels)
        pred0, dropped["control"] = _arm_predictions(design.matrix, np.flatnonzero(~treated),
                                                     data.y, design.labels)
    except AnalysisError as exc:
        raise exc.with_stage("loop")
    for arm, cols in dropped.items():
        if cols:
            log.debug("outcome model (%s arm): dropped dependent columns %s", arm, cols)
    mhat = (1.0 - data.pi1) * pred1 + data.pi1 * pred0
    return IteProfile.from_mhat(data, mhat, dropped)


# --------------------------------------------------------------------------
# working model


@dataclass(frozen=True, eq=False)
class WorkingModelFit:
    beta0: float
    beta_x: np.ndarray
    beta_r: float
    beta_rx: np.ndarray
    cov_rx: np.ndarray
    wald_stat: float
    df: int
    p_value: float
    labels: tuple[str, ...]
    coefficients: np.ndarray
    dropped_columns: tuple[str, ...] = ()
    covariance_kind: str = "ols"

    @property
    def rx_labels(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.labels if lab.startswith("region:"))

    def to_dict(self) -> dict:
        return {
            "coefficients": {lab: float(c) for lab, c in zip(self.labels, self.coefficients)},
            "dropped_columns": list(self.dropped_columns),
            "covariance": self.covariance_kind,
            "wald_stat": self.wald_stat,
            "df": self.df,
            "p_value": self.p_value,
        }


def wald_statistic(beta: np.ndarray, cov: np.ndarray) -> float:
    """``beta' cov^{-1} beta`` via a Cholesky factorization."""
    try:
        factor = cho_factor(cov, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        raise DegenerateModelError("covariance block of the interaction terms is singular",
                                   stage="interaction") from None
    return float(beta @ cho_solve(factor, beta))


def fit_working_model(data: TrialDataset, partition: RegionPartition, ite: IteProfile,
                      covariance: str = "ols", mode: str = "onehot",
                      design: InteractionDesign | None = None) -> WorkingModelFit:
    """OLS of the ITEs on the interaction design and the Wald test of the
    region-by-covariate coefficients."""
    if covariance not in COVARIANCE_KINDS:
        raise ValueError(f"covariance must be one of {COVARIANCE_KINDS}")
    if design is None:
        design = interaction_design(data, partition, mode)
    y = np.asarray(ite.ite, dtype=float)
    if np.ptp(y) == 0.0:
        raise DegenerateModelError("ITEs have zero variance; Wald test undefined",
                                   stage="interaction")
    keep = independent_columns(design.matrix)
    x = design.matrix[:, keep]
    labels = tuple(design.labels[j] for j in keep)
    roles = [design.roles[j] for j in keep]
    dropped = tuple(design.labels[j] for j in range(len(design.labels)) if j not in keep)
    rx = [j for j, role in enumerate(roles) if role == "rx"]
    if not rx:
        raise DegenerateModelError("no estimable interaction columns", stage="interaction")
    try:
        fit = ols_fit(x, y)
    except (RankDeficiencyError, ValueError) as exc:
        raise DegenerateModelError(str(exc), stage="interaction") from None
    if covariance == "ols":
        cov = fit.covariance
    else:
        h = fit.hat_diagonals
        if np.any(h >= 1.0 - LEVERAGE_TOL):
            raise DegenerateModelError("HC3 covariance undefined at leverage 1",
                                       stage="interaction")
        e = (y - fit.fitted) / (1.0 - h)
        meat = (x * (e * e)[:, None]).T @ x
        cov = fit.xtx_inv @ meat @ fit.xtx_inv
    if fit.residual_variance == 0.0 and covariance == "ols":
        raise DegenerateModelError("working model fits the ITEs exactly", stage="interaction")
    b = fit.coefficients
    b_rx = b[rx]
    cov_rx = cov[np.ix_(rx, rx)]
    w = wald_statistic(b_rx, cov_rx)
    coef_of = {role: [b[j] for j, r in enumerate(roles) if r == role] for role in set(roles)}
    return WorkingModelFit(
        beta0=float(coef_of["intercept"][0]) if "intercept" in coef_of else 0.0,
        beta_x=np.array(coef_of.get("x", [])),
        beta_r=float(coef_of["region"][0]) if "region" in coef_of else 0.0,
        beta_rx=b_rx,
        cov_rx=cov_rx,
        wald_stat=w,
        df=len(rx),
        p_value=chi_square_sf(max(w, 0.0), len(rx)),
        labels=labels,
        coefficients=b,
        dropped_columns=dropped,
        covariance_kind=covariance,
    )


def cate_similarity_test(fit: WorkingModelFit, alpha: float = 0.05) -> bool:
    """True when the interaction coefficients are jointly significant
    (``p_value < alpha``), i.e. similar CATEs are rejected."""
    return fit.p_value < alpha
