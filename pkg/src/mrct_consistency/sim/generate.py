"""Trial generation and the analytic CATEs of the simulation models."""

from __future__ import annotations

import numpy as np
from scipy import special

from ..data import Endpoint, TrialDataset
from ..numerics import RngStream, TruncNormalParams, trunc_normal_sample
from .scenarios import QUAD_CENTER, ScenarioSpec

REGION_LABEL = "r"
COMPLEMENT_LABEL = "other"


def effect_modifier(spec: ScenarioSpec, X: np.ndarray) -> np.ndarray:
    """``g(X1, X2)`` of the continuous models; ``X1 + 0.5 X2`` otherwise."""
    x1, x2 = X[..., 0], X[..., 1]
    if spec.endpoint != "continuous" or spec.g == "linear":
        return x1 + 0.5 * x2
    if spec.g == "quadratic":
        return x1 * x1 - QUAD_CENTER + 0.5 * (x2 * x2 - QUAD_CENTER)
    return x1 ** 3 + 0.5 * x2 ** 3


def _covariates(spec: ScenarioSpec, mus, n: int, rng: RngStream) -> np.ndarray:
    a, b = spec.bounds
    cols = [trunc_normal_sample(TruncNormalParams(m, spec.sigma, a, b), rng, n) for m in mus]
    return np.column_stack(cols)


def _treatment(spec: ScenarioSpec, n_r: int, n_m: int, rng: RngStream) -> np.ndarray:
    gen = rng.generator
    if not spec.balanced:
        return np.where(gen.random(n_r + n_m) < spec.pi1, 1, -1)
    parts = []
    for n in (n_r, n_m):
        n1 = int(round(n * spec.pi1))
        parts.append(gen.permutation(np.r_[np.ones(n1, int), -np.ones(n - n1, int)]))
    return np.concatenate(parts)


def survival_rate(spec: ScenarioSpec, predictor: np.ndarray) -> np.ndarray:
    """Hazard from the linear predictor; zero means no event ever occurs."""
    if spec.hazard_link == "log":
        return np.exp(predictor)
    return np.maximum(predictor, 0.0)


def hazard_predictor(spec: ScenarioSpec, X: np.ndarray, kappa, treated) -> np.ndarray:
    return X[..., 2] + X[..., 3] + kappa * effect_modifier(spec, X) * treated / 10.0


def generate_trial(spec: ScenarioSpec, rng: RngStream) -> TrialDataset:
    """One trial of ``n_r`` region-``r`` and ``n_minus_r`` other subjects.

    Every random quantity is drawn regardless of the effect sizes, so two
    scenarios differing only in ``kappa`` share covariates, allocation and
    noise when given equal streams.
    """
    n_r, n_m = spec.n_r, spec.n_minus_r
    n = n_r + n_m
    X = np.vstack([_covariates(spec, spec.mu_r, n_r, rng),
                   _covariates(spec, spec.mu_minus_r, n_m, rng)])
    t = _treatment(spec, n_r, n_m, rng)
    region = np.array([REGION_LABEL] * n_r + [COMPLEMENT_LABEL] * n_m)
    kappa = np.r_[np.full(n_r, spec.kappa_r), np.full(n_m, spec.kappa_minus_r)]
    treated = (t + 1) / 2
    gen = rng.generator
    names = tuple(f"x{j + 1}" for j in range(spec.p))
    if spec.endpoint == "continuous":
        y = (10.0 + 5.0 * X.sum(axis=1) + kappa * effect_modifier(spec, X) * treated
             + spec.noise_sd * gen.standard_normal(n))
        return TrialDataset(y, t, region, X, Endpoint.continuous(), names, spec.pi1)
    if spec.endpoint == "binary":
        logit = -5.0 + 5.0 * (X[:, 2] + X[:, 3]) + kappa * effect_modifier(spec, X) * treated
        y = (gen.random(n) < special.expit(logit)).astype(float)
        return TrialDataset(y, t, region, X, Endpoint.binary(), names, spec.pi1)
    rate = survival_rate(spec, hazard_predictor(spec, X, kappa, treated))
    unit = gen.standard_exponential(n)
    censor = gen.uniform(0.0, spec.censor_upper, n)
    with np.errstate(divide="ignore"):
        event_time = np.where(rate > 0, unit / np.where(rate > 0, rate, 1.0), np.inf)
    status = (event_time <= censor).astype(int)
    time = np.minimum(event_time, censor)
    return TrialDataset(time, t, region, X, Endpoint.survival(spec.tau), names, spec.pi1,
                        status=status)


def _rmst_exponential(rate: np.ndarray, tau: float) -> np.ndarray:
    rate = np.asarray(rate, dtype=float)
    safe = np.where(rate > 0, rate, 1.0)
    return np.where(rate > 0, -np.expm1(-safe * tau) / safe, tau)


def true_cate(spec: ScenarioSpec, x, region: str) -> np.ndarray | float:
    """Treated minus control mean outcome at covariates ``x`` in ``region``
    (``"r"`` or ``"other"``)."""
    if region not in (REGION_LABEL, COMPLEMENT_LABEL, "-r"):
        raise ValueError("region must be 'r' or 'other'")
    kappa = spec.kappa_r if region == REGION_LABEL else spec.kappa_minus_r
    x = np.asarray(x, dtype=float)
    if spec.endpoint == "continuous":
        out = kappa * effect_modifier(spec, x)
    elif spec.endpoint == "binary":
        base = -5.0 + 5.0 * (x[..., 2] + x[..., 3])
        out = special.expit(base + kappa * effect_modifier(spec, x)) - special.expit(base)
    else:
        r1 = survival_rate(spec, hazard_predictor(spec, x, kappa, 1.0))
        r0 = survival_rate(spec, hazard_predictor(spec, x, kappa, 0.0))
        out = _rmst_exponential(r1, spec.tau) - _rmst_exponential(r0, spec.tau)
    return float(out) if np.ndim(out) == 0 else out


def true_regional_ate(spec: ScenarioSpec, region: str, nodes: int = 24) -> float:
    """Regional ATE by tensor Gauss-Legendre integration of ``true_cate``
    against the truncated-normal covariate law of ``region``."""
    a, b = spec.bounds
    mus = spec.mu_r if region == REGION_LABEL else spec.mu_minus_r
    z, w = np.polynomial.legendre.leggauss(nodes)
    pts = (b - a) / 2 * z + (b + a) / 2
    wts = []
    for m in mus[:4]:
        dens = np.exp(-0.5 * ((pts - m) / spec.sigma) ** 2)
        wt = w * dens
        wts.append(wt / wt.sum())
    grid = np.stack(np.meshgrid(pts, pts, pts, pts, indexing="ij"), axis=-1)
    weight = np.einsum("i,j,k,l->ijkl", *wts)
    return float((true_cate(spec, grid, region) * weight).sum())
