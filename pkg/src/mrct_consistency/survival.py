"""Kaplan-Meier curves, restricted mean survival time and jackknife
pseudo-observations."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Endpoint, TrialDataset
from .errors import DataError


@dataclass(frozen=True, eq=False)
class KmCurve:
    """Product-limit survival curve.

    ``survival[j]`` is the value on ``[event_times[j], event_times[j+1])``;
    the curve equals 1 before the first event time.
    """

    event_times: np.ndarray
    survival: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        j = np.searchsorted(self.event_times, u, side="right")
        return np.concatenate([[1.0], self.survival])[j]


def _validate(times, status) -> tuple[np.ndarray, np.ndarray]:
    time = np.asarray(times, dtype=float)
    st = np.asarray(status)
    if time.ndim != 1 or st.shape != time.shape:
        raise DataError("times and status must be 1-d with equal length", stage="survival")
    if time.size == 0:
        raise DataError("no survival observations", stage="survival")
    if np.any(time < 0) or not np.all(np.isfinite(time)):
        raise DataError("survival times must be finite and non-negative", stage="survival")
    if not np.all((st == 0) | (st == 1)):
        raise DataError("event status must be 0/1", stage="survival")
    return time, st.astype(bool)


def _risk_table(time: np.ndarray, event: np.ndarray, grid: np.ndarray):
    # censorings tied with an event time stay in the risk set at that time
    order = np.sort(time)
    at_risk = time.size - np.searchsorted(order, grid, side="left")
    ev_sorted = np.sort(time[event])
    n_events = (np.searchsorted(ev_sorted, grid, side="right")
                - np.searchsorted(ev_sorted, grid, side="left"))
    return at_risk, n_events


def kaplan_meier(times, status) -> KmCurve:
    """Product-limit estimator with events ordered before censorings at ties."""
    time, event = _validate(times, status)
    grid = np.unique(time[event])
    at_risk, n_events = _risk_table(time, event, grid)
    surv = np.cumprod(1.0 - n_events / at_risk)
    return KmCurve(grid, surv, at_risk, n_events)


def _area(grid: np.ndarray, surv: np.ndarray, tau: float) -> np.ndarray:
    # grid: event times < tau; surv: (..., len(grid)) values after each time
    widths = np.diff(np.concatenate([[0.0], grid, [tau]]))
    ones = np.ones(surv.shape[:-1] + (1,))
    return (np.concatenate([ones, surv], axis=-1) * widths).sum(axis=-1)


def rmst(curve: KmCurve, tau: float) -> float:
    """Area under the survival curve on ``[0, tau]``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    keep = curve.event_times < tau
    return float(_area(curve.event_times[keep], curve.survival[keep], tau))


@dataclass(frozen=True, eq=False)
class PseudoObs:
    theta_full: float
    values: np.ndarray
    tau: float
    theta_loo: np.ndarray


# bounds the (n x event-times) work arrays in the delete-one pass
_CHUNK_CELLS = 4_000_000


def pseudo_observations(times, status, tau: float) -> PseudoObs:
    """Jackknife RMST pseudo-observations ``n theta - (n - 1) theta_(-i)``.

    Every delete-one curve is the product-limit estimate on the sample
    without subject ``i``; it is obtained by subtracting subject ``i`` from
    the risk and event counts at each event time, which is exactly the
    product-limit estimate of the reduced sample.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    time, event = _validate(times, status)
    n = time.size
    if n < 2:
        raise DataError("pseudo-observations need at least 2 subjects", stage="survival")
    grid = np.unique(time[event])
    grid = grid[grid < tau]
    at_risk, n_events = _risk_table(time, event, grid)
    theta = float(_area(grid, np.cumprod(1.0 - n_events / at_risk), tau))

    loo = np.empty(n)
    step = max(1, _CHUNK_CELLS // max(grid.size, 1))
    for lo in range(0, n, step):
        ti = time[lo:lo + step, None]
        ei = event[lo:lo + step, None]
        ar = at_risk[None, :] - (ti >= grid[None, :])
        ne = n_events[None, :] - ((ti == grid[None, :]) & ei)
        # an emptied risk set carries no events, so its factor is 1
        factor = 1.0 - ne / np.where(ar > 0, ar, 1)
        loo[lo:lo + step] = _area(grid, np.cumprod(factor, axis=1), tau)
    values = n * theta - (n - 1) * loo
    return PseudoObs(theta, values, float(tau), loo)


def to_pseudo_dataset(data: TrialDataset, per_region: bool = False) -> TrialDataset:
    """Replace survival outcomes by RMST pseudo-observations.

    Pseudo-observations are computed separately in each treatment arm over
    all regions; ``per_region=True`` computes them within each arm and region.
    """
    if data.endpoint.kind != "survival":
        raise DataError("pseudo-observations require a survival endpoint", stage="survival")
    tau = data.endpoint.tau
    y = np.empty(data.n)
    groups = [data.t == 1, data.t == -1]
    if per_region:
        groups = [g & (data.region == reg) for g in groups for reg in data.regions()]
    for g in groups:
        idx = np.flatnonzero(g)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise DataError("a treatment arm has fewer than 2 subjects", stage="survival")
        y[idx] = pseudo_observations(data.y[idx], data.status[idx], tau).values
    return replace(data, y=y, endpoint=Endpoint.continuous(), pseudo_tau=tau)
