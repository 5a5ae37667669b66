"""Numerical kernel: normal and chi-square functions, truncated normals,
least squares with leave-one-out identities, and seeded random streams.

The special functions are thin, validated wrappers over ``scipy.special``;
everything else is implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special
from scipy.linalg import solve_triangular

from .errors import LeverageError, RankDeficiencyError

RANK_TOL = 1e-10
# hat diagonals closer than this to 1 are treated as exact interpolation
LEVERAGE_TOL = 1e-8


def std_normal_cdf(x):
    """Standard normal distribution function, scalar or elementwise."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("std_normal_cdf requires finite input")
    out = special.ndtr(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Lower-tail inverse of the standard normal cdf.

    Upper percentiles are formed by the caller, e.g. ``z_alpha =
    std_normal_quantile(1 - alpha)``.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("std_normal_quantile requires 0 < p < 1")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail probability of a chi-square variable with ``df`` degrees of freedom."""
    if df < 1 or int(df) != df:
        raise ValueError("chi_square_sf requires a positive integer df")
    if not x >= 0.0:
        raise ValueError("chi_square_sf requires x >= 0")
    return float(special.chdtrc(int(df), x))


# --------------------------------------------------------------------------
# least squares


@dataclass(frozen=True)
class OlsFit:
    """Result of an ordinary least squares fit.

    ``covariance`` is ``residual_variance * inv(X'X)``; ``hat_diagonals`` are
    the leverages ``diag(X inv(X'X) X')``.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    residual_variance: float
    hat_diagonals: np.ndarray
    fitted: np.ndarray
    n: int
    k: int
    xtx_inv: np.ndarray = field(repr=False)


def _qr(design: np.ndarray):
    q, r = np.linalg.qr(design, mode="reduced")
    return q, r


def _first_dependent(design: np.ndarray, r: np.ndarray, tol: float) -> int | None:
    # |R_jj| is the norm of column j after projecting out columns 0..j-1
    norms = np.sqrt(np.einsum("ij,ij->j", design, design))
    bad = np.nonzero(np.abs(np.diag(r)) <= tol * norms)[0]
    return int(bad[0]) if bad.size else None


def independent_columns(design, tol: float = RANK_TOL) -> list[int]:
    """Indices of a maximal set of columns kept greedily in order.

    A column is dropped when its residual norm after projection onto the
    previously kept columns is below ``tol`` times its own norm.
    """
    design = np.asarray(design, dtype=float)
    n = design.shape[0]
    keep = list(range(design.shape[1]))
    while keep:
        sub = design[:, keep]
        _, r = _qr(sub)
        m = min(n, len(keep))
        j = _first_dependent(sub[:, :m], r[:m, :m], tol)
        if j is None:
            if len(keep) <= n:
                break
            j = n  # more than n columns: the (n+1)-th is necessarily dependent
        del keep[j]
    return keep


def ols_fit(design, response) -> OlsFit:
    """Least squares fit via a reduced QR decomposition.

    Raises:
        ValueError: if ``n <= k`` or shapes disagree.
        RankDeficiencyError: naming the first dependent column.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError("design must be n x k and response length n")
    n, k = x.shape
    if n <= k:
        raise ValueError(f"need n > k for a least squares fit (n={n}, k={k})")
    q, r = _qr(x)
    j = _first_dependent(x, r, RANK_TOL)
    if j is not None:
        raise RankDeficiencyError(j)
    qty = q.T @ y
    coef = _solve_upper(r, qty)
    fitted = q @ qty
    resid = y - fitted
    s2 = float(resid @ resid) / (n - k)
    r_inv = _solve_upper(r, np.eye(k))
    xtx_inv = r_inv @ r_inv.T
    hat = np.einsum("ij,ij->i", q, q)
    return OlsFit(coefficients=coef, covariance=s2 * xtx_inv, residual_variance=s2,
                  hat_diagonals=hat, fitted=fitted, n=n, k=k, xtx_inv=xtx_inv)


def _solve_upper(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(r, b, lower=False, check_finite=False)


def loo_prediction(fit: OlsFit, response) -> np.ndarray:
    """Leave-one-out fitted values ``y_hat_i - h_ii e_i / (1 - h_ii)``.

    Entry ``i`` equals the prediction at ``x_i`` of the fit that omits
    observation ``i``.

    Raises:
        LeverageError: listing every index with ``h_ii == 1``.
    """
    y = np.asarray(response, dtype=float)
    h = fit.hat_diagonals
    bad = np.nonzero(h >= 1.0 - LEVERAGE_TOL)[0]
    if bad.size:
        raise LeverageError(bad)
    e = y - fit.fitted
    return fit.fitted - h * e / (1.0 - h)


# --------------------------------------------------------------------------
# truncated normal


@dataclass(frozen=True)
class TruncNormalParams:
    mu: float
    sigma: float
    a: float
    b: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.a < self.b:
            raise ValueError("truncation bounds need a < b")

    @property
    def alpha(self) -> float:
        return (self.a - self.mu) / self.sigma

    @property
    def beta(self) -> float:
        return (self.b - self.mu) / self.sigma


def trunc_normal_sample(params: TruncNormalParams, rng: "RngStream", size=None):
    """Inverse-cdf draws from a truncated normal.

    Uniforms are mapped through the standardized bounds; when both bounds lie
    in the upper tail the draw is made on the reflected variable so the cdf
    differences keep full precision.
    """
    gen = rng.generator
    al, be = params.alpha, params.beta
    flip = al > 0
    if flip:
        al, be = -be, -al
    lo, hi = special.ndtr(al), special.ndtr(be)
    u = gen.uniform(lo, hi, size)
    z = special.ndtri(u)
    if flip:
        z = -z
    x = params.mu + params.sigma * z
    x = np.clip(x, params.a, params.b)
    return float(x) if np.ndim(x) == 0 else x


def _std_trunc_moments(al: float, be: float, kmax: int) -> list[float]:
    # m_k = (k-1) m_{k-2} + (al^{k-1} phi(al) - be^{k-1} phi(be)) / Z
    phi_a = math.exp(-0.5 * al * al) / math.sqrt(2 * math.pi) if math.isfinite(al) else 0.0
    phi_b = math.exp(-0.5 * be * be) / math.sqrt(2 * math.pi) if math.isfinite(be) else 0.0
    if al > 0:
        z = special.ndtr(-al) - special.ndtr(-be)
    else:
        z = special.ndtr(be) - special.ndtr(al)
    if z <= 0:
        raise ValueError("truncation interval has zero probability mass")
    m = [1.0, (phi_a - phi_b) / z]
    for k in range(2, kmax + 1):
        ta = al ** (k - 1) * phi_a if phi_a else 0.0
        tb = be ** (k - 1) * phi_b if phi_b else 0.0
        m.append((k - 1) * m[k - 2] + (ta - tb) / z)
    return m


def trunc_normal_moment(params: TruncNormalParams, k: int) -> float:
    """Raw moment ``E[X**k]`` (k in 1..3) of a truncated normal, in closed form."""
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    m = _std_trunc_moments(params.alpha, params.beta, k)
    mu, sd = params.mu, params.sigma
    return float(sum(math.comb(k, j) * mu ** (k - j) * sd ** j * m[j] for j in range(k + 1)))


def trunc_normal_invert_moment(target: float, k: int, sigma: float, a: float, b: float,
                               bracket: tuple[float, float] | None = None) -> float:
    """Location ``mu`` whose truncated normal has ``E[X**k] == target``.

    Odd moments are increasing in ``mu`` and are searched over ``[a, b]``.
    The second moment is symmetric about the centre of the bounds, so the
    root on the upper branch ``[(a+b)/2, b]`` is returned unless ``bracket``
    says otherwise.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    if bracket is None:
        bracket = ((a + b) / 2, b) if k == 2 else (a, b)
    lo, hi = bracket

    def f(mu):
        return trunc_normal_moment(TruncNormalParams(mu, sigma, a, b), k) - target

    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"moment target {target} is outside the attainable range "
                         f"on mu in [{lo}, {hi}]")
    return float(optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200))


# --------------------------------------------------------------------------
# random streams


class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    Backed by Philox: the two 64-bit integers form the generator key, so
    the draw sequence depends only on the pair, never on which worker or in
    what order streams are created. A stream carries mutable state and must
    not be shared between threads.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        for name, v in (("master_seed", master_seed), ("stream_id", stream_id)):
            if not 0 <= int(v) < 2 ** 64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"
