"""Simulated reconstruction of a two-region binary-endpoint trial in which
baseline transfusion burden (BTB) modifies the treatment effect and is
distributed differently in the Asian subgroup."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import special

from ..assessment import AssessmentConfig
from ..data import Endpoint, TrialDataset
from ..numerics import RngStream
from .montecarlo import DEFAULT_METHODS, CpResult, Method, counts_to_results, run_counts

ASIAN = "Asian"
NON_ASIAN = "non-Asian"


@dataclass(frozen=True)
class BelieveParams:
    """Cohort and response model.

    ``logit P(Y=1) = intercept + treated * (treatment_shift + btb_slope * BTB)``
    with ``treated = (T + 1) / 2``. BTB is uniform on ``low_range`` or
    ``high_range``; a subject falls in the high range with probability
    ``high_share_asian`` or ``high_share_other``.
    """

    intercept: float = 2.7
    treatment_shift: float = -15.0
    btb_slope: float = 1.3
    n_treated: int = 224
    n_control: int = 112
    n_asian: int = 117
    high_share_asian: float = 0.42
    high_share_other: float = 0.18
    low_range: tuple[float, float] = (6.0, 15.0)
    high_range: tuple[float, float] = (15.0, 26.0)

    def __post_init__(self):
        if not 0 < self.n_asian < self.n_treated + self.n_control:
            raise ValueError("n_asian must be between 1 and n - 1")
        for share in (self.high_share_asian, self.high_share_other):
            if not 0.0 <= share <= 1.0:
                raise ValueError("high-BTB shares must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.n_treated + self.n_control

    @property
    def pi1(self) -> float:
        return self.n_treated / self.n

    @classmethod
    def printed(cls) -> "BelieveParams":
        return cls()

    @classmethod
    def sign_corrected(cls) -> "BelieveParams":
        """Every coefficient negated: low placebo response and a benefit that
        shrinks as BTB grows."""
        base = cls()
        return replace(base, intercept=-base.intercept, treatment_shift=-base.treatment_shift,
                       btb_slope=-base.btb_slope)

    def response_probability(self, btb, treated) -> np.ndarray:
        return special.expit(self.intercept + treated * (self.treatment_shift
                                                         + self.btb_slope * btb))


def generate_believe(params: BelieveParams, rng: RngStream) -> TrialDataset:
    """One simulated cohort: fixed arm sizes randomly allocated, the first
    ``n_asian`` subjects Asian."""
    gen = rng.generator
    n = params.n
    t = gen.permutation(np.r_[np.ones(params.n_treated, int), -np.ones(params.n_control, int)])
    asian = np.arange(n) < params.n_asian
    share = np.where(asian, params.high_share_asian, params.high_share_other)
    high = gen.random(n) < share
    u = gen.random(n)
    lo = np.where(high, params.high_range[0], params.low_range[0])
    hi = np.where(high, params.high_range[1], params.low_range[1])
    btb = lo + (hi - lo) * u
    prob = params.response_probability(btb, (t + 1) / 2)
    y = (gen.random(n) < prob).astype(float)
    region = np.where(asian, ASIAN, NON_ASIAN)
    return TrialDataset(y, t, region, btb[:, None], Endpoint.binary(), ("btb",), params.pi1)


@dataclass(frozen=True)
class BelieveResult:
    label: str
    params: BelieveParams
    results: tuple[CpResult, ...]

    @property
    def power(self) -> float:
        return self.results[0].power

    def cp(self, method: str) -> float | None:
        return next(r.cp for r in self.results if r.method == method)

    def to_dict(self) -> dict:
        return {"model": self.label, "params": asdict(self.params), "power": self.power,
                "results": [r.to_dict() for r in self.results]}


def cohort_summary(params: BelieveParams, reps: int = 2000, master_seed: int = 0) -> dict:
    """Average response rates by arm and subgroup, for checking a parameterization."""
    sums = np.zeros(6)
    for i in range(reps):
        d = generate_believe(params, RngStream(master_seed, i))
        asian = d.region == ASIAN
        tr = d.t == 1
        sums += [d.y[tr].mean(), d.y[~tr].mean(), d.y[asian & tr].mean(),
                 d.y[asian & ~tr].mean(), (d.X[asian, 0] >= params.high_range[0]).mean(),
                 (d.X[~asian, 0] >= params.high_range[0]).mean()]
    keys = ("treated", "control", "asian_treated", "asian_control", "asian_high_btb",
            "other_high_btb")
    return dict(zip(keys, (sums / reps).tolist()))


def believe_study(reps: int = 10_000, master_seed: int = 7,
                  params: BelieveParams | None = None,
                  methods=DEFAULT_METHODS, config: AssessmentConfig | None = None,
                  workers: int | None = 1, label: str = "printed") -> BelieveResult:
    """Power and consistency probabilities with Asian as the region of interest."""
    params = params or BelieveParams.printed()
    config = config or AssessmentConfig(region=ASIAN)
    (counts,) = run_counts([(params, tuple(methods), config)], reps, master_seed, workers,
                           generator=generate_believe)
    results = counts_to_results(counts, methods, master_seed, f"believe-{label}")
    return BelieveResult(label, params, tuple(results))


def believe_csv(studies) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "method", "cp", "mc_se", "power", "reps_total", "reps_significant"])
    for s in studies:
        for r in s.results:
            w.writerow([s.label, r.method, "NA" if r.cp is None else f"{r.cp:.4f}",
                        "NA" if r.mc_se is None else f"{r.mc_se:.4f}", f"{r.power:.4f}",
                        r.reps_total, r.reps_significant])
    return buf.getvalue()


def believe_json(studies) -> str:
    return json.dumps([s.to_dict() for s in studies], indent=2, sort_keys=True) + "\n"
