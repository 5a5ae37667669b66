"""Data-generating scenarios for the consistency-probability experiments."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

from ..numerics import trunc_normal_invert_moment

FAMILIES = ("continuous-linear", "continuous-quadratic", "continuous-cubic", "binary", "survival")
SHIFTS = ("noshift", "shift-i", "shift-ii")
HAZARD_LINKS = ("log", "clip")
KAPPA_RATIOS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

# centring constant of the quadratic effect modifier (second moment at mu = 0)
QUAD_CENTER = 1.61


@dataclass(frozen=True)
class ScenarioSpec:
    """A fully parameterized two-region trial.

    ``endpoint`` is ``"continuous"``, ``"binary"`` or ``"survival"``; ``g``
    names the continuous effect modifier (``"linear"``, ``"quadratic"`` or
    ``"cubic"``). The hazard of the survival model is the linear predictor
    passed through ``hazard_link``: ``"log"`` uses ``exp(predictor)``,
    ``"clip"`` uses the predictor itself and gives no event when it is not
    positive.
    """

    name: str
    endpoint: str
    g: str | None = None
    n_r: int = 60
    n_minus_r: int = 340
    p: int = 4
    mu_r: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    mu_minus_r: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    sigma: float = 1.4
    bounds: tuple[float, float] = (-3.0, 3.0)
    kappa_r: float = 10.0
    kappa_minus_r: float = 10.0
    pi1: float = 0.5
    censor_upper: float = 200.0
    tau: float = 100.0
    hazard_link: str = "log"
    balanced: bool = False
    noise_sd: float = 1.0
    moments: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.endpoint not in ("continuous", "binary", "survival"):
            raise ValueError(f"unknown endpoint {self.endpoint!r}")
        if self.endpoint == "continuous" and self.g not in ("linear", "quadratic", "cubic"):
            raise ValueError("continuous scenarios need g in linear/quadratic/cubic")
        if self.p < 4:
            raise ValueError("the outcome models use four covariates (p >= 4)")
        if len(self.mu_r) != self.p or len(self.mu_minus_r) != self.p:
            raise ValueError("mu vectors must have length p")
        if self.hazard_link not in HAZARD_LINKS:
            raise ValueError(f"hazard_link must be one of {HAZARD_LINKS}")
        if not 0 < self.pi1 < 1:
            raise ValueError("pi1 must lie in (0, 1)")
        if self.n_r < 4 or self.n_minus_r < 4:
            raise ValueError("each region needs at least 4 subjects")

    @property
    def family(self) -> str:
        return f"continuous-{self.g}" if self.endpoint == "continuous" else self.endpoint

    @property
    def kappa_ratio(self) -> float | None:
        """``kappa_r / kappa_minus_r``; None when ``kappa_minus_r`` is 0."""
        if self.kappa_minus_r == 0:
            return None
        return self.kappa_r / self.kappa_minus_r

    def with_kappa_ratio(self, ratio: float) -> "ScenarioSpec":
        return replace(self, kappa_r=ratio * self.kappa_minus_r)

    def to_dict(self) -> dict:
        return asdict(self)


def _mu(target: float, k: int = 1) -> float:
    return trunc_normal_invert_moment(target, k, 1.4, -3.0, 3.0)


def _x1(v: float) -> tuple[float, ...]:
    return (v, 0.0, 0.0, 0.0)


def _x12(v1: float, v2: float) -> tuple[float, ...]:
    return (v1, v2, 0.0, 0.0)


# moment targets of the region -r covariates, keyed by (family, shift)
_SHIFT_TARGETS = {
    ("continuous-linear", "shift-i"): {"E X1": 0.72},
    ("continuous-linear", "shift-ii"): {"E X1": 0.49, "E X2": 0.49},
    ("continuous-quadratic", "shift-i"): {"E X1^2": 0.94 + QUAD_CENTER},
    ("continuous-quadratic", "shift-ii"): {"E X1^2": 0.64 + QUAD_CENTER,
                                           "E X2^2": 0.64 + QUAD_CENTER},
    ("continuous-cubic", "shift-i"): {"E X1^3": 1.96},
    ("continuous-cubic", "shift-ii"): {"E X1^3": 1.29, "E X2^3": 1.29},
    ("binary", "shift-i"): {"E X1": 0.408},
    ("binary", "shift-ii"): {"E X1": 0.245, "E X2": 0.164},
    ("survival", "shift-i"): {"E X1": -0.866},
    ("survival", "shift-ii"): {"E X1": -0.486, "E X2": -0.407},
}


def _solve_targets(targets: dict) -> tuple[float, ...]:
    mu = [0.0, 0.0, 0.0, 0.0]
    for key, value in targets.items():
        j = int(key[3]) - 1
        k = int(key[-1]) if "^" in key else 1
        mu[j] = _mu(value, k)
    return tuple(mu)


@lru_cache(maxsize=None)
def _catalog() -> tuple[ScenarioSpec, ...]:
    out = []
    noshift = {
        # location parameters stated directly for the continuous families
        "continuous-linear": ({"mu X1": 0.8}, 0.8),
        "continuous-quadratic": ({"mu X1": 1.4}, 1.4),
        "continuous-cubic": ({"mu X1": 0.5}, 0.5),
        "binary": ({"E X1": 0.408}, None),
        "survival": ({"E X1": -0.791}, None),
    }
    for family in FAMILIES:
        endpoint = "continuous" if family.startswith("continuous") else family
        g = family.split("-")[1] if endpoint == "continuous" else None
        targets, mu1 = noshift[family]
        if mu1 is None:
            mu1 = _mu(next(iter(targets.values())))
        out.append(ScenarioSpec(name=f"{family}-noshift", endpoint=endpoint, g=g,
                                mu_r=_x1(mu1), mu_minus_r=_x1(mu1), moments=dict(targets)))
        for shift in SHIFTS[1:]:
            targets = _SHIFT_TARGETS[(family, shift)]
            out.append(ScenarioSpec(name=f"{family}-{shift}", endpoint=endpoint, g=g,
                                    mu_r=(0.0,) * 4, mu_minus_r=_solve_targets(targets),
                                    moments=dict(targets)))
    return tuple(out)


def builtin_scenarios() -> dict[str, ScenarioSpec]:
    """All fifteen named scenarios (5 endpoint families x 3 shift settings)."""
    return {s.name: s for s in _catalog()}


def get_scenario(name: str) -> ScenarioSpec:
    cat = builtin_scenarios()
    try:
        return cat[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(cat)}") from None


def scenarios_json() -> str:
    return json.dumps({k: v.to_dict() for k, v in builtin_scenarios().items()},
                      indent=2, sort_keys=True) + "\n"
