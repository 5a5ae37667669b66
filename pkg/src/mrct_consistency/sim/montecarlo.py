"""Monte Carlo estimation of consistency probabilities.

Replicate ``i`` of every run draws from ``RngStream(master_seed, i)``.
Workers return integer counts only and counts are summed, so results do
not depend on the number of workers or on scheduling order.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from ..assessment import AssessmentConfig, Verdict, analyze
from ..data import TrialDataset
from ..errors import AnalysisError
from ..numerics import RngStream
from .generate import REGION_LABEL, generate_trial
from .scenarios import FAMILIES, KAPPA_RATIOS, ScenarioSpec, get_scenario
from .targets import TABLE_METHODS, TABLE_SHIFT

UNDEFINED = "NA"


@dataclass(frozen=True)
class Method:
    """``Ko(q)`` (one-step) or ``TS(q1,q2)`` (two-step)."""

    kind: str
    q1: float
    q2: float | None = None

    def __post_init__(self):
        if self.kind not in ("ko", "ts"):
            raise ValueError("method kind must be 'ko' or 'ts'")
        if (self.kind == "ts") != (self.q2 is not None):
            raise ValueError("two-step methods take (q1, q2); one-step methods take q only")

    @property
    def label(self) -> str:
        if self.kind == "ko":
            return f"Ko({self.q1:g})"
        return f"TS({self.q1:g},{self.q2:g})"

    @classmethod
    def parse(cls, text: str) -> "Method":
        m = re.fullmatch(r"\s*(Ko|TS)\(\s*([0-9.]+)\s*(?:,\s*([0-9.]+)\s*)?\)\s*", text)
        if not m:
            raise ValueError(f"cannot parse method {text!r}; use e.g. Ko(0.5) or TS(0.9,0.5)")
        kind = m.group(1).lower()
        return cls(kind, float(m.group(2)), None if m.group(3) is None else float(m.group(3)))

    def __str__(self) -> str:
        return self.label


DEFAULT_METHODS = tuple(Method.parse(m) for m in TABLE_METHODS)


@dataclass(frozen=True)
class CpResult:
    method: str
    cp: float | None
    mc_se: float | None
    reps_total: int
    reps_significant: int
    power: float
    seed: int
    claims: int = 0
    reps_failed: int = 0
    scenario: str = ""
    kappa_ratio: float | None = None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "kappa_ratio": self.kappa_ratio, "method": self.method,
            "cp": self.cp, "mc_se": self.mc_se, "power": self.power,
            "reps_total": self.reps_total, "reps_significant": self.reps_significant,
            "claims": self.claims, "reps_failed": self.reps_failed, "seed": self.seed,
        }


@dataclass(frozen=True)
class McCounts:
    """Integer tallies over a set of replicates."""

    reps: int
    failed: int
    significant: int
    claims: tuple[int, ...]
    # replicates where TS(q1, q2) refused a claim that Ko(q1) made
    dominance_violations: int
    interaction_rejects: int

    def __add__(self, other: "McCounts") -> "McCounts":
        return McCounts(
            self.reps + other.reps, self.failed + other.failed,
            self.significant + other.significant,
            tuple(a + b for a, b in zip(self.claims, other.claims)),
            self.dominance_violations + other.dominance_violations,
            self.interaction_rejects + other.interaction_rejects,
        )


def replicate_claims(data: TrialDataset, methods: Sequence[Method],
                     config: AssessmentConfig) -> tuple[bool, list[bool], int, bool]:
    """Evaluate all methods on one dataset.

    Returns ``(significant, claims, dominance_violations, interaction_rejected)``.
    """
    an = analyze(data, config)
    if not an.significant:
        return False, [False] * len(methods), 0, False
    claims = []
    violations = 0
    for m in methods:
        if m.kind == "ko":
            claims.append(an.decide_one_step(m.q1)[0] is Verdict.CONSISTENCY)
        else:
            ts = an.decide(m.q1, m.q2)[0] is Verdict.CONSISTENCY
            ko = an.decide_one_step(m.q1)[0] is Verdict.CONSISTENCY
            violations += int(ko and not ts)
            claims.append(ts)
    rejected = "interaction" in an.__dict__ and bool(an.interaction_rejects)
    return True, claims, violations, rejected


def _run_chunk(spec, methods: tuple[Method, ...], config: AssessmentConfig,
               master_seed: int, start: int, stop: int, strict: bool,
               generator: Callable = generate_trial) -> McCounts:
    k = len(methods)
    sig = failed = viol = rej = 0
    claims = [0] * k
    for i in range(start, stop):
        data = generator(spec, RngStream(master_seed, i))
        try:
            s, c, v, r = replicate_claims(data, methods, config)
        except AnalysisError:
            if strict:
                raise
            failed += 1
            continue
        if s:
            sig += 1
            for j in range(k):
                claims[j] += c[j]
            viol += v
            rej += r
    return McCounts(stop - start, failed, sig, tuple(claims), viol, rej)


def _chunks(reps: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(reps / max(1, workers * 8)))
    return [(a, min(a + size, reps)) for a in range(0, reps, size)]


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("MRCT_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def run_counts(jobs: Sequence[tuple[object, Sequence[Method], AssessmentConfig]],
               reps: int, master_seed: int, workers: int | None = 1,
               strict: bool = False, generator: Callable = generate_trial) -> list[McCounts]:
    """Tally ``reps`` replicates for each job, sharing one worker pool.

    A job is ``(spec, methods, config)``; ``generator(spec, rng)`` builds each
    replicate dataset and must be a picklable module-level function.
    Replicates whose analysis raises are counted as failed unless ``strict``.
    """
    workers = resolve_workers(workers)
    chunks = _chunks(reps, workers)
    tasks = [(j, (spec, tuple(methods), cfg, master_seed, a, b, strict, generator))
             for j, (spec, methods, cfg) in enumerate(jobs) for a, b in chunks]
    empty = [McCounts(0, 0, 0, (0,) * len(m), 0, 0) for _, m, _ in jobs]
    totals = list(empty)
    if workers == 1 or len(tasks) == 1:
        results = [_run_chunk(*args) for _, args in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, *args) for _, args in tasks]
            results = [f.result() for f in futures]
    for (j, _), res in zip(tasks, results):
        totals[j] = totals[j] + res
    return totals


def counts_to_results(counts: McCounts, methods: Sequence[Method], master_seed: int,
                      scenario: str = "", kappa_ratio: float | None = None) -> list[CpResult]:
    valid = counts.reps - counts.failed
    power = counts.significant / valid if valid else 0.0
    out = []
    for m, c in zip(methods, counts.claims):
        if counts.significant:
            cp = c / counts.significant
            se = math.sqrt(cp * (1.0 - cp) / counts.significant)
        else:
            cp = se = None
        out.append(CpResult(m.label, cp, se, counts.reps, counts.significant, power,
                            master_seed, c, counts.failed, scenario, kappa_ratio))
    return out


def default_config(region: str = REGION_LABEL, **overrides) -> AssessmentConfig:
    return AssessmentConfig(region=region, **overrides)


def estimate_cp_many(spec: ScenarioSpec, methods: Sequence[Method] = DEFAULT_METHODS,
                     config: AssessmentConfig | None = None, reps: int = 10_000,
                     master_seed: int = 0, workers: int | None = 1) -> list[CpResult]:
    """Consistency probabilities of several methods on shared replicates."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    config = config or default_config()
    (counts,) = run_counts([(spec, methods, config)], reps, master_seed, workers)
    return counts_to_results(counts, methods, master_seed, spec.name, spec.kappa_ratio)


def estimate_cp(spec: ScenarioSpec, method: Method | str, config: AssessmentConfig | None = None,
                reps: int = 10_000, master_seed: int = 0, workers: int | None = 1) -> CpResult:
    if isinstance(method, str):
        method = Method.parse(method)
    return estimate_cp_many(spec, [method], config, reps, master_seed, workers)[0]


# --------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class TableResult:
    table: str
    results: tuple[CpResult, ...]
    counts: dict

    def cell(self, family: str, method: str, ratio: float) -> CpResult:
        for r in self.results:
            if r.scenario.startswith(family + "-") and r.method == method \
                    and math.isclose(r.kappa_ratio, ratio):
                return r
        raise KeyError((family, method, ratio))

    def to_csv(self) -> str:
        """One row per (scenario, method) with the six kappa-ratio columns."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "method"] + [f"{k:.1f}" for k in KAPPA_RATIOS])
        rows: dict = {}
        for r in self.results:
            rows.setdefault((r.scenario, r.method), {})[round(r.kappa_ratio, 10)] = r
        for (scenario, method), cells in rows.items():
            w.writerow([scenario, method] + [
                UNDEFINED if cells[round(k, 10)].cp is None else f"{cells[round(k, 10)].cp:.4f}"
                for k in KAPPA_RATIOS])
        return buf.getvalue()

    def to_long_csv(self) -> str:
        """Plot-ready rows: one per (scenario, method, kappa ratio)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["scenario", "method", "kappa_ratio", "cp", "mc_se", "power", "reps_total",
                "reps_significant", "claims", "reps_failed", "seed"]
        w.writerow(cols)
        for r in self.results:
            d = r.to_dict()
            w.writerow([UNDEFINED if d[c] is None else d[c] for c in cols])
        return buf.getvalue()


def table_jobs(table: str, families: Iterable[str] = FAMILIES,
               ratios: Iterable[float] = KAPPA_RATIOS,
               spec_transform: Callable[[ScenarioSpec], ScenarioSpec] | None = None):
    if table not in TABLE_SHIFT:
        raise ValueError(f"table must be one of {sorted(TABLE_SHIFT)}")
    out = []
    for family in families:
        base = get_scenario(f"{family}-{TABLE_SHIFT[table]}")
        if spec_transform is not None:
            base = spec_transform(base)
        for ratio in ratios:
            out.append(base.with_kappa_ratio(ratio))
    return out


def reproduce_table(table: str, reps: int = 10_000, master_seed: int = 42,
                    workers: int | None = 1, families: Iterable[str] = FAMILIES,
                    methods: Sequence[Method] = DEFAULT_METHODS,
                    config: AssessmentConfig | None = None,
                    spec_transform: Callable[[ScenarioSpec], ScenarioSpec] | None = None,
                    ) -> TableResult:
    """Every (family, kappa ratio, method) cell of a consistency-probability table."""
    config = config or default_config()
    specs = table_jobs(table, families, KAPPA_RATIOS, spec_transform)
    counts = run_counts([(s, methods, config) for s in specs], reps, master_seed, workers)
    results = []
    extra = {}
    for spec, c in zip(specs, counts):
        results += counts_to_results(c, methods, master_seed, spec.name, spec.kappa_ratio)
        extra[(spec.name, spec.kappa_ratio)] = c
    return TableResult(table, tuple(results), extra)
