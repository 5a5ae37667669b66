"""Two-step regional consistency assessment.

Step 1 is the marginal ratio criterion with threshold ``q1``. When it
fails, the region-by-covariate interaction test decides whether CATEs
differ; if they cannot be told apart, the covariate-shift adjusted ratios
get a second chance against ``q2``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from functools import cached_property

from .ate import OneStepResult, estimate_ate, shifted_ratio, _z
from .data import TrialDataset, discretize_covariates, partition_by_region
from .errors import AnalysisError, DegenerateModelError
from .ite import (COVARIANCE_KINDS, DESIGN_MODES, IteProfile, WorkingModelFit,
                  cate_similarity_test, fit_working_model, interaction_design, loop_mhat)
from .numerics import std_normal_quantile
from .shift import AdjustedAte, adjusted_ate, adjusted_effects, joint_density_ratio, step2_event
from .survival import to_pseudo_dataset

DENSITY_MODES = ("per_covariate", "joint")


class Verdict(str, enum.Enum):
    CONSISTENCY = "Consistency"
    INCONSISTENCY = "Inconsistency"
    NOT_SIGNIFICANT = "NotSignificant"


class Stage(str, enum.Enum):
    STEP1 = "step1"
    STEP1_FAIL = "step1_fail"
    INTERACTION_REJECT = "interaction_reject"
    STEP2_PASS = "step2_pass"
    STEP2_FAIL = "step2_fail"


@dataclass(frozen=True)
class AssessmentConfig:
    """Thresholds and analysis options.

    Attributes:
        region: label of the region under assessment.
        q1: step-1 threshold on the regional ratio.
        q2: step-2 threshold on the adjusted ratios.
        alpha: one-sided level of the overall test.
        alpha_interaction: level of the interaction (CATE similarity) test.
        margin: non-inferiority shift added to every effect estimate.
        smoothing: pseudo-count per level in the density ratios.
        covariance: ``"ols"`` or ``"hc3"`` for the interaction Wald test.
        design_mode: ``"onehot"`` (levels) or ``"raw"`` covariates in the
            outcome and working models.
        pooled_cuts: discretize with pooled rather than per-region tertiles.
        pseudo_per_region: survival pseudo-observations per arm within region.
        density_mode: ``"per_covariate"`` or ``"joint"`` density ratios.
    """

    region: str
    q1: float = 0.9
    q2: float = 0.5
    alpha: float = 0.025
    alpha_interaction: float = 0.05
    margin: float = 0.0
    smoothing: float = 0.5
    covariance: str = "ols"
    design_mode: str = "onehot"
    pooled_cuts: bool = True
    pseudo_per_region: bool = False
    density_mode: str = "per_covariate"

    def __post_init__(self):
        if self.q1 < 0.5 or self.q2 < 0.5:
            raise ValueError("q1 and q2 must be at least 0.5")
        for name in ("alpha", "alpha_interaction"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")
        if self.covariance not in COVARIANCE_KINDS:
            raise ValueError(f"covariance must be one of {COVARIANCE_KINDS}")
        if self.design_mode not in DESIGN_MODES:
            raise ValueError(f"design_mode must be one of {DESIGN_MODES}")
        if self.density_mode not in DENSITY_MODES:
            raise ValueError(f"density_mode must be one of {DENSITY_MODES}")


class Analysis:
    """Shared intermediates of one dataset, computed on first use.

    Several threshold pairs can be decided on the same analysis; the outcome
    model, interaction test and adjusted effects are fitted at most once.
    """

    def __init__(self, data: TrialDataset, config: AssessmentConfig):
        self.config = config
        self.trace: list[str] = []
        self.interaction_error: str | None = None
        if data.endpoint.kind == "survival":
            data = to_pseudo_dataset(data, per_region=config.pseudo_per_region)
        self.raw = data
        self.partition = partition_by_region(data, config.region)
        overall = estimate_ate(data)
        self.z = _z(overall, config.margin)
        self.z_alpha = std_normal_quantile(1.0 - config.alpha)
        self.significant = self.z > self.z_alpha
        self.delta_r = estimate_ate(data, self.partition.in_region).delta
        self.delta_minus_r = estimate_ate(data, self.partition.complement).delta
        self.ratio = shifted_ratio(self.delta_r, self.delta_minus_r, config.margin)

    def one_step(self, q: float) -> OneStepResult:
        ratio = self.ratio if self.significant else None
        return OneStepResult(
            z=self.z, z_alpha=self.z_alpha, overall_significant=self.significant,
            delta_r=self.delta_r, delta_minus_r=self.delta_minus_r, ratio=ratio,
            threshold_q=q, consistent=ratio is not None and ratio > q, margin=self.config.margin,
        )

    @cached_property
    def data(self) -> TrialDataset:
        if self.raw.discretized:
            return self.raw
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = discretize_covariates(self.raw, pooled=self.config.pooled_cuts)
        for w in caught:
            self.trace.append(f"note: {w.message}")
        return out

    @cached_property
    def _design(self):
        source = self.raw if self.config.design_mode == "raw" else self.data
        return interaction_design(source, self.partition, self.config.design_mode)

    @cached_property
    def ite(self) -> IteProfile:
        prof = loop_mhat(self.data, self.partition, design=self._design)
        for arm, cols in prof.dropped_columns.items():
            if cols:
                self.trace.append(f"outcome model ({arm} arm) dropped dependent columns: "
                                  + ", ".join(cols))
        return prof

    @cached_property
    def interaction(self) -> WorkingModelFit | None:
        try:
            fit = fit_working_model(self.data, self.partition, self.ite,
                                    covariance=self.config.covariance, design=self._design)
        except DegenerateModelError as exc:
            self.interaction_error = str(exc)
            self.trace.append(f"warning: interaction test not computable ({exc}); "
                              "similar CATEs cannot be refuted, continuing to step 2")
            return None
        if fit.dropped_columns:
            self.trace.append("working model dropped dependent columns: "
                              + ", ".join(fit.dropped_columns))
        return fit

    @cached_property
    def interaction_rejects(self) -> bool:
        fit = self.interaction
        return fit is not None and cate_similarity_test(fit, self.config.alpha_interaction)

    @cached_property
    def adjusted(self) -> AdjustedAte:
        cfg = self.config
        try:
            if cfg.density_mode == "joint":
                table = joint_density_ratio(self.data, self.partition, cfg.smoothing)
                d = adjusted_ate(self.ite, self.partition, table)
                r = shifted_ratio(d, self.delta_minus_r, cfg.margin)
                return AdjustedAte(((0, d),), r, None if r is None else 0)
            return adjusted_effects(self.data, self.partition, self.ite, self.delta_minus_r,
                                    cfg.smoothing, cfg.margin)
        except AnalysisError as exc:
            raise exc.with_stage("step2")

    def step2(self, q2: float):
        return step2_event(self.adjusted, self.delta_minus_r, q2, self.config.margin)

    def decide(self, q1: float, q2: float) -> tuple[Verdict, Stage | None]:
        """Verdict of the two-step rule at thresholds ``(q1, q2)``."""
        if not self.significant:
            return Verdict.NOT_SIGNIFICANT, None
        if self.ratio is not None and self.ratio > q1:
            return Verdict.CONSISTENCY, Stage.STEP1
        if self.interaction_rejects:
            return Verdict.INCONSISTENCY, Stage.INTERACTION_REJECT
        if self.step2(q2).passed:
            return Verdict.CONSISTENCY, Stage.STEP2_PASS
        return Verdict.INCONSISTENCY, Stage.STEP2_FAIL

    def decide_one_step(self, q: float) -> tuple[Verdict, Stage | None]:
        if not self.significant:
            return Verdict.NOT_SIGNIFICANT, None
        if self.ratio is not None and self.ratio > q:
            return Verdict.CONSISTENCY, Stage.STEP1
        return Verdict.INCONSISTENCY, Stage.STEP1_FAIL


def analyze(data: TrialDataset, config: AssessmentConfig) -> Analysis:
    try:
        return Analysis(data, config)
    except AnalysisError as exc:
        raise exc.with_stage("one_step")


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.6g}"


@dataclass
class AssessmentReport:
    verdict: Verdict
    stage: Stage | None
    one_step: OneStepResult
    interaction: WorkingModelFit | None = None
    adjusted: AdjustedAte | None = None
    step2_ranking: list[dict] | None = None
    trace: list[str] = field(default_factory=list)
    config: AssessmentConfig | None = None
    method: str = "two_step"

    @property
    def consistent(self) -> bool:
        return self.verdict is Verdict.CONSISTENCY

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "verdict": self.verdict.value,
            "stage": None if self.stage is None else self.stage.value,
            "one_step": self.one_step.to_dict(),
            "interaction": None if self.interaction is None else self.interaction.to_dict(),
            "adjusted": None if self.adjusted is None else self.adjusted.to_dict(),
            "step2_ranking": self.step2_ranking,
            "trace": list(self.trace),
            "config": None if self.config is None else asdict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """Flat ``key,value`` rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k in sorted(obj):
                    walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
            elif isinstance(obj, list):
                for i, v in enumerate(obj):
                    walk(f"{prefix}[{i}]", v)
            else:
                w.writerow([prefix, "NA" if obj is None else obj])

        walk("", self.to_dict())
        return buf.getvalue()

    def to_text(self) -> str:
        o = self.one_step
        lines = [f"Verdict: {self.verdict.value}"
                 + (f" (stage {self.stage.value})" if self.stage else ""),
                 f"  overall test   z = {o.z:.4f}  vs z_alpha = {o.z_alpha:.4f}"
                 f"  -> {'significant' if o.overall_significant else 'not significant'}",
                 f"  regional ATE   delta_r = {o.delta_r:.6g}, "
                 f"delta_-r = {o.delta_minus_r:.6g}, ratio = {_fmt(o.ratio)}"
                 f" (q1 = {o.threshold_q:g})"]
        if self.interaction is not None:
            f = self.interaction
            lines.append(f"  interaction    Wald = {f.wald_stat:.4f} on {f.df} df, "
                         f"p = {f.p_value:.4g}")
        if self.step2_ranking:
            lines.append("  adjusted ratios (ranked):")
            for row in self.step2_ranking:
                lines.append(f"    #{row['rank']} x{row['s']}: delta* = {row['delta_star']:.6g},"
                             f" ratio = {_fmt(row['ratio'])}")
        if self.trace:
            lines.append("  trace:")
            lines += [f"    - {t}" for t in self.trace]
        return "\n".join(lines) + "\n"


def _report(an: Analysis, q1: float, verdict, stage, method: str) -> AssessmentReport:
    rep = AssessmentReport(verdict=verdict, stage=stage, one_step=an.one_step(q1),
                           config=an.config, method=method)
    o = rep.one_step
    trace = [f"overall test: z = {o.z:.6g} "
             f"{'>' if o.overall_significant else '<='} z_alpha = {o.z_alpha:.6g}"]
    if o.overall_significant:
        trace.append(f"step 1: ratio = {_fmt(o.ratio)} "
                     f"{'>' if o.consistent else 'not >'} q1 = {q1:g}")
    if method == "two_step" and stage not in (None, Stage.STEP1):
        fit = an.interaction
        rep.interaction = fit
        if fit is not None:
            trace.append(f"interaction test: p = {fit.p_value:.6g} "
                         f"{'<' if an.interaction_rejects else '>='} "
                         f"alpha = {an.config.alpha_interaction:g}")
        if stage is not Stage.INTERACTION_REJECT:
            rep.adjusted = an.adjusted
            res = an.step2(an.config.q2)
            rep.step2_ranking = res.to_list()
            trace.append(f"step 2: max adjusted ratio = "
                         f"{_fmt(an.adjusted.max_ratio_over_delta_minus_r)} "
                         f"{'>' if res.passed else 'not >'} q2 = {an.config.q2:g}")
    trace.append(f"verdict: {verdict.value}" + (f" at {stage.value}" if stage else ""))
    rep.trace = trace + an.trace
    return rep


def two_step_assess(data: TrialDataset, config: AssessmentConfig) -> AssessmentReport:
    an = analyze(data, config)
    verdict, stage = an.decide(config.q1, config.q2)
    return _report(an, config.q1, verdict, stage, "two_step")


def one_step_only(data: TrialDataset, config: AssessmentConfig) -> AssessmentReport:
    """Marginal criterion alone at ``q = config.q1``, in report form."""
    an = analyze(data, config)
    verdict, stage = an.decide_one_step(config.q1)
    return _report(an, config.q1, verdict, stage, "one_step")
