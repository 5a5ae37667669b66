"""Regional consistency assessment for multi-regional clinical trials.

The two-step rule combines the marginal ratio criterion with a test of
CATE similarity across regions and a covariate-shift adjusted rescue step.
"""

from .assessment import (AssessmentConfig, AssessmentReport, Stage, Verdict, analyze,
                         one_step_only, two_step_assess)
from .ate import (AteEstimate, OneStepResult, equivalent_global_threshold, estimate_ate,
                  global_z, one_step_assess)
from .data import (Endpoint, RegionPartition, SubjectRecord, TrialDataset,
                   discretize_covariates, load_csv, partition_by_region, write_csv)
from .errors import (AnalysisError, DataError, DegenerateModelError, LeverageError,
                     RankDeficiencyError)
from .ite import (IteProfile, WorkingModelFit, cate_similarity_test, fit_working_model,
                  loop_mhat, transformed_outcome)
from .shift import (AdjustedAte, DensityRatioTable, adjusted_ate, adjusted_effects,
                    density_ratio, level_frequencies, step2_event)
from .survival import KmCurve, PseudoObs, kaplan_meier, pseudo_observations, rmst, to_pseudo_dataset

__version__ = "0.1.0"
