from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrct_consistency.ate import (
    equivalent_global_threshold,
    estimate_ate,
    global_z,
    one_step_assess,
)
from mrct_consistency.data import Endpoint, TrialDataset, partition_by_region
from mrct_consistency.errors import AnalysisError, DataError


def dataset(y, t, region=None):
    n = len(y)
    region = region or ["A"] * n
    return TrialDataset(y, t, region, np.zeros((n, 1)), Endpoint.continuous())


def two_region(y_r1, y_r0, y_m1, y_m0):
    y = list(y_r1) + list(y_r0) + list(y_m1) + list(y_m0)
    t = [1] * len(y_r1) + [-1] * len(y_r0) + [1] * len(y_m1) + [-1] * len(y_m0)
    region = ["r"] * (len(y_r1) + len(y_r0)) + ["o"] * (len(y_m1) + len(y_m0))
    return dataset(y, t, region)


def test_two_point_example():
    est = estimate_ate(dataset([3, 5, 1, 1], [1, 1, -1, -1]))
    assert est.delta == 3 and est.se == 1
    assert (est.n_treat, est.n_control) == (2, 2)


def test_identical_arms_zero():
    assert estimate_ate(dataset([1, 2, 1, 2], [1, 1, -1, -1])).delta == 0


def test_random_instance_against_hand_oracle():
    rng = np.random.default_rng(8)
    y = rng.normal(size=20)
    t = np.where(np.arange(20) % 3 == 0, -1, 1)
    a = [v for v, s in zip(y.tolist(), t) if s == 1]
    b = [v for v, s in zip(y.tolist(), t) if s == -1]
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    va = sum((v - ma) ** 2 for v in a) / (len(a) - 1)
    vb = sum((v - mb) ** 2 for v in b) / (len(b) - 1)
    est = estimate_ate(dataset(y, t))
    assert est.delta == pytest.approx(ma - mb, abs=1e-14)
    assert est.se == pytest.approx(math.sqrt(va / len(a) + vb / len(b)), abs=1e-14)


def test_empty_arm_errors():
    with pytest.raises(DataError):
        estimate_ate(dataset([1, 2], [1, 1]))


def test_global_z_examples():
    # delta = 1, se = 0.5
    d = dataset([1.5, 2.5, 0.5, 1.5], [1, 1, -1, -1])
    e = estimate_ate(d)
    assert e.delta == 1
    assert global_z(d) == pytest.approx(1 / e.se)
    assert global_z(d, 0.5) == pytest.approx(1.5 / e.se)


def test_global_z_zero_se():
    with pytest.raises(AnalysisError):
        global_z(dataset([1, 1, 0, 0], [1, 1, -1, -1]))


def _shifted(delta_r, delta_m):
    base = [0.0, 0.2, 0.4] * 3
    return two_region([v + delta_r for v in base], base,
                      [v + delta_m for v in base] * 4, base * 4)


def test_one_step_consistent():
    d = _shifted(1.0, 1.0)
    res = one_step_assess(d, partition_by_region(d, "r"), q=0.5)
    assert res.overall_significant and res.consistent
    assert res.ratio == pytest.approx(1.0)


def test_one_step_inconsistent():
    d = _shifted(0.3, 1.0)
    res = one_step_assess(d, partition_by_region(d, "r"), q=0.5)
    assert res.overall_significant and not res.consistent


def test_one_step_sign_guard():
    d = _shifted(0.4, -0.2)
    part = partition_by_region(d, "r")
    res = one_step_assess(d, part, q=0.5, alpha=0.4)
    assert res.delta_minus_r == pytest.approx(-0.2)
    assert res.ratio is None and not res.consistent


def test_one_step_not_significant():
    d = _shifted(0.0, 0.0)
    res = one_step_assess(d, partition_by_region(d, "r"))
    assert not res.overall_significant and res.ratio is None and not res.consistent
    assert set(res.to_dict()) == {"z", "z_alpha", "delta_r", "delta_minus_r", "ratio", "q",
                                  "consistent"}


def test_one_step_q_below_half_rejected():
    d = _shifted(1.0, 1.0)
    with pytest.raises(ValueError):
        one_step_assess(d, partition_by_region(d, "r"), q=0.4)


def test_equivalent_threshold_examples():
    assert equivalent_global_threshold(1.0, 0.3) == pytest.approx(1.0)
    assert equivalent_global_threshold(0.5, 0.15) == pytest.approx(0.54054, abs=1e-5)
    assert equivalent_global_threshold(0.0, 0.3) == 0.0


def balanced(seed, n_r=20, n_m=60):
    rng = np.random.default_rng(seed)
    t = np.r_[np.tile([1, -1], n_r // 2), np.tile([1, -1], n_m // 2)]
    y = rng.normal(size=n_r + n_m) + (t == 1) * rng.uniform(0.2, 2)
    region = ["r"] * n_r + ["o"] * n_m
    return dataset(y, t, region)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_decomposition_on_balanced_data(seed):
    d = balanced(seed)
    part = partition_by_region(d, "r")
    whole = estimate_ate(d).delta
    dr = estimate_ate(d, part.in_region).delta
    dm = estimate_ate(d, part.complement).delta
    assert whole == pytest.approx(part.rho_r * dr + (1 - part.rho_r) * dm, abs=1e-10)
    if dm > 0 and whole > 0:
        for q in (0.5, 0.75, 0.9):
            thr = equivalent_global_threshold(q, part.rho_r)
            assert (dr / dm > q) == (dr / whole > thr)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_claims_nested_in_q(seed):
    d = balanced(seed)
    part = partition_by_region(d, "r")
    claims = [one_step_assess(d, part, q=q).consistent for q in (0.5, 0.6, 0.75, 0.9, 1.0)]
    # once a threshold refuses, every larger one refuses
    assert claims == sorted(claims, reverse=True)


def test_zero_margin_bit_identical():
    d = balanced(3)
    part = partition_by_region(d, "r")
    a = one_step_assess(d, part, margin=0.0)
    b = one_step_assess(d, part)
    assert a == b
    assert global_z(d, 0.0) == global_z(d)
