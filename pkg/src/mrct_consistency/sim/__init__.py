"""Scenario catalog, trial generation and Monte Carlo consistency probabilities."""

from .believe import BelieveParams, believe_study, generate_believe
from .generate import generate_trial, true_cate, true_regional_ate
from .montecarlo import (CpResult, Method, estimate_cp, estimate_cp_many, reproduce_table)
from .scenarios import ScenarioSpec, builtin_scenarios, get_scenario
