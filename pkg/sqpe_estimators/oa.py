"""
Operator Averaging: measure every Pauli term directly and combine sample means.

Also holds the measurement-budget formulas for uniform and proportional shot
allocation and the analytic error curve used to read off shots-to-accuracy.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from sqpe_estimators.operators import (
    ObservableExpansion,
    OperatorError,
    PureState,
    expectation,
    one_norms,
    pauli_expectation,
    spectral_oracle,
)
from sqpe_estimators.reports import EstimateReport, EstimatorError
from sqpe_estimators.shot_sim import ReadoutNoise, RngStream, ShotBatch, sample_pauli

logger = logging.getLogger(__name__)


class AllocationMode(Enum):
    UNIFORM = "uniform"
    PROPORTIONAL = "proportional"


@dataclass(frozen=True)
class OAllocation:
    per_term_shots: tuple
    mode: AllocationMode = AllocationMode.UNIFORM

    def __post_init__(self):
        if any(m < 1 for m in self.per_term_shots):
            raise EstimatorError("every term needs at least one shot")

    @property
    def total(self) -> int:
        return int(sum(self.per_term_shots))

    @classmethod
    def uniform(cls, term_count: int, shots_per_term: int) -> "OAllocation":
        return cls(tuple([int(shots_per_term)] * term_count), AllocationMode.UNIFORM)

    @classmethod
    def proportional(cls, obs: ObservableExpansion, total_shots: int) -> "OAllocation":
        """M_k proportional to alpha_k / ||O_T||_1, at least one shot each, summing to total."""
        if total_shots < obs.term_count:
            raise EstimatorError(f"{total_shots} shots cannot cover {obs.term_count} terms")
        w = obs.weights / obs.weights.sum()
        shots = np.maximum(1, np.rint(w * total_shots).astype(int))
        shots[int(np.argmax(shots))] += total_shots - int(shots.sum())
        if shots.min() < 1:
            raise EstimatorError("proportional allocation left a term without shots")
        return cls(tuple(int(m) for m in shots), AllocationMode.PROPORTIONAL)


class UniformBudget(NamedTuple):
    shots: int
    bound: int


@dataclass(frozen=True)
class ErrorCurvePoint:
    total_shots: int
    analytic_eps: float
    empirical_abs_err: float
    seed: int


def oracle_pauli_means(obs: ObservableExpansion, state: PureState) -> np.ndarray:
    return np.array([pauli_expectation(t.string, state) for t in obs.terms])


def oa_sample(obs: ObservableExpansion, state: PureState, allocation: OAllocation,
              noise: Optional[ReadoutNoise], rng: RngStream) -> List[ShotBatch]:
    if len(allocation.per_term_shots) != obs.term_count:
        raise OperatorError(
            f"allocation has {len(allocation.per_term_shots)} entries for {obs.term_count} terms"
        )
    return [
        sample_pauli(term, state, m, noise, rng)
        for term, m in zip(obs.terms, allocation.per_term_shots)
    ]


def combine_term_means(obs: ObservableExpansion, means: Sequence[float]) -> float:
    coeffs = np.array([t.coefficient for t in obs.terms])
    value = obs.identity_coeff + np.sum(coeffs * np.asarray(means, dtype=float))
    if abs(np.imag(value)) > 1e-10 * max(1.0, abs(value)):
        raise OperatorError(f"estimator has imaginary part {np.imag(value):.3e}")
    return float(np.real(value))


def term_variance(obs: ObservableExpansion, means: Sequence[float], shots: Sequence[int]) -> float:
    means = np.asarray(means, dtype=float)
    return float(np.sum(obs.weights ** 2 * (1.0 - means ** 2) / np.asarray(shots, dtype=float)))


def oa_estimate(obs: ObservableExpansion, state: PureState, allocation: OAllocation,
                noise: Optional[ReadoutNoise], rng: RngStream) -> EstimateReport:
    if obs.term_count == 0:
        return EstimateReport(obs.identity_coeff, 0.0, 0.0, 0)
    batches = oa_sample(obs, state, allocation, noise, rng)
    means = [b.mean_sign for b in batches]
    bias = 0.0
    if noise is not None and noise.flip_probability > 0:
        # uncorrected readout shrinks each mean by (1 - 2p)
        bias = 2.0 * noise.flip_probability * one_norms(obs)[0]
    return EstimateReport(
        value=combine_term_means(obs, means),
        variance=term_variance(obs, means, allocation.per_term_shots),
        bias_bound=bias,
        total_shots=allocation.total,
    )


def _check_eps(epsilon: float) -> None:
    if not epsilon > 0:
        raise EstimatorError(f"epsilon must be positive, got {epsilon}")


def budget_uniform(obs: ObservableExpansion, means: Sequence[float], epsilon: float) -> UniformBudget:
    """N_tot = (L / eps^2) sum alpha_k^2 (1 - P_k^2), with the (L ||O_T||_2^2) / eps^2 bound."""
    _check_eps(epsilon)
    means = np.asarray(means, dtype=float)
    L = obs.term_count
    shots = L * float(np.sum(obs.weights ** 2 * (1.0 - means ** 2))) / epsilon ** 2
    bound = L * one_norms(obs)[2] ** 2 / epsilon ** 2
    return UniformBudget(int(math.ceil(shots - 1e-9)), int(math.ceil(bound - 1e-9)))


def budget_proportional(obs: ObservableExpansion, means: Sequence[float], epsilon: float) -> int:
    """N'_tot = (||O_T||_1 / eps^2) sum alpha_k (1 - P_k^2)."""
    _check_eps(epsilon)
    means = np.asarray(means, dtype=float)
    shots = one_norms(obs)[0] * float(np.sum(obs.weights * (1.0 - means ** 2))) / epsilon ** 2
    return int(math.ceil(shots - 1e-9))


def accuracy_budget(obs: ObservableExpansion, state: PureState, eps_r: float) -> float:
    """N_A = 1 / (R_O eps_r)^2, the worst case over term expectations."""
    _check_eps(eps_r)
    mean = expectation(obs, state)
    if mean == 0:
        raise EstimatorError("relative accuracy is undefined for <O> = 0")
    return (one_norms(obs)[0] / (abs(mean) * eps_r)) ** 2


def accuracy_budget_lower_bound(obs: ObservableExpansion, state: PureState, eps_r: float) -> float:
    _check_eps(eps_r)
    lam_t = spectral_oracle(obs).operator_norm_traceless
    return lam_t ** 2 / (expectation(obs, state) ** 2 * eps_r ** 2)


def analytic_error(obs: ObservableExpansion, means: Sequence[float], total_shots: float) -> float:
    means = np.asarray(means, dtype=float)
    spread = float(np.sum(obs.weights ** 2 * (1.0 - means ** 2)))
    return math.sqrt(obs.term_count * spread / total_shots)


def error_curve(obs: ObservableExpansion, state: PureState, shot_schedule: Sequence[int],
                seeds: Iterable[int], noise: Optional[ReadoutNoise] = None) -> List[ErrorCurvePoint]:
    """Empirical and analytic error at each schedule point, one independent run per seed."""
    schedule = [int(n) for n in shot_schedule]
    if not schedule or min(schedule) < 1:
        raise EstimatorError("shot schedule entries must be >= 1")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise EstimatorError("shot schedule must be strictly increasing")

    exact = expectation(obs, state)
    means = oracle_pauli_means(obs, state)
    L = max(obs.term_count, 1)
    points: List[ErrorCurvePoint] = []
    for seed in seeds:
        rng = RngStream(seed)
        for n_tot in schedule:
            per_term = max(1, n_tot // L)
            report = oa_estimate(obs, state, OAllocation.uniform(obs.term_count, per_term), noise, rng)
            points.append(ErrorCurvePoint(
                total_shots=per_term * L,
                analytic_eps=analytic_error(obs, means, per_term * L) if obs.term_count else 0.0,
                empirical_abs_err=abs(report.value - exact),
                seed=int(seed),
            ))
        logger.info(f"error curve for seed {seed}: {len(schedule)} points up to {schedule[-1]} shots")
    return points


def shots_to_target(points: Sequence[ErrorCurvePoint], epsilon: float) -> Optional[int]:
    """First schedule point where the analytic error reaches the target."""
    for p in sorted(points, key=lambda p: p.total_shots):
        if p.analytic_eps <= epsilon:
            return p.total_shots
    return None


def single_run_crossing(points: Sequence[ErrorCurvePoint], epsilon: float, seed: int) -> Optional[int]:
    for p in sorted((p for p in points if p.seed == seed), key=lambda p: p.total_shots):
        if p.empirical_abs_err <= epsilon:
            return p.total_shots
    return None
