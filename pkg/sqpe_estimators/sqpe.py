"""
Single-step phase estimation estimators.

The ancilla of the controlled-evolution circuit reads out <sin(tau O)>. Expanding
the sine to order K gives a biased estimator of <O> whose shot cost is planned
here. The linear (K = 1) algorithm runs at a fixed time step; the cubic (K = 2)
algorithm fits (mu, eta) = (<O>, <O^3>) from two time steps by maximum
likelihood and chooses each new pair of time steps by minimising a predicted
mean squared error.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from sqpe_estimators.operators import (
    ObservableExpansion,
    PureState,
    moments,
    one_norms,
    spectral_oracle,
)
from sqpe_estimators.reports import EstimateReport, EstimatorError, InfeasibleTargetError
from sqpe_estimators.shot_sim import (
    ReadoutNoise,
    RngStream,
    ShotBatch,
    bayes_probability,
    sample_ancilla_z,
)

logger = logging.getLogger(__name__)

INFEASIBLE_COST = 1e30


# ---------------------------------------------------------------------------
# General order-K planning
# ---------------------------------------------------------------------------

def f_K(K: int) -> float:
    """((2K+1)/(2K)) * (sqrt(2K+1)/(2K+1)!)^(1/K); f(1) = sqrt(3)/4."""
    if K < 1:
        raise EstimatorError(f"order K must be >= 1, got {K}")
    n = 2 * K + 1
    return (n / (2 * K)) * (math.sqrt(n) / math.factorial(n)) ** (1.0 / K)


def trotter_scaling(K: int) -> float:
    """gamma(K) = ((2K+1)! / (2 sqrt(2K+1)))^(1/(2K))."""
    if K < 1:
        raise EstimatorError(f"order K must be >= 1, got {K}")
    n = 2 * K + 1
    return (math.factorial(n) / (2.0 * math.sqrt(n))) ** (1.0 / (2 * K))


def optimal_time_step(K: int, epsilon: float, m_K: float) -> float:
    n = 2 * K + 1
    return (math.factorial(n) / math.sqrt(n) * epsilon / abs(m_K)) ** (1.0 / (2 * K))


def truncation_bias_bound(K: int, tau: float, m_K: float) -> float:
    """tau^(2K) |m_K| / (2K+1)!, from the Lagrange remainder of the sine series."""
    return abs(tau) ** (2 * K) * abs(m_K) / math.factorial(2 * K + 1)


@dataclass(frozen=True)
class SqpePlan:
    order: int
    tau_opt: float
    f_K: float
    predicted_shots: float
    bias_bound_at_tau: float
    gamma_K: float

    def __post_init__(self):
        if self.tau_opt <= 0:
            raise EstimatorError("tau_opt must be positive")


def plan(order: int, target_eps: float, m_K: float, trotter_split: bool = False) -> SqpePlan:
    """Optimal time step and shot count for the order-K estimator.

    With ``trotter_split`` half of the error budget is reserved for the
    compiled time evolution, which multiplies the shot count by 2^(1+1/K).
    """
    if order < 1 or not target_eps > 0 or not abs(m_K) > 0:
        raise EstimatorError(
            f"plan needs K >= 1, eps > 0 and |m_K| > 0 (got K={order}, eps={target_eps}, m_K={m_K})"
        )
    fk = f_K(order)
    tau = optimal_time_step(order, target_eps, m_K)
    shots = abs(m_K) ** (1.0 / order) * fk / target_eps ** (2.0 + 1.0 / order)
    if trotter_split:
        shots *= 2.0 ** (1.0 + 1.0 / order)
    return SqpePlan(
        order=order,
        tau_opt=tau,
        f_K=fk,
        predicted_shots=shots,
        bias_bound_at_tau=truncation_bias_bound(order, tau, m_K),
        gamma_K=trotter_scaling(order),
    )


def estimator_K(z_hat: float, tau: float, known_moments: Sequence[float] = ()) -> float:
    """O_K(tau) = -(1/tau) (z + sum_{k=1}^{K-1} tau^(2k+1) (-1)^k m_k / (2k+1)!).

    ``known_moments`` holds m_1 .. m_{K-1}; its length fixes K - 1.
    """
    if tau == 0:
        raise EstimatorError("tau must be nonzero")
    correction = sum(
        tau ** (2 * k + 1) * (-1) ** k * m / math.factorial(2 * k + 1)
        for k, m in enumerate(known_moments, start=1)
    )
    return -(z_hat + correction) / tau


# ---------------------------------------------------------------------------
# Linear algorithm
# ---------------------------------------------------------------------------

def linear_mse(z_mean: float, tau: float, shots: int, m1: float) -> float:
    """(1 - <Z>^2) / (tau^2 N) + tau^4 m_1^2 / 36."""
    return (1.0 - z_mean ** 2) / (tau ** 2 * shots) + tau ** 4 * m1 ** 2 / 36.0


def approximate_linear_step(eps_r: float, lambda_u: float) -> float:
    """Time step from an upper bound lambda_u >= |lambda| instead of the eigenvalue."""
    if not eps_r > 0 or not lambda_u > 0:
        raise EstimatorError("eps_r and lambda_u must be positive")
    return math.sqrt(6.0 / math.sqrt(3.0) * eps_r / lambda_u ** 2)


def linear_inflation(lambda_u: float, lam: float) -> float:
    """Shot-count growth (lambda_u / |lambda|)^(3/2) caused by an overestimated eigenvalue."""
    return (lambda_u / abs(lam)) ** 1.5


@dataclass(frozen=True)
class LinearPoint:
    shots: int
    estimate: float
    error: float


@dataclass
class LinearRun:
    report: EstimateReport
    curve: List[LinearPoint]
    reached: bool
    tau: float


def linear_run(obs: ObservableExpansion, state: PureState, tau: float, target_eps: float,
               noise: Optional[ReadoutNoise], rng: RngStream, m1: Optional[float] = None,
               initial_shots: int = 1000, growth: float = 1.02,
               shot_cap: int = 10 ** 8) -> LinearRun:
    """Accumulate ancilla shots at a fixed tau until the predicted error reaches the target.

    ``m1`` is a user bound on |<O^3>| (field mode); without it the oracle value is used.
    """
    if not tau > 0:
        raise EstimatorError(f"tau must be positive, got {tau}")
    if m1 is None:
        m1 = moments(obs, state, 1).m(1)
    bias = tau ** 2 * abs(m1) / 6.0
    if bias >= target_eps:
        raise InfeasibleTargetError(
            f"bias bound {bias:.4g} already exceeds target {target_eps:.4g}; reduce tau"
        )

    scale = 1.0
    floor = 0.0
    if noise is not None and noise.estimated_p is not None:
        scale = 1.0 / (1.0 - 2.0 * noise.p_hat)
        floor = 4.0 / tau ** 2 * scale ** 4 * noise.estimator_variance

    successes, shots = 0, 0
    curve: List[LinearPoint] = []
    next_check = max(1, int(initial_shots))
    reached = False
    report = EstimateReport(0.0, 0.0, bias, 0)
    while shots < shot_cap:
        step = min(next_check, shot_cap) - shots
        batch = sample_ancilla_z(obs, state, tau, step, noise, rng)
        successes += batch.successes
        shots += step
        z_raw = 2.0 * successes / shots - 1.0
        z = float(np.clip(z_raw * scale, -1.0, 1.0))
        variance = (1.0 - z_raw ** 2) * scale ** 2 / (tau ** 2 * shots) + floor
        report = EstimateReport(estimator_K(z, tau), variance, bias, shots)
        curve.append(LinearPoint(shots, report.value, report.error))
        if report.error <= target_eps:
            reached = True
            break
        next_check = max(shots + 1, int(math.ceil(shots * growth)))

    logger.info(
        f"linear run tau={tau:.5f}: {'reached' if reached else 'missed'} "
        f"eps={target_eps:.4g} after {shots} shots (estimate {report.value:.5f})"
    )
    return LinearRun(report, curve, reached, tau)


# ---------------------------------------------------------------------------
# Cubic algorithm
# ---------------------------------------------------------------------------

class BiasMode(Enum):
    A1 = "A1"
    A2 = "A2"
    EXACT = "exact"


@dataclass(frozen=True)
class TimeStepPair:
    tau_a: float
    tau_b: float

    def __post_init__(self):
        if not (self.tau_a > 0 and self.tau_b > 0):
            raise EstimatorError(f"time steps must be positive, got {self}")
        if self.tau_a == self.tau_b:
            raise EstimatorError(f"degenerate time-step pair {self}")

    @property
    def c_mu(self) -> float:
        return 1.0 / (self.tau_a ** 2 - self.tau_b ** 2)

    @property
    def c_eta(self) -> float:
        return 6.0 / (self.tau_a * self.tau_b * (self.tau_a ** 2 - self.tau_b ** 2))

    def key(self) -> Tuple[float, float]:
        return (self.tau_a, self.tau_b)


@dataclass(frozen=True)
class MleEstimate:
    mu: float
    eta: float
    var_mu: float
    var_eta: float
    bias_bound: float
    blocks_used: int = 0
    block_size: int = 0

    def __post_init__(self):
        if self.var_mu < 0 or self.var_eta < 0 or self.bias_bound < 0:
            raise EstimatorError("variances and bias bound must be nonnegative")


def model_probability(tau, mu: float, eta: float):
    """P~(tau) = (1 - tau mu + tau^3 eta / 6) / 2."""
    tau = np.asarray(tau, dtype=float)
    return 0.5 * (1.0 - tau * mu + tau ** 3 * eta / 6.0)


def mle_from_probabilities(p_a: float, p_b: float, pair: TimeStepPair) -> Tuple[float, float]:
    """Closed-form maximiser of the two-binomial likelihood for observed frequencies."""
    ta, tb = pair.tau_a, pair.tau_b
    y_a, y_b = 1.0 - 2.0 * p_a, 1.0 - 2.0 * p_b
    mu = pair.c_mu * ((ta ** 2 / tb) * y_b - (tb ** 2 / ta) * y_a)
    eta = pair.c_eta * (ta * y_b - tb * y_a)
    return mu, eta


def fisher_variances(p_a: float, p_b: float, m_a: int, m_b: int,
                     pair: TimeStepPair) -> Tuple[float, float]:
    """Inverse Fisher information diagonal for (mu, eta)."""
    ta, tb = pair.tau_a, pair.tau_b
    va, vb = p_a * (1.0 - p_a) / m_a, p_b * (1.0 - p_b) / m_b
    denom = ta ** 2 * tb ** 2 * (ta ** 2 - tb ** 2) ** 2
    var_mu = 4.0 * (ta ** 6 * vb + tb ** 6 * va) / denom
    var_eta = 144.0 * (ta ** 2 * vb + tb ** 2 * va) / denom
    return var_mu, var_eta


def bias_a1(mu: float, eta: float, pair: TimeStepPair) -> float:
    ta2, tb2 = pair.tau_a ** 2, pair.tau_b ** 2
    return abs(mu * eta) / 120.0 * ta2 * tb2 * (ta2 + tb2) / abs(ta2 - tb2)


def bias_a2(mu: float, eta: float, pair: TimeStepPair) -> float:
    ta2, tb2 = pair.tau_a ** 2, pair.tau_b ** 2
    return abs(mu * eta) / 120.0 * ta2 * tb2 * max(ta2, tb2) / abs(ta2 - tb2)


def cubic_bias_bound(fifth_moment: float, pair: TimeStepPair) -> float:
    """|<O^5>| / 120 * ta^2 tb^2 (ta^2 + tb^2) / |ta^2 - tb^2|."""
    return bias_a1(fifth_moment, 1.0, pair)


def mle_pair(batch_a: ShotBatch, batch_b: ShotBatch, pair: TimeStepPair,
             blocks_used: int = 0, block_size: int = 0) -> MleEstimate:
    if batch_a.trials < 1 or batch_b.trials < 1:
        raise EstimatorError("both time steps need at least one shot")
    mu, eta = mle_from_probabilities(batch_a.frequency, batch_b.frequency, pair)
    var_mu, var_eta = fisher_variances(
        bayes_probability(batch_a), bayes_probability(batch_b),
        batch_a.trials, batch_b.trials, pair,
    )
    return MleEstimate(mu, eta, var_mu, var_eta, bias_a1(mu, eta, pair), blocks_used, block_size)


def bias_estimators(mle: MleEstimate, pair: TimeStepPair) -> Tuple[float, float]:
    """(B_A1, B_A2) from the current estimates; B_A2 <= B_A1."""
    return bias_a1(mle.mu, mle.eta, pair), bias_a2(mle.mu, mle.eta, pair)


def log_likelihood(mu: float, eta: float, batch_a: ShotBatch, batch_b: ShotBatch,
                   pair: TimeStepPair) -> float:
    total = 0.0
    for batch, tau in ((batch_a, pair.tau_a), (batch_b, pair.tau_b)):
        p = float(model_probability(tau, mu, eta))
        if not 0.0 < p < 1.0:
            return -math.inf
        total += batch.successes * math.log(p) + (batch.trials - batch.successes) * math.log(1.0 - p)
    return total


def likelihood_score(mu: float, eta: float, batch_a: ShotBatch, batch_b: ShotBatch,
                     pair: TimeStepPair) -> Tuple[float, float]:
    """Analytic gradient of the log-likelihood in (mu, eta)."""
    d_mu = d_eta = 0.0
    for batch, tau in ((batch_a, pair.tau_a), (batch_b, pair.tau_b)):
        p = float(model_probability(tau, mu, eta))
        dl_dp = batch.successes / p - (batch.trials - batch.successes) / (1.0 - p)
        d_mu += dl_dp * (-tau / 2.0)
        d_eta += dl_dp * (tau ** 3 / 12.0)
    return d_mu, d_eta


class ExactOracle:
    """Vectorised <sin(tau O)> and exact cubic bias for one (observable, state)."""

    def __init__(self, obs: ObservableExpansion, state: PureState):
        oracle = spectral_oracle(obs)
        self.eigenvalues = oracle.eigenvalues
        self.populations = oracle.populations(state)
        self.mean = float(np.dot(self.eigenvalues, self.populations))

    def sine(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.sin(np.multiply.outer(tau, self.eigenvalues)) @ self.populations

    def probability(self, tau):
        return 0.5 * (1.0 - self.sine(tau))

    def bias(self, tau_a, tau_b):
        ta = np.asarray(tau_a, dtype=float)
        tb = np.asarray(tau_b, dtype=float)
        c_mu = 1.0 / (ta ** 2 - tb ** 2)
        return c_mu * ((ta ** 2 / tb) * self.sine(tb) - (tb ** 2 / ta) * self.sine(ta)) - self.mean


def exact_bias(obs: ObservableExpansion, state: PureState, pair: TimeStepPair) -> float:
    """B_E = E[mu_mle] - <O> with exact outcome probabilities."""
    return float(ExactOracle(obs, state).bias(pair.tau_a, pair.tau_b))


@dataclass(frozen=True)
class SearchDomain:
    lower: float = 1e-4
    upper: float = 1.0
    grid: int = 64
    refine_iterations: int = 3
    # ||O||_1, needed for the extra A2 constraint max(ta^2, tb^2) < pi / ||O||_1
    full_one_norm: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.lower < self.upper:
            raise EstimatorError(f"invalid search domain [{self.lower}, {self.upper}]")
        if self.grid < 2:
            raise EstimatorError("search grid needs at least two points")

    @classmethod
    def for_observable(cls, obs: ObservableExpansion, tau_max: Optional[float] = None,
                       **kwargs) -> "SearchDomain":
        full = one_norms(obs)[1]
        upper = tau_max if tau_max is not None else math.pi / full
        return cls(upper=upper, full_one_norm=full, **kwargs)

    def upper_for(self, mode: BiasMode) -> float:
        if mode is BiasMode.A2 and self.full_one_norm:
            return min(self.upper, math.sqrt(math.pi / self.full_one_norm) * (1.0 - 1e-9))
        return self.upper


class ShotSplit(Enum):
    """How the shots of one block are shared between tau_a and tau_b."""

    EVEN = "even"
    OPTIMAL = "optimal"


def _outcome_variance(tau, current: MleEstimate):
    p = np.clip(model_probability(tau, current.mu, current.eta), 1e-3, 1.0 - 1e-3)
    return p * (1.0 - p)


def split_shots(pair: TimeStepPair, block_size: int, current: Optional[MleEstimate],
                split: ShotSplit = ShotSplit.EVEN) -> Tuple[int, int]:
    """Shots (M_a, M_b) for one block.

    The optimal split takes M_a proportional to tb^3 sqrt(Q_a) and M_b to
    ta^3 sqrt(Q_b), with Q = P(1 - P) from the current cubic model. Each side
    keeps at least an eighth of the block.
    """
    if block_size < 2:
        raise EstimatorError(f"block size must be >= 2, got {block_size}")
    even = (block_size // 2, block_size - block_size // 2)
    if split is ShotSplit.EVEN or current is None:
        return even
    if not (math.isfinite(current.mu) and math.isfinite(current.eta)):
        return even
    w_a = pair.tau_b ** 3 * math.sqrt(float(_outcome_variance(pair.tau_a, current)))
    w_b = pair.tau_a ** 3 * math.sqrt(float(_outcome_variance(pair.tau_b, current)))
    floor = max(1, block_size // 8)
    m_a = int(round(block_size * w_a / (w_a + w_b)))
    m_a = min(max(m_a, floor), block_size - floor)
    return m_a, block_size - m_a


def design_cost(tau_a, tau_b, current: MleEstimate, block_index: int, block_size: int,
                bias_mode: BiasMode, oracle: Optional[ExactOracle] = None,
                split: ShotSplit = ShotSplit.EVEN):
    """Delta_i = Var~[mu_mle] + (i + 1) B_u^2, vectorised over (tau_a, tau_b).

    Var~ is the single-block variance of mu_mle under the given shot split.
    """
    ta = np.asarray(tau_a, dtype=float)
    tb = np.asarray(tau_b, dtype=float)
    if bias_mode is BiasMode.EXACT:
        if oracle is None:
            raise EstimatorError("exact bias mode needs an oracle")
        p_a, p_b = oracle.probability(ta), oracle.probability(tb)
        bias = np.abs(oracle.bias(ta, tb))
    else:
        p_a = model_probability(ta, current.mu, current.eta)
        p_b = model_probability(tb, current.mu, current.eta)
        ta2, tb2 = ta ** 2, tb ** 2
        spread = (ta2 + tb2) if bias_mode is BiasMode.A1 else np.maximum(ta2, tb2)
        with np.errstate(divide="ignore", invalid="ignore"):
            bias = abs(current.mu * current.eta) / 120.0 * ta2 * tb2 * spread / np.abs(ta2 - tb2)

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = ta ** 2 * tb ** 2 * (ta ** 2 - tb ** 2) ** 2
        q_a, q_b = p_a * (1.0 - p_a), p_b * (1.0 - p_b)
        if split is ShotSplit.OPTIMAL:
            spread_var = (ta ** 3 * np.sqrt(np.maximum(q_b, 0.0))
                          + tb ** 3 * np.sqrt(np.maximum(q_a, 0.0))) ** 2
            var = 4.0 / block_size * spread_var / denom
        else:
            var = 8.0 / block_size * (ta ** 6 * q_b + tb ** 6 * q_a) / denom
        cost = var + (block_index + 1) * bias ** 2
    feasible = (p_a >= 0) & (p_a <= 1) & (p_b >= 0) & (p_b <= 1) & np.isfinite(cost) & (ta != tb)
    return np.where(feasible, cost, INFEASIBLE_COST)


def design_lattice(search_domain: SearchDomain, bias_mode: BiasMode) -> Tuple[np.ndarray, int]:
    """Log-spaced candidate time steps and the coarse-grid stride within them.

    The coarse grid sits on every ``stride``-th point; refinement halves the
    step down to one lattice point. Endpoints are exactly lower and upper.
    """
    lo, hi = search_domain.lower, search_domain.upper_for(bias_mode)
    if hi <= lo:
        raise EstimatorError(f"empty search domain [{lo}, {hi}] for bias mode {bias_mode.value}")
    stride = 2 ** max(search_domain.refine_iterations - 1, 0)
    lattice = np.geomspace(lo, hi, (search_domain.grid - 1) * stride + 1)
    lattice[0], lattice[-1] = lo, hi
    return lattice, stride


def design_next_pair(current: MleEstimate, block_index: int, block_size: int,
                     bias_mode: BiasMode, search_domain: SearchDomain,
                     oracle: Optional[ExactOracle] = None,
                     split: ShotSplit = ShotSplit.EVEN) -> TimeStepPair:
    """Grid search on a log grid with tau_a < tau_b, then coordinate-descent refinement.

    Both stages move on one fixed lattice, so repeated designs return
    bit-identical pairs that pool in the combiner.
    """
    if block_index < 0:
        raise EstimatorError("block index must be >= 0")
    lattice, stride = design_lattice(search_domain, bias_mode)
    last = len(lattice) - 1

    def cost(a, b):
        return design_cost(a, b, current, block_index, block_size, bias_mode, oracle, split)

    taus = lattice[::stride]
    grid_a, grid_b = np.meshgrid(taus, taus, indexing="ij")
    costs = np.where(grid_a < grid_b, cost(grid_a, grid_b), INFEASIBLE_COST)
    i, j = np.unravel_index(int(np.argmin(costs)), costs.shape)
    best = float(costs[i, j])
    if best >= INFEASIBLE_COST:
        raise EstimatorError("no feasible time-step pair in the search domain")

    k_a, k_b = int(i) * stride, int(j) * stride
    step = stride
    for _ in range(search_domain.refine_iterations):
        for axis in (0, 1):
            for direction in (-1, 1):
                trial_a = k_a + (direction * step if axis == 0 else 0)
                trial_b = k_b + (direction * step if axis == 1 else 0)
                if not 0 <= trial_a < trial_b <= last:
                    continue
                c = float(cost(lattice[trial_a], lattice[trial_b]))
                if c < best:
                    best, k_a, k_b = c, trial_a, trial_b
        step = max(step // 2, 1)
    return TimeStepPair(float(lattice[k_a]), float(lattice[k_b]))


def variance_upper_bound(pair: TimeStepPair, shots_per_tau: int = 1) -> float:
    """(ta^6 + tb^6) / (M ta^2 tb^2 (ta^2 - tb^2)^2), valid since P(1 - P) <= 1/4."""
    ta, tb = pair.tau_a, pair.tau_b
    return (ta ** 6 + tb ** 6) / (shots_per_tau * ta ** 2 * tb ** 2 * (ta ** 2 - tb ** 2) ** 2)


def initial_pair(rng: RngStream, domain: SearchDomain, bias_mode: BiasMode = BiasMode.A1,
                 initial_max: float = 0.1) -> TimeStepPair:
    """tau_a ~ U(0, initial_max); tau_b minimises the variance bound with tau_a fixed."""
    hi = domain.upper_for(bias_mode)
    tau_a = min(max(rng.uniform(0.0, initial_max), domain.lower), hi / 2.0)

    def bound(log_b: float) -> float:
        tb = math.exp(log_b)
        if abs(tb - tau_a) < 1e-12:
            return INFEASIBLE_COST
        return variance_upper_bound(TimeStepPair(tau_a, tb))

    candidates = []
    gap = 1e-3
    if tau_a * (1 + gap) < hi:
        candidates.append(minimize_scalar(
            bound, bounds=(math.log(tau_a * (1 + gap)), math.log(hi)), method="bounded"))
    if tau_a * (1 - gap) > domain.lower:
        candidates.append(minimize_scalar(
            bound, bounds=(math.log(domain.lower), math.log(tau_a * (1 - gap))), method="bounded"))
    if not candidates:
        raise EstimatorError("search domain too narrow to seed a time-step pair")
    best = min(candidates, key=lambda r: r.fun)
    return TimeStepPair(tau_a, math.exp(float(best.x)))


@dataclass(frozen=True)
class CubicTraceRow:
    block: int
    tau_a: float
    tau_b: float
    x_a: int
    x_b: int
    mu: float
    eta: float
    var_mu: float
    b_a1: float
    b_a2: float
    b_e: Optional[float]
    mse: float
    cumulative_shots: int

    CSV_COLUMNS = (
        "block", "tau_a", "tau_b", "X_a", "X_b", "mu", "eta", "var_mu",
        "B_A1", "B_A2", "B_E", "mse", "cumulative_shots",
    )

    def as_row(self) -> List:
        return [
            self.block, self.tau_a, self.tau_b, self.x_a, self.x_b, self.mu, self.eta,
            self.var_mu, self.b_a1, self.b_a2, "" if self.b_e is None else self.b_e,
            self.mse, self.cumulative_shots,
        ]


@dataclass
class CubicRun:
    report: EstimateReport
    estimate: MleEstimate
    trace: List[CubicTraceRow] = field(default_factory=list)
    reached: bool = False


class PairCombiner:
    """Pooled per-pair data and their inverse-variance combination, updated incrementally.

    Blocks taken at an identical pair are pooled before fitting; distinct pairs
    are fitted separately and weighted by 1 / Var[mu].
    """

    def __init__(self, oracle: Optional[ExactOracle] = None):
        self.oracle = oracle
        self.pooled: Dict[Tuple[float, float], Tuple[ShotBatch, ShotBatch]] = {}
        self._fits: Dict[Tuple[float, float], MleEstimate] = {}
        # running sums: w_mu, w_mu mu, w_eta, w_eta eta, w_mu g1, w_mu g2, w_mu B_E
        self._sums = np.zeros(7)

    def _contribution(self, key: Tuple[float, float], est: MleEstimate) -> np.ndarray:
        pair = TimeStepPair(*key)
        w_mu, w_eta = 1.0 / est.var_mu, 1.0 / est.var_eta
        exact = float(self.oracle.bias(*key)) if self.oracle is not None else 0.0
        return np.array([
            w_mu, w_mu * est.mu, w_eta, w_eta * est.eta,
            w_mu * bias_a1(1.0, 1.0, pair), w_mu * bias_a2(1.0, 1.0, pair), w_mu * exact,
        ])

    def add(self, pair: TimeStepPair, batch_a: ShotBatch, batch_b: ShotBatch) -> None:
        key = pair.key()
        if key in self.pooled:
            old_a, old_b = self.pooled[key]
            self._sums -= self._contribution(key, self._fits[key])
            batch_a, batch_b = old_a.merge(batch_a), old_b.merge(batch_b)
        self.pooled[key] = (batch_a, batch_b)
        self._fits[key] = mle_pair(batch_a, batch_b, pair)
        self._sums += self._contribution(key, self._fits[key])

    @property
    def pair_count(self) -> int:
        return len(self.pooled)

    def combined(self) -> Tuple[float, float, float, float]:
        """(mu, eta, Var[mu], Var[eta])."""
        w_mu, s_mu, w_eta, s_eta = self._sums[:4]
        return s_mu / w_mu, s_eta / w_eta, 1.0 / w_mu, 1.0 / w_eta

    def biases(self, mu: float, eta: float) -> Tuple[float, float, Optional[float]]:
        """Weighted (B_A1, B_A2, |B_E|) at the combined estimates."""
        w_mu = self._sums[0]
        scale = abs(mu * eta)
        b_e = abs(self._sums[6] / w_mu) if self.oracle is not None else None
        return scale * self._sums[4] / w_mu, scale * self._sums[5] / w_mu, b_e


def cubic_run(obs: ObservableExpansion, state: PureState, target_eps: float, block_size: int,
              bias_mode: BiasMode, noise: Optional[ReadoutNoise], rng: RngStream,
              search_domain: Optional[SearchDomain] = None, shot_cap: int = 10 ** 6,
              initial_max: float = 0.1, track_exact: bool = True,
              shot_split: ShotSplit = ShotSplit.EVEN) -> CubicRun:
    """Adaptive cubic estimator; a new pair of time steps is designed after every block."""
    if block_size < 2:
        raise EstimatorError(f"block size must be >= 2, got {block_size}")
    if not target_eps > 0:
        raise EstimatorError("target_eps must be positive")
    domain = search_domain or SearchDomain.for_observable(obs)
    oracle = ExactOracle(obs, state) if (track_exact or bias_mode is BiasMode.EXACT) else None

    pair = initial_pair(rng, domain, bias_mode, initial_max)
    combiner = PairCombiner(oracle)
    trace: List[CubicTraceRow] = []
    cumulative = 0
    block = 0
    reached = False
    estimate = MleEstimate(0.0, 0.0, math.inf, math.inf, 0.0)
    report = EstimateReport(0.0, 0.0, 0.0, 0)

    while cumulative < shot_cap:
        m_a, m_b = split_shots(pair, block_size, estimate if block else None, shot_split)
        batch_a = sample_ancilla_z(obs, state, pair.tau_a, m_a, noise, rng)
        batch_b = sample_ancilla_z(obs, state, pair.tau_b, m_b, noise, rng)
        cumulative += block_size
        combiner.add(pair, batch_a, batch_b)

        mu, eta, var_mu, var_eta = combiner.combined()
        b_a1, b_a2, b_e = combiner.biases(mu, eta)
        bias = {BiasMode.A1: b_a1, BiasMode.A2: b_a2, BiasMode.EXACT: b_e}[bias_mode]

        block += 1
        estimate = MleEstimate(mu, eta, var_mu, var_eta, bias, block, block_size)
        report = EstimateReport(mu, var_mu, bias, cumulative)
        trace.append(CubicTraceRow(
            block=block, tau_a=pair.tau_a, tau_b=pair.tau_b,
            x_a=batch_a.successes, x_b=batch_b.successes,
            mu=mu, eta=eta, var_mu=var_mu, b_a1=b_a1, b_a2=b_a2, b_e=b_e,
            mse=report.mse, cumulative_shots=cumulative,
        ))
        if block > 1 and report.error <= target_eps:
            reached = True
            break
        try:
            pair = design_next_pair(estimate, block, block_size, bias_mode, domain, oracle,
                                    shot_split)
        except EstimatorError as e:
            logger.warning(f"block {block}: design failed ({e}); keeping pair {pair}")

    logger.info(
        f"cubic run ({bias_mode.value}): {'reached' if reached else 'missed'} eps={target_eps:.4g} "
        f"after {cumulative} shots, mu={estimate.mu:.5f} +/- {math.sqrt(estimate.var_mu):.5f}"
    )
    return CubicRun(report, estimate, trace, reached)
