"""
Advantage conditions: when does the order-K phase-estimation estimator need
fewer shots than Operator Averaging for a relative error eps_r?

All inequalities are non-strict. The ``minimal_*`` helpers solve each condition
for the smallest admissible eps_r and feed the boundary scans.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import numpy as np

from sqpe_estimators.operators import (
    ObservableExpansion,
    PureState,
    expectation,
    moments,
    one_norms,
    spectral_oracle,
)
from sqpe_estimators.reports import EstimatorError
from sqpe_estimators.sqpe import f_K

logger = logging.getLogger(__name__)

MIN_SCAN_GRID = 16


@dataclass(frozen=True)
class ConditionInput:
    R_O: float
    eps_r: float
    K: int
    norms: Tuple[float, float]
    gamma_K: float = 1.0
    variance: float = 0.0
    even_moment: float = 0.0
    lambda_u: float = 0.0
    alpha0: float = 0.0

    def __post_init__(self):
        if not (self.norms[0] > 0 and self.norms[1] > 0):
            raise EstimatorError(f"norms must be positive, got {self.norms}")
        if not self.eps_r > 0:
            raise EstimatorError(f"eps_r must be positive, got {self.eps_r}")
        if self.K < 1:
            raise EstimatorError(f"order K must be >= 1, got {self.K}")
        if not 0 <= self.gamma_K <= 1:
            raise EstimatorError(f"gamma_K must lie in [0, 1], got {self.gamma_K}")
        if self.variance < 0 or self.even_moment < 0:
            raise EstimatorError("variance and even moment must be nonnegative")

    @property
    def traceless_norm(self) -> float:
        return self.norms[0]

    @property
    def full_norm(self) -> float:
        return self.norms[1]

    @property
    def abs_mean(self) -> float:
        return self.R_O * self.traceless_norm

    @classmethod
    def from_state(cls, obs: ObservableExpansion, state: PureState, eps_r: float, K: int) -> "ConditionInput":
        """Every quantity from the spectral oracle (test mode)."""
        traceless, full, _ = one_norms(obs)
        table = moments(obs, state, K)
        oracle = spectral_oracle(obs)
        return cls(
            R_O=abs(table.mean) / traceless,
            eps_r=eps_r,
            K=K,
            norms=(traceless, full),
            gamma_K=abs(table.m(K)) / full ** (2 * K + 1),
            variance=table.variance,
            even_moment=table.even_moments[K],
            lambda_u=oracle.lambda_max,
            alpha0=obs.identity_coeff,
        )


def _prefactor(K: int, eps_r: float) -> float:
    return f_K(K) ** K / eps_r


def condition_exact(inp: ConditionInput, m_2K1: float) -> bool:
    """R_O >= (f(K)^K / eps_r) |<O^(2K+1)>| / ||O_T||_1^(2K+1)."""
    rhs = _prefactor(inp.K, inp.eps_r) * abs(m_2K1) / inp.traceless_norm ** (2 * inp.K + 1)
    return inp.R_O >= rhs


def condition_sufficient(inp: ConditionInput) -> bool:
    """Gamma_K form; implies condition_exact whenever Gamma_K bounds |m_K| / ||O||_1^(2K+1)."""
    K = inp.K
    rhs = (
        _prefactor(K, inp.eps_r)
        * inp.gamma_K
        * (1.0 + abs(inp.alpha0) / inp.traceless_norm) ** (2 * K + 1)
    )
    return inp.R_O >= rhs


def eigen_boundary(eps_r: float, K: int) -> float:
    """Largest admissible |lambda| / ||O_T||_1 for an eigenstate."""
    if not eps_r > 0:
        raise EstimatorError("eps_r must be positive")
    return eps_r ** (1.0 / (2 * K)) / math.sqrt(f_K(K))


def condition_eigen(lambda_ratio: float, eps_r: float, K: int) -> bool:
    return abs(lambda_ratio) <= eigen_boundary(eps_r, K)


def condition_practical(inp: ConditionInput, covariance: float) -> bool:
    """Exact condition rewritten through <O^2K>|<O>| + Cov[O^2K, O]."""
    numerator = inp.even_moment * inp.abs_mean + abs(covariance)
    rhs = _prefactor(inp.K, inp.eps_r) * numerator / inp.traceless_norm ** (2 * inp.K + 1)
    return inp.R_O >= rhs


def condition_loose(inp: ConditionInput) -> Tuple[bool, bool]:
    """(loose, looser): covariance replaced by ||O||_1^(2K-1) Var[O], then the even moment by ||O||_1^(2K+1)."""
    K = inp.K
    pre = _prefactor(K, inp.eps_r) / inp.traceless_norm ** (2 * K + 1)
    full = inp.full_norm
    loose = inp.R_O >= pre * (inp.even_moment * inp.abs_mean + full ** (2 * K - 1) * inp.variance)
    looser = inp.R_O >= pre * full ** (2 * K + 1) * (1.0 + inp.variance / full ** 2)
    return loose, looser


def fidelity_even_moment_bound(lambda_phi: float, fidelity_bound: float, norm: float, K: int) -> float:
    """<O^2K> <= lambda_phi^2K + Delta ||O||^2K for a state close to the eigenvector of lambda_phi."""
    if not 0 <= fidelity_bound <= 1:
        raise EstimatorError(f"fidelity bound must lie in [0, 1], got {fidelity_bound}")
    return lambda_phi ** (2 * K) + fidelity_bound * norm ** (2 * K)


def lipschitz_variance_bound(K: int, lambda_max: float, variance: float) -> float:
    """Var[O^2K] <= 4 K^2 lambda_max^(4K-2) Var[O]."""
    return 4.0 * K ** 2 * abs(lambda_max) ** (4 * K - 2) * variance


# ---------------------------------------------------------------------------
# Boundary curves
# ---------------------------------------------------------------------------

def minimal_eps_eigen(ratio: float, K: int) -> float:
    return f_K(K) ** K * abs(ratio) ** (2 * K)


def minimal_eps_loose(abs_mean: float, variance: float, K: int, norms: Tuple[float, float],
                      even_moment: Optional[float] = None) -> float:
    """Smallest eps_r for which the loose condition holds; <O^2K> defaults to |<O>|^2K."""
    traceless, full = norms
    if even_moment is None:
        even_moment = abs_mean ** (2 * K)
    if abs_mean == 0:
        return math.inf
    numerator = even_moment * abs_mean + full ** (2 * K - 1) * variance
    return f_K(K) ** K * numerator / (abs_mean * traceless ** (2 * K))


def minimal_eps_looser(abs_mean: float, variance: float, K: int, norms: Tuple[float, float]) -> float:
    traceless, full = norms
    if abs_mean == 0:
        return math.inf
    R_O = abs_mean / traceless
    return f_K(K) ** K / R_O * (full / traceless) ** (2 * K + 1) * (1.0 + variance / full ** 2)


def minimal_relative_error(inp: ConditionInput, condition: str) -> float:
    """Solve the named condition ('eigen', 'loose' or 'looser') for the smallest eps_r."""
    if condition == "eigen":
        return minimal_eps_eigen(inp.R_O, inp.K)
    if condition == "loose":
        return minimal_eps_loose(inp.abs_mean, inp.variance, inp.K, inp.norms, inp.even_moment)
    if condition == "looser":
        return minimal_eps_looser(inp.abs_mean, inp.variance, inp.K, inp.norms)
    raise EstimatorError(f"unknown condition {condition!r}")


class ScanMode(Enum):
    EIGEN = "eigen"
    VARIANCE = "variance"


@dataclass(frozen=True)
class ScanRow:
    mode: str
    K: int
    x: float
    y_boundary: float

    CSV_COLUMNS = ("mode", "K", "x", "y_boundary")

    def as_row(self) -> list:
        return [self.mode, self.K, self.x, self.y_boundary]


def region_scan(mode: ScanMode, K_range: Iterable[int], grid: int,
                obs: Optional[ObservableExpansion] = None, state: Optional[PureState] = None,
                x_range: Optional[Tuple[float, float]] = None) -> List[ScanRow]:
    """Boundary curves on a log grid.

    EIGEN: x is |lambda| / ||O_T||_1, y the minimal eps_r for an eigenstate.
    VARIANCE: x is Var[O] for a state with the mean of ``state``; one curve per
    condition ('loose' and 'looser') and per K.
    """
    if grid < MIN_SCAN_GRID:
        raise EstimatorError(f"scan grid must have at least {MIN_SCAN_GRID} points, got {grid}")
    orders = [int(k) for k in K_range]
    if not orders or min(orders) < 1:
        raise EstimatorError("K range must contain orders >= 1")

    rows: List[ScanRow] = []
    if mode is ScanMode.EIGEN:
        lo, hi = x_range or (1e-4, 1.0)
        for K in orders:
            for x in np.geomspace(lo, hi, grid):
                rows.append(ScanRow("eigen", K, float(x), minimal_eps_eigen(x, K)))
        return rows

    if obs is None or state is None:
        raise EstimatorError("variance scan needs an observable and a state")
    traceless, full, _ = one_norms(obs)
    abs_mean = abs(expectation(obs, state))
    lo, hi = x_range or (1e-2 * abs_mean ** 2, 1e2 * abs_mean ** 2)
    for K in orders:
        for x in np.geomspace(lo, hi, grid):
            rows.append(ScanRow("loose", K, float(x),
                                minimal_eps_loose(abs_mean, x, K, (traceless, full))))
            rows.append(ScanRow("looser", K, float(x),
                                minimal_eps_looser(abs_mean, x, K, (traceless, full))))
    logger.debug(f"variance scan: {len(rows)} rows for K={orders}")
    return rows


def crossing_variance(abs_mean: float, K: int, eps_r: float, norms: Tuple[float, float]) -> float:
    """Variance at which the loose condition stops admitting order K at eps_r."""
    traceless, full = norms
    budget = eps_r * abs_mean * traceless ** (2 * K) / f_K(K) ** K - abs_mean ** (2 * K + 1)
    return max(0.0, budget) / full ** (2 * K - 1)


def smallest_admissible_order(abs_mean: float, variance: float, eps_r: float,
                              norms: Tuple[float, float], condition: str = "looser",
                              max_order: int = 12) -> Optional[int]:
    solver = minimal_eps_looser if condition == "looser" else minimal_eps_loose
    for K in range(1, max_order + 1):
        if solver(abs_mean, variance, K, norms) <= eps_r:
            return K
    return None
