"""Low-resolution VQE on the deuteron: Nelder-Mead over the R_y(theta) ansatz angle."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.optimize import minimize

from sqpe_estimators.deuteron import ansatz_energy, deuteron, optimal_angle
from sqpe_estimators.oa import OAllocation, oa_estimate
from sqpe_estimators.operators import PureState, one_norms
from sqpe_estimators.shot_sim import RngStream

logger = logging.getLogger(__name__)

GOLDEN_STEP = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class VqeState:
    iteration: int
    theta: float
    energy_estimate: float
    sigma: float

    CSV_COLUMNS = ("seed", "iteration", "theta", "energy_estimate", "sigma", "energy_exact")

    def as_row(self, seed: int) -> list:
        return [seed, self.iteration, self.theta, self.energy_estimate, self.sigma, ansatz_energy(self.theta)]


@dataclass
class VqeResult:
    trace: List[VqeState]
    theta: float
    evaluations: int
    residuals: List[float]

    @property
    def relative_angle_error(self) -> float:
        target = optimal_angle() % (2 * math.pi)
        return abs((self.theta % (2 * math.pi)) - target) / target


def vqe_demo(shots_per_eval: int, rng: RngStream, theta0: float = math.pi / 2,
             xatol: float = 1e-3, fatol: float = 1e-1, maxiter: int = 50) -> VqeResult:
    """Minimise the OA energy estimate with shots_per_eval shots split evenly across terms."""
    if shots_per_eval < 1:
        raise ValueError(f"shots_per_eval must be >= 1, got {shots_per_eval}")
    obs = deuteron().observable
    per_term = max(1, shots_per_eval // obs.term_count)
    allocation = OAllocation.uniform(obs.term_count, per_term)
    evaluated: Dict[float, Tuple[float, float]] = {}
    residuals: List[float] = []

    def energy(x: np.ndarray) -> float:
        theta = float(x[0])
        report = oa_estimate(obs, PureState.from_angle(theta), allocation, None, rng)
        evaluated[theta] = (report.value, math.sqrt(report.variance))
        residuals.append(report.value - ansatz_energy(theta))
        return report.value

    trace: List[VqeState] = []

    def record(xk: np.ndarray) -> None:
        theta = float(xk[0])
        value, sigma = evaluated.get(theta, (float("nan"), float("nan")))
        trace.append(VqeState(len(trace) + 1, theta, value, sigma))

    start = np.array([theta0])
    simplex = np.array([[theta0], [theta0 + GOLDEN_STEP]])
    first = energy(start)
    trace.append(VqeState(0, theta0, first, evaluated[theta0][1]))
    result = minimize(
        energy,
        start,
        method="Nelder-Mead",
        callback=record,
        options={"initial_simplex": simplex, "xatol": xatol, "fatol": fatol, "maxiter": maxiter},
    )
    logger.info(f"VQE finished after {result.nit} iterations: theta={float(result.x[0]):.4f}")
    return VqeResult(trace, float(result.x[0]), int(result.nfev) + 1, residuals)


def error_bar_bound(shots_per_eval: int) -> float:
    """Worst-case standard error ||O_T||_2 sqrt(L / N) of one energy evaluation."""
    obs = deuteron().observable
    return one_norms(obs)[2] * math.sqrt(obs.term_count / shots_per_eval)
