"""
Tool functions behind the MCP server.

Every function returns ``{"success": True, "data": ...}`` or
``{"success": False, "error": "..."}`` and never raises.
"""

import functools
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from sqpe_estimators import conditions, noise, oa, sqpe, trotter
from sqpe_estimators.deuteron import DeuteronBenchmark, deuteron
from sqpe_estimators.operators import (
    ObservableExpansion,
    PureState,
    decompose,
    describe,
    eigenstate,
    moments,
    one_norms,
)

logger = logging.getLogger(__name__)

_benchmark: Optional[DeuteronBenchmark] = None


def get_benchmark() -> DeuteronBenchmark:
    """Get or build the shared deuteron benchmark."""
    global _benchmark
    if _benchmark is None:
        _benchmark = deuteron()
    return _benchmark


def tool_result(fn: Callable[..., Any]) -> Callable[..., Dict[str, Any]]:
    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> Dict[str, Any]:
        try:
            return {"success": True, "data": fn(*args, **kwargs)}
        except (ValueError, KeyError, TypeError) as e:
            logger.warning(f"{fn.__name__} rejected its input: {e}")
            return {"success": False, "error": str(e)}
        except Exception as e:
            logger.error(f"{fn.__name__} failed: {e}", exc_info=True)
            return {"success": False, "error": f"{type(e).__name__}: {e}"}

    return wrapper


def _resolve(observable: Optional[Dict[str, Any]], theta: Optional[float]):
    if observable is None:
        bench = get_benchmark()
        obs, state = bench.observable, bench.ground_state
    else:
        obs = ObservableExpansion.from_dict(observable)
        state = eigenstate(obs, 0)
    if theta is not None:
        state = PureState.from_angle(float(theta))
    return obs, state


def _complex_matrix(rows: Sequence[Sequence[Any]]) -> np.ndarray:
    def entry(x):
        return complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x)

    return np.array([[entry(x) for x in row] for row in rows], dtype=complex)


@tool_result
def deuteron_summary() -> Dict[str, Any]:
    return get_benchmark().references


@tool_result
def decompose_observable(matrix: List[List[Any]]) -> Dict[str, Any]:
    obs = decompose(_complex_matrix(matrix))
    return {"expansion": obs.to_dict(), **describe(obs)}


@tool_result
def plan_sqpe(order: int, eps: float, m_K: float, trotter_split: bool = False) -> Dict[str, Any]:
    p = sqpe.plan(int(order), float(eps), float(m_K), bool(trotter_split))
    return {
        "order": p.order,
        "tau_opt": p.tau_opt,
        "f_K": p.f_K,
        "predicted_shots": p.predicted_shots,
        "bias_bound_at_tau": p.bias_bound_at_tau,
        "gamma_K": p.gamma_K,
    }


@tool_result
def oa_budget(eps_r: float, observable: Optional[Dict[str, Any]] = None,
              theta: Optional[float] = None) -> Dict[str, Any]:
    obs, state = _resolve(observable, theta)
    mean = moments(obs, state, 0).mean
    eps = float(eps_r) * abs(mean)
    means = oa.oracle_pauli_means(obs, state)
    uniform = oa.budget_uniform(obs, means, eps)
    return {
        "epsilon": eps,
        "uniform_shots": uniform.shots,
        "uniform_bound": uniform.bound,
        "proportional_shots": oa.budget_proportional(obs, means, eps),
        "accuracy_budget": oa.accuracy_budget(obs, state, float(eps_r)),
        "accuracy_budget_lower_bound": oa.accuracy_budget_lower_bound(obs, state, float(eps_r)),
    }


@tool_result
def check_conditions(eps_r: float, K: int, observable: Optional[Dict[str, Any]] = None,
                     theta: Optional[float] = None) -> Dict[str, Any]:
    obs, state = _resolve(observable, theta)
    inp = conditions.ConditionInput.from_state(obs, state, float(eps_r), int(K))
    table = moments(obs, state, int(K))
    loose, looser = conditions.condition_loose(inp)
    return {
        "R_O": inp.R_O,
        "eigen_boundary": conditions.eigen_boundary(inp.eps_r, inp.K),
        "condition_eigen": conditions.condition_eigen(inp.R_O, inp.eps_r, inp.K),
        "condition_exact": conditions.condition_exact(inp, table.m(inp.K)),
        "condition_sufficient": conditions.condition_sufficient(inp),
        "condition_practical": conditions.condition_practical(inp, table.covariances[inp.K]),
        "condition_loose": loose,
        "condition_looser": looser,
    }


@tool_result
def readout_budget(p: float, eps_r: float, mode: str = "joint",
                   observable: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    obs, state = _resolve(observable, None)
    problem = noise.BudgetProblem.for_oa(obs, state, float(p), float(eps_r))
    return noise.budget_optimizer(problem, noise.CalibrationMode(mode)).to_dict()


@tool_result
def trotter_intervals(tau: float, eps: float, j: int = 1,
                      observable: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    obs, _ = _resolve(observable, None)
    info = trotter.depth_estimate(obs, float(tau), float(eps), int(j))
    info["full_one_norm"] = one_norms(obs)[1]
    return info
