"""Two-level deuteron benchmark, H = 87.5 - 35 X + 82.5 Z (MeV)."""

import math
from dataclasses import dataclass
from typing import Any, Dict

from sqpe_estimators.operators import (
    ObservableExpansion,
    PureState,
    eigenstate,
    expectation,
    moments,
    one_norms,
    ratio_R,
    spectral_oracle,
)

IDENTITY_COEFF = 87.5
X_COEFF = -35.0
Z_COEFF = 82.5


@dataclass(frozen=True, eq=False)
class DeuteronBenchmark:
    observable: ObservableExpansion
    ground_state: PureState
    references: Dict[str, Any]


def deuteron_observable() -> ObservableExpansion:
    return ObservableExpansion.from_paulis(IDENTITY_COEFF, {"X": X_COEFF, "Z": Z_COEFF})


def ansatz_energy(theta: float) -> float:
    """E(theta) = 87.5 - 35 sin(theta) + 82.5 cos(theta) for R_y(theta)|0>."""
    return IDENTITY_COEFF + X_COEFF * math.sin(theta) + Z_COEFF * math.cos(theta)


def optimal_angle() -> float:
    # dE/dtheta = 0 on the branch where E is minimal
    return math.atan2(X_COEFF, Z_COEFF) + math.pi


def deuteron() -> DeuteronBenchmark:
    obs = deuteron_observable()
    ground = eigenstate(obs, 0)
    oracle = spectral_oracle(obs)
    traceless, full, two = one_norms(obs)
    r_o, r_max = ratio_R(obs, ground)
    table = moments(obs, ground, 2)
    theta_min = optimal_angle() % (2 * math.pi)
    references = {
        "E_gs": expectation(obs, ground),
        "E_excited": float(oracle.eigenvalues[-1]),
        "eigenvalue_sum": float(oracle.eigenvalues.sum()),
        "traceless_one_norm": traceless,
        "full_one_norm": full,
        "traceless_two_norm_sq": two ** 2,
        "R_O": r_o,
        "R_O_max": r_max,
        "m1": table.m(1),
        "m2": table.m(2),
        "theta_min": theta_min,
        "E_theta_min": ansatz_energy(theta_min),
    }
    return DeuteronBenchmark(obs, ground, references)
