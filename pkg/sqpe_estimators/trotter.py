"""
Compiling exp(i tau O) from exponentials of single Pauli terms.

Interval counts come from the analytic product-formula error bounds; dense
matrices are only built at desk scale to check those bounds. The last part is
the explicit two-CNOT circuit for a controlled single-qubit evolution.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import block_diag

from sqpe_estimators.operators import PAULI_MATRICES, ObservableExpansion, exact_evolution, one_norms
from sqpe_estimators.reports import EstimatorError
from sqpe_estimators.sqpe import optimal_time_step, trotter_scaling

logger = logging.getLogger(__name__)

CIRCUIT_TOL = 1e-10


@dataclass(frozen=True)
class TrotterPlan:
    order_j: int
    intervals_r: int
    error_bound: float
    rho: float
    tau: float
    # rho_1 = tau_opt ||O||_1 rewritten as gamma(K) (2 eps / |m_K|)^(1/2K) ||O||_1
    gamma_form: Optional[float] = None

    def __post_init__(self):
        if self.intervals_r < 1:
            raise EstimatorError(f"a plan needs at least one interval, got {self.intervals_r}")

    @property
    def induced_error(self) -> float:
        return induced_estimator_error(self.error_bound, self.tau)

    def to_row(self, eps: float, exact_error: Optional[float] = None) -> list:
        return [self.order_j, self.tau, eps, self.intervals_r, self.error_bound,
                "" if exact_error is None else exact_error]


TROTTER_CSV_COLUMNS = ("j", "tau", "eps", "r", "bound", "exact_error")


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise EstimatorError(f"{name} must be positive, got {value}")


def first_order_bound(obs: ObservableExpansion, tau: float, r: int) -> float:
    """(tau ||O||_1)^2 / r * exp(tau ||O||_1 / r)."""
    if r < 1:
        raise EstimatorError(f"r must be >= 1, got {r}")
    x = abs(tau) * one_norms(obs)[1]
    return x ** 2 / r * math.exp(x / r)


def first_order_intervals(obs: ObservableExpansion, tau: float, eps: float) -> TrotterPlan:
    """Smallest r from the first-order bound so that delta_tau / tau <= eps / 2."""
    _check_positive(tau=tau, eps=eps)
    rho = tau * one_norms(obs)[1]
    r = max(1, int(math.ceil(max(rho, 2.0 * math.e * rho ** 2 / (eps * tau)))))
    return TrotterPlan(0, r, first_order_bound(obs, tau, r), rho, tau)


def suzuki_bound(obs: ObservableExpansion, tau: float, r: int, j: int) -> float:
    """(2 tau 5^(j-1) ||O||_1)^(2j+1) / (3 r^2j) * exp(2 (tau/r) 5^(j-1) ||O||_1)."""
    if j < 1 or r < 1:
        raise EstimatorError(f"need j >= 1 and r >= 1, got j={j}, r={r}")
    x = 2.0 * abs(tau) * 5 ** (j - 1) * one_norms(obs)[1]
    return x ** (2 * j + 1) / (3.0 * r ** (2 * j)) * math.exp(x / r)


def suzuki_intervals(obs: ObservableExpansion, tau: float, eps: float, j: int,
                     order_K: Optional[int] = None, m_K: Optional[float] = None) -> TrotterPlan:
    """r_j = ceil(rho_j max(1, ((4e / 3eps) 5^(j-1) ||O||_1)^(1/2j))), rho_j = 2 tau ||O||_1 5^(j-1)."""
    _check_positive(tau=tau, eps=eps)
    if j < 1:
        raise EstimatorError(f"j must be >= 1, got {j}")
    full = one_norms(obs)[1]
    rho = 2.0 * tau * full * 5 ** (j - 1)
    growth = (4.0 * math.e / (3.0 * eps) * 5 ** (j - 1) * full) ** (1.0 / (2 * j))
    r = max(1, int(math.ceil(rho * max(1.0, growth))))

    gamma_form = None
    if order_K is not None and m_K is not None:
        tau_opt = optimal_time_step(order_K, eps, m_K)
        if math.isclose(tau, tau_opt, rel_tol=1e-9):
            gamma_form = trotter_scaling(order_K) * (2.0 * eps / abs(m_K)) ** (1.0 / (2 * order_K)) * full
    return TrotterPlan(j, r, suzuki_bound(obs, tau, r, j), rho, tau, gamma_form)


# ---------------------------------------------------------------------------
# Dense construction
# ---------------------------------------------------------------------------

def _term_exponential(matrix: np.ndarray, coefficient: float, t: float) -> np.ndarray:
    # P^2 = 1, so exp(i t c P) = cos(tc) 1 + i sin(tc) P
    angle = t * coefficient
    return math.cos(angle) * np.eye(matrix.shape[0]) + 1j * math.sin(angle) * matrix


def _first_order_step(terms, t: float, dim: int) -> np.ndarray:
    step = np.eye(dim, dtype=complex)
    for matrix, c in terms:
        step = _term_exponential(matrix, c, t) @ step
    return step


def _strang_step(terms, t: float, dim: int) -> np.ndarray:
    half = [_term_exponential(m, c, t / 2.0) for m, c in terms]
    step = np.eye(dim, dtype=complex)
    for e in half:
        step = e @ step
    for e in reversed(half):
        step = e @ step
    return step


def _suzuki_step(terms, t: float, j: int, dim: int) -> np.ndarray:
    if j == 1:
        return _strang_step(terms, t, dim)
    p = 1.0 / (4.0 - 4.0 ** (1.0 / (2 * j - 1)))
    outer = _suzuki_step(terms, p * t, j - 1, dim)
    inner = _suzuki_step(terms, (1.0 - 4.0 * p) * t, j - 1, dim)
    return outer @ outer @ inner @ outer @ outer


def build_suzuki(obs: ObservableExpansion, tau: float, r: int, j: int) -> np.ndarray:
    """Product-formula approximation of exp(i tau O); j = 0 is first order, j >= 1 order 2j.

    Terms enter each product in the expansion's listed order.
    """
    if r < 1 or j < 0:
        raise EstimatorError(f"need r >= 1 and j >= 0, got r={r}, j={j}")
    dim = obs.dimension
    terms = [(t.string.matrix(), t.sign * t.weight) for t in obs.terms]
    t = tau / r
    step = _first_order_step(terms, t, dim) if j == 0 else _suzuki_step(terms, t, j, dim)
    return np.exp(1j * tau * obs.identity_coeff) * np.linalg.matrix_power(step, r)


def operator_norm_error(u: np.ndarray, v: np.ndarray) -> float:
    """Largest singular value of U - V."""
    return float(np.linalg.norm(u - v, 2))


def induced_estimator_error(delta: float, tau: float) -> float:
    """A propagator error delta shifts <sin(tau O)> by at most delta, the estimator by delta / tau."""
    _check_positive(tau=tau)
    return delta / tau


def exponentials_per_interval(obs: ObservableExpansion, j: int) -> int:
    L = obs.term_count
    if j == 0:
        return L
    return 5 ** (j - 1) * (2 * L - 1)


def gate_count(plan: TrotterPlan, exponentials: int) -> int:
    """Two CNOTs per controlled single-term exponential."""
    return 2 * exponentials * plan.intervals_r


def depth_estimate(obs: ObservableExpansion, tau: float, eps: float, j: int) -> dict:
    plan = first_order_intervals(obs, tau, eps) if j == 0 else suzuki_intervals(obs, tau, eps, j)
    per_interval = exponentials_per_interval(obs, j)
    return {
        "j": j,
        "r": plan.intervals_r,
        "exponentials_per_interval": per_interval,
        "two_qubit_gates": gate_count(plan, per_interval),
        "error_bound": plan.error_bound,
    }


# ---------------------------------------------------------------------------
# Controlled single-qubit evolution
# ---------------------------------------------------------------------------

def rz(phi: float) -> np.ndarray:
    return np.diag([np.exp(1j * phi / 2.0), np.exp(-1j * phi / 2.0)])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, s], [-s, c]], dtype=complex)


def phase_gate(theta: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * theta)])


CNOT = block_diag(np.eye(2), PAULI_MATRICES["X"]).astype(complex)


@dataclass(frozen=True)
class Gate:
    name: str
    target: str
    angle: float = 0.0

    def matrix(self) -> np.ndarray:
        if self.name == "cnot":
            return CNOT
        single = {"phase": phase_gate, "rz": rz, "ry": ry}[self.name](self.angle)
        if self.target == "ancilla":
            return np.kron(single, np.eye(2))
        return np.kron(np.eye(2), single)


@dataclass(frozen=True)
class ControlledCircuit:
    angles: Tuple[float, float, float, float]
    gates: Tuple[Gate, ...]

    def __post_init__(self):
        cnots = sum(1 for g in self.gates if g.name == "cnot")
        if cnots != 2:
            raise EstimatorError(f"controlled circuit must use exactly 2 CNOTs, found {cnots}")

    @classmethod
    def from_angles(cls, theta0: float, theta1: float, theta2: float, theta3: float) -> "ControlledCircuit":
        gates = (
            Gate("phase", "ancilla", theta0),
            Gate("rz", "system", theta1),
            Gate("ry", "system", theta2 / 2.0),
            Gate("cnot", "both"),
            Gate("ry", "system", -theta2 / 2.0),
            Gate("rz", "system", -(theta3 + theta1) / 2.0),
            Gate("cnot", "both"),
            Gate("rz", "system", (theta3 - theta1) / 2.0),
        )
        return cls((theta0, theta1, theta2, theta3), gates)


def assemble_circuit(circuit: ControlledCircuit) -> np.ndarray:
    """Multiply the gate list (first gate acts first) into a 4x4 matrix, ancilla most significant."""
    total = np.eye(4, dtype=complex)
    for gate in circuit.gates:
        total = gate.matrix() @ total
    return total


def controlled_unitary(u: np.ndarray) -> np.ndarray:
    """C_U = blockdiag(1, U), ancilla most significant."""
    u = np.asarray(u, dtype=complex)
    return block_diag(np.eye(u.shape[0]), u)


def propagator_2x2(alpha: float, beta: float, gamma: float, delta: float) -> np.ndarray:
    """exp(i delta H) for H = [[alpha, beta], [beta, gamma]] in closed form."""
    theta_vec = np.array([delta * beta, 0.0, delta * (alpha - gamma) / 2.0])
    theta = float(np.linalg.norm(theta_vec))
    phase = np.exp(1j * delta * (alpha + gamma) / 2.0)
    if theta == 0.0:
        return phase * np.eye(2, dtype=complex)
    axis = theta_vec / theta
    sigma = axis[0] * PAULI_MATRICES["X"] + axis[1] * PAULI_MATRICES["Y"] + axis[2] * PAULI_MATRICES["Z"]
    return phase * (math.cos(theta) * np.eye(2) + 1j * math.sin(theta) * sigma)


def zyz_angles(u: np.ndarray) -> Tuple[float, float, float, float]:
    """(theta0..theta3) with U = e^(i theta0) Rz(theta3) Ry(theta2) Rz(theta1), the order the circuit applies."""
    u = np.asarray(u, dtype=complex)
    theta0 = float(np.angle(np.linalg.det(u))) / 2.0
    v = u * np.exp(-1j * theta0)
    p, q = v[0, 0], v[0, 1]
    theta2 = 2.0 * math.atan2(abs(q), abs(p))
    arg_p = float(np.angle(p)) if abs(p) > 1e-14 else 0.0
    arg_q = float(np.angle(q)) if abs(q) > 1e-14 else 0.0
    return theta0, arg_p - arg_q, theta2, arg_p + arg_q


def controlled_angles(alpha: float, beta: float, gamma: float, delta: float) -> ControlledCircuit:
    """Two-CNOT circuit for the controlled exp(i delta H); checked against C_U before returning."""
    if not all(math.isfinite(x) for x in (alpha, beta, gamma, delta)):
        raise EstimatorError("Hamiltonian entries and delta must be finite")
    u = propagator_2x2(alpha, beta, gamma, delta)
    circuit = ControlledCircuit.from_angles(*zyz_angles(u))
    err = float(np.max(np.abs(assemble_circuit(circuit) - controlled_unitary(u))))
    if err > CIRCUIT_TOL:
        raise EstimatorError(f"assembled circuit deviates from C_U by {err:.3e}")
    return circuit


def hamiltonian_entries(obs: ObservableExpansion) -> Tuple[float, float, float]:
    """(alpha, beta, gamma) of a real symmetric single-qubit observable."""
    if obs.qubit_count != 1:
        raise EstimatorError("explicit controlled circuits are built for one system qubit only")
    dense = obs.dense()
    if abs(dense[0, 1].imag) > 1e-12:
        raise EstimatorError("observable has a Y component; the circuit assumes a real Hamiltonian")
    return float(dense[0, 0].real), float(dense[0, 1].real), float(dense[1, 1].real)


def bound_scan(obs: ObservableExpansion, taus, eps_values, orders, with_exact: bool = False) -> List[list]:
    """Interval plans over (j, tau, eps); exact errors only when requested (dense)."""
    rows = []
    for j in orders:
        for tau in taus:
            exact_u = exact_evolution(obs, tau) if with_exact else None
            for eps in eps_values:
                plan = first_order_intervals(obs, tau, eps) if j == 0 else suzuki_intervals(obs, tau, eps, j)
                exact = None
                if exact_u is not None:
                    exact = operator_norm_error(build_suzuki(obs, tau, plan.intervals_r, j), exact_u)
                rows.append(plan.to_row(eps, exact))
    logger.debug(f"trotter scan: {len(rows)} rows")
    return rows
