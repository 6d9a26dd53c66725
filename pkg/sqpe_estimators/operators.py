"""
Exact representation of Hermitian observables and pure states.

Everything here is dense linear algebra on at most ten qubits. The spectral
oracle built from an observable is the ground truth every estimator in the
package is checked against.
"""

import functools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MAX_QUBITS = 10
HERMITIAN_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10
NORM_TOL = 1e-12

PAULI_MATRICES: Dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_AXES = "IXYZ"


class OperatorError(ValueError):
    """Raised for malformed observables, states or incompatible dimensions."""


def _qubits_for_dimension(dim: int) -> int:
    if dim < 2 or dim & (dim - 1):
        raise OperatorError(f"dimension {dim} is not a power of two")
    n = dim.bit_length() - 1
    if n > MAX_QUBITS:
        raise OperatorError(f"{n} qubits exceeds the dense limit of {MAX_QUBITS}")
    return n


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, leftmost axis = most significant qubit."""

    axes: str

    def __post_init__(self):
        if len(self.axes) < 1:
            raise OperatorError("Pauli string must act on at least one qubit")
        bad = set(self.axes) - set(PAULI_AXES)
        if bad:
            raise OperatorError(f"invalid Pauli axes {sorted(bad)} in '{self.axes}'")

    @property
    def qubit_count(self) -> int:
        return len(self.axes)

    @property
    def is_identity(self) -> bool:
        return set(self.axes) == {"I"}

    def matrix(self) -> np.ndarray:
        return functools.reduce(np.kron, (PAULI_MATRICES[a] for a in self.axes))


@dataclass(frozen=True)
class PauliTerm:
    """One weighted term alpha_k * exp(i theta_k) * P_k with alpha_k > 0."""

    weight: float
    phase: float
    string: PauliString

    def __post_init__(self):
        if not self.weight > 0:
            raise OperatorError(f"term weight must be positive, got {self.weight}")
        if self.string.is_identity:
            raise OperatorError("the identity string belongs in identity_coeff")

    @property
    def coefficient(self) -> complex:
        return self.weight * np.exp(1j * self.phase)

    @property
    def sign(self) -> float:
        """Real coefficient sign; phases are 0 or pi for Hermitian expansions."""
        return float(np.real(np.exp(1j * self.phase)))

    def matrix(self) -> np.ndarray:
        return self.coefficient * self.string.matrix()


@dataclass(frozen=True)
class ObservableExpansion:
    """O = alpha_0 * 1 + sum_k alpha_k exp(i theta_k) P_k."""

    identity_coeff: float
    terms: Tuple[PauliTerm, ...]
    qubit_count: int

    def __post_init__(self):
        if self.qubit_count < 1:
            raise OperatorError("qubit_count must be positive")
        for term in self.terms:
            if term.string.qubit_count != self.qubit_count:
                raise OperatorError(
                    f"term '{term.string.axes}' acts on {term.string.qubit_count} qubits, "
                    f"expected {self.qubit_count}"
                )

    @property
    def term_count(self) -> int:
        return len(self.terms)

    @property
    def dimension(self) -> int:
        return 2 ** self.qubit_count

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.terms], dtype=float)

    @property
    def signs(self) -> np.ndarray:
        return np.array([t.sign for t in self.terms], dtype=float)

    def dense(self) -> np.ndarray:
        out = self.identity_coeff * np.eye(self.dimension, dtype=complex)
        for term in self.terms:
            out = out + term.matrix()
        return out

    def traceless(self) -> "ObservableExpansion":
        return ObservableExpansion(0.0, self.terms, self.qubit_count)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "identity_coeff": self.identity_coeff,
            "terms": [
                {"weight": t.weight, "phase": t.phase, "string": t.string.axes}
                for t in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ObservableExpansion":
        raw_terms = data.get("terms", [])
        terms = tuple(
            PauliTerm(float(t["weight"]), float(t.get("phase", 0.0)), PauliString(t["string"]))
            for t in raw_terms
        )
        if "qubit_count" in data:
            n = int(data["qubit_count"])
        elif terms:
            n = terms[0].string.qubit_count
        else:
            raise OperatorError("qubit_count is required for an observable with no terms")
        return cls(float(data["identity_coeff"]), terms, n)

    @classmethod
    def from_paulis(cls, identity_coeff: float, coefficients: Dict[str, float]) -> "ObservableExpansion":
        """Build from signed real coefficients, e.g. {"X": -35, "Z": 82.5}."""
        terms = []
        for axes, c in coefficients.items():
            if c == 0:
                continue
            terms.append(PauliTerm(abs(c), 0.0 if c > 0 else np.pi, PauliString(axes)))
        if not terms:
            raise OperatorError("from_paulis needs at least one nonzero term")
        return cls(float(identity_coeff), tuple(terms), terms[0].string.qubit_count)


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        _qubits_for_dimension(amps.size)
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise OperatorError(f"state norm^2 is {norm:.15f}, expected 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def qubit_count(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def normalized(cls, vector: Sequence[complex]) -> "PureState":
        v = np.asarray(vector, dtype=complex).ravel()
        return cls(v / np.linalg.norm(v))

    @classmethod
    def basis(cls, n: int, index: int = 0) -> "PureState":
        v = np.zeros(2 ** n, dtype=complex)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def from_angle(cls, theta: float) -> "PureState":
        """R_y(theta)|0> = cos(theta/2)|0> + sin(theta/2)|1>."""
        return cls(np.array([np.cos(theta / 2), np.sin(theta / 2)], dtype=complex))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PureState":
        v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
        return cls.normalized(v)


@dataclass(frozen=True, eq=False)
class SpectralOracle:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lambda_max: float
    identity_coeff: float = 0.0

    @property
    def operator_norm_traceless(self) -> float:
        return float(np.max(np.abs(self.eigenvalues - self.identity_coeff)))

    def populations(self, state: PureState) -> np.ndarray:
        if state.amplitudes.size != self.eigenvalues.size:
            raise OperatorError(
                f"state dimension {state.amplitudes.size} does not match "
                f"observable dimension {self.eigenvalues.size}"
            )
        overlaps = self.eigenvectors.conj().T @ state.amplitudes
        return np.abs(overlaps) ** 2

    def function_expectation(self, state: PureState, fn) -> complex:
        """<Psi| f(O) |Psi> evaluated in the eigenbasis."""
        return complex(np.sum(fn(self.eigenvalues) * self.populations(state)))

    def power_expectation(self, state: PureState, power: int) -> float:
        return float(np.sum(self.eigenvalues ** power * self.populations(state)))

    def dense(self) -> np.ndarray:
        v = self.eigenvectors
        return v @ np.diag(self.eigenvalues) @ v.conj().T


@dataclass(frozen=True)
class MomentTable:
    entries: Dict[int, float]
    variance: float
    even_moments: Dict[int, float]
    absolute_entries: Dict[int, float] = field(default_factory=dict)
    covariances: Dict[int, float] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return self.entries[0]

    def m(self, k: int) -> float:
        return self.entries[k]


@functools.lru_cache(maxsize=64)
def spectral_oracle(obs: ObservableExpansion) -> SpectralOracle:
    """Diagonalise the dense observable once per expansion."""
    dense = obs.dense()
    dense = (dense + dense.conj().T) / 2
    eigenvalues, eigenvectors = np.linalg.eigh(dense)
    oracle = SpectralOracle(
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        lambda_max=float(np.max(np.abs(eigenvalues))),
        identity_coeff=obs.identity_coeff,
    )
    err = np.max(np.abs(oracle.dense() - dense))
    if err > RECONSTRUCTION_TOL * max(1.0, np.max(np.abs(dense))):
        raise OperatorError(f"eigen-reconstruction error {err:.3e} above tolerance")
    return oracle


def _pauli_transform_weights() -> np.ndarray:
    # W[p, 2r + c] = P_p[c, r] so that sum_rc W * O[r, c] = Tr[P_p O]
    w = np.zeros((4, 4), dtype=complex)
    for p, axis in enumerate(PAULI_AXES):
        w[p] = PAULI_MATRICES[axis].T.ravel()
    return w


def pauli_coefficients(dense: np.ndarray) -> np.ndarray:
    """All 4**n coefficients Tr[P O] / 2**n, indexed by base-4 digits over 'IXYZ'."""
    dense = np.asarray(dense, dtype=complex)
    n = _qubits_for_dimension(dense.shape[0])
    tensor = dense.reshape([2] * (2 * n))
    order = [axis for q in range(n) for axis in (q, n + q)]
    tensor = tensor.transpose(order).reshape([4] * n)
    weights = _pauli_transform_weights()
    for q in range(n):
        tensor = np.moveaxis(np.tensordot(weights, tensor, axes=([1], [q])), 0, q)
    return tensor.reshape(-1) / 2 ** n


def decompose(dense: np.ndarray, tol: float = HERMITIAN_TOL) -> ObservableExpansion:
    """Pauli expansion of a Hermitian matrix of dimension 2**n."""
    dense = np.asarray(dense, dtype=complex)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise OperatorError(f"expected a square matrix, got shape {dense.shape}")
    n = _qubits_for_dimension(dense.shape[0])
    scale = max(1.0, float(np.max(np.abs(dense))))
    if np.max(np.abs(dense - dense.conj().T)) > 1e-10 * scale:
        raise OperatorError("matrix is not Hermitian")
    dense = (dense + dense.conj().T) / 2

    coeffs = pauli_coefficients(dense)
    terms: List[PauliTerm] = []
    for index in range(1, coeffs.size):
        c = coeffs[index].real
        if abs(c) <= tol * scale:
            continue
        axes = np.base_repr(index, base=4).rjust(n, "0")
        string = PauliString("".join(PAULI_AXES[int(d)] for d in axes))
        terms.append(PauliTerm(abs(c), 0.0 if c > 0 else float(np.pi), string))

    obs = ObservableExpansion(float(coeffs[0].real), tuple(terms), n)
    logger.debug(f"decomposed {2 ** n}x{2 ** n} matrix into {len(terms)} Pauli terms")
    return obs


def one_norms(obs: ObservableExpansion) -> Tuple[float, float, float]:
    """(||O_T||_1, ||O||_1, ||O_T||_2) of the coefficient vector."""
    w = obs.weights
    traceless_one = float(np.sum(w))
    return traceless_one, abs(obs.identity_coeff) + traceless_one, float(np.sqrt(np.sum(w ** 2)))


def _check_state(obs: ObservableExpansion, state: PureState) -> None:
    if state.amplitudes.size != obs.dimension:
        raise OperatorError(
            f"state has dimension {state.amplitudes.size}, observable has {obs.dimension}"
        )


def expectation(obs: ObservableExpansion, state: PureState) -> float:
    _check_state(obs, state)
    return spectral_oracle(obs).power_expectation(state, 1)


def pauli_expectation(string: PauliString, state: PureState) -> float:
    if string.qubit_count != state.qubit_count:
        raise OperatorError(
            f"Pauli string on {string.qubit_count} qubits, state on {state.qubit_count}"
        )
    value = np.vdot(state.amplitudes, string.matrix() @ state.amplitudes)
    if abs(value.imag) > RECONSTRUCTION_TOL:
        raise OperatorError(f"Pauli expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def moments(obs: ObservableExpansion, state: PureState, k_max: int) -> MomentTable:
    if k_max < 0:
        raise OperatorError(f"k_max must be >= 0, got {k_max}")
    _check_state(obs, state)
    oracle = spectral_oracle(obs)
    pops = oracle.populations(state)
    lam = oracle.eigenvalues

    entries = {k: float(np.sum(lam ** (2 * k + 1) * pops)) for k in range(k_max + 1)}
    absolute = {k: float(np.sum(np.abs(lam) ** (2 * k + 1) * pops)) for k in range(k_max + 1)}
    even = {K: float(np.sum(lam ** (2 * K) * pops)) for K in range(1, k_max + 1)}
    mean = entries[0]
    second = float(np.sum(lam ** 2 * pops))
    covariances = {K: entries[K] - even[K] * mean for K in range(1, k_max + 1)}
    return MomentTable(
        entries=entries,
        variance=max(second - mean ** 2, 0.0),
        even_moments=even,
        absolute_entries=absolute,
        covariances=covariances,
    )


def exact_sine_expectation(obs: ObservableExpansion, state: PureState, tau: float) -> float:
    """<Psi| sin(tau O) |Psi>, equal to -<Z_a>(tau) for the ideal ancilla circuit."""
    if not np.isfinite(tau):
        raise OperatorError(f"tau must be finite, got {tau}")
    _check_state(obs, state)
    return spectral_oracle(obs).function_expectation(state, lambda x: np.sin(tau * x)).real


def exact_evolution(obs: ObservableExpansion, tau: float) -> np.ndarray:
    """U = exp(i tau O) built from the eigen-decomposition."""
    if not np.isfinite(tau):
        raise OperatorError(f"tau must be finite, got {tau}")
    oracle = spectral_oracle(obs)
    v = oracle.eigenvectors
    return (v * np.exp(1j * tau * oracle.eigenvalues)) @ v.conj().T


def ratio_R(obs: ObservableExpansion, state: PureState) -> Tuple[float, float]:
    """(R_O, R_O^max) = (|<O>| / ||O_T||_1, ||O||_1 / ||O_T||_1)."""
    traceless_one, full_one, _ = one_norms(obs)
    if traceless_one <= 0:
        raise OperatorError("observable has no traceless part; R_O is undefined")
    return abs(expectation(obs, state)) / traceless_one, full_one / traceless_one


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(2 ** n, 2 ** n)) + 1j * rng.normal(size=(2 ** n, 2 ** n))
    return scale * (a + a.conj().T) / 2


def random_observable(n: int, rng: np.random.Generator, scale: float = 1.0) -> ObservableExpansion:
    return decompose(random_hermitian(n, rng, scale))


def eigenstate(obs: ObservableExpansion, index: int = 0) -> PureState:
    """Eigenvector of the index-th smallest eigenvalue."""
    vec = spectral_oracle(obs).eigenvectors[:, index]
    return PureState.normalized(vec)


def describe(obs: ObservableExpansion, state: Optional[PureState] = None) -> Dict[str, Any]:
    traceless_one, full_one, two = one_norms(obs)
    oracle = spectral_oracle(obs)
    info: Dict[str, Any] = {
        "qubits": obs.qubit_count,
        "terms": obs.term_count,
        "identity_coeff": obs.identity_coeff,
        "traceless_one_norm": traceless_one,
        "full_one_norm": full_one,
        "two_norm": two,
        "eigenvalues": oracle.eigenvalues.tolist(),
    }
    if state is not None:
        r_o, r_max = ratio_R(obs, state)
        info.update({"expectation": expectation(obs, state), "R_O": r_o, "R_O_max": r_max})
    return info
