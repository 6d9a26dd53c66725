"""
Readout-error mitigation and the ancilla channel.

A symmetric readout flip with probability p shrinks every measured mean by
(1 - 2p). Dividing by (1 - 2p_hat) undoes it at the price of a calibration
floor: the uncertainty of p_hat propagates into the corrected estimate no
matter how many measurement shots are taken. ``budget_optimizer`` splits a
shot budget between measurement and calibration.

The second half models what the controlled evolution does to the ancilla
alone, as a 4x4 Pauli transfer matrix.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from sqpe_estimators.oa import OAllocation, oracle_pauli_means
from sqpe_estimators.operators import (
    PAULI_MATRICES,
    PAULI_AXES,
    ObservableExpansion,
    PureState,
    exact_evolution,
    expectation,
    one_norms,
)
from sqpe_estimators.reports import InfeasibleTargetError
from sqpe_estimators.shot_sim import ReadoutNoise, RngStream, sample_pauli
from sqpe_estimators.sqpe import estimator_K
from sqpe_estimators.trotter import controlled_unitary

logger = logging.getLogger(__name__)

# Single-qubit readout error per qubit of a five-qubit device.
READOUT_ERRORS: Dict[int, float] = {0: 0.0865, 1: 0.08, 2: 0.0382, 3: 0.3567, 4: 0.2715}
PRECOMPUTED_CALIBRATION_SHOTS = 10 ** 7
PTM_TOL = 1e-12


class NoiseModelError(ValueError):
    """Readout correction is singular or the calibration is empty."""


def _check_p(p_hat: float) -> None:
    if not 0.0 <= p_hat < 0.5:
        raise NoiseModelError(f"p_hat must lie in [0, 0.5), got {p_hat}; readout correction is singular")


def _check_calibration(calibration_shots: int) -> None:
    if calibration_shots < 1:
        raise NoiseModelError(f"calibration needs N_C >= 1, got {calibration_shots}")


def mitigate_pauli(raw_mean: float, p_hat: float) -> float:
    _check_p(p_hat)
    return raw_mean / (1.0 - 2.0 * p_hat)


@dataclass(frozen=True)
class MitigatedEstimate:
    value: float
    statistical_variance: float
    calibration_floor: float
    total_shots: int
    calibration_shots: int

    def __post_init__(self):
        if self.statistical_variance < 0 or self.calibration_floor < 0:
            raise NoiseModelError("variances must be nonnegative")

    @property
    def total_variance(self) -> float:
        return self.statistical_variance + self.calibration_floor

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.total_variance)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "statistical_variance": self.statistical_variance,
            "calibration_floor": self.calibration_floor,
            "total_variance": self.total_variance,
            "total_shots": self.total_shots,
            "calibration_shots": self.calibration_shots,
        }


def _calibration_variance(p_hat: float, calibration_shots: int) -> float:
    return p_hat * (1.0 - p_hat) / calibration_shots


def calibration_floor_oa(obs: ObservableExpansion, p_hat: float, calibration_shots: int,
                         raw_means: Optional[Sequence[float]] = None) -> float:
    """V_R. Each term is corrected with its own calibration, so contributions add.

    Exact: 4 dp^2 / (1 - 2p)^4 sum beta_k^2 <P~_k>^2. Bound: <P~_k>^2 <= 1.
    """
    _check_p(p_hat)
    _check_calibration(calibration_shots)
    scale = 4.0 * _calibration_variance(p_hat, calibration_shots) / (1.0 - 2.0 * p_hat) ** 4
    if raw_means is None:
        return scale * one_norms(obs)[2] ** 2
    return scale * float(np.sum(obs.weights ** 2 * np.asarray(raw_means, dtype=float) ** 2))


def calibration_floor_sqpe(tau: float, p_hat: float, calibration_shots: int,
                           raw_z: Optional[float] = None) -> float:
    """V_RK, the same propagation for the single ancilla readout divided by tau."""
    _check_p(p_hat)
    _check_calibration(calibration_shots)
    z2 = 1.0 if raw_z is None else raw_z ** 2
    return 4.0 / tau ** 2 * z2 * _calibration_variance(p_hat, calibration_shots) / (1.0 - 2.0 * p_hat) ** 4


def mitigated_variance(obs: ObservableExpansion, raw_means: Sequence[float], p_hat: float,
                       calibration_shots: int, per_term_shots: Optional[Sequence[int]] = None
                       ) -> MitigatedEstimate:
    """Readout-corrected OA value and variance.

    The calibration floor is the bound form with ||O_T||_2^2; pass the raw
    means to ``calibration_floor_oa`` for the state-dependent value.
    """
    _check_p(p_hat)
    raw = np.asarray(raw_means, dtype=float)
    if raw.size != obs.term_count:
        raise NoiseModelError(f"{raw.size} raw means for {obs.term_count} terms")
    shrink = 1.0 - 2.0 * p_hat
    coeffs = obs.signs * obs.weights
    value = obs.identity_coeff + float(np.sum(coeffs * raw)) / shrink
    statistical = 0.0
    total = 0
    if per_term_shots is not None:
        shots = np.asarray(per_term_shots, dtype=float)
        statistical = float(np.sum(obs.weights ** 2 * (1.0 - raw ** 2) / shots)) / shrink ** 2
        total = int(shots.sum())
    floor = calibration_floor_oa(obs, p_hat, calibration_shots) if p_hat > 0 else 0.0
    return MitigatedEstimate(value, statistical, floor, total, calibration_shots)


def mitigated_sqpe_estimate(z_raw: float, tau: float, p_hat: float,
                            known_moments: Sequence[float] = (), shots: int = 0,
                            calibration_shots: int = 1) -> MitigatedEstimate:
    """Readout-corrected order-K estimator from a raw ancilla mean."""
    z = mitigate_pauli(z_raw, p_hat)
    shrink = 1.0 - 2.0 * p_hat
    statistical = (1.0 - z_raw ** 2) / (tau ** 2 * shots * shrink ** 2) if shots > 0 else 0.0
    floor = calibration_floor_sqpe(tau, p_hat, calibration_shots, z_raw) if p_hat > 0 else 0.0
    return MitigatedEstimate(estimator_K(z, tau, known_moments), statistical, floor, shots, calibration_shots)


def mitigated_oa_estimate(obs: ObservableExpansion, state: PureState, allocation: OAllocation,
                          noise: ReadoutNoise, rng: RngStream,
                          calibration_shots: int = PRECOMPUTED_CALIBRATION_SHOTS) -> MitigatedEstimate:
    """Calibrate p per term, measure through the flip channel, then correct."""
    raw_means, p_hats = [], []
    for term, shots in zip(obs.terms, allocation.per_term_shots):
        calibrated = ReadoutNoise.calibrate(noise.flip_probability, calibration_shots, rng)
        batch = sample_pauli(term, state, shots, calibrated, rng)
        raw_means.append(batch.mean_sign)
        p_hats.append(calibrated.p_hat)

    shrinks = 1.0 - 2.0 * np.asarray(p_hats)
    if np.any(shrinks <= 0):
        raise NoiseModelError("calibrated p_hat reached 0.5")
    raw = np.asarray(raw_means)
    coeffs = obs.signs * obs.weights
    shots = np.asarray(allocation.per_term_shots, dtype=float)
    value = obs.identity_coeff + float(np.sum(coeffs * raw / shrinks))
    statistical = float(np.sum(obs.weights ** 2 * (1.0 - raw ** 2) / (shots * shrinks ** 2)))
    dp2 = np.asarray(p_hats) * (1.0 - np.asarray(p_hats)) / calibration_shots
    floor = float(np.sum(4.0 * dp2 * obs.weights ** 2 * raw ** 2 / shrinks ** 4))
    logger.debug(f"mitigated OA: p={noise.flip_probability}, p_hat={p_hats}, value={value:.5f}")
    return MitigatedEstimate(value, statistical, floor, allocation.total, calibration_shots)


# ---------------------------------------------------------------------------
# Budget optimiser
# ---------------------------------------------------------------------------

class CalibrationMode(Enum):
    JOINT = "joint"
    PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class BudgetProblem:
    """Total variance a / M + b / N_C with M shots per setting and L settings."""

    a: float
    b: float
    settings: int
    epsilon: float
    noiseless_reference: float

    @classmethod
    def for_oa(cls, obs: ObservableExpansion, state: PureState, p: float, eps_r: float) -> "BudgetProblem":
        _check_p(p)
        mean = expectation(obs, state)
        if mean == 0:
            raise InfeasibleTargetError("relative accuracy is undefined for <O> = 0")
        eps = eps_r * abs(mean)
        shrink = 1.0 - 2.0 * p
        raw = shrink * oracle_pauli_means(obs, state)
        a = float(np.sum(obs.weights ** 2 * (1.0 - raw ** 2))) / shrink ** 2
        b = 4.0 * p * (1.0 - p) / shrink ** 4 * one_norms(obs)[2] ** 2
        reference = (one_norms(obs)[0] / eps) ** 2
        return cls(a, b, obs.term_count, eps, reference)

    @classmethod
    def for_sqpe(cls, obs: ObservableExpansion, state: PureState, tau: float, p: float,
                 eps_r: float) -> "BudgetProblem":
        _check_p(p)
        mean = expectation(obs, state)
        if mean == 0:
            raise InfeasibleTargetError("relative accuracy is undefined for <O> = 0")
        eps = eps_r * abs(mean)
        shrink = 1.0 - 2.0 * p
        z_raw = -shrink * float(np.sin(tau * mean))
        a = (1.0 - z_raw ** 2) / (tau ** 2 * shrink ** 2)
        b = 4.0 / tau ** 2 * p * (1.0 - p) / shrink ** 4
        reference = (one_norms(obs)[0] / eps) ** 2
        return cls(a, b, 1, eps, reference)

    def total(self, fraction: float) -> float:
        """Continuous N_tot when a fraction f of the budget calibrates."""
        return (self.a * self.settings / (1.0 - fraction) + self.b / fraction) / self.epsilon ** 2

    def closed_form(self) -> float:
        return (math.sqrt(self.a * self.settings) + math.sqrt(self.b)) ** 2 / self.epsilon ** 2

    def variance(self, per_setting: int, calibration_shots: int) -> float:
        floor = self.b / calibration_shots if self.b > 0 else 0.0
        return self.a / per_setting + floor


@dataclass(frozen=True)
class BudgetResult:
    per_setting_shots: int
    calibration_shots: int
    fraction: float
    total_shots: int
    closed_form_total: float
    noiseless_reference: float
    mode: CalibrationMode

    @property
    def ratio(self) -> float:
        return self.total_shots / self.noiseless_reference

    def to_dict(self) -> dict:
        return {
            "per_setting_shots": self.per_setting_shots,
            "calibration_shots": self.calibration_shots,
            "calibration_fraction": self.fraction,
            "total_shots": self.total_shots,
            "closed_form_total": self.closed_form_total,
            "noiseless_reference": self.noiseless_reference,
            "ratio_to_noiseless": self.ratio,
            "mode": self.mode.value,
        }


def _shots_for(problem: BudgetProblem, calibration_shots: int) -> int:
    slack = problem.epsilon ** 2 - (problem.b / calibration_shots if problem.b > 0 else 0.0)
    if slack <= 0:
        raise InfeasibleTargetError(
            f"calibration floor {problem.b / calibration_shots:.3e} exceeds eps^2 = {problem.epsilon ** 2:.3e}"
        )
    return max(1, int(math.ceil(problem.a / slack)))


def budget_optimizer(problem: BudgetProblem,
                     mode: CalibrationMode = CalibrationMode.JOINT,
                     precomputed_calibration: int = PRECOMPUTED_CALIBRATION_SHOTS) -> BudgetResult:
    """Minimise N_tot = L M + N_C subject to a / M + b / N_C <= eps^2.

    JOINT searches the calibration fraction with a bounded scalar minimiser and
    rounds up; PRECOMPUTED fixes N_C and does not count it.
    """
    if mode is CalibrationMode.PRECOMPUTED:
        per_setting = _shots_for(problem, precomputed_calibration)
        measured = per_setting * problem.settings
        return BudgetResult(
            per_setting_shots=per_setting,
            calibration_shots=precomputed_calibration,
            fraction=precomputed_calibration / (measured + precomputed_calibration),
            total_shots=measured,
            closed_form_total=problem.a * problem.settings / problem.epsilon ** 2,
            noiseless_reference=problem.noiseless_reference,
            mode=mode,
        )

    if problem.b <= 0:
        per_setting = max(1, int(math.ceil(problem.a / problem.epsilon ** 2)))
        return BudgetResult(per_setting, 0, 0.0, per_setting * problem.settings,
                            problem.closed_form(), problem.noiseless_reference, mode)

    result = minimize_scalar(problem.total, bounds=(1e-9, 1.0 - 1e-9), method="bounded",
                             options={"xatol": 1e-10})
    fraction = float(result.x)
    continuous = problem.total(fraction)
    calibration = max(1, int(math.ceil(fraction * continuous)))
    per_setting = _shots_for(problem, calibration)
    total = per_setting * problem.settings + calibration
    if problem.variance(per_setting, calibration) > problem.epsilon ** 2 * (1 + 1e-9):
        raise InfeasibleTargetError("rounded budget violates the variance target")
    logger.info(
        f"budget: N_tot={total} (closed form {problem.closed_form():.4g}), "
        f"calibration fraction {calibration / total:.3f}"
    )
    return BudgetResult(
        per_setting_shots=per_setting,
        calibration_shots=calibration,
        fraction=calibration / total,
        total_shots=total,
        closed_form_total=problem.closed_form(),
        noiseless_reference=problem.noiseless_reference,
        mode=mode,
    )


@dataclass(frozen=True)
class BudgetScanRow:
    p: float
    n_tot: int
    calibration_fraction: float
    mode: str

    CSV_COLUMNS = ("p", "N_tot", "calibration_fraction", "mode")

    def as_row(self) -> list:
        return [self.p, self.n_tot, self.calibration_fraction, self.mode]


def budget_scan(obs: ObservableExpansion, state: PureState, flip_probabilities: Iterable[float],
                eps_r: float, precomputed_calibration: int = PRECOMPUTED_CALIBRATION_SHOTS
                ) -> list:
    rows = []
    for p in flip_probabilities:
        problem = BudgetProblem.for_oa(obs, state, p, eps_r)
        for mode in CalibrationMode:
            try:
                res = budget_optimizer(problem, mode, precomputed_calibration)
            except InfeasibleTargetError as e:
                logger.warning(f"p={p} ({mode.value}): {e}")
                continue
            rows.append(BudgetScanRow(p, res.total_shots, res.fraction, mode.value))
    return rows


# ---------------------------------------------------------------------------
# Ancilla channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PauliTransferMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (4, 4):
            raise NoiseModelError(f"PTM must be 4x4, got {entries.shape}")
        if abs(entries[0, 0] - 1.0) > 1e-9:
            raise NoiseModelError(f"PTM has R_00 = {entries[0, 0]}, expected 1")
        object.__setattr__(self, "entries", entries)

    @property
    def trace_preserving(self) -> bool:
        return bool(np.allclose(self.entries[0], [1.0, 0.0, 0.0, 0.0], atol=PTM_TOL))

    def compose(self, other: "PauliTransferMatrix") -> "PauliTransferMatrix":
        """self after other."""
        return PauliTransferMatrix(self.entries @ other.entries)

    def allclose(self, other: "PauliTransferMatrix", atol: float = PTM_TOL) -> bool:
        return bool(np.allclose(self.entries, other.entries, atol=atol))


@dataclass(frozen=True)
class AncillaChannel:
    kappa: complex
    ptm: PauliTransferMatrix

    @property
    def p_z(self) -> float:
        return 1.0 - abs(self.kappa) ** 2

    @property
    def theta(self) -> float:
        return math.atan2(self.kappa.imag, self.kappa.real)

    @property
    def nu(self) -> float:
        return math.sqrt(max(self.p_z, 0.0))

    def factors(self):
        """(dephasing, rotation) with ptm = dephasing @ rotation."""
        return dephasing_ptm(self.p_z), rotation_ptm(self.theta)


def _kappa_ptm(kappa: complex) -> np.ndarray:
    kr, ki = kappa.real, kappa.imag
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, kr, -ki, 0.0],
        [0.0, ki, kr, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def dephasing_ptm(p_z: float) -> PauliTransferMatrix:
    # coherences shrink by |kappa| = sqrt(1 - p_z)
    s = math.sqrt(max(1.0 - p_z, 0.0))
    return PauliTransferMatrix(np.diag([1.0, s, s, 1.0]))


def rotation_ptm(theta: float) -> PauliTransferMatrix:
    return PauliTransferMatrix(_kappa_ptm(complex(math.cos(theta), math.sin(theta))))


def ancilla_channel(obs: ObservableExpansion, state: PureState, tau: float) -> AncillaChannel:
    """kappa = <Psi| exp(i tau O) |Psi> and the induced ancilla PTM."""
    u = exact_evolution(obs, tau)
    kappa = complex(np.vdot(state.amplitudes, u @ state.amplitudes))
    return AncillaChannel(kappa, PauliTransferMatrix(_kappa_ptm(kappa)))


def ptm_from_channel(channel: Callable[[np.ndarray], np.ndarray]) -> PauliTransferMatrix:
    """R_ij = Tr[P_i channel(P_j)] / 2 by applying the channel to each Pauli."""
    paulis = [PAULI_MATRICES[a] for a in PAULI_AXES]
    entries = np.empty((4, 4))
    for j, pj in enumerate(paulis):
        out = channel(pj)
        for i, pi in enumerate(paulis):
            entries[i, j] = float(np.real(np.trace(pi @ out))) / 2.0
    return PauliTransferMatrix(entries)


def ptm_from_kraus(ops: Sequence[np.ndarray]) -> PauliTransferMatrix:
    return ptm_from_channel(lambda rho: sum(k @ rho @ k.conj().T for k in ops))


def kraus_pair(kappa: complex) -> tuple:
    nu = math.sqrt(max(1.0 - abs(kappa) ** 2, 0.0))
    return (
        np.array([[1.0, 0.0], [0.0, kappa]], dtype=complex),
        np.array([[0.0, 0.0], [0.0, nu]], dtype=complex),
    )


def controlled_channel(unitary: np.ndarray, state: PureState) -> Callable[[np.ndarray], np.ndarray]:
    """Ancilla map rho -> Tr_sys[C_U (rho x |Psi><Psi|) C_U^dagger]."""
    cu = controlled_unitary(unitary)
    sys_rho = np.outer(state.amplitudes, state.amplitudes.conj())
    d = sys_rho.shape[0]

    def apply(rho: np.ndarray) -> np.ndarray:
        joint = cu @ np.kron(rho, sys_rho) @ cu.conj().T
        return np.einsum("aibi->ab", joint.reshape(2, d, 2, d))

    return apply


def depolarize(ptm: PauliTransferMatrix, p_D: float, d: int = 2) -> PauliTransferMatrix:
    """Follow the channel with (1 - p_D) rho + (p_D / d) Tr[rho] 1 on a d-dimensional register.

    On the ancilla marginal the fully mixed part is always 1/2, so only the
    non-identity rows shrink.
    """
    if not 0.0 <= p_D <= 1.0:
        raise NoiseModelError(f"p_D must lie in [0, 1], got {p_D}")
    if d < 2 or d & (d - 1):
        raise NoiseModelError(f"register dimension must be a power of two >= 2, got {d}")
    scale = np.diag([1.0, 1.0 - p_D, 1.0 - p_D, 1.0 - p_D])
    return PauliTransferMatrix(scale @ ptm.entries)


def recover_kappa(ptm: PauliTransferMatrix, p_D: float) -> complex:
    """Invert the depolarised PTM for kappa."""
    if p_D >= 1.0:
        raise NoiseModelError("kappa is unrecoverable from a fully depolarised channel")
    shrink = 1.0 - p_D
    return complex(ptm.entries[1, 1] / shrink, ptm.entries[2, 1] / shrink)
