"""
Seeded Monte Carlo simulation of projective measurements.

Two measurement kinds are simulated: a direct Pauli-string measurement (used by
Operator Averaging) and the ancilla-Z readout of the single-step phase
estimation circuit. Both can pass through a symmetric readout-flip channel.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from sqpe_estimators.operators import (
    ObservableExpansion,
    OperatorError,
    PauliTerm,
    PureState,
    exact_sine_expectation,
    pauli_expectation,
)

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"
# At or below this many trials draws are explicit Bernoulli inversions.
BERNOULLI_LIMIT = 10_000


class RngStream:
    """A seeded stream of random draws confined to one worker."""

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, algorithm={self.algorithm!r})"

    def binomial(self, trials: int, probability: float) -> int:
        if trials <= BERNOULLI_LIMIT:
            return int(np.count_nonzero(self.generator.random(trials) < probability))
        return int(self.generator.binomial(trials, probability))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self.generator.uniform(low, high))

    def spawn(self, count: int) -> List[int]:
        """Disjoint child seeds derived from this stream's seed."""
        children = np.random.SeedSequence(self.seed).spawn(count)
        return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]

    @staticmethod
    def spawn_from(master_seed: int, count: int) -> List[int]:
        return RngStream(master_seed).spawn(count)


@dataclass(frozen=True)
class ShotBatch:
    successes: int
    trials: int
    true_probability: float

    def __post_init__(self):
        if self.trials < 0 or not 0 <= self.successes <= self.trials:
            raise ValueError(f"invalid batch: {self.successes} successes of {self.trials}")
        if not 0.0 <= self.true_probability <= 1.0:
            raise ValueError(f"probability {self.true_probability} outside [0, 1]")

    @property
    def frequency(self) -> float:
        return self.successes / self.trials

    @property
    def mean_sign(self) -> float:
        """2X/M - 1, the sample mean of the +/-1 outcome."""
        return 2.0 * self.successes / self.trials - 1.0

    def merge(self, other: "ShotBatch") -> "ShotBatch":
        if abs(self.true_probability - other.true_probability) > 1e-12:
            raise ValueError("only batches taken with the same setting can be pooled")
        return ShotBatch(
            self.successes + other.successes,
            self.trials + other.trials,
            self.true_probability,
        )


@dataclass(frozen=True)
class ReadoutNoise:
    """Symmetric, qubit-independent readout flip with probability p."""

    flip_probability: float
    estimated_p: Optional[float] = None
    calibration_shots: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability < 0.5:
            raise ValueError(f"flip probability must lie in [0, 0.5), got {self.flip_probability}")
        if self.estimated_p is not None and not 0.0 <= self.estimated_p < 0.5:
            raise ValueError(f"estimated p must lie in [0, 0.5), got {self.estimated_p}")

    @property
    def p_hat(self) -> float:
        return self.flip_probability if self.estimated_p is None else self.estimated_p

    @property
    def estimator_variance(self) -> float:
        if self.calibration_shots <= 0:
            return 0.0
        return self.p_hat * (1.0 - self.p_hat) / self.calibration_shots

    def flip(self, probability: float) -> float:
        p = self.flip_probability
        return (1.0 - p) * probability + p * (1.0 - probability)

    @classmethod
    def calibrate(cls, p: float, calibration_shots: int, rng: RngStream) -> "ReadoutNoise":
        """Estimate p from repeated preparations of |0>."""
        if calibration_shots < 1:
            raise ValueError("calibration needs at least one shot")
        flips = rng.binomial(calibration_shots, p)
        p_hat = min(flips / calibration_shots, 0.5 - 1e-12)
        logger.debug(f"calibrated readout flip: p={p}, p_hat={p_hat:.6f} from {calibration_shots} shots")
        return cls(flip_probability=p, estimated_p=p_hat, calibration_shots=calibration_shots)


def _draw(probability: float, shots: int, noise: Optional[ReadoutNoise], rng: RngStream) -> ShotBatch:
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    q = float(np.clip(probability, 0.0, 1.0))
    if noise is not None:
        q = noise.flip(q)
    return ShotBatch(rng.binomial(shots, q), shots, q)


def sample_pauli(term: PauliTerm, state: PureState, shots: int,
                 noise: Optional[ReadoutNoise], rng: RngStream) -> ShotBatch:
    """Measure one Pauli string; success is the +1 outcome."""
    q = (1.0 + pauli_expectation(term.string, state)) / 2.0
    return _draw(q, shots, noise, rng)


def ancilla_zero_probability(obs: ObservableExpansion, state: PureState, tau: float,
                             propagator: Optional[np.ndarray] = None) -> float:
    """P(ancilla = 0) = (1 - <sin(tau O)>) / 2, or from a supplied unitary."""
    if propagator is None:
        sine = exact_sine_expectation(obs, state, tau)
    else:
        if propagator.shape != (obs.dimension, obs.dimension):
            raise OperatorError(f"propagator shape {propagator.shape} does not match observable")
        sine = float(np.vdot(state.amplitudes, propagator @ state.amplitudes).imag)
    return (1.0 - sine) / 2.0


def sample_ancilla_z(obs: ObservableExpansion, state: PureState, tau: float, shots: int,
                     noise: Optional[ReadoutNoise], rng: RngStream,
                     propagator: Optional[np.ndarray] = None) -> ShotBatch:
    """Ancilla readout of the controlled-evolution circuit; 2X/M - 1 estimates -<sin(tau O)>."""
    return _draw(ancilla_zero_probability(obs, state, tau, propagator), shots, noise, rng)


def bayes_probability(batch: ShotBatch) -> float:
    """Posterior mean under a Beta(1, 1) prior."""
    if batch.trials < 1:
        raise ValueError("bayes_probability needs at least one trial")
    return (batch.successes + 1.0) / (batch.trials + 2.0)
