#!/usr/bin/env python3
"""
Tests for the observable representation and the spectral oracle
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from sqpe_estimators.operators import (
    ObservableExpansion,
    OperatorError,
    PauliString,
    PauliTerm,
    PureState,
    decompose,
    eigenstate,
    exact_evolution,
    exact_sine_expectation,
    expectation,
    moments,
    one_norms,
    pauli_expectation,
    random_hermitian,
    random_observable,
    ratio_R,
    spectral_oracle,
)


class TestPauliStrings:
    """Pauli strings and weighted terms"""

    def test_single_qubit_matrices(self):
        """X, Y and Z are Hermitian, square to one and are traceless"""
        for axes in "XYZ":
            m = PauliString(axes).matrix()
            assert np.allclose(m, m.conj().T)
            assert np.allclose(m @ m, np.eye(2))
            assert abs(np.trace(m)) < 1e-15

    def test_kron_order(self):
        """Leftmost axis acts on the most significant qubit"""
        zi = PauliString("ZI").matrix()
        assert np.allclose(np.diag(zi).real, [1, 1, -1, -1])

    def test_invalid_axis_rejected(self):
        """Only I, X, Y and Z are valid"""
        with pytest.raises(OperatorError):
            PauliString("XA")

    def test_term_needs_positive_weight(self):
        """Sign goes into the phase, not the weight"""
        with pytest.raises(OperatorError):
            PauliTerm(-1.0, 0.0, PauliString("X"))

    def test_identity_term_rejected(self):
        """The identity component is carried by identity_coeff"""
        with pytest.raises(OperatorError):
            PauliTerm(1.0, 0.0, PauliString("II"))


class TestDecompose:
    """Pauli decomposition of dense matrices"""

    def setup_method(self):
        self.rng = np.random.default_rng(7)

    def test_reconstructs_random_hermitian(self):
        """Expansion reproduces the matrix for 1 to 4 qubits"""
        for n in range(1, 5):
            dense = random_hermitian(n, self.rng)
            obs = decompose(dense)
            assert np.allclose(obs.dense(), dense, atol=1e-10)

    def test_deuteron_coefficients(self):
        """[[170, -35], [-35, 5]] = 87.5 - 35 X + 82.5 Z"""
        obs = decompose(np.array([[170.0, -35.0], [-35.0, 5.0]]))
        assert obs.identity_coeff == pytest.approx(87.5)
        coeffs = {t.string.axes: t.sign * t.weight for t in obs.terms}
        assert coeffs == pytest.approx({"X": -35.0, "Z": 82.5})

    def test_non_hermitian_rejected(self):
        """A non-Hermitian matrix is an error"""
        with pytest.raises(OperatorError):
            decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_non_power_of_two_rejected(self):
        """Dimension must be 2**n"""
        with pytest.raises(OperatorError):
            decompose(np.eye(3))

    def test_dict_round_trip(self):
        """to_dict and from_dict preserve the expansion"""
        obs = random_observable(2, self.rng)
        again = ObservableExpansion.from_dict(obs.to_dict())
        assert np.allclose(again.dense(), obs.dense())


class TestSpectralOracle:
    """Eigen-decomposition ground truth"""

    def setup_method(self):
        self.rng = np.random.default_rng(11)
        self.obs = random_observable(3, self.rng)
        self.state = PureState.random(3, self.rng)

    def test_expectation_matches_dense(self):
        """Oracle expectation equals <Psi|O|Psi>"""
        direct = np.vdot(self.state.amplitudes, self.obs.dense() @ self.state.amplitudes).real
        assert expectation(self.obs, self.state) == pytest.approx(direct, abs=1e-10)

    def test_populations_sum_to_one(self):
        """Eigenbasis populations form a distribution"""
        pops = spectral_oracle(self.obs).populations(self.state)
        assert pops.sum() == pytest.approx(1.0)
        assert np.all(pops >= 0)

    def test_odd_moments(self):
        """m_k = <O^(2k+1)> from matrix powers"""
        table = moments(self.obs, self.state, 2)
        dense = self.obs.dense()
        psi = self.state.amplitudes
        for k in range(3):
            power = np.linalg.matrix_power(dense, 2 * k + 1)
            assert table.m(k) == pytest.approx(np.vdot(psi, power @ psi).real, rel=1e-9, abs=1e-9)

    def test_variance_and_covariance(self):
        """Var[O] and Cov[O^2K, O] agree with their definitions"""
        table = moments(self.obs, self.state, 2)
        second = table.even_moments[1]
        assert table.variance == pytest.approx(second - table.mean ** 2, abs=1e-10)
        assert table.covariances[1] == pytest.approx(table.m(1) - second * table.mean, abs=1e-9)

    def test_eigenstate_has_zero_variance(self):
        """An eigenvector is a zero-variance state"""
        state = eigenstate(self.obs, 0)
        assert moments(self.obs, state, 1).variance == pytest.approx(0.0, abs=1e-9)

    def test_exact_evolution_is_unitary(self):
        """exp(i tau O) is unitary and matches the sine expectation"""
        u = exact_evolution(self.obs, 0.3)
        assert np.allclose(u @ u.conj().T, np.eye(8), atol=1e-12)
        sine = np.vdot(self.state.amplitudes, u @ self.state.amplitudes).imag
        assert exact_sine_expectation(self.obs, self.state, 0.3) == pytest.approx(sine, abs=1e-12)

    def test_dimension_mismatch(self):
        """A state of the wrong size is rejected"""
        with pytest.raises(OperatorError):
            expectation(self.obs, PureState.basis(2))


class TestNorms:
    """Coefficient norms and the R_O ratio"""

    def setup_method(self):
        self.obs = ObservableExpansion.from_paulis(87.5, {"X": -35.0, "Z": 82.5})

    def test_one_norms(self):
        """||O_T||_1 = 117.5, ||O||_1 = 205, ||O_T||_2^2 = 8031.25"""
        traceless, full, two = one_norms(self.obs)
        assert traceless == 117.5
        assert full == 205.0
        assert two ** 2 == pytest.approx(8031.25)

    def test_ratio_R(self):
        """R_O of the ground state is about 0.018"""
        r_o, r_max = ratio_R(self.obs, eigenstate(self.obs, 0))
        assert 0.0175 <= r_o <= 0.0185
        assert r_max == pytest.approx(205.0 / 117.5)

    def test_angle_state_pauli_means(self):
        """R_y(theta)|0> has <X> = sin(theta) and <Z> = cos(theta)"""
        state = PureState.from_angle(1.2)
        assert pauli_expectation(PauliString("X"), state) == pytest.approx(math.sin(1.2))
        assert pauli_expectation(PauliString("Z"), state) == pytest.approx(math.cos(1.2))

    def test_unnormalized_state_rejected(self):
        """States must have unit norm"""
        with pytest.raises(OperatorError):
            PureState(np.array([1.0, 1.0]))


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
