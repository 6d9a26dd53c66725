#!/usr/bin/env python3
"""
Tests for the two-level deuteron benchmark
"""

import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from sqpe_estimators.deuteron import (
    ansatz_energy,
    deuteron,
    deuteron_observable,
    optimal_angle,
)
from sqpe_estimators.oa import accuracy_budget
from sqpe_estimators.operators import PauliString, PureState, expectation, pauli_expectation


class TestDeuteronBenchmark:
    """Reference values of H = 87.5 - 35 X + 82.5 Z"""

    def setup_method(self):
        self.bench = deuteron()
        self.refs = self.bench.references

    def test_ground_energy(self):
        """E_gs = 87.5 - sqrt(8031.25), about -2.1174 MeV"""
        assert self.refs["E_gs"] == pytest.approx(-2.1174, abs=1e-3)
        assert self.refs["E_gs"] == pytest.approx(87.5 - math.sqrt(8031.25), abs=1e-9)

    def test_spectrum(self):
        """Eigenvalues sum to the trace 175"""
        assert self.refs["eigenvalue_sum"] == pytest.approx(175.0)
        assert self.refs["E_excited"] == pytest.approx(175.0 + 2.1174, abs=1e-3)

    def test_norms(self):
        """||O_T||_1 = 117.5, ||O||_1 = 205, ||O_T||_2^2 = 8031.25"""
        assert self.refs["traceless_one_norm"] == 117.5
        assert self.refs["full_one_norm"] == 205.0
        assert self.refs["traceless_two_norm_sq"] == pytest.approx(8031.25)

    def test_pauli_means(self):
        """<X> = 0.39055 and <Z> = -0.92058 in the ground state"""
        state = self.bench.ground_state
        assert pauli_expectation(PauliString("X"), state) == pytest.approx(0.39055, abs=1e-4)
        assert pauli_expectation(PauliString("Z"), state) == pytest.approx(-0.92058, abs=1e-4)

    def test_third_moment(self):
        """<O^3> = E_gs^3 for the eigenstate"""
        assert self.refs["m1"] == pytest.approx(self.refs["E_gs"] ** 3, rel=1e-9)

    def test_ratio(self):
        """R_O = |E_gs| / 117.5"""
        assert self.refs["R_O"] == pytest.approx(2.1174 / 117.5, rel=1e-3)
        assert self.refs["R_O_max"] == pytest.approx(205.0 / 117.5)

    def test_accuracy_budget(self):
        """N_A(1%) = (117.5 / 0.021174)^2"""
        budget = accuracy_budget(self.bench.observable, self.bench.ground_state, 0.01)
        assert budget == pytest.approx(3.0794e7, rel=1e-3)


class TestAnsatz:
    """One-parameter R_y ansatz"""

    def test_energy_matches_expectation(self):
        """E(theta) equals <O> in R_y(theta)|0>"""
        obs = deuteron_observable()
        for theta in (0.0, 0.7, 2.0, 4.5):
            assert ansatz_energy(theta) == pytest.approx(expectation(obs, PureState.from_angle(theta)))

    def test_minimum_is_ground_energy(self):
        """The stationary angle reaches E_gs"""
        bench = deuteron()
        assert bench.references["E_theta_min"] == pytest.approx(bench.references["E_gs"], abs=1e-9)

    def test_minimum_is_stationary(self):
        """Neighbouring angles have higher energy"""
        theta = optimal_angle()
        e = ansatz_energy(theta)
        assert ansatz_energy(theta + 1e-3) > e
        assert ansatz_energy(theta - 1e-3) > e
        assert 0 <= deuteron().references["theta_min"] < 2 * math.pi


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
