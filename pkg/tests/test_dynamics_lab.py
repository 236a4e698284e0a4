import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contraction_lap.operator_core import OperatorError
from contraction_lap.model_builders import block_model, build_forward_shift, build_fundamental
from contraction_lap.dynamics_lab import (
    ac_constant, cnu_split, correlation_identity, defect_operators, dilate, evolve, kato_sums,
)

from conftest import random_contraction, random_unitary

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def unit(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


class TestEvolve:
    def test_unitary_preserves_norm(self, rng):
        traj = evolve(random_unitary(rng, 6), unit(rng, 6), 20)
        np.testing.assert_allclose(traj.norms, 1, atol=1e-12)

    def test_forward_shift_loses_mass_at_edge(self):
        m = build_forward_shift(5)
        traj = evolve(m.V, m.window.basis_vector(0), 7)
        np.testing.assert_allclose(traj.norms, [1] * 6 + [0, 0])
        np.testing.assert_allclose(traj.states[3], m.window.basis_vector(3))

    def test_fundamental_orbit(self):
        m = build_fundamental(8)
        w = m.window
        traj = evolve(m.V, w.basis_vector(1), 6)
        for n in range(7):
            np.testing.assert_allclose(traj.states[n], w.basis_vector(1 + n))

    def test_rejects_expansion(self):
        with pytest.raises(OperatorError):
            evolve(2 * np.eye(2), np.ones(2), 3)


class TestAcConstant:
    def test_forward_shift_orthonormal_orbit(self):
        m = build_forward_shift(10)
        assert ac_constant(m.V, m.window.basis_vector(0)) == pytest.approx(1.0)

    def test_zero_contraction(self, rng):
        psi = unit(rng, 4)
        assert ac_constant(np.zeros((4, 4)), psi) == pytest.approx(1.0)

    def test_fundamental_orbit(self):
        m = build_fundamental(8)
        e1 = m.window.basis_vector(1)
        # the orbit e_1, ..., e_8 is orthonormal; the wrap to -8 then runs back to -1 and dies at 0
        assert ac_constant(m.V, e1) == pytest.approx(1.0)

    def test_monotone_in_horizon(self, rng):
        V, psi = random_contraction(rng, 6), unit(rng, 6)
        vals = [ac_constant(V, psi, N) for N in (0, 2, 5, 20)]
        assert vals[0] == pytest.approx(1.0)
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


class TestKatoSums:
    def test_zero_weight(self, rng):
        fwd, adj = kato_sums(np.zeros((4, 4)), random_contraction(rng, 4), unit(rng, 4), 10)
        assert fwd == 0 and adj == 0

    @pytest.mark.parametrize("s", [0.6, 1.0])
    def test_diagonal_weight_on_shift(self, s):
        """For the shift and W = diag(<x>^{-s}) the sums are series in k + n."""
        m = build_forward_shift(40)
        k = 3
        W = np.diag((1 + m.window.positions ** 2.0) ** (-s / 2))
        res = kato_sums(W, m.V, m.window.basis_vector(k), 60)
        fwd = sum((1 + (k + n) ** 2) ** (-s) for n in range(0, 40 - k + 1))
        adj = sum((1 + (k - n) ** 2) ** (-s) for n in range(1, k + 1))
        assert res.forward == pytest.approx(fwd, rel=1e-12)
        assert res.adjoint == pytest.approx(adj, rel=1e-12)

    def test_unitary_linear_growth(self, rng):
        U, phi = random_unitary(rng, 5), unit(rng, 5)
        res = kato_sums(np.eye(5), U, phi, 30)
        np.testing.assert_allclose(res.forward_partial, np.arange(1, 32), rtol=1e-12)
        assert res.adjoint == pytest.approx(30)
        assert res.total == pytest.approx(61)


class TestDilation:
    def test_unitary_input(self, rng):
        U = random_unitary(rng, 4)
        d = dilate(U, 2)
        assert d.unitarity_residual() <= 1e-12 and d.compression_residual(U) <= 1e-12

    def test_zero_contraction_is_swap(self):
        d = dilate(np.zeros((1, 1)), 1)
        np.testing.assert_allclose(d.matrix, [[0, 1], [1, 0]])

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.integers(1, 4), st.floats(0.1, 1.0))
    def test_random_contractions(self, seed, K, norm):
        V = random_contraction(np.random.default_rng(seed), 5, norm)
        d = dilate(V, K)
        assert d.unitarity_residual() <= 1e-10
        assert d.compression_residual(V) <= 1e-10

    def test_compression_stops_after_depth(self, rng):
        V = random_contraction(rng, 4, 0.8)
        for K in (1, 3):
            d = dilate(V, K)
            UK1 = np.linalg.matrix_power(d.matrix, K + 1)
            assert np.linalg.norm(d.compress(UK1) - np.linalg.matrix_power(V, K + 1), 2) > 1e-3

    def test_defect_intertwining(self, rng):
        V = random_contraction(rng, 6)
        DV, DVs = defect_operators(V)
        np.testing.assert_allclose(V @ DV, DVs @ V, atol=1e-12)
        np.testing.assert_allclose(DV @ DV, np.eye(6) - V.conj().T @ V, atol=1e-12)

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            dilate(np.zeros((2, 2)), 0)

    def test_correlation_identity(self, rng):
        V = random_contraction(rng, 5, 0.9)
        d = dilate(V, 4)
        lhs, rhs = correlation_identity(d, V, unit(rng, 5), unit(rng, 5))
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestCnuSplit:
    def test_unitary(self, rng):
        Pu, Pc = cnu_split(random_unitary(rng, 5))
        np.testing.assert_allclose(Pu, np.eye(5), atol=1e-10)
        np.testing.assert_allclose(Pc, 0, atol=1e-10)

    def test_forward_shift_is_completely_non_unitary(self):
        Pu, _ = cnu_split(build_forward_shift(6).V)
        assert np.trace(Pu).real == pytest.approx(0, abs=1e-10)

    def test_block_model_selects_first_block(self, rng):
        m = block_model(random_unitary(rng, 3), random_unitary(rng, 3), 0.9 * np.eye(3), 0.8 * np.eye(3))
        Pu, Pc = cnu_split(m.V)
        expected = np.diag([1, 1, 1, 0, 0, 0])
        np.testing.assert_allclose(Pu, expected, atol=1e-10)
        np.testing.assert_allclose(Pu + Pc, np.eye(6))

    def test_strict_contraction(self, rng):
        Pu, _ = cnu_split(random_contraction(rng, 5, 0.9))
        assert np.abs(Pu).max() <= 1e-10
