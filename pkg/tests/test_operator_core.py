import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contraction_lap.operator_core import (
    Arc, OperatorError, TruncatedOperator, Window, ad, bump_function, c2_family, herm_eig,
    op_norm, parts, position_ad, position_operator, unitary_calculus, weight,
)
from contraction_lap.model_builders import Symbol, build_fundamental, circulant

from conftest import as_op, random_contraction, random_hermitian, random_matrix, random_unitary

TOL = 1e-10

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=12)


def power_iteration_norm(m, iters=5000):
    x = np.ones(m.shape[1], dtype=complex)
    g = m.conj().T @ m
    lam = 0.0
    for _ in range(iters):
        y = g @ x
        lam_new = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
        if abs(lam_new - lam) < 1e-15 * lam_new:
            break
        lam = lam_new
    return math.sqrt(lam_new)


class TestWindow:
    def test_sizes(self):
        w = Window("bilateral", 3, internal_dim=2)
        assert w.n_sites == 7 and w.dim == 14
        assert list(w.positions[:4]) == [-3, -3, -2, -2]
        assert w.index(0, 1) == 7

    def test_dimension_mismatch(self):
        with pytest.raises(OperatorError):
            TruncatedOperator(np.eye(3), Window("bilateral", 2))

    def test_read_only(self):
        op = as_op(np.eye(2))
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 2.0

    def test_window_mismatch(self):
        a = TruncatedOperator.identity(Window("bilateral", 1))
        b = TruncatedOperator.identity(Window("unilateral", 2, boundary_mode="hard"))
        with pytest.raises(OperatorError):
            a @ b
        with pytest.raises(OperatorError):
            ad(a, b)

    def test_double_adjoint_exact(self, rng):
        m = as_op(random_matrix(rng, 6))
        assert np.array_equal(m.H.H.matrix, m.matrix)


class TestOpNorm:
    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_identity(self, n):
        assert op_norm(as_op(np.eye(n))) == pytest.approx(1.0, abs=1e-15)

    def test_diagonal(self):
        assert op_norm(as_op(np.diag([0.5, -2.0]))) == pytest.approx(2.0)

    def test_zero(self):
        assert op_norm(as_op(np.zeros((3, 3)))) == 0.0

    def test_power_iteration_oracle(self, rng):
        m = random_matrix(rng, 8)
        assert op_norm(as_op(m)) == pytest.approx(power_iteration_norm(m), rel=1e-8)


class TestHermEig:
    def test_diagonal(self):
        evals, _ = herm_eig(as_op(np.diag([3.0, -1.0, 2.0])))
        np.testing.assert_allclose(evals, [-1, 2, 3])

    def test_swap(self):
        evals, _ = herm_eig(as_op([[0, 1], [1, 0]]))
        np.testing.assert_allclose(evals, [-1, 1], atol=1e-15)

    def test_not_hermitian(self):
        with pytest.raises(OperatorError, match="not Hermitian"):
            herm_eig(as_op([[0, 1], [0, 0]]))

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(min_value=1, max_value=16))
    def test_reconstruction(self, seed, n):
        h = random_hermitian(np.random.default_rng(seed), n)
        evals, q = herm_eig(as_op(h))
        q = q.matrix
        assert np.all(np.diff(evals) >= 0)
        assert np.abs(q @ np.diag(evals) @ q.conj().T - h).max() <= TOL * max(1, np.linalg.norm(h, 2))
        assert np.abs(q.conj().T @ q - np.eye(n)).max() <= TOL


class TestParts:
    def test_hermitian_input(self, rng):
        h = random_hermitian(rng, 5)
        re, im, _ = parts(as_op(h))
        np.testing.assert_allclose(re.matrix, h, atol=1e-15)
        np.testing.assert_allclose(im.matrix, 0, atol=1e-15)

    def test_imaginary_unit(self):
        re, im, ab = parts(as_op(1j * np.eye(3)))
        np.testing.assert_allclose(im.matrix, np.eye(3))
        np.testing.assert_allclose(re.matrix, 0)
        np.testing.assert_allclose(ab.matrix, np.eye(3), atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(seeds, dims)
    def test_modulus_and_decomposition(self, seed, n):
        b = random_matrix(np.random.default_rng(seed), n)
        re, im, ab = parts(as_op(b))
        assert np.array_equal(re.matrix + 1j * im.matrix, b) or np.abs(re.matrix + 1j * im.matrix - b).max() < 1e-14
        a = ab.matrix
        assert np.abs(a @ a - b.conj().T @ b).max() <= TOL * np.linalg.norm(b, 2) ** 2
        assert np.linalg.eigvalsh(a).min() >= -1e-12


class TestWeight:
    def test_diagonal_formula(self):
        w = Window("bilateral", 4)
        A = position_operator(w)
        W = weight(A, 0.7)
        np.testing.assert_allclose(np.diag(W.matrix).real, (1 + w.positions ** 2.0) ** (-0.35))

    @pytest.mark.parametrize("eps", [0.0, 0.3, 0.9])
    def test_s_one_ignores_eps(self, eps, rng):
        A = as_op(random_hermitian(rng, 6))
        np.testing.assert_allclose(weight(A, 1.0, eps).matrix, weight(A, 1.0, 0.0).matrix, atol=1e-14)

    @pytest.mark.parametrize("s,eps", [(0.6, 0.0), (1.0, 0.5), (0.3, 0.2)])
    def test_zero_generator(self, s, eps):
        np.testing.assert_allclose(weight(as_op(np.zeros((4, 4))), s, eps).matrix, np.eye(4))

    @pytest.mark.parametrize("s", [0.0, -0.1, 1.2])
    def test_bad_exponent(self, s):
        with pytest.raises(OperatorError):
            weight(as_op(np.eye(2)), s)

    def test_bad_eps(self):
        with pytest.raises(OperatorError):
            weight(as_op(np.eye(2)), 0.7, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(seeds, st.floats(0.05, 1.0), st.floats(0.0, 0.99))
    def test_contractive(self, seed, s, eps):
        A = as_op(5 * random_hermitian(np.random.default_rng(seed), 7))
        assert op_norm(weight(A, s, eps)) <= 1 + 1e-12


class TestUnitaryCalculus:
    @pytest.fixture
    def U(self, rng):
        return as_op(random_unitary(rng, 9))

    def test_constant_one(self, U):
        np.testing.assert_allclose(unitary_calculus(U, lambda t: np.ones_like(t)).matrix, np.eye(9), atol=1e-12)

    def test_identity_function(self, U):
        np.testing.assert_allclose(unitary_calculus(U, lambda t: np.exp(1j * t)).matrix, U.matrix, atol=1e-12)

    def test_symbol_input(self, U):
        sym = Symbol.from_dict({2: 1.0})
        np.testing.assert_allclose(unitary_calculus(U, sym).matrix, U.matrix @ U.matrix, atol=1e-12)

    def test_bump_norm(self, U):
        phi = bump_function(Arc.between(0.5, 2.5), height=0.8)
        out = unitary_calculus(U, phi)
        assert op_norm(out) <= 0.8 + 1e-9
        assert np.linalg.eigvalsh(out.matrix).min() >= -1e-9

    def test_degenerate_spectrum(self, rng):
        Z = random_unitary(rng, 6)
        U = as_op(Z @ np.diag([1, 1, 1, -1, -1, 1j]) @ Z.conj().T)
        P = unitary_calculus(U, lambda t: (t < 1.0).astype(float))
        np.testing.assert_allclose(P.matrix @ P.matrix, P.matrix, atol=1e-10)
        assert np.trace(P.matrix).real == pytest.approx(3.0)

    def test_not_unitary(self):
        with pytest.raises(OperatorError):
            unitary_calculus(as_op(2 * np.eye(2)), lambda t: t)


class TestCommutator:
    def test_commuting_diagonals(self):
        assert np.all(ad(as_op(np.diag([1.0, 2, 3])), as_op(np.diag([4.0, 5, 6]))).matrix == 0)

    def test_number_shift_relation(self):
        w = Window("bilateral", 2)
        S = circulant(Symbol.monomial(1), w)
        C = ad(position_operator(w), S).matrix
        interior = [1, 2, 3, 4]  # rows of e_{-1}..e_2 (row 0 receives the wrap)
        np.testing.assert_allclose(C[interior], S.matrix[interior])
        assert C[0, 4] == pytest.approx(-4.0)  # the seam: e_2 -> e_{-2} sees x jump by -4

    def test_minimal_image_commutator_removes_seam(self):
        w = Window("bilateral", 2)
        S = circulant(Symbol.monomial(1), w)
        np.testing.assert_allclose(position_ad(S).matrix, S.matrix)

    def test_adjoint_identity(self, rng):
        A, B = as_op(random_hermitian(rng, 5)), as_op(random_matrix(rng, 5))
        np.testing.assert_allclose(ad(A, B).H.matrix, -ad(A, B.H).matrix, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(seeds, dims)
    def test_derivation(self, seed, n):
        r = np.random.default_rng(seed)
        A, B, C = (as_op(random_matrix(r, n)) for _ in range(3))
        lhs = ad(A, B @ C).matrix
        rhs = (ad(A, B) @ C + B @ ad(A, C)).matrix
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(1, np.abs(lhs).max())

    @settings(max_examples=25, deadline=None)
    @given(seeds, dims)
    def test_unitary_conjugation(self, seed, n):
        r = np.random.default_rng(seed)
        A, U = as_op(random_hermitian(r, n)), as_op(random_unitary(r, n))
        target = (U.H @ A @ U - A).matrix
        np.testing.assert_allclose((U.H @ ad(A, U)).matrix, target, atol=1e-12)
        np.testing.assert_allclose((-(ad(A, U.H) @ U)).matrix, target, atol=1e-12)


class TestArc:
    def test_wrap(self):
        arc = Arc.between(5.5, 0.5)
        assert arc.contains(0.1) and arc.contains(6.0) and not arc.contains(1.0)

    def test_half_open(self):
        arc = Arc.between(1.0, 2.0)
        assert arc.contains(1.0) and not arc.contains(2.0)
        assert arc.complement().contains(2.0)

    def test_distance(self):
        inner, outer = Arc.between(math.pi / 4, 3 * math.pi / 4), Arc.between(math.pi / 8, 7 * math.pi / 8)
        assert inner.closure_inside(outer)
        assert inner.distance_to_complement(outer) == pytest.approx(math.pi / 8)
        assert not outer.closure_inside(inner)
        assert inner.distance_to_complement(Arc.full()) == math.inf


class TestC2Family:
    @pytest.fixture
    def family(self, rng):
        A = as_op(np.diag(np.arange(6.0)))
        return c2_family(as_op(random_contraction(rng, 6)), A), A

    def test_eps_zero(self, family):
        fam, _ = family
        np.testing.assert_array_equal(fam.V_eps(0.0).matrix, fam.V.matrix)

    @pytest.mark.parametrize("eps", [0.01, 0.2, 0.7])
    def test_perturbation_of_T(self, family, eps):
        fam, _ = family
        z = 0.8 * np.exp(0.4j)
        diff = op_norm(fam.T(eps, z) - fam.T(0.0, z))
        assert diff == pytest.approx(eps * abs(z) * op_norm(fam.at(eps).Q), rel=1e-12)
        assert diff <= fam.b * eps + 1e-14

    @pytest.mark.parametrize("eps", [0.05, 0.5])
    def test_family_identities(self, family, eps):
        fam, A = family
        pt = fam.at(eps)
        np.testing.assert_allclose(pt.Q.matrix, -ad(A, fam.V).H.matrix, atol=1e-13)
        np.testing.assert_allclose(pt.q.matrix, 0, atol=1e-13)
        # the remainder is -eps ad_A(ad_A V): it does not vanish for a generic V
        np.testing.assert_allclose(pt.remainder.matrix, -eps * ad(A, ad(A, fam.V)).matrix, atol=1e-12)

    def test_continuity_at_zero(self, family):
        fam, A = family
        pt = fam.at(0.0)
        np.testing.assert_array_equal(pt.S.matrix, fam.V.matrix)
        np.testing.assert_allclose(pt.B.matrix, ad(A, fam.V).matrix)

    def test_remainder_matches_derivative_identity(self, family):
        """d/deps G_eps = ad_A G_eps + z G_eps Qcal* G_eps, checked by central differences."""
        fam, A = family
        z, eps, h = 0.6 * np.exp(1.1j), 0.3, 1e-5
        G = lambda e: np.linalg.inv(fam.T(e, z).matrix)  # noqa: E731
        dG = (G(eps + h) - G(eps - h)) / (2 * h)
        g = G(eps)
        rhs = A.matrix @ g - g @ A.matrix + z * g @ fam.at(eps).remainder.matrix.conj().T @ g
        np.testing.assert_allclose(dG, rhs, atol=1e-7)
