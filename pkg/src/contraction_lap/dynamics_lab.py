"""Powers of a contraction, correlation sums and finite unitary dilations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operator_core import OperatorError, TruncatedOperator, op_norm

CONTRACTION_TOL = 1e-10
RANK_TOL = 1e-8


def _check_contraction(V: TruncatedOperator | np.ndarray):
    nrm = op_norm(V)
    if nrm > 1 + CONTRACTION_TOL:
        raise OperatorError(f"not a contraction (norm {nrm:.12g})")


def _matrix(V) -> np.ndarray:
    return V.matrix if isinstance(V, TruncatedOperator) else np.asarray(V, dtype=complex)


@dataclass
class Trajectory:
    psi0: np.ndarray
    states: np.ndarray  # row n holds V^n psi0
    norms: np.ndarray

    def rows(self) -> list:
        return [[n, float(v)] for n, v in enumerate(self.norms)]

    columns = ["n", "norm"]


def evolve(V, psi, Nmax: int) -> Trajectory:
    """Orbit V^n psi for n = 0..Nmax."""
    _check_contraction(V)
    v = _matrix(V)
    x = np.asarray(psi, dtype=complex)
    states = np.empty((Nmax + 1, x.size), dtype=complex)
    states[0] = x
    for n in range(1, Nmax + 1):
        states[n] = v @ states[n - 1]
    return Trajectory(x, states, np.linalg.norm(states, axis=1))


def ac_constant(V, psi, Nmax: int | None = None) -> float:
    """sup over unit phi of sum_{n<=Nmax} |<phi, V^n psi>|^2, i.e. the top Gram eigenvalue."""
    v = _matrix(V)
    Nmax = 4 * v.shape[0] if Nmax is None else Nmax
    states = np.empty((Nmax + 1, v.shape[0]), dtype=complex)
    states[0] = np.asarray(psi, dtype=complex)
    for n in range(1, Nmax + 1):
        states[n] = v @ states[n - 1]
    gram = states.conj() @ states.T
    return float(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))[-1])


@dataclass
class KatoSums:
    forward: float
    adjoint: float
    forward_partial: np.ndarray
    adjoint_partial: np.ndarray

    @property
    def total(self) -> float:
        return self.forward + self.adjoint

    def rows(self) -> list:
        return [[n, float(f), float(a)] for n, (f, a) in enumerate(zip(self.forward_partial, self.adjoint_partial))]

    columns = ["n", "forward_partial", "adjoint_partial"]

    def __iter__(self):
        return iter((self.forward, self.adjoint))


def kato_sums(W, V, phi, Nmax: int | None = None) -> KatoSums:
    """sum_{n=0}^{Nmax} ||W V^n phi||^2 and sum_{n=1}^{Nmax} ||W V*^n phi||^2.

    The adjoint sum starts at n = 1 so that the total is the sum over all
    integers n of ||W U^n phi||^2 for a unitary dilation U of V; the n = 0
    term is counted once.
    """
    w, v = _matrix(W), _matrix(V)
    Nmax = 4 * v.shape[0] if Nmax is None else Nmax
    x = np.asarray(phi, dtype=complex)
    y = v.conj().T @ x
    fwd, adj = np.zeros(Nmax + 1), np.zeros(Nmax + 1)
    for n in range(Nmax + 1):
        fwd[n] = np.linalg.norm(w @ x) ** 2
        if n >= 1:
            adj[n] = np.linalg.norm(w @ y) ** 2
            y = v.conj().T @ y
        x = v @ x
    fp, ap = np.cumsum(fwd), np.cumsum(adj)
    return KatoSums(float(fp[-1]), float(ap[-1]), fp, ap)


def defect_operators(V) -> tuple[np.ndarray, np.ndarray]:
    """D_V = sqrt(1 - V*V) and D_{V*} = sqrt(1 - VV*) from one SVD.

    Sharing the singular values keeps the intertwining V D_V = D_{V*} V exact
    to rounding even for singular values at 1.
    """
    v = _matrix(V)
    X, s, Yh = np.linalg.svd(v)
    d = np.sqrt(np.clip(1.0 - s * s, 0.0, None))
    DV = (Yh.conj().T * d) @ Yh
    DVs = (X * d) @ X.conj().T
    return DV, DVs


@dataclass
class DilationOperator:
    matrix: np.ndarray
    depth: int
    block: int

    def embed(self, psi) -> np.ndarray:
        out = np.zeros(self.matrix.shape[0], dtype=complex)
        out[: self.block] = psi
        return out

    def compress(self, M: np.ndarray) -> np.ndarray:
        return M[: self.block, : self.block]

    def unitarity_residual(self) -> float:
        u = self.matrix
        eye = np.eye(u.shape[0])
        return float(max(np.abs(u.conj().T @ u - eye).max(), np.abs(u @ u.conj().T - eye).max()))

    def compression_residual(self, V) -> float:
        """max over 0 <= n <= depth of ||P U^n P - V^n||."""
        v = _matrix(V)
        Un, Vn = np.eye(self.matrix.shape[0], dtype=complex), np.eye(self.block, dtype=complex)
        worst = 0.0
        for n in range(self.depth + 1):
            worst = max(worst, op_norm(self.compress(Un) - Vn))
            Un, Vn = self.matrix @ Un, v @ Vn
        return worst


def dilate(V, K: int = 1) -> DilationOperator:
    """Unitary dilation with P U^n P = V^n for 0 <= n <= K on H^(K+1).

    K = 1 is the two-block matrix [[V, D_{V*}], [D_V, -V*]]; for K > 1 the
    defect component travels down a chain of K - 1 identity blocks before it
    feeds back into the first block.
    """
    if K < 1:
        raise ValueError("dilation depth K must be >= 1")
    _check_contraction(V)
    v = _matrix(V)
    n = v.shape[0]
    DV, DVs = defect_operators(v)
    U = np.zeros(((K + 1) * n, (K + 1) * n), dtype=complex)
    blk = lambda i, j: (slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n))  # noqa: E731
    U[blk(0, 0)] = v
    U[blk(1, 0)] = DV
    U[blk(0, K)] = DVs
    U[blk(1, K)] = -v.conj().T
    for i in range(2, K + 1):
        U[blk(i, i - 1)] = np.eye(n)
    return DilationOperator(U, K, n)


def correlation_identity(dilation: DilationOperator, V, phi, psi) -> tuple[float, float]:
    """Both sides of sum_{|n|<=K} |<phi^, U^n psi^>|^2 = sum_{0<=n<=K} |<phi,V^n psi>|^2 + sum_{0<n<=K} |<phi,V*^n psi>|^2."""
    v = _matrix(V)
    u = dilation.matrix
    ph, ps = dilation.embed(phi), dilation.embed(psi)
    lhs = 0.0
    fwd, bwd = ps.copy(), ps.copy()
    for n in range(dilation.depth + 1):
        lhs += abs(np.vdot(ph, fwd)) ** 2
        if n:
            lhs += abs(np.vdot(ph, bwd)) ** 2
        fwd = u @ fwd
        bwd = u.conj().T @ bwd
    rhs = 0.0
    x, y = np.asarray(psi, dtype=complex), np.asarray(psi, dtype=complex)
    for n in range(dilation.depth + 1):
        rhs += abs(np.vdot(phi, x)) ** 2
        if n:
            rhs += abs(np.vdot(phi, y)) ** 2
        x = v @ x
        y = v.conj().T @ y
    return float(lhs), float(rhs)


def cnu_split(V, rank_tol: float = RANK_TOL):
    """Projectors onto the unitary part and the completely non-unitary part of V.

    The unitary part is the joint kernel of 1 - V*^m V^m and 1 - V^m V*^m for
    m <= dim; these are positive, so it is the kernel of their sum.
    """
    _check_contraction(V)
    v = _matrix(V)
    n = v.shape[0]
    S = np.zeros((n, n), dtype=complex)
    Vm = np.eye(n, dtype=complex)
    for _ in range(n):
        Vm = v @ Vm
        S += 2 * np.eye(n) - Vm.conj().T @ Vm - Vm @ Vm.conj().T
    evals, evecs = np.linalg.eigh(0.5 * (S + S.conj().T))
    kernel = evecs[:, evals <= rank_tol * max(1, 2 * n)]
    Pu = kernel @ kernel.conj().T
    return Pu, np.eye(n) - Pu
