"""Dense operator algebra on finite lattice windows."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
TWO_PI = 2.0 * math.pi


class OperatorError(ValueError):
    """Raised when an operator violates the precondition of an operation."""


@dataclass(frozen=True)
class Window:
    """Index set of a truncated lattice.

    ``kind`` is ``"bilateral"`` for sites -N..N or ``"unilateral"`` for 0..N.
    Basis vectors are ordered site-major: index = site_offset * internal_dim + a.
    """

    kind: str
    N: int
    internal_dim: int = 1
    boundary_mode: str = "periodic"

    def __post_init__(self):
        if self.kind not in ("bilateral", "unilateral"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.boundary_mode not in ("periodic", "hard"):
            raise ValueError(f"unknown boundary mode {self.boundary_mode!r}")
        if self.N < 0 or self.internal_dim < 1:
            raise ValueError("window needs N >= 0 and internal_dim >= 1")

    @property
    def sites(self) -> np.ndarray:
        if self.kind == "bilateral":
            return np.arange(-self.N, self.N + 1)
        return np.arange(0, self.N + 1)

    @property
    def n_sites(self) -> int:
        return 2 * self.N + 1 if self.kind == "bilateral" else self.N + 1

    @property
    def dim(self) -> int:
        return self.n_sites * self.internal_dim

    @property
    def positions(self) -> np.ndarray:
        """Lattice position of every basis vector."""
        return np.repeat(self.sites, self.internal_dim)

    def index(self, site: int, a: int = 0) -> int:
        offset = site + self.N if self.kind == "bilateral" else site
        if not 0 <= offset < self.n_sites or not 0 <= a < self.internal_dim:
            raise IndexError(f"site {site} (component {a}) outside window")
        return offset * self.internal_dim + a

    def basis_vector(self, site: int, a: int = 0) -> np.ndarray:
        e = np.zeros(self.dim, dtype=complex)
        e[self.index(site, a)] = 1.0
        return e

    def interior_mask(self, halo: int) -> np.ndarray:
        """Basis vectors farther than ``halo`` sites from the truncation edge.

        For periodic windows the edge is the wrap between N and -N; for hard
        cutoffs it is the last site (and the first one for bilateral windows).
        """
        x = self.positions
        if self.kind == "unilateral":
            return x <= self.N - halo
        return np.abs(x) <= self.N - halo


def _as_window(w) -> Window:
    if isinstance(w, Window):
        return w
    raise TypeError("expected a Window")


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """Read-only complex matrix tied to a window."""

    matrix: np.ndarray
    window: Window

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        w = _as_window(self.window)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise OperatorError(f"matrix must be square, got shape {m.shape}")
        if m.shape[0] != w.dim:
            raise OperatorError(
                f"matrix dimension {m.shape[0]} does not match window size {w.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    # constructors
    @classmethod
    def identity(cls, window: Window) -> TruncatedOperator:
        return cls(np.eye(window.dim), window)

    @classmethod
    def zeros(cls, window: Window) -> TruncatedOperator:
        return cls(np.zeros((window.dim, window.dim)), window)

    @classmethod
    def diagonal(cls, values, window: Window) -> TruncatedOperator:
        return cls(np.diag(np.asarray(values, dtype=complex)), window)

    @classmethod
    def projector(cls, vectors: np.ndarray, window: Window) -> TruncatedOperator:
        """Orthogonal projection onto the span of orthonormal columns."""
        v = np.asarray(vectors, dtype=complex).reshape(window.dim, -1)
        return cls(v @ v.conj().T, window)

    @property
    def boundary_mode(self) -> str:
        return self.window.boundary_mode

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def H(self) -> TruncatedOperator:
        return TruncatedOperator(self.matrix.conj().T, self.window)

    def adjoint(self) -> TruncatedOperator:
        return self.H

    def _check(self, other: TruncatedOperator):
        if not isinstance(other, TruncatedOperator):
            return NotImplemented
        if other.window != self.window:
            raise OperatorError("operators live on different windows")
        return other

    def __add__(self, other):
        if np.isscalar(other):
            return TruncatedOperator(self.matrix + other * np.eye(self.dim), self.window)
        if self._check(other) is NotImplemented:
            return NotImplemented
        return TruncatedOperator(self.matrix + other.matrix, self.window)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if np.isscalar(other):
            return TruncatedOperator(self.matrix - other * np.eye(self.dim), self.window)
        if self._check(other) is NotImplemented:
            return NotImplemented
        return TruncatedOperator(self.matrix - other.matrix, self.window)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return TruncatedOperator(-self.matrix, self.window)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return TruncatedOperator(scalar * self.matrix, self.window)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TruncatedOperator(self.matrix / scalar, self.window)

    def __matmul__(self, other):
        if isinstance(other, TruncatedOperator):
            self._check(other)
            return TruncatedOperator(self.matrix @ other.matrix, self.window)
        return self.matrix @ np.asarray(other)

    def compress(self, mask: np.ndarray) -> np.ndarray:
        """Plain submatrix on the basis vectors selected by ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        return self.matrix[np.ix_(mask, mask)]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return hermiticity_defect(self.matrix) <= tol * max(1.0, np.abs(self.matrix).max(initial=0.0))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return np.abs(self.matrix.conj().T @ self.matrix - np.eye(self.dim)).max(initial=0.0) <= tol

    def min_eig(self) -> float:
        return float(herm_eig(self)[0][0]) if self.dim else math.inf


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.abs(m - m.conj().T).max(initial=0.0))


def op_norm(M) -> float:
    """Largest singular value."""
    m = M.matrix if isinstance(M, TruncatedOperator) else np.asarray(M)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def _hermitian_matrix(H) -> np.ndarray:
    m = H.matrix if isinstance(H, TruncatedOperator) else np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if hermiticity_defect(m) > HERMITIAN_TOL * scale:
        raise OperatorError(f"not Hermitian (defect {hermiticity_defect(m):.3e})")
    return 0.5 * (m + m.conj().T)


def herm_eig(H: TruncatedOperator):
    """Ascending eigenvalues and a unitary eigenvector matrix of a Hermitian operator."""
    m = _hermitian_matrix(H)
    evals, evecs = np.linalg.eigh(m)
    return evals, TruncatedOperator(evecs, H.window)


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix (symmetrized first); +inf if empty."""
    if m.size == 0:
        return math.inf
    return float(scipy.linalg.eigvalsh(0.5 * (m + m.conj().T), subset_by_index=[0, 0])[0])


def hermitian_function(H: TruncatedOperator, f: Callable[[np.ndarray], np.ndarray]) -> TruncatedOperator:
    """f(H) by the spectral theorem; diagonal inputs are handled entrywise."""
    m = _hermitian_matrix(H)
    if np.count_nonzero(m - np.diag(np.diag(m))) == 0:
        return TruncatedOperator(np.diag(f(np.diag(m).real).astype(complex)), H.window)
    evals, evecs = np.linalg.eigh(m)
    return TruncatedOperator((evecs * f(evals)) @ evecs.conj().T, H.window)


def parts(B: TruncatedOperator):
    """(Re B, Im B, |B|) with |B| = sqrt(B*B) from the singular value decomposition."""
    m = B.matrix
    re = 0.5 * (m + m.conj().T)
    im = (m - m.conj().T) / 2j
    _, sv, vh = np.linalg.svd(m)
    absolute = (vh.conj().T * sv) @ vh
    absolute = 0.5 * (absolute + absolute.conj().T)
    w = B.window
    return TruncatedOperator(re, w), TruncatedOperator(im, w), TruncatedOperator(absolute, w)


def real_part(B: TruncatedOperator) -> TruncatedOperator:
    return TruncatedOperator(0.5 * (B.matrix + B.matrix.conj().T), B.window)


def imag_part(B: TruncatedOperator) -> TruncatedOperator:
    return TruncatedOperator((B.matrix - B.matrix.conj().T) / 2j, B.window)


def abs_squared(B: TruncatedOperator) -> TruncatedOperator:
    """|B|^2 = B*B."""
    return TruncatedOperator(B.matrix.conj().T @ B.matrix, B.window)


def weight(A: TruncatedOperator, s: float, eps: float = 0.0) -> TruncatedOperator:
    """W_s(eps) = <A>^{-s} <eps A>^{s-1}, with <x> = sqrt(1 + x^2)."""
    if not 0.0 < s <= 1.0:
        raise OperatorError(f"weight exponent s={s} outside (0, 1]")
    if not 0.0 <= eps < 1.0:
        raise OperatorError(f"deformation parameter eps={eps} outside [0, 1)")

    def f(x):
        w = (1.0 + x * x) ** (-0.5 * s)
        if eps > 0.0 and s != 1.0:
            w = w * (1.0 + (eps * x) ** 2) ** (0.5 * (s - 1.0))
        return w

    return hermitian_function(A, f)


def unitary_eig(U: TruncatedOperator):
    """Eigen-angles in [0, 2pi) and an orthonormal eigenbasis of a unitary operator.

    The complex Schur form of a normal matrix is diagonal, so its unitary factor
    is an orthonormal eigenbasis even when eigenvalues are degenerate.
    """
    if not U.is_unitary():
        raise OperatorError("operator is not unitary")
    t, z = scipy.linalg.schur(U.matrix, output="complex")
    angles = np.mod(np.angle(np.diag(t)), TWO_PI)
    angles[angles >= TWO_PI] = 0.0
    return angles, z


def unitary_calculus(U: TruncatedOperator, phi) -> TruncatedOperator:
    """Phi(U) for Phi given as a function of the angle or as a Symbol."""
    angles, z = unitary_eig(U)
    if hasattr(phi, "evaluate"):
        values = np.asarray(phi.evaluate(angles), dtype=complex)
    else:
        values = np.asarray(phi(angles), dtype=complex) * np.ones_like(angles)
    return TruncatedOperator((z * values) @ z.conj().T, U.window)


def ad(A: TruncatedOperator, B: TruncatedOperator) -> TruncatedOperator:
    """Commutator AB - BA."""
    if A.window != B.window:
        raise OperatorError("operators live on different windows")
    return TruncatedOperator(A.matrix @ B.matrix - B.matrix @ A.matrix, A.window)


def position_ad(B: TruncatedOperator) -> TruncatedOperator:
    """Commutator [X, B] with the position operator X.

    On periodic windows the displacement x_j - x_k is taken as the minimal
    image modulo the period, so a matrix element that hops across the wrap
    sees its true hopping length instead of a jump of order 2N.
    """
    w = B.window
    x = w.positions.astype(float)
    delta = x[:, None] - x[None, :]
    if w.boundary_mode == "periodic" and w.kind == "bilateral":
        period = w.n_sites
        delta = np.mod(delta + period // 2, period) - period // 2
    return TruncatedOperator(delta * B.matrix, w)


def position_operator(window: Window) -> TruncatedOperator:
    return TruncatedOperator.diagonal(window.positions.astype(float), window)


# ---------------------------------------------------------------------------
# angle intervals

@dataclass(frozen=True)
class Arc:
    """Half-open counterclockwise arc [start, start + length) of the unit circle."""

    start: float
    length: float

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("arc length must be nonnegative")
        object.__setattr__(self, "start", float(self.start) % TWO_PI)
        object.__setattr__(self, "length", min(float(self.length), TWO_PI))

    @classmethod
    def between(cls, theta1: float, theta2: float) -> Arc:
        """Arc from theta1 counterclockwise to theta2."""
        if theta2 - theta1 >= TWO_PI:
            return cls(theta1, TWO_PI)
        return cls(theta1, (theta2 - theta1) % TWO_PI)

    @classmethod
    def full(cls) -> Arc:
        return cls(0.0, TWO_PI)

    @classmethod
    def empty(cls) -> Arc:
        return cls(0.0, 0.0)

    @property
    def stop(self) -> float:
        return self.start + self.length

    @property
    def is_full(self) -> bool:
        return self.length >= TWO_PI

    def relative(self, angles) -> np.ndarray:
        return np.mod(np.asarray(angles, dtype=float) - self.start, TWO_PI)

    def contains(self, angles) -> np.ndarray:
        if self.is_full:
            return np.ones(np.shape(angles), dtype=bool)
        return self.relative(angles) < self.length

    def complement(self) -> Arc:
        if self.is_full:
            return Arc.empty()
        if self.length == 0:
            return Arc.full()
        return Arc(self.stop, TWO_PI - self.length)

    def closure_inside(self, other: Arc) -> bool:
        """Closed self contained in the open arc other."""
        if other.is_full:
            return True
        if self.is_full:
            return False
        offset = float(other.relative(self.start))
        return offset > 0 and offset + self.length < other.length

    def distance_to_complement(self, other: Arc) -> float:
        """Angular distance from the closure of self to the complement of other."""
        if other.is_full:
            return math.inf
        if not self.closure_inside(other):
            return 0.0
        offset = float(other.relative(self.start))
        return min(offset, other.length - offset - self.length)

    def sample(self, n: int, endpoint: bool = True) -> np.ndarray:
        """n angles spread across the closed arc (in [0, 2pi))."""
        if n <= 0:
            return np.zeros(0)
        if self.is_full:
            t = np.arange(n) * TWO_PI / n
        else:
            t = np.linspace(0.0, self.length, n, endpoint=endpoint)
        return np.mod(self.start + t, TWO_PI)

    def to_list(self) -> list[float]:
        return [self.start, self.stop]


def bump_function(arc: Arc, height: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth function of the angle, positive exactly on the open arc."""
    if arc.length == 0:
        return lambda theta: np.zeros(np.shape(theta))

    def phi(theta):
        t = 2.0 * arc.relative(theta) / arc.length - 1.0
        out = np.zeros(np.shape(t))
        inside = np.abs(t) < 1.0
        out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
        return out

    return phi


# ---------------------------------------------------------------------------
# regularization family

@dataclass(frozen=True)
class FamilyPoint:
    eps: float
    S: TruncatedOperator
    B: TruncatedOperator
    V_eps: TruncatedOperator
    Q: TruncatedOperator
    q: TruncatedOperator
    remainder: TruncatedOperator


@dataclass(frozen=True, eq=False)
class RegularizedFamily:
    """eps-regularization V_eps = S_eps - eps B_eps of a contraction V.

    ``S`` and ``B`` are evaluators eps -> operator with derivatives ``dS``,
    ``dB``; ``commutator`` is the map X -> ad_A X used for ad_A V* and ad_A B.
    """

    V: TruncatedOperator
    adV: TruncatedOperator
    S: Callable[[float], TruncatedOperator]
    B: Callable[[float], TruncatedOperator]
    dS: Callable[[float], TruncatedOperator]
    dB: Callable[[float], TruncatedOperator]
    commutator: Callable[[TruncatedOperator], TruncatedOperator]
    epsilon_max: float = 1.0
    b_grid: tuple = (0.0,)

    def check_eps(self, eps: float):
        if not 0.0 <= eps <= self.epsilon_max:
            raise OperatorError(f"eps={eps} outside [0, {self.epsilon_max}]")

    def V_eps(self, eps: float) -> TruncatedOperator:
        self.check_eps(eps)
        return self.S(eps) - eps * self.B(eps)

    def T(self, eps: float, z: complex) -> TruncatedOperator:
        """T_eps(z) = 1 - z V_eps*."""
        return TruncatedOperator.identity(self.V.window) - z * self.V_eps(eps).H

    def at(self, eps: float) -> FamilyPoint:
        self.check_eps(eps)
        S, B = self.S(eps), self.B(eps)
        ad_Vstar = -self.adV.H
        if eps > 0:
            Q = (S.H - self.V.H) / eps - B.H
        else:
            Q = -B.H
        remainder = self.dS(eps) - eps * self.dB(eps) - eps * self.commutator(B)
        return FamilyPoint(eps, S, B, S - eps * B, Q, Q - ad_Vstar, remainder)

    @property
    def b(self) -> float:
        """sup of ||Q_eps|| over the sampling grid of eps."""
        return max(op_norm(self.at(e).Q) for e in self.b_grid)


def c2_family(V: TruncatedOperator, A: TruncatedOperator | None = None, *,
              commutator: Callable | None = None, epsilon_max: float = 1.0) -> RegularizedFamily:
    """Family S_eps = V, B_eps = ad_A V available when V is twice A-differentiable."""
    if commutator is None:
        if A is None:
            raise OperatorError("c2_family needs A or a commutator map")
        commutator = lambda X: ad(A, X)  # noqa: E731
    adV = commutator(V)
    zero = TruncatedOperator.zeros(V.window)
    return RegularizedFamily(
        V=V, adV=adV,
        S=lambda eps: V, B=lambda eps: adV,
        dS=lambda eps: zero, dB=lambda eps: zero,
        commutator=commutator, epsilon_max=epsilon_max, b_grid=(0.0,),
    )
