"""Trigonometric symbols and truncated example models (U, P, Q, V, A)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .operator_core import (
    OperatorError, TruncatedOperator, Window, ad, hermiticity_defect, op_norm,
    position_ad, position_operator,
)

SYMBOL_TOL = 1e-10
MODEL_TOL = 1e-10

FAMILIES = ("fundamental", "forward-shift", "toeplitz", "quantum-walk")


class SymbolError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Symbol:
    """Trigonometric polynomial h(theta) = sum_n c_n e^{i n theta}, n = -M..M.

    ``coefficients`` has shape (2M+1,) for scalar symbols or (2M+1, d, d) for
    matrix-valued ones; entry j holds the coefficient of index j - M.
    """

    coefficients: np.ndarray
    grid_size: int = 256

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.ndim not in (1, 3) or c.shape[0] % 2 == 0:
            raise SymbolError("coefficients need odd length 2M+1 (scalar or d x d blocks)")
        if c.ndim == 3 and c.shape[1] != c.shape[2]:
            raise SymbolError("matrix coefficients must be square")
        grid = max(int(self.grid_size), c.shape[0])
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "grid_size", grid)

    # construction helpers
    @classmethod
    def from_dict(cls, coeffs: dict, grid_size: int = 256) -> Symbol:
        """Scalar symbol from a mapping index -> coefficient."""
        M = max((abs(int(n)) for n in coeffs), default=0)
        c = np.zeros(2 * M + 1, dtype=complex)
        for n, v in coeffs.items():
            c[int(n) + M] += complex(v)
        return cls(c, grid_size)

    @classmethod
    def monomial(cls, m: int, value: complex = 1.0) -> Symbol:
        return cls.from_dict({m: value})

    @classmethod
    def constant(cls, value) -> Symbol:
        v = np.asarray(value, dtype=complex)
        return cls(v[None, ...] if v.ndim == 2 else np.array([complex(value)]))

    @classmethod
    def from_samples(cls, samples: np.ndarray, M: int, grid_size: int = 256) -> Symbol:
        """Coefficients |n| <= M of a function sampled on the uniform grid."""
        samples = np.asarray(samples, dtype=complex)
        G = samples.shape[0]
        if 2 * M + 1 > G:
            raise SymbolError("grid too coarse for the requested bandwidth")
        hat = np.fft.fft(samples, axis=0) / G
        idx = np.arange(-M, M + 1) % G
        return cls(hat[idx], grid_size)

    @classmethod
    def from_phase(cls, phase: Symbol, tail_tol: float = 1e-15, max_M: int | None = None,
                   grid_size: int = 256) -> Symbol:
        """Unitary scalar symbol exp(i phi) for a real trigonometric phase phi.

        The exact exponential has infinitely many coefficients; it is truncated
        at the smallest bandwidth beyond which every coefficient is below
        ``tail_tol``.
        """
        G = 4096
        theta = 2 * math.pi * np.arange(G) / G
        values = np.exp(1j * phase.evaluate(theta).real)
        hat = np.fft.fft(values) / G
        mags = np.abs(hat)
        n = np.fft.fftfreq(G, 1.0 / G).astype(int)
        big = np.abs(n[mags > tail_tol])
        M = int(big.max()) if big.size else 0
        if max_M is not None and M > max_M:
            raise SymbolError(f"phase needs bandwidth {M} > {max_M}")
        return cls.from_samples(values, M, grid_size)

    # basic data
    @property
    def M(self) -> int:
        return (self.coefficients.shape[0] - 1) // 2

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    @property
    def is_matrix(self) -> bool:
        return self.coefficients.ndim == 3

    @property
    def matrix_dim(self) -> int:
        return self.coefficients.shape[1] if self.is_matrix else 1

    def support(self) -> np.ndarray:
        mags = np.abs(self.coefficients).reshape(self.coefficients.shape[0], -1).max(axis=1)
        return self.offsets[mags > 0]

    @property
    def span(self) -> int:
        s = self.support()
        return int(s.max() - s.min()) if s.size else 0

    @property
    def reach(self) -> int:
        """Largest |n| with a nonzero coefficient."""
        s = self.support()
        return int(np.abs(s).max()) if s.size else 0

    def coefficient(self, n: int):
        if abs(n) > self.M:
            return np.zeros_like(self.coefficients[0])
        return self.coefficients[n + self.M]

    # evaluation
    def evaluate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        phases = np.exp(1j * np.multiply.outer(theta, self.offsets))
        return np.tensordot(phases, self.coefficients, axes=([-1], [0]))

    __call__ = evaluate

    def grid(self) -> np.ndarray:
        return 2 * math.pi * np.arange(self.grid_size) / self.grid_size

    def on_grid(self) -> np.ndarray:
        """Values on the uniform grid by inverse FFT."""
        G = self.grid_size
        buf = np.zeros((G,) + self.coefficients.shape[1:], dtype=complex)
        np.add.at(buf, self.offsets % G, self.coefficients)
        return np.fft.ifft(buf, axis=0) * G

    # calculus
    def _new(self, coefficients) -> Symbol:
        return Symbol(coefficients, self.grid_size)

    def truncate(self, tol: float = 1e-13) -> Symbol:
        """Drop the outer coefficients whose magnitude is below ``tol`` times the largest."""
        mags = np.abs(self.coefficients).reshape(self.coefficients.shape[0], -1).max(axis=1)
        keep = np.abs(self.offsets[mags > tol * max(mags.max(), 1e-300)])
        M = int(keep.max()) if keep.size else 0
        return self._new(self.coefficients[self.M - M: self.M + M + 1])

    def derivative(self) -> Symbol:
        scale = 1j * self.offsets.astype(float)
        return self._new(self.coefficients * scale.reshape((-1,) + (1,) * (self.coefficients.ndim - 1)))

    def conj(self) -> Symbol:
        """Pointwise adjoint: conj for scalars, conjugate transpose for matrices."""
        c = self.coefficients[::-1].conj()
        if self.is_matrix:
            c = np.transpose(c, (0, 2, 1))
        return self._new(c)

    def _padded(self, M: int) -> np.ndarray:
        pad = [(M - self.M, M - self.M)] + [(0, 0)] * (self.coefficients.ndim - 1)
        return np.pad(self.coefficients, pad)

    def __add__(self, other: Symbol) -> Symbol:
        M = max(self.M, other.M)
        return self._new(self._padded(M) + other._padded(M))

    def __sub__(self, other: Symbol) -> Symbol:
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> Symbol:
        return self._new(complex(scalar) * self.coefficients)

    def __mul__(self, other):
        if not isinstance(other, Symbol):
            return self.__rmul__(other)
        a, b = self.coefficients, other.coefficients
        if a.ndim == 1 and b.ndim == 1:
            return self._new(np.convolve(a, b))
        if a.ndim == 1:
            a = a[:, None, None] * np.eye(b.shape[1])
        if b.ndim == 1:
            b = b[:, None, None] * np.eye(a.shape[1])
        n = a.shape[0] + b.shape[0] - 1
        out = np.zeros((n, a.shape[1], b.shape[2]), dtype=complex)
        for j in range(a.shape[0]):
            out[j:j + b.shape[0]] += np.einsum("ij,njk->nik", a[j], b)
        return self._new(out)

    def hermitian_part(self) -> Symbol:
        """(h + h*)/2, real (Hermitian) valued at every theta."""
        return 0.5 * (self + self.conj())

    def unitarity_defect(self) -> float:
        vals = self.on_grid()
        if self.is_matrix:
            eye = np.eye(self.matrix_dim)
            return float(np.abs(np.einsum("gji,gjk->gik", vals.conj(), vals) - eye).max())
        return float(np.abs(np.abs(vals) - 1.0).max())

    def is_unitary(self, tol: float = SYMBOL_TOL) -> bool:
        return self.unitarity_defect() <= tol

    def to_config(self) -> dict:
        c = self.coefficients
        return {"M": self.M, "re": c.real.tolist(), "im": c.imag.tolist()}

    @classmethod
    def from_config(cls, cfg: dict) -> Symbol:
        if "coefficients" in cfg:
            return cls.from_dict({int(k): complex(*v) if isinstance(v, list) else v
                                  for k, v in cfg["coefficients"].items()})
        if "phase" in cfg:
            return cls.from_phase(cls.from_config(cfg["phase"]))
        if "re" in cfg:
            return cls(np.asarray(cfg["re"]) + 1j * np.asarray(cfg.get("im", 0.0)))
        raise SymbolError("symbol config needs 'coefficients', 'phase' or 're'/'im'")


def random_phase_symbol(rng: np.random.Generator, degree: int = 2, amplitude: float = 1.0) -> Symbol:
    """Real trigonometric phase with random coefficients, suitable for from_phase."""
    c = (rng.normal(size=degree) + 1j * rng.normal(size=degree)) * amplitude / math.sqrt(2 * degree)
    coeffs = {0: rng.normal() * amplitude}
    for n in range(1, degree + 1):
        coeffs[n] = c[n - 1]
        coeffs[-n] = np.conj(c[n - 1])
    return Symbol.from_dict(coeffs)


def random_unitary_symbol(rng: np.random.Generator, degree: int = 2, amplitude: float = 1.0,
                          winding: int = 1) -> Symbol:
    """e^{i winding theta} times exp(i phi) with a random real phase phi."""
    phase = random_phase_symbol(rng, degree, amplitude)
    return Symbol.monomial(winding) * Symbol.from_phase(phase)


def symbol_g(f: Symbol) -> Symbol:
    """g = i f conj(f'), real valued for unitary scalar f."""
    if f.is_matrix:
        raise SymbolError("symbol_g takes a scalar symbol")
    if not f.is_unitary():
        raise SymbolError(f"symbol is not unitary (defect {f.unitarity_defect():.3e})")
    return (1j * (f * f.derivative().conj())).truncate()


def circulant(h: Symbol, window: Window) -> TruncatedOperator:
    """Periodic convolution (L_h psi)(x) = sum_y h_{x-y} psi(y) on a bilateral window."""
    L = window.n_sites
    if h.span >= L:
        raise SymbolError(f"coefficient span {h.span} too large for {L} sites")
    d = h.matrix_dim
    if d != window.internal_dim:
        raise SymbolError("symbol matrix size differs from the internal dimension")
    blocks = np.zeros((L, L, d, d), dtype=complex)
    rows = np.arange(L)
    for n in h.support():
        c = h.coefficient(int(n))
        blocks[rows, (rows - n) % L] += c if h.is_matrix else c * np.eye(1)
    return TruncatedOperator(blocks.transpose(0, 2, 1, 3).reshape(L * d, L * d), window)


def block_diagonal(field_values: np.ndarray, window: Window) -> TruncatedOperator:
    """Multiplication by a per-site d x d matrix field."""
    vals = np.asarray(field_values, dtype=complex)
    L, d = window.n_sites, window.internal_dim
    out = np.zeros((L * d, L * d), dtype=complex)
    for j in range(L):
        out[j * d:(j + 1) * d, j * d:(j + 1) * d] = vals[j]
    return TruncatedOperator(out, window)


def hs_decay_check(h: Symbol, N: int, alpha: int, beta: int):
    """Hilbert-Schmidt norm of X^alpha P_perp L_h P X^beta against its decay bound.

    Returns (hs_norm, bound) where the bound is the sum over k < 0 <= l of
    (2 C <k>^alpha <l>^beta / (<k>^2 <l>^2))^2 with C = max_n |h_n| n^4.
    """
    window = Window("bilateral", N)
    x = window.positions.astype(float)
    Lh = circulant(h, window).matrix.copy()
    k_mask, l_mask = x < 0, x >= 0
    block = Lh[np.ix_(k_mask, l_mask)]
    # drop wrap-around entries: they do not belong to the half-line product
    kk, ll = np.meshgrid(x[k_mask], x[l_mask], indexing="ij")
    block = np.where(ll - kk <= N, block, 0.0)
    block = (np.abs(kk) ** alpha) * block * (ll ** beta)
    C = max((abs(h.coefficient(int(n))) * n ** 4 for n in h.support()), default=0.0)
    br = lambda t: np.sqrt(1.0 + t * t)  # noqa: E731
    bound = 2 * C * br(kk) ** alpha * br(ll) ** beta / (br(kk) ** 2 * br(ll) ** 2)
    return float(np.linalg.norm(block)), float(np.sqrt((bound ** 2).sum())), block, bound


# ---------------------------------------------------------------------------
# models

@dataclass(frozen=True, eq=False)
class Model:
    """Truncated contraction V = P U Q with conjugate operator A.

    ``interior`` marks basis vectors away from the truncation seam. When A is
    the symmetrized product (L_g X + X L_g)/2 on a periodic window, ``gauge``
    holds L_g and commutators with A are evaluated with the minimal-image
    position commutator, which removes the artificial jump of X at the seam
    for operators that hop across it.
    """

    family: str
    V: TruncatedOperator
    U: TruncatedOperator | None
    P: TruncatedOperator | None
    Q: TruncatedOperator | None
    A: TruncatedOperator | None
    params: dict
    interior: np.ndarray
    gauge: TruncatedOperator | None = None

    @property
    def window(self) -> Window:
        return self.V.window

    def require(self, *names: str):
        for name in names:
            if getattr(self, name) is None:
                if name == "A":
                    raise OperatorError("family lacks conjugate operator")
                raise OperatorError(f"family lacks operator {name}")

    def ad(self, B: TruncatedOperator) -> TruncatedOperator:
        """ad_A B, seam-corrected on periodic windows."""
        self.require("A")
        if self.gauge is None:
            return ad(self.A, B)
        Lg, X = self.gauge, position_operator(self.window)
        return 0.5 * (Lg @ position_ad(B) + position_ad(B) @ Lg) + 0.5 * (ad(Lg, B) @ X + X @ ad(Lg, B))

    @cached_property
    def adV(self) -> TruncatedOperator:
        return self.ad(self.V)

    @cached_property
    def C_U(self) -> TruncatedOperator:
        """U* A U - A = U* ad_A U."""
        self.require("U", "A")
        return self.U.H @ self.ad(self.U)

    @cached_property
    def C(self) -> TruncatedOperator:
        """A - U A U* = (ad_A U) U*."""
        self.require("U", "A")
        return self.ad(self.U) @ self.U.H

    def invariant_defects(self) -> dict:
        out = {"contraction_excess": max(0.0, op_norm(self.V) - 1.0)}
        if self.U is not None:
            eye = np.eye(self.window.dim)
            out["unitarity"] = float(np.abs(self.U.matrix.conj().T @ self.U.matrix - eye).max())
            P = self.P.matrix if self.P is not None else eye
            Q = self.Q.matrix if self.Q is not None else eye
            out["factorization"] = float(np.abs(P @ self.U.matrix @ Q - self.V.matrix).max())
        for name in ("P", "Q"):
            op = getattr(self, name)
            if op is None:
                continue
            ev = np.linalg.eigvalsh(0.5 * (op.matrix + op.matrix.conj().T))
            out[f"{name}_hermiticity"] = hermiticity_defect(op.matrix)
            out[f"{name}_range"] = float(max(0.0, -ev.min(), ev.max() - 1.0))
        if self.A is not None:
            out["A_hermiticity"] = hermiticity_defect(self.A.matrix)
        return out

    def validate(self, tol: float = MODEL_TOL):
        bad = {k: v for k, v in self.invariant_defects().items() if v > tol}
        if bad:
            raise OperatorError(f"model invariants violated: {bad}")
        return self


def _shift(window: Window) -> TruncatedOperator:
    return circulant(Symbol.monomial(1), window)


def build_fundamental(N: int) -> Model:
    """V = U Q: periodic bilateral shift with the site-0 component removed first."""
    if N < 2:
        raise ValueError("build_fundamental needs N >= 2")
    w = Window("bilateral", N)
    U = _shift(w)
    q = np.ones(w.dim)
    q[w.index(0)] = 0.0
    Q = TruncatedOperator.diagonal(q, w)
    eye = TruncatedOperator.identity(w)
    model = Model("fundamental", U @ Q, U, eye, Q, position_operator(w),
                  {"family": "fundamental", "N": N}, w.interior_mask(1), gauge=eye)
    return model.validate()


def build_forward_shift(N: int) -> Model:
    """Unilateral shift on 0..N with the last site sent to zero."""
    if N < 2:
        raise ValueError("build_forward_shift needs N >= 2")
    w = Window("unilateral", N, boundary_mode="hard")
    V = np.zeros((w.dim, w.dim))
    V[np.arange(1, w.dim), np.arange(w.dim - 1)] = 1.0
    eye = TruncatedOperator.identity(w)
    model = Model("forward-shift", TruncatedOperator(V, w), None, eye, eye, position_operator(w),
                  {"family": "forward-shift", "N": N}, w.interior_mask(1))
    return model.validate()


def build_toeplitz(f: Symbol, N: int) -> Model:
    """Compression V = P L_f P of a Laurent operator to the half-line x >= 0."""
    if f.is_matrix:
        raise SymbolError("build_toeplitz takes a scalar symbol")
    if not f.is_unitary():
        raise SymbolError(f"symbol is not unitary (defect {f.unitarity_defect():.3e})")
    if f.span > 2 * N or f.reach > N:
        # a coefficient beyond N wraps around the periodic window into the half-line block
        raise SymbolError(f"coefficient span {f.span} (reach {f.reach}) too large for N={N}")
    g = symbol_g(f).hermitian_part()
    if g.span > 2 * N:
        raise SymbolError(f"coefficient span of g ({g.span}) too large for N={N}")
    w = Window("bilateral", N)
    U = circulant(f, w)
    Lg = circulant(g, w)
    X = position_operator(w)
    A = 0.5 * (Lg @ X + X @ Lg)
    P = TruncatedOperator.diagonal((w.positions >= 0).astype(float), w)
    halo = max(1, f.reach, g.reach)
    model = Model("toeplitz", P @ U @ P, U, P, P, A,
                  {"family": "toeplitz", "N": N, "symbol": f.to_config()},
                  w.interior_mask(halo), gauge=Lg)
    return model.validate()


def _site_field(value, window: Window, name: str) -> np.ndarray:
    d, L = window.internal_dim, window.n_sites
    if callable(value):
        vals = np.array([np.asarray(value(int(x)), dtype=complex).reshape(d, d) for x in window.sites])
    else:
        v = np.asarray(value, dtype=complex)
        vals = np.broadcast_to(v.reshape(d, d), (L, d, d)).copy() if v.size == d * d else v.reshape(L, d, d)
    return vals


def build_quantum_walk(coin0, coin1: Symbol, absorb0, absorb1: Symbol, N: int) -> Model:
    """Absorbing walk V = U P with U = C0 C1 and P = P0 P1 P0.

    ``coin0`` and ``absorb0`` are per-site d x d fields (a single matrix, an
    array of shape (2N+1, d, d), or a callable site -> matrix); ``coin1`` and
    ``absorb1`` are matrix symbols acting by periodic convolution. The
    absorption P0 P1 P0 sits to the right of U, so as V = P U Q it is Q.
    """
    d = coin1.matrix_dim
    w = Window("bilateral", N, internal_dim=d)
    g = _site_field(coin0, w, "coin0")
    q = _site_field(absorb0, w, "absorb0")
    eye = np.eye(d)
    for x, gx, qx in zip(w.sites, g, q):
        if np.abs(gx.conj().T @ gx - eye).max() > MODEL_TOL:
            raise OperatorError(f"coin0 at site {x} is not unitary")
        if hermiticity_defect(qx) > MODEL_TOL:
            raise OperatorError(f"absorb0 at site {x} is not Hermitian")
        ev = np.linalg.eigvalsh(0.5 * (qx + qx.conj().T))
        if ev.min() < -MODEL_TOL or ev.max() > 1 + MODEL_TOL:
            raise OperatorError(f"absorb0 at site {x} is outside [0, 1]")
    if not coin1.is_unitary():
        raise OperatorError("coin1 symbol is not unitary")
    pv = absorb1.on_grid()
    pv = pv if absorb1.is_matrix else pv[:, None, None]
    if np.abs(pv - np.conj(np.transpose(pv, (0, 2, 1)))).max() > MODEL_TOL:
        raise OperatorError("absorb1 symbol is not Hermitian")
    ev = np.linalg.eigvalsh(pv)
    if ev.min() < -MODEL_TOL or ev.max() > 1 + MODEL_TOL:
        raise OperatorError("absorb1 symbol is outside [0, 1]")
    edge = [0, -1]
    if any(np.abs(g[j] - eye).max() > 1e-12 or np.abs(q[j] - eye).max() > 1e-12 for j in edge):
        warnings.warn("site-field deviations from the identity reach the window boundary",
                      RuntimeWarning, stacklevel=2)
    C0, C1 = block_diagonal(g, w), circulant(coin1, w)
    P0, P1 = block_diagonal(q, w), circulant(absorb1, w)
    U = C0 @ C1
    absorption = P0 @ P1 @ P0
    halo = max(1, coin1.reach, absorb1.reach)
    model = Model("quantum-walk", U @ absorption, U, TruncatedOperator.identity(w), absorption, None,
                  {"family": "quantum-walk", "N": N, "internal_dim": d},
                  w.interior_mask(halo))
    return model.validate()


def block_model(U1: np.ndarray, U2: np.ndarray, P2: np.ndarray, Q2: np.ndarray) -> Model:
    """Direct sum V = U1 + P2 U2 Q2 with U = U1 + U2, P = 1 + P2, Q = 1 + Q2.

    The window is a formal unilateral index set; there is no conjugate operator.
    """
    n1, n2 = U1.shape[0], U2.shape[0]
    w = Window("unilateral", n1 + n2 - 1, boundary_mode="hard")

    def dsum(a, b):
        out = np.zeros((n1 + n2, n1 + n2), dtype=complex)
        out[:n1, :n1], out[n1:, n1:] = a, b
        return TruncatedOperator(out, w)

    U = dsum(U1, U2)
    P = dsum(np.eye(n1), P2)
    Q = dsum(np.eye(n1), Q2)
    model = Model("block", P @ U @ Q, U, P, Q, None, {"family": "block", "sizes": [n1, n2]},
                  np.ones(n1 + n2, dtype=bool))
    return model.validate()


def split_step_symbol(d: int) -> Symbol:
    """diag(e^{i theta}, e^{-i theta}, 1, ...): first component hops right, second left."""
    c = np.zeros((3, d, d), dtype=complex)
    c[2, 0, 0] = 1.0
    if d >= 2:
        c[0, 1, 1] = 1.0
    for j in range(2, d):
        c[1, j, j] = 1.0
    return Symbol(c)


def model_from_config(cfg: dict) -> Model:
    """Build a model from a scenario 'model' record."""
    family, N = cfg["family"], int(cfg["N"])
    if family == "fundamental":
        return build_fundamental(N)
    if family == "forward-shift":
        return build_forward_shift(N)
    if family == "toeplitz":
        return build_toeplitz(Symbol.from_config(cfg.get("symbol", {"coefficients": {"1": 1.0}})), N)
    if family == "quantum-walk":
        d = int(cfg.get("internal_dim", 2))
        coin = np.asarray(cfg.get("coin", np.eye(d)), dtype=complex).reshape(d, d)
        strength = float(cfg.get("absorption", 1.0))
        radius = int(cfg.get("absorption_radius", 0))
        absorb = lambda x: (strength if abs(x) <= radius else 1.0) * np.eye(d)  # noqa: E731
        return build_quantum_walk(np.eye(d), split_step_symbol(d) * Symbol.constant(coin),
                                  absorb, Symbol.constant(np.eye(d)), N)
    raise ValueError(f"unknown model family {family!r}")
