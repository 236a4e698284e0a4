"""Numerical certificates for positivity, Mourre, regularity and virial hypotheses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .operator_core import (
    Arc, OperatorError, TruncatedOperator, abs_squared, ad, c2_family, herm_eig,
    imag_part, min_eigenvalue, op_norm, real_part, unitary_eig,
)
from .model_builders import Model

EIG_TOL = 1e-10
ALPHA_CAP = 4.0
ALPHA_RESOLUTION = 1e-6


@dataclass
class MourreReport:
    arc: list
    a: float
    min_eig: float
    min_eig_conjugated: float
    strict: bool
    dim_ranE: int
    vacuous: bool = False
    d0: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class H4Entry:
    name: str
    imag_norm: float
    commutator_norm: float
    alpha_max: float
    passed: bool
    commutator_norm_full: float = 0.0


@dataclass
class H4Report:
    a: float
    entries: list
    identity_residual: float | None = None

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {"a": self.a, "passed": self.passed, "identity_residual": self.identity_residual,
                "entries": [asdict(e) for e in self.entries]}


@dataclass
class VirialReport:
    tol: float
    eigenvalues: list = field(default_factory=list)
    residual_U: list = field(default_factory=list)
    residual_P: list = field(default_factory=list)
    residual_Q: list = field(default_factory=list)

    def max_residual(self) -> float:
        return max(self.residual_U + self.residual_P + self.residual_Q, default=0.0)

    def to_dict(self) -> dict:
        return {"tol": self.tol, "count": len(self.eigenvalues),
                "eigenvalues": [[float(l.real), float(l.imag)] for l in self.eigenvalues],
                "residual_U": self.residual_U, "residual_P": self.residual_P,
                "residual_Q": self.residual_Q, "max_residual": self.max_residual()}


def _eigenbasis_on_arc(U: TruncatedOperator, arc: Arc) -> np.ndarray:
    angles, z = unitary_eig(U)
    return z[:, arc.contains(angles)]


def spectral_projection(U: TruncatedOperator, arc: Arc) -> TruncatedOperator:
    """Orthogonal projection onto eigenvectors of U with eigen-angle in the arc."""
    return TruncatedOperator.projector(_eigenbasis_on_arc(U, arc), U.window)


def compressed_min_eig(H: TruncatedOperator, basis: np.ndarray) -> float:
    """Smallest eigenvalue of H restricted to the span of orthonormal columns."""
    return min_eigenvalue(basis.conj().T @ H.matrix @ basis)


def mourre_check(U: TruncatedOperator, A: TruncatedOperator | None, arc: Arc, a: float,
                 commutator: TruncatedOperator | None = None) -> MourreReport:
    """Compression of U*AU - A (or a supplied equivalent) to the spectral subspace of the arc.

    ``min_eig_conjugated`` is the same computation for UAU* - A.
    """
    if commutator is None:
        if not A.is_hermitian():
            raise OperatorError("not Hermitian")
        commutator = U.H @ A @ U - A
    basis = _eigenbasis_on_arc(U, arc)
    dim = basis.shape[1]
    if dim == 0:
        return MourreReport(arc.to_list(), a, math.inf, math.inf, True, 0, vacuous=True)
    conjugated = -(U @ commutator @ U.H)
    lo = compressed_min_eig(commutator, basis)
    return MourreReport(arc.to_list(), a, lo, compressed_min_eig(conjugated, basis),
                        bool(lo >= a - EIG_TOL), dim)


def model_mourre_check(model: Model, arc: Arc, a: float) -> MourreReport:
    model.require("U", "A")
    return mourre_check(model.U, model.A, arc, a, commutator=model.C_U)


def global_positivity(V: TruncatedOperator, A: TruncatedOperator | None = None, *,
                      interior: np.ndarray | None = None,
                      adV: TruncatedOperator | None = None) -> float:
    """Smallest eigenvalue of Re(V* ad_A V), optionally on the interior block."""
    if adV is None:
        adV = ad(A, V)
    M = real_part(V.H @ adV)
    if interior is not None:
        return min_eigenvalue(M.compress(interior))
    return min_eigenvalue(M.matrix)


def model_global_positivity(model: Model) -> float:
    interior = model.interior if model.window.boundary_mode == "hard" else None
    return global_positivity(model.V, interior=interior, adV=model.adV)


def h4_form_min_eig(W: TruncatedOperator, alpha: float) -> float:
    D = TruncatedOperator.identity(W.window) - W
    return min_eigenvalue((2 * real_part(D) - (1 + alpha) * abs_squared(D)).matrix)


def max_alpha(W: TruncatedOperator, cap: float = ALPHA_CAP,
              resolution: float = ALPHA_RESOLUTION, tol: float = EIG_TOL) -> float:
    """Largest alpha in [0, cap] with 2Re(1-W) - (1+alpha)|1-W|^2 >= -tol, by bisection.

    The form is decreasing in alpha; the returned value is the last passing point.
    """
    if h4_form_min_eig(W, cap) >= -tol:
        return cap
    lo, hi = 0.0, cap
    if h4_form_min_eig(W, lo) < -tol:
        return 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if h4_form_min_eig(W, mid) >= -tol:
            lo = mid
        else:
            hi = mid
    return lo


def projection_identity_residual(model: Model) -> float | None:
    """|| 2Re(1-R) - 3/2 |1-R|^2 - 1/2 |P_perp - U P_perp U* P|^2 || for R = UV*, P = Q a projection."""
    P, U = model.P, model.U
    if P is None or U is None or model.Q is None:
        return None
    if np.abs(P.matrix - model.Q.matrix).max() > 0 or np.abs(P.matrix @ P.matrix - P.matrix).max() > 1e-12:
        return None
    eye = TruncatedOperator.identity(model.window)
    D = eye - U @ model.V.H
    Pp = eye - P
    lhs = 2 * real_part(D) - 1.5 * abs_squared(D)
    rhs = 0.5 * abs_squared(Pp - U @ Pp @ U.H @ P)
    return op_norm(lhs - rhs)


def h4_check(model: Model, a: float) -> H4Report:
    """Commutator bound and quadratic inequality for W = UV* and W = U*V.

    The commutator norm is taken on the interior block; the full-window value,
    which includes the seam of a periodic truncation, is recorded alongside.
    """
    model.require("U", "A")
    U, V = model.U, model.V
    entries = []
    for name, W in (("UV*", U @ V.H), ("U*V", U.H @ V)):
        comm = 1j * model.ad(imag_part(W))
        m = op_norm(comm.compress(model.interior))
        alpha = max_alpha(W)
        entries.append(H4Entry(name, op_norm(imag_part(W)), m, alpha, bool(m < a and alpha > 0),
                               op_norm(comm)))
    return H4Report(a, entries, projection_identity_residual(model))


def virial_check(model: Model, tol: float = 1e-6) -> VirialReport:
    """Eigenpairs of V near the unit circle with their U, P and Q residuals."""
    model.require("U")
    evals, evecs = np.linalg.eig(model.V.matrix)
    report = VirialReport(tol)
    eye = np.eye(model.window.dim)
    P = model.P.matrix if model.P is not None else eye
    Q = model.Q.matrix if model.Q is not None else eye
    for lam, psi in zip(evals, evecs.T):
        if abs(lam) < 1 - tol:
            continue
        psi = psi / np.linalg.norm(psi)
        report.eigenvalues.append(complex(lam))
        report.residual_U.append(float(np.linalg.norm(model.U.matrix @ psi - lam * psi)))
        report.residual_P.append(float(np.linalg.norm(P @ psi - psi)))
        report.residual_Q.append(float(np.linalg.norm(Q @ psi - psi)))
    return report


@dataclass
class MourreEquivalence:
    a: float
    b: float
    certificate: float

    def __iter__(self):
        return iter((self.a, self.b))


def mourre_equiv(B: TruncatedOperator, E: TruncatedOperator, c: float) -> MourreEquivalence:
    """From EBE >= cE produce B >= aE - bE_perp with a = c/2, b = ||B||(1 + 2||B||/c)."""
    if c <= 0:
        raise OperatorError("form (a) fails: c must be positive")
    evals, vecs = herm_eig(E)
    basis = vecs.matrix[:, evals > 0.5]
    if basis.shape[1] and compressed_min_eig(B, basis) < c - EIG_TOL:
        raise OperatorError("form (a) fails")
    nB = op_norm(B)
    a, b = c / 2, nB * (1 + 2 * nB / c)
    Eperp = TruncatedOperator.identity(E.window) - E
    return MourreEquivalence(a, b, min_eigenvalue((B - a * E + b * Eperp).matrix))


def mourre_equiv_converse(B: TruncatedOperator, E: TruncatedOperator, a: float, b: float) -> float:
    """Given B >= aE - bE_perp, return min-eig of EBE on Ran E minus a (>= 0 expected)."""
    evals, vecs = herm_eig(E)
    basis = vecs.matrix[:, evals > 0.5]
    return compressed_min_eig(B, basis) - a


# ---------------------------------------------------------------------------
# local lower bounds

@dataclass
class LocalBoundsReport:
    identity_residuals: list
    a0: float
    a1: float
    a0_limit: float
    sweep: list
    d0: float
    eperp_worst: float
    eperp_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def commutator_expansion_residuals(U: TruncatedOperator, V: TruncatedOperator,
                             A: TruncatedOperator) -> tuple[float, float]:
    """Residuals of the exact expansions of 2Re(V ad_A V*) and 2Re(V* ad_A V).

    With C = A - UAU*, R = UV*, Rb = 1 - R, C_U = U*AU - A, L = V*U, Lb = 1 - L:
      2Re(V ad V*) = -2C - 2 Rb* C Rb + 4 Re(Rb* C) + 2 Re(R* ad R)
      2Re(V* ad V) = 2C_U + 2 Lb C_U Lb* - 4 Re(C_U Lb*) + 2 Re(L ad L*)
    """
    eye = TruncatedOperator.identity(U.window)
    C = A - U @ A @ U.H
    C_U = U.H @ A @ U - A
    R, L = U @ V.H, V.H @ U
    Rb, Lb = eye - R, eye - L
    lhs1 = 2 * real_part(V @ ad(A, V.H))
    rhs1 = -2 * C - 2 * (Rb.H @ C @ Rb) + 4 * real_part(Rb.H @ C) + 2 * real_part(R.H @ ad(A, R))
    lhs2 = 2 * real_part(V.H @ ad(A, V))
    rhs2 = 2 * C_U + 2 * (Lb @ C_U @ Lb.H) - 4 * real_part(C_U @ Lb.H) + 2 * real_part(L @ ad(A, L.H))
    scale = max(1.0, op_norm(A))
    return op_norm(lhs1 - rhs1) / scale, op_norm(lhs2 - rhs2) / scale


def _m0_forms(model: Model):
    U, V = model.U, model.V
    right = model.C_U - 1j * model.ad(imag_part(U @ V.H))
    left = model.C - 1j * model.ad(imag_part(V.H @ U))
    return real_part(right).matrix, real_part(left).matrix


def m0_constants(model: Model, arc_prime: Arc, a1_grid=None):
    """Sweep a1 and record a0(a1) = min-eig of both forms + a1 E(arc')_perp.

    Returns (a0, a1, a0_limit, sweep): a1 is the smallest grid value whose
    a0(a1) reaches half of the best value on the grid, a0 is a0 at that a1,
    and a0_limit is the min-eig of the forms compressed to Ran E(arc').
    All operators are restricted to the interior block of the model.
    """
    if a1_grid is None:
        a1_grid = np.concatenate([[0.0], np.logspace(-3, 6, 91)])
    keep = np.asarray(model.interior, dtype=bool)
    right, left = (f[np.ix_(keep, keep)] for f in _m0_forms(model))
    basis = _eigenbasis_on_arc(model.U, arc_prime)
    E = (basis @ basis.conj().T)[np.ix_(keep, keep)]
    Eperp = np.eye(E.shape[0]) - E
    sweep = []
    for a1 in a1_grid:
        a0 = min(min_eigenvalue(right + a1 * Eperp), min_eigenvalue(left + a1 * Eperp))
        sweep.append((float(a1), float(a0)))
    # the a1 -> infinity limit: min-eig of the forms on Ran(E) within the interior block
    evals, vecs = np.linalg.eigh(E)
    inner = vecs[:, evals > 1 - 1e-8]
    limit = min(min_eigenvalue(inner.conj().T @ right @ inner),
                min_eigenvalue(inner.conj().T @ left @ inner))
    best = max(v for _, v in sweep)
    a1, a0 = next((x, v) for x, v in sweep if v >= 0.5 * best - EIG_TOL)
    return a0, a1, float(limit), sweep


def eperp_worst_slack(model: Model, arc0: Arc, arc_prime: Arc, zs, eps_values=(0.0,)) -> float:
    """Worst min-eig of RHS - LHS over the sampled z for both E_perp bounds.

    E_perp <= k(z) (|T|^2 + |z|^2 |Rb|^2 + b^2 eps^2 |z|^2) and
    E_perp <= k(z) (T T* + |z|^2 Lb Lb* + b^2 eps^2 |z|^2), k = 3 pi^2 / (4 d0^2 |z|),
    with T = T_eps(z) of the C^2 family, E = E(arc'), Rb = 1 - UV*, Lb = 1 - V*U.
    """
    d0 = arc0.distance_to_complement(arc_prime)
    basis = _eigenbasis_on_arc(model.U, arc_prime)
    n = model.window.dim
    Eperp = np.eye(n) - basis @ basis.conj().T
    family = c2_family(model.V, commutator=model.ad)
    b = family.b
    Rb = np.eye(n) - (model.U @ model.V.H).matrix
    Lb = np.eye(n) - (model.V.H @ model.U).matrix
    worst = math.inf
    for eps in eps_values:
        for z in zs:
            T = family.T(eps, z).matrix
            k = 3 * math.pi ** 2 / (4 * d0 ** 2 * abs(z))
            extra = (b * eps * abs(z)) ** 2 * np.eye(n)
            r1 = k * (T.conj().T @ T + abs(z) ** 2 * Rb.conj().T @ Rb + extra) - Eperp
            r2 = k * (T @ T.conj().T + abs(z) ** 2 * Lb @ Lb.conj().T + extra) - Eperp
            worst = min(worst, min_eigenvalue(r1), min_eigenvalue(r2))
    return worst


def local_lower_bounds(model: Model, arc0: Arc, arc_prime: Arc, zs=None,
                       eps_values=(0.0, 0.1)) -> LocalBoundsReport:
    model.require("U", "A")
    if not arc0.closure_inside(arc_prime):
        raise OperatorError("closure of the inner arc is not inside the outer arc")
    residuals = commutator_expansion_residuals(model.U, model.V, model.A)
    a0, a1, limit, sweep = m0_constants(model, arc_prime)
    if zs is None:
        radii = np.linspace(0.5, 1.0, 10)
        zs = [r * np.exp(1j * t) for r in radii for t in arc0.sample(10)]
    zs = list(zs)
    worst = eperp_worst_slack(model, arc0, arc_prime, zs, eps_values)
    return LocalBoundsReport(list(residuals), a0, a1, limit, sweep,
                             arc0.distance_to_complement(arc_prime), worst, len(zs) * len(eps_values))
