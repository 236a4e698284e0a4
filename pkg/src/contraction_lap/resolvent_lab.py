"""Weighted, localized and deformed resolvents of contractions, scanned over the disk."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operator_core import (
    OperatorError, RegularizedFamily, TruncatedOperator, min_eigenvalue, op_norm,
    unitary_calculus, weight,
)
from .model_builders import Model

SOLVE_TOL = 1e-9
BOUNDED_RATIO = 1.5


class ResolventError(OperatorError):
    pass


@dataclass(frozen=True)
class ScanGrid:
    radii: tuple
    angles: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        t = np.asarray(self.angles, dtype=float)
        if r.size and (np.any(r <= 0) or np.any(r >= 1) or np.any(np.diff(r) <= 0)):
            raise ValueError("radii must be strictly increasing inside (0, 1)")
        if t.size and (np.any(t < 0) or np.any(t >= 2 * math.pi)):
            raise ValueError("angles must lie in [0, 2pi)")
        object.__setattr__(self, "radii", tuple(float(x) for x in r))
        object.__setattr__(self, "angles", tuple(float(x) for x in t))

    @classmethod
    def polar(cls, radii, n_angles: int) -> ScanGrid:
        return cls(tuple(radii), tuple(2 * math.pi * np.arange(n_angles) / n_angles))

    def points(self):
        """(radius, angle, z) in grid order: radius-major."""
        for r in self.radii:
            for t in self.angles:
                yield r, t, r * complex(math.cos(t), math.sin(t))

    def __len__(self):
        return len(self.radii) * len(self.angles)


@dataclass
class ScanPoint:
    radius: float
    angle: float
    z: complex
    weighted_norm: float = math.nan
    unweighted_norm: float = math.nan
    localized_norm: float | None = None
    error: str | None = None


@dataclass
class ScanResult:
    s: float
    points: list
    radii: tuple
    threshold: float = BOUNDED_RATIO
    key: str = "weighted_norm"

    def per_radius_max(self) -> list:
        out = []
        for r in self.radii:
            vals = [getattr(p, self.key) for p in self.points if p.radius == r]
            vals = [v for v in vals if v is not None and not math.isnan(v)]
            out.append(max(vals) if vals else math.nan)
        return out

    @property
    def sup(self) -> float:
        m = [v for v in self.per_radius_max() if not math.isnan(v)]
        return max(m) if m else math.nan

    @property
    def divergence_ratio(self) -> float:
        m = self.per_radius_max()
        if len(m) < 2 or m[0] == 0:
            return 1.0
        return m[-1] / m[0]

    @property
    def stabilization_ratio(self) -> float:
        m = self.per_radius_max()
        if len(m) < 2:
            return 1.0
        if m[-2] == 0:
            return 1.0 if m[-1] == 0 else math.inf
        return m[-1] / m[-2]

    @property
    def verdict(self) -> str:
        if any(p.error for p in self.points) or math.isnan(self.stabilization_ratio):
            return "DIVERGENT"
        return "BOUNDED" if self.stabilization_ratio <= self.threshold else "DIVERGENT"

    def summary(self) -> dict:
        return {"s": self.s, "quantity": self.key, "sup": self.sup,
                "per_radius_max": self.per_radius_max(), "radii": list(self.radii),
                "divergence_ratio": self.divergence_ratio,
                "stabilization_ratio": self.stabilization_ratio,
                "verdict": self.verdict, "errors": sum(1 for p in self.points if p.error)}

    def rows(self) -> list:
        out = []
        for p in self.points:
            row = [p.z.real, p.z.imag, p.radius, p.angle, p.weighted_norm, p.unweighted_norm]
            if any(q.localized_norm is not None for q in self.points):
                row.append(p.localized_norm if p.localized_norm is not None else math.nan)
            out.append(row)
        return out

    @property
    def columns(self) -> list:
        cols = ["re_z", "im_z", "radius", "angle", "weighted_norm", "unweighted_norm"]
        if any(q.localized_norm is not None for q in self.points):
            cols.append("localized_norm")
        return cols


def refinement_verdict(scans: list, threshold: float = BOUNDED_RATIO) -> dict:
    """Combine scans of the same quantity at increasing truncation size.

    BOUNDED requires each scan to be BOUNDED and the sup at the finest size to
    exceed the sup at the coarsest size by at most ``threshold``.
    """
    sups = [s.sup for s in scans]
    growth = sups[-1] / sups[0] if sups and sups[0] > 0 else math.inf
    ok = all(s.verdict == "BOUNDED" for s in scans) and growth <= threshold
    return {"sups": sups, "growth": growth, "verdict": "BOUNDED" if ok else "DIVERGENT"}


def _resolvent_matrix(V: TruncatedOperator, z: complex) -> np.ndarray:
    n = V.dim
    T = np.eye(n) - z * V.matrix.conj().T
    try:
        with warnings.catch_warnings():
            # an exactly zero pivot is reported below with the offending eigenvalue
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(T, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # exactly singular
        raise ResolventError(f"resolvent undefined at z={z}: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, abs(z))):
        ev = np.linalg.eigvals(V.matrix.conj().T)
        nearest = ev[np.argmin(np.abs(1 - z * ev))]
        raise ResolventError(f"resolvent undefined at z={z}: 1 - z*mu with mu={nearest} vanishes")
    G = scipy.linalg.lu_solve(lu, np.eye(n), check_finite=False)
    return G


def resolvent(V: TruncatedOperator, z: complex) -> TruncatedOperator:
    """(1 - zV*)^{-1} by dense LU."""
    return TruncatedOperator(_resolvent_matrix(V, z), V.window)


def weighted_resolvent(V: TruncatedOperator, A: TruncatedOperator, s: float, z: complex):
    """F_s(z) = <A>^{-s} (1 - zV*)^{-1} <A>^{-s} and its norm."""
    W = weight(A, s).matrix
    T = np.eye(V.dim) - z * V.matrix.conj().T
    X = np.linalg.solve(T, W)
    residual = np.abs(T @ X - W).max()
    if not np.isfinite(residual) or residual > SOLVE_TOL * max(1.0, np.abs(X).max()):
        raise ResolventError(f"resolvent undefined at z={z} (solve residual {residual:.2e})")
    F = TruncatedOperator(W @ X, V.window)
    return F, op_norm(F)


def _scan(model: Model, s: float, grid: ScanGrid, phi=None, key="weighted_norm",
          threshold=BOUNDED_RATIO) -> ScanResult:
    model.require("A")
    if not 0 < s <= 1:
        raise OperatorError(f"weight exponent s={s} outside (0, 1]")
    W = weight(model.A, s).matrix
    Phi = None if phi is None else unitary_calculus(model.U, phi).matrix
    points = []
    for r, t, z in grid.points():
        p = ScanPoint(r, t, z)
        try:
            G = _resolvent_matrix(model.V, z)
            p.unweighted_norm = op_norm(G)
            p.weighted_norm = op_norm(W @ G @ W)
            if Phi is not None:
                p.localized_norm = op_norm(W @ Phi @ G @ Phi @ W)
        except (ResolventError, np.linalg.LinAlgError) as exc:
            p.error = str(exc)
        points.append(p)
    return ScanResult(s, points, grid.radii, threshold, key)


def lap_scan(model: Model, s: float, grid: ScanGrid, threshold: float = BOUNDED_RATIO) -> ScanResult:
    """Weighted and plain resolvent norms over the grid; verdict from the weighted norm."""
    return _scan(model, s, grid, threshold=threshold)


def localized_scan(model: Model, s: float, phi, grid: ScanGrid,
                   threshold: float = BOUNDED_RATIO) -> ScanResult:
    """Norms of W Phi(U) (1 - zV*)^{-1} Phi(U) W over the grid; verdict from the localized norm."""
    model.require("U", "A")
    return _scan(model, s, grid, phi=phi, key="localized_norm", threshold=threshold)


def scan_normalized_unweighted(scan: ScanResult) -> list:
    """(1 - r) * max_angle ||(1 - zV*)^{-1}|| per radius."""
    out = []
    for r in scan.radii:
        vals = [p.unweighted_norm for p in scan.points if p.radius == r and not p.error]
        out.append((1 - r) * max(vals) if vals else math.nan)
    return out


# ---------------------------------------------------------------------------
# positivity and cutoff bounds


@dataclass
class PzReport:
    min_eig: float
    factorization_residual: float


def pz_operator(V: TruncatedOperator, z: complex) -> tuple[np.ndarray, np.ndarray]:
    """P_z(V) = 2Re((1 - zV*)^{-1}) - 1 and the resolvent used to build it."""
    G = _resolvent_matrix(V, z)
    return G + G.conj().T - np.eye(V.dim), G


def pz_positivity(V: TruncatedOperator, z: complex) -> PzReport:
    """Min-eig of P_z(V) and the residual of P_z = G (1 - |z|^2 V*V) G*."""
    if abs(z) >= 1:
        raise OperatorError(f"|z| = {abs(z)} must be < 1")
    P, G = pz_operator(V, z)
    v = V.matrix
    fact = G @ (np.eye(V.dim) - abs(z) ** 2 * v.conj().T @ v) @ G.conj().T
    scale = max(1.0, np.linalg.norm(G, 2) ** 2)
    return PzReport(min_eigenvalue(P), float(np.linalg.norm(P - fact, 2) / scale))


def weighted_pz_sup(V: TruncatedOperator, W: TruncatedOperator, zs) -> float:
    """sup over z of ||W P_z(V) W*||."""
    w = W.matrix
    return max(op_norm(w @ pz_operator(V, z)[0] @ w.conj().T) for z in zs)


@dataclass
class CutoffReport:
    max_violation: float
    worst_z: complex | None
    samples: int


def dilation_cutoff_bound(model: Model, zs, n_vectors: int = 50,
                          rng: np.random.Generator | None = None) -> CutoffReport:
    """max over samples of ||(U* - V*) G_0 psi||^2 - 8 <psi, Re G_0 psi>."""
    model.require("U")
    rng = np.random.default_rng(0) if rng is None else rng
    n = model.window.dim
    psi = rng.normal(size=(n, n_vectors)) + 1j * rng.normal(size=(n, n_vectors))
    psi /= np.linalg.norm(psi, axis=0)
    D = (model.U.matrix - model.V.matrix).conj().T
    worst, where = -math.inf, None
    for z in zs:
        G = _resolvent_matrix(model.V, z)
        lhs = np.linalg.norm(D @ G @ psi, axis=0) ** 2
        rhs = 8 * np.real(np.einsum("ij,ij->j", psi.conj(), 0.5 * (G + G.conj().T) @ psi))
        gap = float((lhs - rhs).max())
        if gap > worst:
            worst, where = gap, complex(z)
    return CutoffReport(worst, where, n_vectors * len(list(zs)))


# ---------------------------------------------------------------------------
# deformed resolvent


def admissibility(eps: float, z: complex, a0: float) -> float:
    """d(eps, z) = 1 - |z|^2 + a0 eps |z|^2."""
    return 1 - abs(z) ** 2 + a0 * eps * abs(z) ** 2


@dataclass
class DeformedDiagnostics:
    d: float
    d_times_norm: float
    norm: float
    mmt_slack: float
    mmt_adjoint_slack: float
    solve_residual: float


def deformed_resolvent(family: RegularizedFamily, z: complex, eps: float, a0: float,
                       local_kappa: float = 0.0):
    """G_eps(z) = (1 - z V_eps*)^{-1} with quadratic-form diagnostics.

    mmt_slack is min-eig(T* + conj(z) V_eps T + kappa eps |z| |T|^2 - d) with
    T = T_eps(z); ``local_kappa`` = 3 pi^2 a1 / (2 d0^2) gives the localized form
    (0 for the global one). mmt_adjoint_slack is the same with T T* and V_eps*.
    """
    d = admissibility(eps, z, a0)
    if not d > 0:
        raise ResolventError(f"outside admissible region: d({eps}, {z}) = {d}")
    Ve = family.V_eps(eps).matrix
    n = Ve.shape[0]
    T = np.eye(n) - z * Ve.conj().T
    G = np.linalg.solve(T, np.eye(n))
    residual = float(np.abs(T @ G - np.eye(n)).max())
    if residual > SOLVE_TOL * max(1.0, np.abs(G).max()):
        raise ResolventError(f"deformed resolvent solve failed at z={z}, eps={eps}")
    corr = local_kappa * eps * abs(z)
    form = T.conj().T + np.conj(z) * Ve @ T + corr * T.conj().T @ T - d * np.eye(n)
    # the adjoint estimate sandwiches the other way round: T + z V_eps* T* ... >= d
    form_adj = T + z * Ve.conj().T @ T.conj().T + corr * T @ T.conj().T - d * np.eye(n)
    norm = op_norm(G)
    diag = DeformedDiagnostics(d, d * norm, norm, min_eigenvalue(form), min_eigenvalue(form_adj), residual)
    return TruncatedOperator(G, family.V.window), diag


def greg_slack(G: np.ndarray, phi: np.ndarray, eps: float, z: complex, a0: float) -> np.ndarray:
    """sqrt(2|Re<phi, G phi>| / (a0 eps |z|^2)) - max(||G phi||, ||G* phi||) for the columns of phi.

    The bound is only claimed for 0 < |z| <= 1.
    """
    Gphi = G @ phi
    form = np.abs(np.real(np.einsum("ij,ij->j", phi.conj(), Gphi)))
    worst = np.maximum(np.linalg.norm(Gphi, axis=0), np.linalg.norm(G.conj().T @ phi, axis=0))
    return np.sqrt(2 * form / (a0 * eps * abs(z) ** 2)) - worst


@dataclass
class OmegaSample:
    C0: float
    max_d_times_norm: list
    min_mmt_slack: float
    min_greg_slack: float
    points: int


def sample_omega(family: RegularizedFamily, a0: float, eps_values, zs, n_vectors: int = 100,
                 rng: np.random.Generator | None = None, local_kappa: float = 0.0) -> OmegaSample:
    """Sampled constants over (eps, z) pairs: C0 = sup d ||G_eps||, quadratic-form slacks.

    The G-ReG slack is taken over the pairs with 0 < |z| <= 1 only (inf if there are none).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n = family.V.dim
    phi = rng.normal(size=(n, n_vectors)) + 1j * rng.normal(size=(n, n_vectors))
    phi /= np.linalg.norm(phi, axis=0)
    per_eps, mmt, greg, count = [], math.inf, math.inf, 0
    for eps in eps_values:
        best = 0.0
        for z in zs:
            G, diag = deformed_resolvent(family, z, eps, a0, local_kappa)
            best = max(best, diag.d_times_norm)
            mmt = min(mmt, diag.mmt_slack, diag.mmt_adjoint_slack)
            if eps > 0 and 0 < abs(z) <= 1:
                greg = min(greg, float(greg_slack(G.matrix, phi, eps, z, a0).min()))
            count += 1
        per_eps.append(best)
    return OmegaSample(max(per_eps, default=0.0), per_eps, mmt, greg, count)


def he_factorization_residual(family: RegularizedFamily, z: complex, eps: float) -> float:
    """|| Re(2G - 1) - G* (T* + conj(z) V_eps T) G || relative to ||G||^2."""
    Ve = family.V_eps(eps).matrix
    n = Ve.shape[0]
    T = np.eye(n) - z * Ve.conj().T
    G = np.linalg.solve(T, np.eye(n))
    H = 2 * G - np.eye(n)
    lhs = 0.5 * (H + H.conj().T)
    rhs = G.conj().T @ (T.conj().T + np.conj(z) * Ve @ T) @ G
    return float(np.linalg.norm(lhs - rhs, 2) / max(1.0, np.linalg.norm(G, 2) ** 2))


# ---------------------------------------------------------------------------
# convergence of the deformation


def deformed_weighted(family: RegularizedFamily, A: TruncatedOperator, s: float,
                      eps: float, z: complex) -> np.ndarray:
    """F_{s,eps}(z) = W_s(eps) G_eps(z) W_s(eps)."""
    W = weight(A, s, eps).matrix
    Ve = family.V_eps(eps).matrix
    T = np.eye(Ve.shape[0]) - z * Ve.conj().T
    return W @ np.linalg.solve(T, W)


@dataclass
class DeformationTrace:
    s: float
    r: float
    eps: list
    angles: list
    sup_difference: list
    monotone: bool
    final_ratio: float
    threshold: float
    interior_z: complex
    interior_difference: list
    interior_bound: list
    C0: float
    b: float
    a0: float
    derivative_norm: list = field(default_factory=list)
    derivative_bound: list = field(default_factory=list)
    form_slack: float = math.inf
    rows: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.final_ratio <= self.threshold

    @property
    def interior_ok(self) -> bool:
        return all(d <= b * (1 + 1e-9) + 1e-12 for d, b in zip(self.interior_difference, self.interior_bound))

    def to_dict(self) -> dict:
        return {
            "s": self.s, "r": self.r, "eps": self.eps, "sup_difference": self.sup_difference,
            "monotone": self.monotone, "final_ratio": self.final_ratio,
            "threshold": self.threshold, "converged": self.converged,
            "interior_z": [self.interior_z.real, self.interior_z.imag],
            "interior_difference": self.interior_difference, "interior_bound": self.interior_bound,
            "interior_ok": self.interior_ok, "C0": self.C0, "b": self.b, "a0": self.a0,
            "derivative_norm": self.derivative_norm, "derivative_bound": self.derivative_bound,
            "form_slack": self.form_slack,
        }

    columns = ["eps", "re_z", "im_z", "norm_G", "d_times_norm_G", "difference", "derivative_norm",
               "derivative_bound"]


def h1(eps: float, s: float, a0: float, r: float) -> float:
    return 2 * math.sqrt(2) * (2 - s) * eps ** (s - 1) / (math.sqrt(a0 * eps) * r)


def h2(family: RegularizedFamily, eps: float, a0: float, r: float) -> float:
    return 2 * op_norm(family.at(eps).remainder) / (a0 * r * r * eps)


def convergence_study(family: RegularizedFamily, A: TruncatedOperator, s: float, r: float,
                      eps_seq, angles, a0: float, *, interior_z: complex = 0.5,
                      threshold: float = 0.05, n_vectors: int = 8,
                      rng: np.random.Generator | None = None,
                      omega_radii=(0.5, 0.9), C0: float | None = None) -> DeformationTrace:
    """Track F_{s,eps} -> F_s as eps decreases and test the a-priori bounds along the way.

    (i) sup over the angles at radius r of ||F_{s,eps} - F_s||;
    (ii) ||G_eps - G_0|| at interior_z against C0 b eps / ((1+|z|)(1-|z|)^2),
         with C0 sampled over the eps sequence and ``omega_radii`` unless given;
    (iii) centered differences of F_{s,eps} in eps (step eps/10) against
         h1 ||phi|| sqrt|<phi,F phi>| + h2 |<phi,F phi>| on random phi, and
         the norm against 2 (h1 sqrt||F|| + h2 ||F||).
    """
    if not 0 < s <= 1:
        raise OperatorError(f"weight exponent s={s} outside (0, 1]")
    if not 0 < r < 1:
        raise OperatorError("radius must lie in (0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    eps_seq = [float(e) for e in eps_seq]
    angles = [float(t) for t in angles]
    zs = [r * complex(math.cos(t), math.sin(t)) for t in angles]
    n = family.V.dim
    base = {z: deformed_weighted(family, A, s, 0.0, z) for z in zs}
    b = family.b
    if C0 is None:
        omega = [rr * complex(math.cos(t), math.sin(t)) for rr in omega_radii for t in angles[::4] or [0.0]]
        C0 = sample_omega(family, a0, eps_seq, omega + [interior_z], n_vectors=1, rng=rng).C0
    phi = rng.normal(size=(n, n_vectors)) + 1j * rng.normal(size=(n, n_vectors))
    phi /= np.linalg.norm(phi, axis=0)
    sups, inner_diff, inner_bound, dnorms, dbounds, rows = [], [], [], [], [], []
    form_slack = math.inf
    G0_int = _resolvent_matrix(family.V, interior_z)
    for eps in eps_seq:
        worst = 0.0
        dmax, bmax = 0.0, 0.0
        step = eps / 10
        for z in zs:
            F = deformed_weighted(family, A, s, eps, z)
            diff = op_norm(F - base[z])
            worst = max(worst, diff)
            dF = (deformed_weighted(family, A, s, eps + step, z)
                  - deformed_weighted(family, A, s, eps - step, z)) / (2 * step)
            k1, k2 = h1(eps, s, a0, r), h2(family, eps, a0, r)
            nF = op_norm(F)
            nd = op_norm(dF)
            bound = 2 * (k1 * math.sqrt(nF) + k2 * nF)
            dmax, bmax = max(dmax, nd), max(bmax, bound)
            forms = np.abs(np.einsum("ij,ij->j", phi.conj(), F @ phi))
            dforms = np.abs(np.einsum("ij,ij->j", phi.conj(), dF @ phi))
            form_slack = min(form_slack, float((k1 * np.sqrt(forms) + k2 * forms - dforms).min()))
            Ge = np.linalg.solve(np.eye(n) - z * family.V_eps(eps).matrix.conj().T, np.eye(n))
            dn = op_norm(Ge)
            rows.append([eps, z.real, z.imag, dn, admissibility(eps, z, a0) * dn, diff, nd, bound])
        sups.append(worst)
        dnorms.append(dmax)
        dbounds.append(bmax)
        Ge_int = np.linalg.solve(np.eye(n) - interior_z * family.V_eps(eps).matrix.conj().T, np.eye(n))
        inner_diff.append(op_norm(Ge_int - G0_int))
        az = abs(interior_z)
        inner_bound.append(C0 * b * eps / ((1 + az) * (1 - az) ** 2))
    order = np.argsort(eps_seq)[::-1]
    seq = [sups[i] for i in order]
    monotone = all(seq[i + 1] <= seq[i] * (1 + 1e-9) for i in range(len(seq) - 1))
    ratio = seq[-1] / seq[0] if seq and seq[0] > 0 else 0.0
    return DeformationTrace(s, r, eps_seq, angles, sups, monotone, ratio, threshold,
                            complex(interior_z), inner_diff, inner_bound, C0, b, a0,
                            dnorms, dbounds, form_slack, rows)
