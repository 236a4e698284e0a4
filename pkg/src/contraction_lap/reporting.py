"""Scenario execution, verdicts, JSON reports and CSV plot data."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .dynamics_lab import ac_constant, cnu_split, correlation_identity, dilate, kato_sums
from .hypothesis_checks import (
    h4_check, model_global_positivity, model_mourre_check, virial_check,
)
from .model_builders import Model, model_from_config
from .operator_core import Arc, bump_function, c2_family, weight
from .resolvent_lab import (
    ScanGrid, convergence_study, lap_scan, localized_scan, scan_normalized_unweighted,
    weighted_pz_sup,
)

CHECKS = ("hypotheses", "mourre", "h4", "virial", "lap-scan", "localized-scan",
          "deformation", "dynamics", "dilation")
CHECK_DESCRIPTIONS = {
    "hypotheses": "model invariants (contraction, V = PUQ, 0 <= P, Q <= 1) and a0 = min-eig Re(V* ad_A V)",
    "mourre": "compression of U*AU - A to spectral arcs of U against the constant a",
    "h4": "commutator bound on Im W and the quadratic inequality for W = UV*, U*V",
    "virial": "unit-modulus eigenpairs of V are eigenpairs of U fixed by P and Q",
    "lap-scan": "weighted and plain resolvent norms on a polar grid",
    "localized-scan": "weighted resolvent norms with spectral cutoffs Phi(U)",
    "deformation": "convergence of the eps-deformed weighted resolvent and its a-priori bounds",
    "dynamics": "Kato smoothing sums against sup ||W P_z(V) W*|| and the correlation constant",
    "dilation": "finite unitary dilation residuals, correlation identity and cnu split",
}
DEPENDENT = ("deformation",)  # checks that consume a0


class ScenarioError(ValueError):
    pass


def _schema(name: str) -> dict:
    return json.loads(resources.files("contraction_lap").joinpath("schemas", name).read_text())


def validate_scenario(cfg: dict):
    """Raise ScenarioError naming the offending path and field."""
    try:
        jsonschema.validate(cfg, _schema("scenario.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"invalid scenario at {where}: {exc.message}") from None


def validate_report(report: dict):
    jsonschema.validate(report, _schema("report.schema.json"))


def load_scenario(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    validate_scenario(cfg)
    return cfg


def clean(value):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(value, complex):
        return [clean(value.real), clean(value.imag)]
    return value


@dataclass
class CheckResult:
    name: str
    verdict: str
    measured: dict
    message: str = ""
    tables: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"name": self.name, "verdict": self.verdict, "measured": clean(self.measured),
               "message": self.message}
        if self.tables:
            out["artifacts"] = sorted(self.tables)
        return out


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _scan_verdict(result, expect) -> str:
    if expect is None:
        return "PASS" if result.verdict == "BOUNDED" else "WARN"
    return _verdict(result.verdict == expect)


def _grid(settings: dict) -> ScanGrid:
    radii = settings.get("radii", [0.9, 0.99, 0.999])
    n = int(settings.get("n_angles", 16))
    if "arc" in settings:
        return ScanGrid(tuple(radii), tuple(Arc.between(*settings["arc"]).sample(n)))
    return ScanGrid.polar(radii, n)


def _scan_table(result) -> dict:
    return {"columns": result.columns, "rows": result.rows(), "summary": result.summary()}


# each check: (model, settings, rng, context) -> CheckResult

def check_hypotheses(model: Model, st: dict, rng, ctx) -> CheckResult:
    tol = float(st.get("tol", 1e-10))
    defects = model.invariant_defects()
    measured = {"defects": defects, "tol": tol}
    if model.A is not None:
        a0 = ctx["a0"]
        measured["a0"] = a0
        measured["global_positivity"] = a0 > tol
    ok = all(v <= tol for v in defects.values())
    msg = "" if ok else "model invariants violated"
    return CheckResult("hypotheses", _verdict(ok), measured, msg)


def check_mourre(model, st, rng, ctx) -> CheckResult:
    a = float(st.get("a", 1.0))
    arcs = st.get("arcs") or [[0.0, 2 * math.pi], [0.0, math.pi / 2], [math.pi / 2, math.pi],
                              [math.pi, 3 * math.pi / 2], [3 * math.pi / 2, 2 * math.pi]]
    reports = [model_mourre_check(model, Arc.between(*arc), a) for arc in arcs]
    active = [r for r in reports if not r.vacuous]
    ok = all(r.strict for r in active)
    measured = {"a": a, "min_eig": min((r.min_eig for r in active), default=math.inf),
                "arcs": [r.to_dict() for r in reports]}
    return CheckResult("mourre", _verdict(ok), measured,
                       "" if active else "every arc has an empty spectral subspace")


def check_h4(model, st, rng, ctx) -> CheckResult:
    a = float(st.get("a", 1.0))
    tol = float(st.get("identity_tol", 1e-10))
    rep = h4_check(model, a)
    ok = rep.passed and (rep.identity_residual is None or rep.identity_residual <= tol)
    measured = rep.to_dict()
    measured["alpha_max"] = min(e.alpha_max for e in rep.entries)
    return CheckResult("h4", _verdict(ok), measured)


def check_virial(model, st, rng, ctx) -> CheckResult:
    tol = float(st.get("tol", 1e-6))
    rtol = float(st.get("residual_tol", 1e-8))
    rep = virial_check(model, tol)
    return CheckResult("virial", _verdict(rep.max_residual() <= rtol), rep.to_dict())


def check_lap_scan(model, st, rng, ctx) -> CheckResult:
    s = float(st.get("s", 0.7))
    result = lap_scan(model, s, _grid(st), float(st.get("threshold", 1.5)))
    measured = result.summary()
    measured["normalized_unweighted"] = scan_normalized_unweighted(result)
    measured["below_weight_threshold"] = s <= 0.5
    return CheckResult("lap-scan", _scan_verdict(result, st.get("expect")), measured,
                       tables={"lap-scan": _scan_table(result)})


def check_localized_scan(model, st, rng, ctx) -> CheckResult:
    s = float(st.get("s", 0.7))
    phi_cfg = st.get("phi", {"bump": [math.pi / 4, 3 * math.pi / 4]})
    if "bump" in phi_cfg:
        phi = bump_function(Arc.between(*phi_cfg["bump"]))
    else:
        value = float(phi_cfg.get("constant", 1.0))
        phi = lambda t: np.full(np.shape(t), value)  # noqa: E731
    result = localized_scan(model, s, phi, _grid(st), float(st.get("threshold", 1.5)))
    measured = result.summary()
    measured["phi"] = phi_cfg
    return CheckResult("localized-scan", _scan_verdict(result, st.get("expect")), measured,
                       tables={"localized-scan": _scan_table(result)})


def check_deformation(model, st, rng, ctx) -> CheckResult:
    a0 = ctx["a0"]
    if not a0 > 1e-10:
        return CheckResult("deformation", "FAIL", {"a0": a0},
                           "global positivity a0 <= 0: admissible region undefined")
    family = c2_family(model.V, commutator=model.ad)
    n = int(st.get("n_angles", 32))
    trace = convergence_study(
        family, model.A, float(st.get("s", 0.7)), float(st.get("r", 0.9)),
        st.get("eps", [0.2, 0.1, 0.05, 0.025]), 2 * math.pi * np.arange(n) / n, a0,
        interior_z=float(st.get("interior_z", 0.5)), threshold=float(st.get("threshold", 0.05)),
        n_vectors=int(st.get("n_vectors", 8)), rng=rng)
    form_tol = float(st.get("form_tol", 1e-8))
    measured = trace.to_dict()
    problems = []
    if trace.form_slack < -form_tol:
        problems.append("differential inequality violated")
    if not trace.interior_ok:
        problems.append("interior resolvent bound violated")
    if not trace.converged:
        problems.append(f"final/initial ratio {trace.final_ratio:.4g} above {trace.threshold}")
    verdict = "FAIL" if problems else ("WARN" if not trace.monotone else "PASS")
    if not trace.monotone:
        problems.append("sup difference not monotone in eps")
    table = {"columns": trace.columns, "rows": trace.rows, "summary": {"sup_difference": trace.sup_difference}}
    return CheckResult("deformation", verdict, measured, "; ".join(problems),
                       tables={"deformation": table})


def _site_zero(model: Model) -> np.ndarray:
    return model.window.basis_vector(0)


def check_dynamics(model, st, rng, ctx) -> CheckResult:
    model.require("A")
    s = float(st.get("s", 0.7))
    W = weight(model.A, s)
    radii = st.get("radii", [0.9, 0.99, 0.999])
    n_ang = int(st.get("n_angles", 16))
    zs = [r * complex(math.cos(t), math.sin(t)) for r in radii
          for t in 2 * math.pi * np.arange(n_ang) / n_ang]
    c = weighted_pz_sup(model.V, W, zs)
    margin = float(st.get("margin", 0.05))
    Nmax = int(st.get("Nmax", 4 * model.window.dim))
    n = model.window.dim
    totals = []
    for _ in range(int(st.get("n_vectors", 20))):
        phi = rng.normal(size=n) + 1j * rng.normal(size=n)
        phi /= np.linalg.norm(phi)
        totals.append(kato_sums(W, model.V, phi, Nmax).total)
    ac = ac_constant(model.V, _site_zero(model), Nmax)
    ok = max(totals) <= (1 + margin) * c
    measured = {"c": c, "margin": margin, "max_kato_total": max(totals), "kato_totals": totals,
                "ac_constant_site0": ac, "Nmax": Nmax}
    return CheckResult("dynamics", _verdict(ok), measured)


def check_dilation(model, st, rng, ctx) -> CheckResult:
    K = int(st.get("K", 4))
    ut, ct = float(st.get("unitarity_tol", 1e-10)), float(st.get("compression_tol", 1e-9))
    V = model.V.matrix
    D = dilate(V, K)
    n = V.shape[0]
    worst = 0.0
    for _ in range(int(st.get("n_pairs", 5))):
        phi = rng.normal(size=n) + 1j * rng.normal(size=n)
        psi = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs, rhs = correlation_identity(D, V, phi, psi)
        worst = max(worst, abs(lhs - rhs) / max(1.0, rhs))
    Pu, _ = cnu_split(V)
    measured = {"K": K, "unitarity_residual": D.unitarity_residual(),
                "compression_residual": D.compression_residual(V),
                "correlation_residual": worst, "unitary_part_rank": int(round(np.trace(Pu).real))}
    ok = (measured["unitarity_residual"] <= ut and measured["compression_residual"] <= ct
          and worst <= ct)
    return CheckResult("dilation", _verdict(ok), measured)


RUNNERS = {
    "hypotheses": check_hypotheses, "mourre": check_mourre, "h4": check_h4,
    "virial": check_virial, "lap-scan": check_lap_scan, "localized-scan": check_localized_scan,
    "deformation": check_deformation, "dynamics": check_dynamics, "dilation": check_dilation,
}


def _run_one(name, model, settings, seed, index, ctx) -> CheckResult:
    rng = np.random.default_rng([seed, index])
    try:
        return RUNNERS[name](model, settings.get(name, {}), rng, ctx)
    except Exception as exc:  # solver failures become a FAIL for this check only
        return CheckResult(name, "FAIL", {}, f"{type(exc).__name__}: {exc}")


def provenance() -> dict:
    return {"package": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_scenario(cfg: dict, seed: int | None = None, threads: int = 1) -> tuple[dict, dict]:
    """Execute a validated scenario; return (report, tables by scan id)."""
    validate_scenario(cfg)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    checks = list(cfg["checks"])
    settings = cfg.get("settings", {})
    model = model_from_config(cfg["model"])
    ctx = {}
    if model.A is not None and any(c in ("hypotheses",) + DEPENDENT for c in checks):
        ctx["a0"] = model_global_positivity(model)
    workers = None if threads == 0 else max(1, threads)
    jobs = [(name, CHECKS.index(name)) for name in checks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, name, model, settings, seed, idx, ctx) for name, idx in jobs]
        results = [f.result() for f in futures]
    tables = {}
    for r in results:
        tables.update(r.tables)
    counts = {v: sum(1 for r in results if r.verdict == v) for v in ("PASS", "FAIL", "WARN")}
    counts["exit_status"] = 1 if counts["FAIL"] else 0
    report = {
        "schema_version": 1,
        "scenario": clean(cfg),
        "seed": seed,
        "model": clean(model.params),
        "checks": [r.to_dict() for r in results],
        "summary": counts,
        "scans": {k: clean(v) for k, v in tables.items()},
        "provenance": provenance(),
        "timestamp": {"started": started, "wall_time_s": time.perf_counter() - t0},
    }
    validate_report(report)
    return report, tables


def dump_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def format_number(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return "nan"
    return f"{float(x):.16e}"


def write_csv(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_number(v) for v in row])
    return path


def write_outputs(report: dict, tables: dict, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dump_report(report))
    paths = [out / "report.json"]
    for name, table in sorted(tables.items()):
        paths.append(write_csv(out / f"{name}.csv", table["columns"], table["rows"]))
    return paths


def emit_plotdata(report: dict, scan_id: str, path) -> Path:
    """Write the scan rows stored in a report as CSV."""
    scans = report.get("scans", {})
    if scan_id not in scans:
        raise KeyError(f"unknown scan id {scan_id!r}; available: {sorted(scans)}")
    table = scans[scan_id]
    return write_csv(path, table["columns"], table["rows"])


def read_csv(path) -> tuple[list, list]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]
