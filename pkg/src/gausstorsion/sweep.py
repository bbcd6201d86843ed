"""Comparison sweep: domains of matched Gaussian measure against their half-space.

Each tuple (family, measure, beta) is solved on a sequence of meshes; the
finest field goes through every level-set and boundary check. Meshes and
beta-independent operators are shared across the betas of a (family, measure)
group, which is the unit of work handed to the process pool.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import (DEFAULT_SEGMENTS, DEFAULT_TRUNCATION_RADIUS, EQUALITY_FAMILIES, FAMILIES,
                     Domain, check_isoperimetric, gaussian_measure, make_family, symmetrize,
                     truncation_error_bounds)
from .errors import DomainError, GaussTorsionError
from .fem import (DEFAULT_SOLVER, DiscreteField, SolverConfig, assemble, boundary_identity_residual,
                  generate_mesh, rayleigh_quotient, richardson, solve, torsion_value)
from .halfspace import HalfSpaceProblem, halfspace_torsion, v_min
from .levelset import (check_distribution_comparison, check_fubini_identity,
                       check_level_inequality, compute_profile, eps_disc, layer_cake_residual)

POSITIVITY_TOL = 1e-10
BOUNDARY_IDENTITY_TOL = 1e-3
LAYER_CAKE_TOL = 1e-5
HALFSPACE_TOL = 1e-12


class ReportIOError(GaussTorsionError, OSError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    measures: tuple = (0.2, 0.5, 0.8)
    betas: tuple = (0.5, 1.0, 2.0)
    families: tuple = FAMILIES
    mesh_sizes: tuple = (0.08, 0.04, 0.02)
    output: str | None = None
    seed: int = 0
    n_levels: int = 200
    n_perturbations: int = 10
    truncation_radius: float = DEFAULT_TRUNCATION_RADIUS
    segments: int = DEFAULT_SEGMENTS

    def __post_init__(self):
        for name in ("measures", "betas", "families", "mesh_sizes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.measures or not all(0 < s < 1 for s in self.measures):
            raise DomainError("all measures must lie in (0, 1)")
        if not self.betas or not all(b > 0 for b in self.betas):
            raise DomainError("all betas must be positive")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise DomainError(f"unknown families: {sorted(unknown)}")
        h = np.asarray(self.mesh_sizes, dtype=float)
        if len(h) < 3 or np.any(h <= 0) or np.any(np.diff(h) >= 0):
            raise DomainError("need at least three positive, strictly decreasing mesh sizes")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


FLAGS = ("solved", "positivity", "boundary_minimum", "distribution", "level_inequality",
         "layer_cake", "boundary_identity", "fubini", "rayleigh_minimal", "isoperimetric",
         "comparison", "equality_or_strict")

CSV_COLUMNS = (
    "family", "target_measure", "beta", "measure", "lambda_star", "T_domain", "T_extrapolated",
    "T_error_bar", "T_order", "T_order_reliable", "T_halfspace", "comparison_margin", "u_min",
    "u_min_boundary", "v_m", "eps_disc", "boundary_identity_residual",
    "fubini_integrated_residual", "lemma_max_margin", "eps_lem", "lemma_reliable_levels",
    "distribution_min_margin", "layer_cake_residual", "isoperimetric_margin",
    "rayleigh_min_gap", "cg_iters", "n_triangles", "h_finest", "passed", "failure",
)


@dataclass
class VerificationReport:
    config: dict
    rows: list = field(default_factory=list)
    generated_at: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r["passed"] for r in self.rows)

    def content_hash(self) -> str:
        blob = json.dumps({"config": self.config, "rows": self.rows}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": self.rows, "generated_at": self.generated_at,
                "content_hash": self.content_hash()}

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        return cls(data["config"], list(data["rows"]), data.get("generated_at", ""))


def _clean(x):
    """JSON-safe scalar: numpy types to Python, non-finite floats to ``None``."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _rayleigh_gap(u: DiscreteField, beta: float, rng, n: int) -> float:
    """Smallest relative ``Q(u + d) - Q(u)`` over random smooth perturbations ``d``.

    ``d`` is a random quadratic polynomial in ``x`` of size 1% of ``max u``
    on the unit disk.
    """
    q0 = rayleigh_quotient(u, beta)
    scale = max(abs(u.u_max), 1e-300)
    x, y = u.mesh.vertices.T
    basis = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    gaps = []
    for _ in range(n):
        d = (rng.standard_normal(len(basis)) @ basis) * (0.01 * scale)
        w = DiscreteField(u.mesh, u.coefficients + d, beta, cfg=u.cfg)
        gaps.append((rayleigh_quotient(w, beta) - q0) / q0)
    return float(min(gaps)) if gaps else math.nan


def _check_field(row: dict, u: DiscreteField, d: Domain, hs: HalfSpaceProblem, measure: float,
                 cfg: SweepConfig, rng) -> None:
    h = u.mesh.target_h
    beta = hs.beta
    vm = v_min(hs)
    row["v_m"] = vm
    row["u_min"] = u.u_min
    bnodes = u.mesh.boundary_nodes()
    row["u_min_boundary"] = float(u.coefficients[bnodes].min())
    row["eps_disc"] = eps_disc(h)
    prof = compute_profile(u, cfg.n_levels, v_m=vm)
    lem = check_level_inequality(u, beta, prof)
    row["lemma_max_margin"] = lem.max_margin
    row["eps_lem"] = lem.tolerance
    row["lemma_reliable_levels"] = int(lem.reliable.sum())
    dist = check_distribution_comparison(u, hs)
    row["distribution_min_margin"] = dist.min_margin
    fub = check_fubini_identity(u, beta, prof, measure)
    row["fubini_integrated_residual"] = fub.integrated_residual
    row["layer_cake_residual"] = layer_cake_residual(u, prof)
    row["rayleigh_min_gap"] = _rayleigh_gap(u, beta, rng, cfg.n_perturbations)
    row["_flags"].update(
        positivity=row["u_min"] >= -POSITIVITY_TOL,
        boundary_minimum=row["u_min_boundary"] <= vm + row["eps_disc"],
        distribution=dist.passed,
        level_inequality=lem.passed,
        layer_cake=row["layer_cake_residual"] <= LAYER_CAKE_TOL,
        fubini=fub.integrated_residual <= BOUNDARY_IDENTITY_TOL,
        rayleigh_minimal=row["rayleigh_min_gap"] >= -1e-12,
    )


def _group_rows(family: str, target: float, betas, cfg: SweepConfig, solver: SolverConfig,
                index0: int) -> list:
    """All rows for one (family, measure): meshes built once, reused for every beta."""
    rows = []
    base = {"family": family, "target_measure": target}
    try:
        d = make_family(family, target, truncation_radius=cfg.truncation_radius,
                        segments=cfg.segments)
        measure = gaussian_measure(d)
        lam = symmetrize(d, measure).lam
        iso = check_isoperimetric(d)
        meshes = [generate_mesh(d, h) for h in cfg.mesh_sizes]
        tail = truncation_error_bounds(d)["measure"]
    except GaussTorsionError as exc:
        return [dict(base, beta=b, passed=False, failure=f"setup: {exc}") for b in betas]
    for k, beta in enumerate(betas):
        row = dict(base, beta=float(beta), measure=measure, lambda_star=lam,
                   isoperimetric_margin=iso, _flags={})
        rng = np.random.default_rng([cfg.seed, index0 + k])
        try:
            hs = HalfSpaceProblem(lam, float(beta))
            T_hs = halfspace_torsion(hs)
            Ts, residuals, u = [], [], None
            for m in meshes:
                u = solve(assemble(m, float(beta), solver), solver)
                Ts.append(torsion_value(u))
                residuals.append(boundary_identity_residual(u, measure))
            study = richardson(cfg.mesh_sizes, Ts, noise=10 * solver.cg_tol * abs(Ts[-1]))
            bar = study.error_bar + HALFSPACE_TOL + tail * T_hs
            margin = T_hs - Ts[-1]
            row.update(T_domain=Ts[-1], T_extrapolated=study.T_extrapolated,
                       T_error_bar=bar, T_order=study.order, T_order_reliable=study.reliable,
                       T_halfspace=T_hs, comparison_margin=margin,
                       boundary_identity_residual=residuals[-1],
                       boundary_identity_levels=residuals, T_levels=Ts,
                       cg_iters=u.cg_iters, n_triangles=u.mesh.n_triangles,
                       h_finest=cfg.mesh_sizes[-1])
            floor = 100 * solver.cg_tol
            improving = all(r2 <= r1 or r2 <= floor for r1, r2 in zip(residuals, residuals[1:]))
            if family in EQUALITY_FAMILIES:
                eq_ok = abs(margin) <= bar
            else:
                eq_ok = margin > bar
            row["_flags"].update(
                solved=True,
                boundary_identity=residuals[-1] <= BOUNDARY_IDENTITY_TOL and improving,
                isoperimetric=(iso >= -1e-12) and (family not in EQUALITY_FAMILIES
                                                   or abs(iso) <= 1e-6),
                comparison=Ts[-1] <= T_hs + bar,
                equality_or_strict=eq_ok,
            )
            _check_field(row, u, d, hs, measure, cfg, rng)
        except GaussTorsionError as exc:
            row["_flags"]["solved"] = False
            row["failure"] = f"{type(exc).__name__}: {exc}"
        flags = row.pop("_flags")
        for name in FLAGS:
            row[f"ok_{name}"] = bool(flags.get(name, False))
        failed = [name for name in FLAGS if not row[f"ok_{name}"]]
        row["passed"] = not failed
        row.setdefault("failure", ",".join(failed))
        rows.append({k: ([_clean(x) for x in v] if isinstance(v, list) else _clean(v))
                     for k, v in row.items()})
    return rows


def _run_group(args):
    return _group_rows(*args)


def worker_count() -> int:
    env = os.environ.get("GT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise DomainError("GT_THREADS must be a positive integer") from exc
    return os.cpu_count() or 1


def run_sweep(cfg: SweepConfig, solver: SolverConfig = DEFAULT_SOLVER,
              workers: int | None = None) -> VerificationReport:
    """Run every (family, measure, beta) tuple; failures are recorded per row."""
    jobs = []
    for fam in cfg.families:
        for s in cfg.measures:
            jobs.append((fam, float(s), tuple(float(b) for b in cfg.betas), cfg, solver,
                         len(jobs) * len(cfg.betas)))
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        groups = [_run_group(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            groups = list(pool.map(_run_group, jobs))
    rows = [r for g in groups for r in g]
    return VerificationReport(cfg.to_dict(), rows,
                              time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))


def verify_tuple(family: str, measure: float, beta: float,
                 mesh_sizes=(0.08, 0.04, 0.02), seed: int = 0, **kw) -> dict:
    cfg = SweepConfig(measures=(measure,), betas=(beta,), families=(family,),
                      mesh_sizes=tuple(mesh_sizes), seed=seed, **kw)
    return run_sweep(cfg, workers=1).rows[0]


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def report_csv(report: VerificationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def report_json(report: VerificationReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def plot_data(report: VerificationReport) -> dict:
    """Per family: CSV text with ``s, beta, T_domain, T_error_bar, T_halfspace`` sorted by ``s``."""
    out = {}
    for fam in dict.fromkeys(r["family"] for r in report.rows):
        rows = sorted((r for r in report.rows if r["family"] == fam and "T_domain" in r),
                      key=lambda r: (r["measure"], r["beta"]))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("s", "beta", "T_domain", "T_error_bar", "T_halfspace"))
        for r in rows:
            w.writerow([_fmt(r[c]) for c in ("measure", "beta", "T_domain", "T_error_bar",
                                             "T_halfspace")])
        out[fam] = buf.getvalue()
    return out


def report_emit(report: VerificationReport, fmt: str, path) -> list:
    """Write the report as ``json``, ``csv`` or ``plot-data``; returns the paths written.

    ``path`` is a file for json/csv and a directory for plot-data (one
    ``plot_<family>.csv`` per family).
    """
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(report_json(report))
            return [path]
        if fmt == "csv":
            path.write_text(report_csv(report))
            return [path]
        if fmt == "plot-data":
            path.mkdir(parents=True, exist_ok=True)
            written = []
            for fam, text in plot_data(report).items():
                p = path / f"plot_{fam}.csv"
                p.write_text(text)
                written.append(p)
            return written
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc
    raise DomainError(f"unknown report format {fmt!r}")


def load_report(path) -> VerificationReport:
    try:
        return VerificationReport.from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc
