"""Command line: ``mixedpower {constants,solve,solve-steady,verify,sweep}``.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible parameters,
3 solver failure.

Config files are INI text (``configparser``).  Sections and keys, all
optional::

    [domain]       Lx, Ly, nx, ny, T, nt, gamma (comma list of edges)
    [coefficients] a11, a12, a22 (expressions in x, y), ell, beta (expression)
    [data]         f, fx, fy, h (expressions in x, y, t), u0 (in x, y)
    [parameters]   p, variant, nu0, nu1, nu2, delta, beta, cover_N, cover_r, cn,
                   optimize_nu0 (yes/no)
    [ellipticity]  a_lo, a_hi, b_lo, b_hi (override the values read off the coefficients)
    [solver]       newton_tol, newton_max, linear_tol, damping
    [verify]       any CampaignConfig field
    [sweep]        kind (nu0 | mesh | eps_cap), start, stop, num
    [run]          seed, out

``--config builtin:NAME`` loads a config shipped with the package.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import estimates as est
from .elliptic import SteadyInstance, solve_monotone, steady_residual
from .expr import ExprError, Expression
from .meshfields import EDGES, GridFunction, SpaceTimeGrid, write_csv
from .parabolic import (
    BoundaryLaw,
    ProblemInstance,
    SolverError,
    SolverOptions,
    solve_with_stats,
    weak_residual,
)
from .parabolic import solve
from .verify import (
    CampaignConfig,
    data_norms,
    reports_to_csv,
    run_campaign,
    summary,
    trace_constant,
    verify_energy,
)

__all__ = ["main", "RunConfig", "load_config", "cmd_constants", "cmd_solve",
           "cmd_solve_steady", "cmd_verify", "cmd_sweep"]

CONSTANTS_VERSION = "mixedpower-constants v1"
SWEEP_VERSION = "mixedpower-sweep v1"
CONFIG_VERSION = "mixedpower-config v1"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "constants"
    domain: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    ellipticity: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    out: Path = Path("out")
    tol: Optional[float] = None

    # -- instance --------------------------------------------------------

    def grid(self, spacetime: bool = True) -> SpaceTimeGrid:
        d = self.domain
        gamma = [e.strip() for e in d.get("gamma", ",".join(EDGES)).split(",") if e.strip()]
        nx = _int(d, "nx", 16)
        grid = SpaceTimeGrid(_float(d, "Lx", 1.0), _float(d, "Ly", 1.0), nx, _int(d, "ny", nx),
                             gamma_edges=frozenset(gamma))
        if spacetime:
            grid = grid.with_time(_float(d, "T", 1.0), _int(d, "nt", 16))
        return grid

    def _expr(self, section: dict, key: str, default: str) -> Expression:
        return Expression(section.get(key, default))

    def coefficient(self, grid: SpaceTimeGrid) -> np.ndarray:
        c = self.coefficients
        X, Y = grid.mesh()
        a11 = self._expr(c, "a11", "1")(X, Y)
        a12 = self._expr(c, "a12", "0")(X, Y)
        a22 = self._expr(c, "a22", "1")(X, Y)
        A = np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)
        if np.allclose(A, A[:1, :1]):
            return A[0, 0].copy()
        return A

    def law(self, grid: SpaceTimeGrid) -> BoundaryLaw:
        c = self.coefficients
        X, Y = grid.mesh()
        return BoundaryLaw(_float(c, "ell", 2.0), self._expr(c, "beta", "1")(X, Y))

    def instance(self) -> ProblemInstance:
        grid = self.grid(True)
        d = self.data
        X, Y = grid.mesh()
        t = grid.t[:, None, None]

        def st(key):
            return self._expr(d, key, "0")(X[None], Y[None], t)

        fvec = np.stack([st("fx"), st("fy")], -1)
        return ProblemInstance(grid, self.coefficient(grid), self.law(grid), f=st("f"),
                               fvec=fvec, h=st("h"), u0=self._expr(d, "u0", "0")(X, Y))

    def steady_instance(self) -> SteadyInstance:
        grid = self.grid(False)
        d = self.data
        X, Y = grid.mesh()

        def sp(key):
            return self._expr(d, key, "0")(X, Y, 0.0)

        return SteadyInstance(grid, self.coefficient(grid), self.law(grid), f=sp("f"),
                              fvec=np.stack([sp("fx"), sp("fy")], -1), h=sp("h"))

    def solver_options(self) -> SolverOptions:
        s = self.solver
        opts = SolverOptions(newton_tol=_float(s, "newton_tol", 1e-10),
                             newton_max=_int(s, "newton_max", 50),
                             linear_tol=_float(s, "linear_tol", 1e-12),
                             damping=_float(s, "damping", 1.0))
        if self.tol is not None:
            opts = replace(opts, newton_tol=self.tol)
        return opts

    def free_parameters(self, inst) -> est.FreeParameters:
        p = self.parameters
        over = {}
        for k in ("nu0", "nu1", "nu2", "delta", "beta", "cover_r", "cn", "eps"):
            if k in p:
                over[k] = _float(p, k, 0.0)
        if "cover_N" in p:
            over["cover_N"] = _int(p, "cover_N", 5)
        return est.FreeParameters.for_data(has_f=bool(np.any(inst.f != 0)),
                                           has_fvec=bool(np.any(inst.fvec != 0)),
                                           has_h=bool(np.any(inst.h != 0)), **over)

    def ellipticity_data(self, inst) -> est.EllipticityData:
        ed = inst.ellipticity()
        e = self.ellipticity
        kw = {k: _float(e, k, getattr(ed, k)) for k in ("a_lo", "a_hi", "b_lo", "b_hi", "ell")}
        return est.EllipticityData(**kw)

    def campaign(self) -> CampaignConfig:
        kw = {}
        for f in fields(CampaignConfig):
            if f.name in self.verify:
                conv = float if f.default is None else type(f.default)
                try:
                    kw[f.name] = conv(self.verify[f.name])
                except ValueError:
                    raise UsageError(f"[verify] {f.name} = {self.verify[f.name]!r} is invalid") from None
        unknown = set(self.verify) - {f.name for f in fields(CampaignConfig)}
        if unknown:
            raise UsageError(f"unknown [verify] keys: {sorted(unknown)}")
        return CampaignConfig(**kw)

    def to_dict(self) -> dict:
        """Every config field as plain JSON-compatible data."""
        d = {k: getattr(self, k) for k in ("command", "domain", "coefficients", "data",
                                           "parameters", "ellipticity", "solver", "verify",
                                           "sweep", "seed", "tol")}
        d["out"] = str(self.out)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**{**d, "out": Path(d["out"])})


def _float(d: dict, key: str, default: float) -> float:
    if key not in d:
        return default
    try:
        return float(d[key])
    except ValueError:
        raise UsageError(f"{key} = {d[key]!r} is not a number") from None


def _int(d: dict, key: str, default: int) -> int:
    if key not in d:
        return default
    try:
        return int(d[key])
    except ValueError:
        raise UsageError(f"{key} = {d[key]!r} is not an integer") from None


def _read_config_text(path: str) -> str:
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        try:
            return (resources.files("mixedpower") / "data" / f"{name}.ini").read_text()
        except FileNotFoundError:
            raise UsageError(f"no builtin config {name!r}") from None
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None


def load_config(command: str, path: Optional[str] = None, seed: Optional[int] = None,
                out: Optional[str] = None, tol: Optional[float] = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path:
        try:
            cp.read_string(_read_config_text(path))
        except configparser.Error as exc:
            raise UsageError(f"config parse error: {exc}") from None
    sec = {s: dict(cp[s]) for s in cp.sections()}
    known = {"domain", "coefficients", "data", "parameters", "ellipticity", "solver", "verify",
             "sweep", "run"}
    unknown = set(sec) - known
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    run = sec.get("run", {})
    cfg = RunConfig(command=command, **{k: sec.get(k, {}) for k in known - {"run"}})
    cfg.seed = seed if seed is not None else _int(run, "seed", 0)
    cfg.out = Path(out if out is not None else run.get("out", "out"))
    cfg.tol = tol
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _rows_csv(header: str, columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def constants_table(cfg: RunConfig) -> tuple[list[tuple[str, float, str]], est.FreeParameters]:
    """Every estimate constant for the configured instance, and the free
    parameters actually used."""
    inst = cfg.instance()
    fp = cfg.free_parameters(inst)
    ed = cfg.ellipticity_data(inst)
    p = _float(cfg.parameters, "p", 2.0)
    variant = cfg.parameters.get("variant", "standard")
    T = inst.grid.T
    K = trace_constant(inst.grid)
    dn = data_norms(inst, p, K)
    dn2 = data_norms(inst, 2.0, K)
    if cfg.parameters.get("optimize_nu0", "no").lower() in ("yes", "true", "1") and dn.f_p > 0:
        fp = replace(fp, nu0=est.optimal_nu0(p, ed, fp, dn, T, variant))
    mb = est.theorem_main_bounds(p, ed, fp, dn, T, variant, dn2=dn2)
    rows = [
        ("S_poincare_n2", est.poincare_sobolev_constant(2), "local Poincare constant, n=2"),
        ("S_poincare_n3", est.poincare_sobolev_constant(3), "local Poincare constant, n=3"),
        ("K_trace_lower_bound", K, "trace constant, numerical lower bound"),
        ("nu0", fp.nu0, "free parameter"),
        ("G", mb.G, "sup-in-time Lp bound prefactor"),
        ("kappa", mb.kappa, "Gronwall rate"),
        ("G_exp", mb.G * math.exp(mb.kappa * T), "sup-in-time Lp bound"),
        ("E", mb.E, "energy bound"),
        ("M", mb.M, "global gradient bound"),
        ("C_n", mb.C_n, "covering constant"),
        ("B_interior", est.gehring_B(ed, fp.nu0, 2, "interior"), "reverse Hoelder constant, interior"),
        ("B_boundary", est.gehring_B(ed, fp.nu0, 2, "boundary"), "reverse Hoelder constant, boundary"),
        ("upsilon_interior", est.interior_upsilon(ed, fp.nu0, 2), "Gehring constant, interior"),
        ("upsilon_boundary", mb.upsilon, "Gehring constant, boundary"),
        ("eps_cap", est.gradient_epsilon_cap(2, mb.upsilon), "admissible gradient gain"),
        ("upsilon_steady", est.steady_upsilon(ed, fp.nu0, 2), "Gehring constant, steady"),
    ]
    if ed.ell == 2:
        try:
            w = est.linear_w1p(p, ed, T, dn, replace(fp, nu0=fp.nu0 or 1.0))
            rows += [("Lambda_p", w.Lambda_p, "linear W1p constant"),
                     ("w1p_grad_bound", w.grad_bound, "linear W1p gradient bound"),
                     ("w1p_trace_bound", w.trace_bound, "linear W1p trace bound")]
        except est.InfeasibleParameters:
            rows.append(("Lambda_p", math.nan, "infeasible perturbation"))
        try:
            cd = est.contraction_data(ed, 2.0, 2.0, 2)
            rows += [("contraction_t", cd.t, "fixed-point step"),
                     ("contraction_kappa", cd.kappa_c, "contraction condition"),
                     ("contraction_q", cd.q_factor, "contraction factor, Mp = 2"),
                     ("el2_mult", cd.el2_mult, "steady W1p multiplier, Mp = 2")]
        except est.InfeasibleParameters:
            rows.append(("contraction_q", math.nan, "infeasible contraction, Mp = 2"))
    return rows, fp


def cmd_constants(cfg: RunConfig) -> Path:
    rows, fp = constants_table(cfg)
    path = _write(cfg.out / "constants.csv",
                  _rows_csv(CONSTANTS_VERSION, ["name", "value", "tag"], rows))
    _write_resolved(cfg, {"free_parameters": asdict(fp)})
    return path


def cmd_solve(cfg: RunConfig) -> Path:
    inst = cfg.instance()
    opts = cfg.solver_options()
    u, stats = solve_with_stats(inst, opts)
    path = _write(cfg.out / "solution.csv", write_csv(u))
    summ = {"command": "solve", "residual": weak_residual(inst, u),
            "newton_iterations_total": int(sum(stats.newton_iterations)),
            "newton_iterations_max": int(max(stats.newton_iterations, default=0)),
            "steps": inst.grid.nt}
    _write(cfg.out / "solve_summary.json", json.dumps(summ, sort_keys=True, indent=1) + "\n")
    _write_resolved(cfg, {"solver": asdict(opts)})
    return path


def cmd_solve_steady(cfg: RunConfig) -> Path:
    inst = cfg.steady_instance()
    opts = cfg.solver_options()
    u = solve_monotone(inst, opts)
    path = _write(cfg.out / "steady_solution.csv", write_csv(u))
    summ = {"command": "solve-steady", "residual": steady_residual(inst, u)}
    _write(cfg.out / "solve_summary.json", json.dumps(summ, sort_keys=True, indent=1) + "\n")
    _write_resolved(cfg, {"solver": asdict(opts)})
    return path


def cmd_verify(cfg: RunConfig) -> Path:
    camp = cfg.campaign()
    if cfg.tol is not None:
        camp = replace(camp, tol=cfg.tol)
    reports = run_campaign(camp, cfg.seed)
    path = _write(cfg.out / "report.csv", reports_to_csv(reports))
    _write(cfg.out / "summary.json",
           json.dumps(summary(reports), sort_keys=True, indent=1) + "\n")
    _write_resolved(cfg, {"campaign": asdict(camp), "seed": cfg.seed})
    return path


def _sweep_range(s: dict, default: tuple[float, float, int]) -> np.ndarray:
    start, stop = _float(s, "start", default[0]), _float(s, "stop", default[1])
    num = _int(s, "num", default[2])
    if num < 1 or stop < start:
        raise UsageError("empty sweep range")
    return np.linspace(start, stop, num)


def cmd_sweep(cfg: RunConfig) -> Path:
    s = cfg.sweep
    kind = s.get("kind", "nu0")
    if kind == "nu0":
        inst = cfg.instance()
        ed = cfg.ellipticity_data(inst)
        fp = cfg.free_parameters(inst)
        p = _float(cfg.parameters, "p", 2.0)
        dn = data_norms(inst, p, trace_constant(inst.grid))
        if dn.f_p == 0:
            raise UsageError("the nu0 sweep needs a nonzero f")
        xs = 10.0 ** _sweep_range(s, (-3.0, 2.0, 41))
        rows = []
        for nu in xs:
            mb = est.theorem_main_bounds(p, ed, replace(fp, nu0=float(nu)), dn, inst.grid.T,
                                         dn2=dn if p == 2 else data_norms(inst, 2.0, dn.K_trace))
            rows.append((float(nu), mb.G * math.exp(mb.kappa * inst.grid.T)))
        cols = ["nu0", "G_exp"]
        extra = f"optimal_nu0={est.optimal_nu0(p, ed, fp, dn, inst.grid.T)!r}"
    elif kind == "mesh":
        sizes = [int(v) for v in _sweep_range(s, (8, 32, 3))]
        if len(set(sizes)) != len(sizes):
            raise UsageError("mesh sweep sizes must be distinct")
        rows = []
        for nx in sizes:
            c = replace(cfg, domain={**cfg.domain, "nx": str(nx), "ny": str(nx), "nt": str(nx)})
            inst = c.instance()
            u = solve(inst, c.solver_options())
            rep = verify_energy(inst, u, c.free_parameters(inst))[0]
            rows.append((inst.grid.hx, rep.margin))
        cols = ["h", "energy_margin"]
        extra = "check=energy_gr1"
    elif kind == "eps_cap":
        xs = 10.0 ** _sweep_range(s, (0.5, 8.0, 31))
        rows = [(float(u), est.gradient_epsilon_cap(2, float(u))) for u in xs]
        cols = ["upsilon", "eps_cap"]
        extra = "n=2"
    else:
        raise UsageError(f"unknown sweep kind {kind!r}")
    path = _write(cfg.out / f"sweep_{kind}.csv",
                  _rows_csv(f"{SWEEP_VERSION} {extra}", cols, rows))
    _write_resolved(cfg, {"sweep_kind": kind, "points": len(rows)})
    return path


def _write_resolved(cfg: RunConfig, resolved: dict) -> None:
    doc = {"version": CONFIG_VERSION, "config": cfg.to_dict(), "resolved": resolved}
    _write(cfg.out / "run_config.json", json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_run_config(path) -> tuple[RunConfig, dict]:
    """Inverse of the ``run_config.json`` written by every command."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CONFIG_VERSION:
        raise ValueError("unknown run_config format")
    return RunConfig.from_dict(doc["config"]), doc["resolved"]


COMMANDS = {
    "constants": cmd_constants,
    "solve": cmd_solve,
    "solve-steady": cmd_solve_steady,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mixedpower", description="explicit estimates, solvers and checks")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI config path or builtin:NAME")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--tol", type=float, help="Newton tolerance (solve) or check tolerance (verify)")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.command, args.config, args.seed, args.out, args.tol)
        path = COMMANDS[args.command](cfg)
    except (UsageError, ExprError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except est.ParameterError as exc:
        print(f"infeasible parameters: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
