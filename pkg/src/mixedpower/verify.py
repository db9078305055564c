"""Executable checks of the implemented inequalities and randomized campaigns.

Every check returns ``EstimateReport`` records.  A report passes when
``lhs <= rhs * (1 + tol)``; informational reports (known witnesses, proxies)
are kept in the output but excluded from the pass/fail summary.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import estimates as est
from .elliptic import SteadyInstance, estimate_Mp, solve_contraction, solve_monotone
from .meshfields import (
    GridFunction,
    ParabolicCube,
    SpaceTimeGrid,
    StieltjesFn,
    cube_restrict,
    cutoff,
    ess_sup_lp,
    gradient,
    lp_norm,
    slice_norms,
    stieltjes_integral,
    trace_constant_lower_bound,
    weighted_mean_U,
)
from .parabolic import BoundaryLaw, ProblemInstance, SolverOptions, solve, weak_residual
from ._fem import Q1Space

__all__ = [
    "REPORT_VERSION",
    "EstimateReport",
    "CoverSpec",
    "InstanceSpec",
    "CampaignConfig",
    "verify_energy",
    "verify_caccioppoli",
    "verify_poincare",
    "verify_stieltjes",
    "verify_gradient_bound",
    "verify_steady",
    "verify_gehring_spot",
    "random_cubes",
    "random_instance_spec",
    "random_steady_instance",
    "run_campaign",
    "reports_to_csv",
    "reports_from_csv",
    "summary",
]

REPORT_VERSION = "mixedpower-report v1"
TOL_SOLVER = 0.02
TOL_EXACT = 1e-9


@dataclass(frozen=True)
class EstimateReport:
    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    tol: float
    params: dict = field(default_factory=dict)
    informational: bool = False

    @classmethod
    def build(cls, name: str, lhs: float, rhs: float, tol: float,
              params: Optional[dict] = None, informational: bool = False) -> "EstimateReport":
        lhs, rhs = float(lhs), float(rhs)
        return cls(name, lhs, rhs, _margin(lhs, rhs), bool(lhs <= rhs * (1 + tol)), float(tol),
                   dict(params or {}), informational)

    def consistent(self) -> bool:
        return (self.passed == (self.lhs <= self.rhs * (1 + self.tol))
                and (self.margin == _margin(self.lhs, self.rhs)))


def _margin(lhs: float, rhs: float) -> float:
    if lhs == 0 and rhs == 0:
        return 0.0
    if rhs == 0:
        return math.inf
    return lhs / rhs


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverSpec:
    """Uniform cover of the rectangle by closed squares of side ``r_sharp``."""

    r_sharp: float
    N: int
    beta: float
    centers: tuple = ()

    @classmethod
    def uniform(cls, grid: SpaceTimeGrid, m: int = 2, beta: float = 0.5, n: int = 2) -> "CoverSpec":
        g = grid.spatial()
        side = max(g.Lx, g.Ly) / m
        cx = g.x0 + side * (np.arange(math.ceil(g.Lx / side - 1e-12)) + 0.5)
        cy = g.y0 + side * (np.arange(math.ceil(g.Ly / side - 1e-12)) + 0.5)
        centers = tuple((float(a), float(b)) for a in cx for b in cy)
        X, Y = g.mesh()
        count = np.zeros(X.shape, dtype=int)
        tol = 1e-12 * side
        for a, b in centers:
            count += ((np.abs(X - a) <= side / 2 + tol) & (np.abs(Y - b) <= side / 2 + tol))
        if count.min() < 1:
            raise ValueError("cover leaves grid nodes uncovered")
        N = 2 ** n + 1
        if count.max() > N:
            raise ValueError(f"cover overlap {count.max()} exceeds N = {N}")
        return cls(side, N, beta, centers)

    def free_parameters(self, fp: est.FreeParameters) -> est.FreeParameters:
        return replace(fp, cover_N=self.N, cover_r=self.r_sharp, beta=self.beta)


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def _smooth(c, X, Y, t=0.0):
    return ((c[0] + c[1] * np.cos(np.pi * X) + c[2] * np.sin(np.pi * Y) + c[3] * X * Y)
            * (1 + c[4] * t))


@dataclass(frozen=True)
class InstanceSpec:
    """Resolution-free description of a smooth random parabolic instance."""

    ell: float
    a_lo: float
    a_hi: float
    angle: float
    beta0: float
    beta1: float
    u0: tuple
    f: tuple
    fx: tuple
    fy: tuple
    h: tuple
    T: float = 0.5
    gamma_edges: tuple = ("bottom", "left", "right", "top")

    def A(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        Q = np.array([[c, -s], [s, c]])
        return Q @ np.diag([self.a_lo, self.a_hi]) @ Q.T

    def build(self, nx: int, nt: int) -> ProblemInstance:
        grid = SpaceTimeGrid(1.0, 1.0, nx, nx, T=self.T, nt=nt, gamma_edges=frozenset(self.gamma_edges))
        X, Y = grid.mesh()
        beta = self.beta0 + self.beta1 * 0.5 * (1 + np.cos(np.pi * X * Y))
        inst = ProblemInstance.from_functions(
            grid, self.A(), BoundaryLaw(self.ell, beta),
            f=lambda x, y, t: _smooth(self.f, x, y, t),
            fvec=lambda x, y, t: (_smooth(self.fx, x, y, t), _smooth(self.fy, x, y, t)),
            h=lambda x, y, t: _smooth(self.h, x, y, t),
            u0=lambda x, y: _smooth(self.u0, x, y),
        )
        return inst


def random_instance_spec(rng: np.random.Generator, ell: Optional[float] = None) -> InstanceSpec:
    ell = float(rng.choice([2.0, 3.0, 5.0])) if ell is None else ell
    a_lo = float(rng.uniform(0.5, 1.5))

    def coeffs(scale, p_zero=0.2):
        if rng.uniform() < p_zero:
            return (0.0,) * 5
        c = rng.normal(scale=scale, size=5)
        c[4] = rng.uniform(-1, 1)
        return tuple(float(x) for x in c)

    return InstanceSpec(
        ell=ell, a_lo=a_lo, a_hi=float(a_lo * rng.uniform(1.0, 2.0)),
        angle=float(rng.uniform(0, np.pi)),
        beta0=float(rng.uniform(0.5, 1.5)), beta1=float(rng.uniform(0, 0.5)),
        u0=coeffs(1.0, 0.0), f=coeffs(1.0), fx=coeffs(0.5), fy=coeffs(0.5), h=coeffs(1.0),
    )


def random_steady_instance(rng: np.random.Generator, nx: int = 16) -> SteadyInstance:
    """Random feasible steady instance with ``ell = 2`` for the contraction scheme.

    ``a_lo/a_hi`` stays in ``[0.9, 1]`` and ``beta`` is constant in
    ``[0.6, 1.1]``, so the contraction condition holds with ``Mp = 2``.
    """
    a_hi = 1.0
    a_lo = float(rng.uniform(0.9, 1.0))
    ang = float(rng.uniform(0, np.pi))
    c, s = math.cos(ang), math.sin(ang)
    Q = np.array([[c, -s], [s, c]])
    A = Q @ np.diag([a_lo, a_hi]) @ Q.T
    beta = float(rng.uniform(0.6, 1.1))
    cf, cx, cy, ch = (rng.normal(size=5) for _ in range(4))
    grid = SpaceTimeGrid(1.0, 1.0, nx, nx)
    return SteadyInstance.from_functions(
        grid, A, BoundaryLaw(2.0, beta),
        f=lambda x, y: _smooth(cf, x, y), fvec=lambda x, y: (_smooth(cx, x, y), _smooth(cy, x, y)),
        h=lambda x, y: _smooth(ch, x, y))


@lru_cache(maxsize=32)
def _trace_constant(nx: int, ny: int, Lx: float, Ly: float, edges: frozenset) -> float:
    return trace_constant_lower_bound(SpaceTimeGrid(Lx, Ly, nx, ny, gamma_edges=edges),
                                      samples=60, seed=0)


def trace_constant(grid: SpaceTimeGrid) -> float:
    """Numerical lower bound of the trace constant (cached per grid shape)."""
    return _trace_constant(grid.nx, grid.ny, grid.Lx, grid.Ly, grid.gamma_edges)


def default_free_parameters(inst) -> est.FreeParameters:
    return est.FreeParameters.for_data(has_f=bool(np.any(inst.f != 0)),
                                       has_fvec=bool(np.any(inst.fvec != 0)),
                                       has_h=bool(np.any(inst.h != 0)))


# ---------------------------------------------------------------------------
# Global energy estimates
# ---------------------------------------------------------------------------


def _sigma_power(inst: ProblemInstance, v: np.ndarray, q: float) -> float:
    """``int_{Sigma_T} |v|^q``."""
    if not inst.grid.gamma_edges:
        return 0.0
    return lp_norm(GridFunction(inst.grid, v), q, "gamma_trace") ** q


def data_norms(inst: ProblemInstance, p: float, K_trace: float) -> est.DataNorms:
    g = inst.grid
    ell = inst.law.ell
    return est.DataNorms(
        u0_p=lp_norm(GridFunction(g.spatial(), inst.u0), p),
        f_p=lp_norm(inst.field("f"), p),
        fvec_p=lp_norm(inst.field("fvec"), p),
        h_mixed=_sigma_power(inst, inst.h, (ell + p - 2) / (ell - 1)),
        h_p=_sigma_power(inst, inst.h, p) ** (1 / p) if inst.grid.gamma_edges else 0.0,
        omega_vol=g.area,
        K_trace=K_trace,
    )


def verify_energy(inst: ProblemInstance, u: GridFunction, fp: est.FreeParameters,
                  p: float = 2.0, tol: float = TOL_SOLVER) -> list[EstimateReport]:
    """Sup-in-time ``L^p`` bound, the gradient/boundary energy bound and the
    boundary ``L^(ell+p-2)`` bound."""
    ed = inst.ellipticity()
    K = trace_constant(inst.grid)
    dn = data_norms(inst, p, K)
    T = inst.grid.T
    mb = est.theorem_main_bounds(p, ed, fp, dn, T, dn2=data_norms(inst, 2.0, K) if p != 2 else None)
    res = weak_residual(inst, u)
    params = {"p": p, "ell": ed.ell, "a_lo": ed.a_lo, "b_lo": ed.b_lo, "nu0": fp.nu0,
              "nx": inst.grid.nx, "nt": inst.grid.nt, "residual": res}

    lhs1 = ess_sup_lp(u, p) ** p
    rhs1 = mb.G * math.exp(mb.kappa * T)
    w = GridFunction(inst.grid, np.abs(u.values) ** ((p - 2) / 2))
    gu = gradient(u)
    weighted = GridFunction(inst.grid, gu.values * w.values[..., None])
    bnd = _sigma_power(inst, u.values, ed.ell + p - 2)
    lhs2 = ed.a_lo * lp_norm(weighted, 2) ** 2 + ed.b_lo * bnd
    return [
        EstimateReport.build("energy_gr1", lhs1, rhs1, tol, params),
        EstimateReport.build("energy_gr2", lhs2, mb.E, tol, params),
        EstimateReport.build("energy_boundary", bnd, mb.E / ed.b_lo, tol, params),
    ]


def verify_gradient_bound(inst: ProblemInstance, u: GridFunction, fp: est.FreeParameters,
                          cover: CoverSpec, p: Optional[float] = None,
                          tol: float = TOL_SOLVER) -> EstimateReport:
    """``||grad u||_{p,Q_T}`` against the global gradient bound with the cover's
    ``N``, ``r_sharp`` and ``beta``.  Default ``p = 2 + min(0.01, cap/2)``."""
    ed = inst.ellipticity()
    fpc = cover.free_parameters(fp)
    ups = est.boundary_upsilon(ed, fpc.nu0, 2)
    cap = est.gradient_epsilon_cap(2, ups)
    if p is None:
        p = 2 + min(0.01, cap / 2)
    eps = p - 2
    if not 0 <= eps < cap:
        raise est.InfeasibleParameters(f"eps={eps:.3g} outside [0, {cap:.3g})")
    K = trace_constant(inst.grid)
    mb = est.theorem_main_bounds(p, ed, fpc, data_norms(inst, p, K), inst.grid.T,
                                 dn2=data_norms(inst, 2.0, K))
    lhs = lp_norm(gradient(u), p)
    return EstimateReport.build("gradient_bound", lhs, mb.M, tol,
                                {"p": p, "eps": eps, "upsilon": ups, "N": cover.N,
                                 "r_sharp": cover.r_sharp, "nx": inst.grid.nx})


# ---------------------------------------------------------------------------
# Caccioppoli
# ---------------------------------------------------------------------------


def _is_interior(grid: SpaceTimeGrid, c: ParabolicCube) -> bool:
    g = grid
    dist = {
        "left": c.x0 - c.R - g.x0,
        "right": g.x0 + g.Lx - (c.x0 + c.R),
        "bottom": c.y0 - c.R - g.y0,
        "top": g.y0 + g.Ly - (c.y0 + c.R),
    }
    return all(dist[e] > 0 for e in g.gamma_edges)


def random_cubes(grid: SpaceTimeGrid, count: int, rng: np.random.Generator
                 ) -> list[tuple[ParabolicCube, float]]:
    """Alternating interior / boundary cubes with inner radii ``r``.

    Interior cubes keep a gap of one cell to Gamma; boundary cubes are
    centred on a Gamma edge.
    """
    g = grid
    h = max(g.hx, g.hy)
    r_min = 1.01 * max(h, math.sqrt(g.dt))
    R_lo = r_min / 0.7
    R_hi = min(0.9 * math.sqrt(g.T), 0.3 * min(g.Lx, g.Ly))
    if R_lo >= R_hi:
        raise ValueError("grid too coarse for admissible cubes")
    edges = sorted(g.gamma_edges)
    out = []
    for k in range(count):
        R = float(rng.uniform(R_lo, R_hi))
        t0 = float(rng.uniform(0, g.T))
        if k % 2 == 0 or not edges:
            x0 = float(rng.uniform(g.x0 + R + h, g.x0 + g.Lx - R - h))
            y0 = float(rng.uniform(g.y0 + R + h, g.y0 + g.Ly - R - h))
        else:
            e = edges[int(rng.integers(len(edges)))]
            x0 = float(rng.uniform(g.x0, g.x0 + g.Lx))
            y0 = float(rng.uniform(g.y0, g.y0 + g.Ly))
            x0 = {"left": g.x0, "right": g.x0 + g.Lx}.get(e, x0)
            y0 = {"bottom": g.y0, "top": g.y0 + g.Ly}.get(e, y0)
        r = float(rng.uniform(max(0.3 * R, r_min), 0.8 * R))
        out.append((ParabolicCube(x0, y0, t0, R), r))
    return out


def verify_caccioppoli(inst: ProblemInstance, u: GridFunction,
                       cubes: Sequence[tuple[ParabolicCube, float]], fp: est.FreeParameters,
                       tol: float = 0.05, K_trace: Optional[float] = None) -> list[EstimateReport]:
    """Local energy inequality on each ``(cube, r)``.

    Interior cubes (closure away from Gamma) subtract the ``eta^2``-weighted
    mean; other cubes use ``U = 0``.  Time windows leaving ``[0, T]`` use the
    even reflection of ``u`` and the data.
    """
    ed = inst.ellipticity()
    g = inst.grid
    K = trace_constant(g) if K_trace is None else K_trace
    gu = gradient(u)
    out = []
    for c, r in cubes:
        if not (0 < r < c.R < math.sqrt(g.T)):
            raise ValueError("need 0 < r < R < sqrt(T)")
        uR = cube_restrict(u, c)
        eta = cutoff(uR.grid, c, r)
        interior = _is_interior(g, c)
        if interior:
            U = weighted_mean_U(uR, eta)
        else:
            U = np.zeros(uR.grid.nt + 1)
        w = GridFunction(uR.grid, eta.values[None] * (uR.values - U[:, None, None]))
        sup_term = float(np.max(slice_norms(w, 2) ** 2))
        grad_r = lp_norm(cube_restrict(gu, c.shrink(r)), 2) ** 2
        lhs = sup_term + ed.a_lo * (1 - fp.nu1 - fp.nu2) * grad_r
        hR = cube_restrict(inst.field("h"), c)
        norms = {
            "eta_u_minus_U_R": lp_norm(w, 2),
            "f_R": lp_norm(cube_restrict(inst.field("f"), c), 2),
            "fvec_R": lp_norm(cube_restrict(inst.field("fvec"), c), 2),
            "h_R": lp_norm(hR, 2, "gamma_trace") if hR.grid.gamma_edges else 0.0,
        }
        rhs = est.caccioppoli_rhs(ed, fp, c.R, r, K, norms)
        out.append(EstimateReport.build(
            "caccioppoli", lhs, rhs, tol,
            {"branch": "interior" if interior else "boundary", "x0": c.x0, "y0": c.y0,
             "t0": c.t0, "R": c.R, "r": r}))
    return out


# ---------------------------------------------------------------------------
# Poincare
# ---------------------------------------------------------------------------


def _trap_weights_nd(m: int, L: float, n: int) -> np.ndarray:
    w1 = np.full(m, L / (m - 1))
    w1[[0, -1]] /= 2
    w = w1
    for _ in range(n - 1):
        w = np.multiply.outer(w, w1)
    return w


def _poincare_ratio(u: np.ndarray, L: float, n: int) -> tuple[float, float]:
    m = u.shape[0]
    w = _trap_weights_nd(m, L, n)
    q = 2 * n / (n + 2)
    grads = np.gradient(u, L / (m - 1), edge_order=2)
    mag = np.sqrt(sum(gk ** 2 for gk in grads))
    return (float(np.sum(w * u * u) ** 0.5), float(np.sum(w * mag ** q) ** (1 / q)))


def verify_poincare(n: int = 2, trials: int = 100, seed: int = 0, eps: float = 0.5,
                    points: Optional[int] = None) -> list[EstimateReport]:
    """``||u||_2 <= S/(1-eps) ||grad u||_{2n/(n+2)}`` on a cube of radius
    ``R < eps/(2S)`` for random zero-mean fields.

    Two informational witnesses are appended: a nonzero constant (the
    inequality fails since the gradient vanishes) and a zero-mean field
    concentrated in a corner, whose ratio approaches ``2S``.
    """
    S = est.poincare_sobolev_constant(n)
    R = 0.9 * eps / (2 * S)
    L = 2 * R
    m = points or (33 if n == 2 else 17)
    axes = np.meshgrid(*([np.linspace(0, 1, m)] * n), indexing="ij")
    w = _trap_weights_nd(m, L, n)
    rng = np.random.default_rng(seed)
    bound = S / (1 - eps)
    out = []
    for k in range(trials):
        u = np.zeros(axes[0].shape)
        for _ in range(int(rng.integers(1, 4))):
            kv = rng.integers(0, 4, size=n)
            if not kv.any():
                kv[int(rng.integers(n))] = 1
            phase = rng.uniform(0, np.pi)
            term = np.cos(np.pi * kv[0] * axes[0] + phase)
            for d in range(1, n):
                term = term * np.cos(np.pi * kv[d] * axes[d])
            u += rng.normal() * term
        u -= np.sum(w * u) / np.sum(w)
        lhs, g = _poincare_ratio(u, L, n)
        out.append(EstimateReport.build("poincare", lhs, bound * g, TOL_SOLVER,
                                        {"n": n, "eps": eps, "R": R, "trial": k}))
    const = np.ones(axes[0].shape)
    lhs, g = _poincare_ratio(const, L, n)
    out.append(EstimateReport.build("poincare_constant_witness", lhs, bound * g, TOL_SOLVER,
                                    {"n": n, "eps": eps, "R": R}, informational=True))
    rho = np.sqrt(sum(a ** 2 for a in axes))
    bump = 0.5 * (1 - np.tanh((rho - 0.15) / 0.02))
    bump -= np.sum(w * bump) / np.sum(w)
    lhs, g = _poincare_ratio(bump, L, n)
    out.append(EstimateReport.build("poincare_corner_witness", lhs, bound * g, TOL_SOLVER,
                                    {"n": n, "eps": eps, "R": R}, informational=True))
    return out


# ---------------------------------------------------------------------------
# Stieltjes lemma
# ---------------------------------------------------------------------------


def _random_step(rng: np.random.Generator, k_max: int = 6, top: float = 20.0) -> StieltjesFn:
    k = int(rng.integers(1, k_max + 1))
    grid = np.arange(5, int(top * 4) + 1) / 4.0
    pts = np.sort(rng.choice(grid, k, replace=False) + 0.2 * rng.uniform(size=k))
    return StieltjesFn.from_jumps(pts, rng.uniform(0.05, 1.0, size=k))


def stieltjes_instance_check(h: StieltjesFn, Hs: Sequence[StieltjesFn], betas: Sequence[float],
                             q: float, gamma_frac: float) -> EstimateReport:
    """Smallest ``a`` in the hypothesis over the iota-grid, then the conclusion at
    ``gamma = q + gamma_frac * (a q/(a-1) - q)``."""
    top = max([h.support_max] + [H.support_max for H in Hs])
    geo = 1.05 ** np.arange(int(math.log(top) / math.log(1.05)) + 1)
    iotas = np.unique(np.concatenate([geo, h.breakpoints] + [H.breakpoints for H in Hs]))
    a_min = 0.0
    for iota in iotas:
        lhs = stieltjes_integral(h, q, iota)
        rhs = iota ** q * float(h(iota)) + sum(float(H(iota)) ** b for H, b in zip(Hs, betas))
        if lhs > 0:
            a_min = max(a_min, lhs / rhs)
    a = max(a_min, 1.0 + 1e-6)
    g_hi = a * q / (a - 1)
    # keep tau^gamma finite when a is close to 1
    gamma = q + gamma_frac * (min(g_hi, q + 12.0) - q)
    den = a * q - (a - 1) * gamma
    lhs = stieltjes_integral(h, gamma, 1.0)
    rhs = q / den * stieltjes_integral(h, q, 1.0)
    for H, b in zip(Hs, betas):
        rhs += a * gamma / den * float(H(1.0)) ** (b - 1) * stieltjes_integral(H, gamma - q, 1.0)
    return EstimateReport.build("stieltjes", lhs, rhs, TOL_EXACT,
                                {"a": a, "q": q, "gamma": gamma, "M0": len(Hs)})


def verify_stieltjes(trials: int = 1000, seed: int = 0) -> list[EstimateReport]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        h = _random_step(rng)
        M0 = int(rng.integers(0, 3))
        Hs = [_random_step(rng) for _ in range(M0)]
        betas = [float(rng.uniform(1, 3)) for _ in range(M0)]
        q = float(rng.uniform(0.2, 3.0))
        out.append(stieltjes_instance_check(h, Hs, betas, q, float(rng.uniform(0, 0.999))))
    return out


# ---------------------------------------------------------------------------
# Gehring spot check
# ---------------------------------------------------------------------------


def _overlap(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)


def verify_gehring_spot(seed: int = 0, k: int = 3, nt_cells: int = 8, p: float = 2.0,
                        beta: float = 0.5, alpha: float = 0.5) -> EstimateReport:
    """Reverse Hoelder hypothesis -> higher integrability on a half cube.

    ``Phi`` is a random positive cell-wise constant field on
    ``Q+ = (-1,1) x (0,1) x (-1,1)`` (``R0 = 1``, ``n = 2``) with no data
    terms.  ``B`` is the largest hypothesis ratio over a lattice of admissible
    cubes; the conclusion is then checked on ``Q_{(1-beta)R0} & Q+`` at
    ``eps`` = half the admissible cap, with ``upsilon`` from the estimates.
    """
    n, R0 = 2, 1.0
    rng = np.random.default_rng(seed)
    ex = np.linspace(-R0, R0, 2 * k + 1)
    ey = np.linspace(0.0, R0, k + 1)
    et = np.linspace(-R0 ** 2, R0 ** 2, nt_cells + 1)
    phi = np.exp(rng.normal(scale=0.7, size=(2 * k, k, nt_cells)))

    def integral(vals, x, y, t, R):
        ox = _overlap(ex, x - R, x + R)
        oy = _overlap(ey, max(y - R, 0.0), y + R)
        ot = _overlap(et, t - R * R, t + R * R)
        return float(np.einsum("i,j,k,ijk->", ox, oy, ot, vals))

    hx = R0 / k
    lattice = np.arange(-R0, R0 + 1e-12, hx / 2)
    tl = np.arange(-R0 ** 2, R0 ** 2 + 1e-12, (et[1] - et[0]) / 2)
    B = 0.0
    php = phi ** p
    for R in np.arange(1, 2 * k) * hx / 2:
        for x in lattice:
            if abs(x) + R >= R0:
                continue
            for y in lattice:
                if abs(y) + R >= R0 or y + R <= 0:
                    continue
                for t in tl:
                    if abs(t) + R * R >= R0 ** 2:
                        continue
                    den = integral(phi, x, y, t, R) / R ** (n + 2)
                    if den <= 0:
                        continue
                    num = integral(php, x, y, t, alpha * R) / R ** (n + 2)
                    B = max(B, num / den ** p)
    ge = est.GehringExponents(p=p, n=n)
    ups = est.gehring_upsilon(B, ge, "general")
    eps = 0.5 * (p - 1) / (ups - 1)
    r_in = (1 - beta) * R0
    lhs = integral(phi ** (p + eps), 0.0, 0.0, 0.0, r_in)
    norm_p = integral(php, 0.0, 0.0, 0.0, R0 * (1 + 1e-12)) ** (1 / p)
    rhs = (beta ** (-(n + 2) * (1 + eps / p)) / (p - 1 - (ups - 1) * eps)
           * (p - 1) / R0 ** ((n + 2) * eps / p) * norm_p ** (p + eps))
    return EstimateReport.build("gehring_spot", lhs, rhs, TOL_SOLVER,
                                {"B": B, "upsilon": ups, "eps": eps, "seed": seed})


# ---------------------------------------------------------------------------
# Steady state
# ---------------------------------------------------------------------------


def verify_steady(inst: SteadyInstance, ed: Optional[est.EllipticityData] = None,
                  fp: Optional[est.FreeParameters] = None, *, Mp: Optional[float] = None,
                  eps: Optional[float] = None, S_dual: Optional[float] = None,
                  cover: Optional[CoverSpec] = None,
                  opts: SolverOptions = SolverOptions(newton_tol=1e-12)) -> list[EstimateReport]:
    """Steady ``W^{1,2+eps}`` bound, the ``ell = 2`` perturbation bound and the
    contraction rate.  Infeasible parts become informational reports."""
    ed = ed or inst.ellipticity()
    fp = fp or default_free_parameters(inst)
    cover = cover or CoverSpec.uniform(inst.grid)
    g = inst.grid
    K = trace_constant(g)
    u = solve_monotone(inst, opts)
    out = []

    ups = est.steady_upsilon(ed, fp.nu0, 2)
    eps = 0.5 / (ups - 1) if eps is None else eps
    q = 2 + eps
    sb = est.steady_state_bounds(ed, fp, 2, {"N": cover.N, "r_lo": cover.r_sharp}, eps, {}, K)
    fmag = np.sqrt(np.sum(inst.fvec ** 2, axis=-1))
    Ff = np.sqrt((sb.F_mult * fmag) ** 2 + (sb.f_mult * np.abs(inst.f)) ** 2)
    gu = gradient(u)
    norms = {
        "grad_u_2": lp_norm(gu, 2),
        "F_norm": lp_norm(GridFunction(g, Ff), q),
        "H_norm": lp_norm(GridFunction(g, sb.H_mult * np.abs(inst.h)), q, "gamma_trace"),
    }
    sb = est.steady_state_bounds(ed, fp, 2, {"N": cover.N, "r_lo": cover.r_sharp}, eps, norms, K)
    out.append(EstimateReport.build("steady_cotam1", lp_norm(gu, q) ** q, sb.rhs_cotam1,
                                    TOL_SOLVER, {"eps": eps, "upsilon_s": ups}))

    space = Q1Space(g)
    if ed.ell != 2:
        out.append(EstimateReport.build("steady_el2", 0.0, 0.0, 0.0,
                                        {"skipped": "needs ell = 2"}, informational=True))
        return out
    Mp = estimate_Mp(g, 2.0) if Mp is None else Mp
    try:
        cd = est.contraction_data(ed, Mp, 2.0, 2)
    except est.InfeasibleParameters as exc:
        out.append(EstimateReport.build("steady_el2", 0.0, 0.0, 0.0,
                                        {"infeasible": str(exc), "Mp": Mp}, informational=True))
        return out
    a, b = space.energy_norms(u.values)
    has_f = bool(np.any(inst.f != 0))
    f_term = 0.0 if not has_f else (S_dual or 0.0) * lp_norm(GridFunction(g, inst.f), 1)
    data = (lp_norm(GridFunction(g, inst.fvec), 2) + f_term
            + lp_norm(GridFunction(g, inst.h), 2, "gamma_trace"))
    out.append(EstimateReport.build("steady_el2", a + b, cd.el2_mult * data, TOL_SOLVER,
                                    {"Mp": Mp, "el2_mult": cd.el2_mult, "S_dual": S_dual},
                                    informational=has_f and S_dual is None))
    res = solve_contraction(inst, ed, opts, Mp=Mp)
    out.append(EstimateReport.build("steady_rate", res.trace.tail_ratio(), cd.q_factor + 0.05,
                                    0.0, {"q_factor": cd.q_factor,
                                          "iterations": res.trace.iterations}))
    return out


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    stieltjes_trials: int = 200
    poincare_trials: int = 50
    poincare_eps: float = 0.5
    energy_instances: int = 4
    cubes_per_instance: int = 6
    nx: int = 16
    nt: int = 16
    steady_instances: int = 3
    steady_nx: int = 16
    gehring_spots: int = 1
    workers: int = 1
    tol: Optional[float] = None  # overrides the energy, gradient and Caccioppoli tolerances


def _energy_task(args) -> list[EstimateReport]:
    seed_seq, cfg, index = args
    rng = np.random.default_rng(seed_seq)
    spec = random_instance_spec(rng, ell=[2.0, 3.0, 5.0][index % 3])
    inst = spec.build(cfg.nx, cfg.nt)
    u = solve(inst)
    fp = default_free_parameters(inst)
    tol = TOL_SOLVER if cfg.tol is None else cfg.tol
    reps = verify_energy(inst, u, fp, tol=tol)
    reps += verify_caccioppoli(inst, u, random_cubes(inst.grid, cfg.cubes_per_instance, rng), fp,
                               tol=0.05 if cfg.tol is None else cfg.tol)
    reps.append(verify_gradient_bound(inst, u, fp, CoverSpec.uniform(inst.grid), tol=tol))
    return [replace(r, params={**r.params, "instance": index}) for r in reps]


def _steady_task(args) -> list[EstimateReport]:
    seed_seq, cfg, index = args
    inst = random_steady_instance(np.random.default_rng(seed_seq), cfg.steady_nx)
    return [replace(r, params={**r.params, "instance": index}) for r in verify_steady(inst)]


def run_campaign(cfg: CampaignConfig = CampaignConfig(), seed: int = 0) -> list[EstimateReport]:
    """Run every check; instance results are merged in index order, so the
    output does not depend on ``cfg.workers``."""
    ss = np.random.SeedSequence(seed)
    s_st, s_po, s_en, s_sd, s_ge = ss.spawn(5)
    reports: list[EstimateReport] = []
    reports += verify_stieltjes(cfg.stieltjes_trials, int(s_st.generate_state(1)[0]))
    reports += verify_poincare(2, cfg.poincare_trials, int(s_po.generate_state(1)[0]),
                               cfg.poincare_eps)
    tasks_en = [(c, cfg, i) for i, c in enumerate(s_en.spawn(cfg.energy_instances))]
    tasks_sd = [(c, cfg, i) for i, c in enumerate(s_sd.spawn(cfg.steady_instances))]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            en = list(pool.map(_energy_task, tasks_en))
            sd = list(pool.map(_steady_task, tasks_sd))
    else:
        en = [_energy_task(t) for t in tasks_en]
        sd = [_steady_task(t) for t in tasks_sd]
    for block in en + sd:
        reports += block
    for k, child in enumerate(s_ge.spawn(cfg.gehring_spots)):
        reports.append(verify_gehring_spot(int(child.generate_state(1)[0])))
    return reports


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

_COLUMNS = ["name", "lhs", "rhs", "margin", "pass", "tol", "informational", "params"]


def _num(x: float) -> str:
    return repr(float(x))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def reports_to_csv(reports: Iterable[EstimateReport]) -> str:
    """CSV text: a version line, the column header, one row per report.

    Floats use ``repr`` (shortest round-trip form); params are JSON with
    sorted keys, so equal inputs give byte-identical files.
    """
    buf = io.StringIO()
    buf.write(f"# {REPORT_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for r in reports:
        w.writerow([r.name, _num(r.lhs), _num(r.rhs), _num(r.margin), int(r.passed), _num(r.tol),
                    int(r.informational),
                    json.dumps(r.params, sort_keys=True, default=_json_default)])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[EstimateReport]:
    lines = text.splitlines()
    if not lines or lines[0] != f"# {REPORT_VERSION}":
        raise ValueError("unknown report format")
    rows = list(csv.DictReader(lines[1:]))
    return [EstimateReport(r["name"], float(r["lhs"]), float(r["rhs"]), float(r["margin"]),
                           r["pass"] == "1", float(r["tol"]), json.loads(r["params"]),
                           r["informational"] == "1") for r in rows]


def summary(reports: Sequence[EstimateReport]) -> dict:
    """Per-check counts and the largest margin among graded reports."""
    out: dict = {"version": REPORT_VERSION, "checks": {}}
    for r in reports:
        s = out["checks"].setdefault(r.name, {"total": 0, "passed": 0, "failed": 0,
                                              "informational": 0, "max_margin": 0.0})
        s["total"] += 1
        if r.informational:
            s["informational"] += 1
            continue
        s["passed" if r.passed else "failed"] += 1
        if math.isfinite(r.margin):
            s["max_margin"] = max(s["max_margin"], r.margin)
    graded = [r for r in reports if not r.informational]
    out["all_passed"] = all(r.passed for r in graded)
    out["graded"] = len(graded)
    return out
