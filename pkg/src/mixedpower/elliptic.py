"""Steady problem: monotone Newton solve, the fixed-point (contraction) scheme
and a discrete estimator of ``M_p``, the norm of the inverse Robin Laplacian
in ``||v|| = ||grad v||_p + ||v||_{2,Gamma}``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import factorized

from ._fem import Q1Space
from .estimates import ContractionData, EllipticityData, ParameterError, contraction_data
from .meshfields import GridFunction, SpaceTimeGrid, gradient, lp_norm
from .parabolic import BoundaryLaw, SolverError, SolverOptions, check_coefficient, newton

__all__ = [
    "SteadyInstance",
    "ContractionTrace",
    "ContractionResult",
    "solve_monotone",
    "solve_contraction",
    "estimate_Mp",
    "steady_residual",
    "sum_norm",
    "perturbation_check",
]


@dataclass
class SteadyInstance:
    """Time-independent data on a spatial grid; ``h`` is read on Gamma only."""

    grid: SpaceTimeGrid
    A: np.ndarray
    law: BoundaryLaw
    f: Optional[np.ndarray] = None
    fvec: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.grid = self.grid.spatial()
        g = self.grid
        if not g.gamma_edges:
            raise ValueError("the steady problem needs a nonempty Gamma")
        self.A = np.asarray(self.A, dtype=float)
        if self.A.shape not in ((2, 2), g.space_shape + (2, 2)):
            raise ValueError("A must be 2x2 or sampled at the nodes")
        check_coefficient(self.A)
        shape = g.space_shape
        self.f = np.zeros(shape) if self.f is None else np.broadcast_to(self.f, shape).astype(float)
        self.fvec = (np.zeros(shape + (2,)) if self.fvec is None
                     else np.broadcast_to(self.fvec, shape + (2,)).astype(float))
        self.h = np.zeros(shape) if self.h is None else np.broadcast_to(self.h, shape).astype(float)
        self.h = np.where(g.gamma_mask, self.h, 0.0)
        for name in ("f", "fvec", "h"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if np.any(self.law.beta_nodes(g)[g.gamma_mask.ravel()] <= 0):
            raise ValueError("beta must be positive on Gamma")

    @classmethod
    def from_functions(cls, grid: SpaceTimeGrid, A, law: BoundaryLaw,
                       f: Optional[Callable] = None, fvec: Optional[Callable] = None,
                       h: Optional[Callable] = None) -> "SteadyInstance":
        X, Y = grid.spatial().mesh()
        fv = None
        if fvec is not None:
            fx, fy = fvec(X, Y)
            fv = np.stack([np.broadcast_to(fx, X.shape), np.broadcast_to(fy, X.shape)], -1)
        return cls(grid, A, law,
                   f=None if f is None else np.broadcast_to(f(X, Y), X.shape),
                   fvec=fv,
                   h=None if h is None else np.broadcast_to(h(X, Y), X.shape))

    def ellipticity(self) -> EllipticityData:
        a_lo, a_hi = check_coefficient(self.A)
        b_lo, b_hi = self.law.bounds(self.grid)
        return EllipticityData(a_lo, a_hi, b_lo, b_hi, self.law.ell)


class _Ops:
    def __init__(self, inst: SteadyInstance) -> None:
        self.inst = inst
        self.space = Q1Space(inst.grid)
        self.K = self.space.stiffness(inst.A)
        self.wg = self.space.gamma_weights
        self.beta = inst.law.beta_nodes(inst.grid)
        self.F = self.space.load(inst.f, inst.fvec, inst.h)

    def residual(self, u):
        return self.K @ u + self.wg * self.inst.law.flux(u, self.beta) - self.F

    def jacobian(self, u):
        return (self.K + sp.diags(self.wg * self.inst.law.dflux(u, self.beta))).tocsr()


def steady_residual(inst: SteadyInstance, u: GridFunction) -> float:
    return float(np.linalg.norm(_Ops(inst).residual(u.values.ravel())))


def solve_monotone(inst: SteadyInstance, opts: SolverOptions = SolverOptions()) -> GridFunction:
    """Newton solve of the monotone Galerkin system.

    The start value is the solution of the linear problem with ``ell = 2``,
    which keeps the first Jacobian away from the singular Neumann matrix.
    """
    ops = _Ops(inst)
    lin = (ops.K + sp.diags(ops.wg * ops.beta)).tocsc()
    u0 = factorized(lin)(ops.F)
    u, _, _ = newton(ops.residual, ops.jacobian, u0, opts, what="steady problem")
    return GridFunction(inst.grid, u.reshape(inst.grid.space_shape))


def sum_norm(space: Q1Space, v: np.ndarray) -> float:
    """``||grad v||_2 + ||v||_{2,Gamma}`` of a Q1 function."""
    g, b = space.energy_norms(v)
    return g + b


@dataclass
class ContractionTrace:
    iterate_norms: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.iterate_norms)

    def tail_ratio(self, k: int = 10, floor: float = 1e-11) -> float:
        """Mean of the last ``k`` ratios whose steps stay above ``floor`` (roundoff cut)."""
        good = [r for r, s in zip(self.ratios, self.step_norms[2:]) if s > floor]
        if not good:
            return 0.0
        tail = good[-k:]
        return float(np.mean(tail))


@dataclass
class ContractionResult:
    u: GridFunction
    trace: ContractionTrace
    data: ContractionData


def solve_contraction(inst: SteadyInstance, ed: EllipticityData,
                      opts: SolverOptions = SolverOptions(), *, Mp: Optional[float] = None,
                      max_iter: int = 20000) -> ContractionResult:
    """Fixed-point iteration ``u <- u - t K_R^{-1}(K_A u + b u - F)``, ``t = a_lo/a_hi^2``,
    where ``K_R`` is the Robin Laplacian (unit coefficient, unit boundary weight).

    Stops when the Galerkin residual drops below ``opts.newton_tol``.  Raises
    ``InfeasibleParameters`` when the contraction condition fails for ``Mp``
    (default: ``estimate_Mp`` on the instance grid) and ``SolverError`` on five
    consecutive expanding steps.
    """
    if inst.law.ell != 2:
        raise ParameterError("the contraction scheme needs ell = 2")
    if Mp is None:
        Mp = estimate_Mp(inst.grid, 2.0)
    cd = contraction_data(ed, Mp, 2.0, 2)
    ops = _Ops(inst)
    solve_R = factorized((ops.space.laplace + sp.diags(ops.wg)).tocsc())
    u = np.zeros(ops.space.ndof)
    trace = ContractionTrace(step_norms=[0.0])
    up = 0
    r = float(np.linalg.norm(ops.residual(u)))
    while r > opts.newton_tol:
        if len(trace.iterate_norms) >= max_iter:
            raise SolverError(f"contraction did not converge in {max_iter} iterations", r)
        du = -cd.t * solve_R(ops.residual(u))
        u = u + du
        step = sum_norm(ops.space, du)
        if len(trace.step_norms) > 1 and trace.step_norms[-1] > 0:
            ratio = step / trace.step_norms[-1]
            trace.ratios.append(ratio)
            up = up + 1 if ratio > 1 else 0
            if up >= 5:
                raise SolverError("contraction diverges (ratio > 1 five times in a row)", r)
        trace.step_norms.append(step)
        trace.iterate_norms.append(sum_norm(ops.space, u))
        r = float(np.linalg.norm(ops.residual(u)))
    return ContractionResult(GridFunction(inst.grid, u.reshape(inst.grid.space_shape)),
                             trace, cd)


def _random_rhs(space: Q1Space, rng: np.random.Generator) -> np.ndarray:
    g = space.grid
    X, Y = g.mesh()
    xs, ys = (X - g.x0) / g.Lx, (Y - g.y0) / g.Ly
    kind = rng.integers(3)
    if kind == 0:
        kx, ky = rng.integers(0, 6, size=2)
        v = np.cos(kx * np.pi * xs) * np.cos(ky * np.pi * ys)
        return space.mass @ v.ravel()
    if kind == 1:
        v = rng.normal(size=X.shape) * g.gamma_mask
        return space.gamma_weights * v.ravel()
    return space.mass @ rng.normal(size=X.size)


def _ratio2(space: Q1Space, v: np.ndarray) -> float:
    # For G = K_R v the dual norm in ||grad w||_2 + ||w||_{2,Gamma} is max(||grad v||, ||v||_Gamma)
    a, b = space.energy_norms(v)
    m = max(a, b)
    return 0.0 if m == 0 else (a + b) / m


def estimate_Mp(grid: SpaceTimeGrid, p: float = 2.0, samples: int = 16, seed: int = 0) -> float:
    """Lower bound on the discrete norm of the inverse Robin Laplacian.

    Random right-hand sides ``F`` are mapped to ``v = K_R^{-1} F``.  At
    ``p = 2`` the dual norm of ``F`` is exact (``max(||grad v||, ||v||_Gamma)``),
    and the best gradient-heavy and boundary-heavy samples are blended by a
    scalar search.  For ``p > 2`` the dual norm is a maximum over a fixed
    random test set (the samples themselves), so the result is an estimate.
    Running maximum: nondecreasing in ``samples`` for a fixed seed.
    """
    if p < 2:
        raise ParameterError("estimate_Mp needs p >= 2")
    space = Q1Space(grid)
    if not space.grid.gamma_edges:
        raise ParameterError("Gamma is empty; the Robin Laplacian is singular")
    rng = np.random.default_rng(seed)
    KR = (space.laplace + sp.diags(space.gamma_weights)).tocsc()
    solve_R = factorized(KR)
    vs = [solve_R(_random_rhs(space, rng)) for _ in range(samples)]
    if p == 2:
        best = max(_ratio2(space, v) for v in vs)
        # blend a field vanishing on Gamma with a constant until both parts balance
        X, Y = space.grid.mesh()
        vg = np.where(space.grid.gamma_mask, 0.0, 1.0 + 0.1 * np.sin(X + 2 * Y)).ravel()
        vb = np.ones(space.ndof)

        def gap(s):
            a, b = space.energy_norms(np.cos(s) * vg + np.sin(s) * vb)
            return a - b

        s_star = brentq(gap, 0.0, np.pi / 2, xtol=1e-15)
        return max(best, _ratio2(space, np.cos(s_star) * vg + np.sin(s_star) * vb))
    gs = space.grid
    Fs = [KR @ v for v in vs]

    def norm_p(v):
        gf = GridFunction(gs, v.reshape(gs.space_shape))
        return lp_norm(gradient(gf), p) + lp_norm(gf, 2, "gamma_trace")

    tests = vs + [rng.normal(size=space.ndof) for _ in range(samples)]
    tnorm = [norm_p(w) for w in tests]
    best = 0.0
    for v, F in zip(vs, Fs):
        dual = max(abs(F @ w) / n for w, n in zip(tests, tnorm) if n > 0)
        if dual > 0:
            best = max(best, norm_p(v) / dual)
    return best


def perturbation_check(grid: SpaceTimeGrid, ed: EllipticityData, Mp: float, samples: int = 20,
                       seed: int = 0) -> list[tuple[float, float]]:
    """Samples ``(lhs, rhs)`` of ``||K_R^{-1} P u|| <= Mp((1-a_lo)||grad u|| + (1-b_lo)||u||_Gamma)``
    with ``P u = (K_R - K_A - b)u`` for ``A = a_lo I`` and ``b = b_lo``, at ``p = 2``.

    ``Mp`` is a lower-bound proxy, so excesses are findings, not failures.
    """
    space = Q1Space(grid)
    wg = space.gamma_weights
    solve_R = factorized((space.laplace + sp.diags(wg)).tocsc())
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(samples):
        u = rng.normal(size=space.ndof)
        Pu = (1 - ed.a_lo) * (space.laplace @ u) + (1 - ed.b_lo) * wg * u
        lhs = sum_norm(space, solve_R(Pu))
        g, b = space.energy_norms(u)
        out.append((lhs, Mp * (abs(1 - ed.a_lo) * g + abs(1 - ed.b_lo) * b)))
    return out
