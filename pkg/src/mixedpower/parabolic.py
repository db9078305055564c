"""Implicit Euler / Q1 / Newton solver for the parabolic problem

    d_t u - div(A grad u - fvec) = f            in Omega x (0, T)
    (A grad u - fvec) . n = h - b(u) u          on Gamma
    (A grad u - fvec) . n = 0                   on the rest of the boundary

with the power law ``b(x, s) = beta(x) |s|^(ell-2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from ._fem import Q1Space
from .estimates import EllipticityData
from .meshfields import GridFunction, SpaceTimeGrid

__all__ = [
    "BoundaryLaw",
    "ProblemInstance",
    "SolverOptions",
    "SolveStats",
    "SolverError",
    "solve",
    "solve_with_stats",
    "weak_residual",
    "mass_norms",
    "manufactured_instance",
]

REG_EPS = 1e-12


class SolverError(RuntimeError):
    """Newton or linear-solver failure; ``residual`` is the last residual norm."""

    def __init__(self, msg: str, residual: float = float("nan")) -> None:
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class BoundaryLaw:
    """``b(x, s) = beta(x) |s|^(ell-2)``; ``beta`` is a scalar or a node field."""

    ell: float = 2.0
    beta: Union[float, np.ndarray] = 1.0

    def __post_init__(self) -> None:
        if self.ell < 2:
            raise ValueError("ell must be >= 2")
        if np.any(np.asarray(self.beta) < 0):
            raise ValueError("beta must be nonnegative")

    @property
    def is_linear(self) -> bool:
        return self.ell == 2

    def beta_nodes(self, grid: SpaceTimeGrid) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.beta, dtype=float), grid.space_shape).ravel()

    def bounds(self, grid: SpaceTimeGrid) -> tuple[float, float]:
        b = self.beta_nodes(grid)[grid.gamma_mask.ravel()]
        if b.size == 0:
            return 0.0, 0.0
        return float(b.min()), float(b.max())

    def flux(self, u: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """``b(u) u``."""
        if self.ell == 2:
            return beta * u
        return beta * np.abs(u) ** (self.ell - 2) * u

    def dflux(self, u: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """Derivative of ``b(u) u`` with ``|u|`` regularised as ``sqrt(u^2 + REG_EPS^2)``."""
        if self.ell == 2:
            return beta.copy()
        return (self.ell - 1) * beta * (u * u + REG_EPS ** 2) ** ((self.ell - 2) / 2)


def _as_field(v, shape, name):
    if v is None:
        return np.zeros(shape)
    arr = np.asarray(v, dtype=float)
    arr = np.broadcast_to(arr, shape).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_coefficient(A) -> tuple[float, float]:
    """Eigenvalue bounds ``(a_lo, a_hi)`` of a constant or node-sampled symmetric ``A``."""
    A = np.asarray(A, dtype=float)
    if A.shape[-2:] != (2, 2):
        raise ValueError("A must be 2x2 or a field of 2x2 matrices")
    if not np.allclose(A, np.swapaxes(A, -1, -2)):
        raise ValueError("A must be symmetric")
    ev = np.linalg.eigvalsh(A.reshape(-1, 2, 2))
    a_lo, a_hi = float(ev.min()), float(np.abs(ev).max())
    if not a_lo > 0:
        raise ValueError(f"A is not uniformly elliptic (smallest eigenvalue {a_lo:.3g})")
    return a_lo, a_hi


@dataclass
class ProblemInstance:
    """Data on a space-time grid.  Array shapes: ``f``, ``h`` are
    ``(nt+1, nx+1, ny+1)``, ``fvec`` adds a trailing axis of size 2, ``u0`` is
    ``(nx+1, ny+1)``.  ``h`` is read on Gamma nodes only."""

    grid: SpaceTimeGrid
    A: np.ndarray
    law: BoundaryLaw
    f: Optional[np.ndarray] = None
    fvec: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    u0: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        g = self.grid
        if not g.is_spacetime:
            raise ValueError("ProblemInstance needs a space-time grid")
        self.A = np.asarray(self.A, dtype=float)
        if self.A.shape not in ((2, 2), g.space_shape + (2, 2)):
            raise ValueError("A must be 2x2 or sampled at the nodes")
        check_coefficient(self.A)
        self.f = _as_field(self.f, g.shape, "f")
        self.fvec = _as_field(self.fvec, g.shape + (2,), "fvec")
        self.h = _as_field(self.h, g.shape, "h")
        self.u0 = _as_field(self.u0, g.space_shape, "u0")
        self.h = np.where(g.gamma_mask[None], self.h, 0.0)

    @classmethod
    def from_functions(cls, grid: SpaceTimeGrid, A, law: BoundaryLaw,
                       f: Optional[Callable] = None, fvec: Optional[Callable] = None,
                       h: Optional[Callable] = None, u0: Optional[Callable] = None
                       ) -> "ProblemInstance":
        """Sample callables ``f(x, y, t)``, ``fvec(x, y, t) -> (fx, fy)``, ``u0(x, y)``."""
        X, Y = grid.mesh()
        t = grid.t[:, None, None]

        def st(fn):
            return None if fn is None else np.broadcast_to(fn(X[None], Y[None], t), grid.shape)

        fv = None
        if fvec is not None:
            fx, fy = fvec(X[None], Y[None], t)
            fv = np.stack([np.broadcast_to(fx, grid.shape), np.broadcast_to(fy, grid.shape)], -1)
        u0v = None if u0 is None else np.broadcast_to(u0(X, Y), grid.space_shape)
        return cls(grid, A, law, f=st(f), fvec=fv, h=st(h), u0=u0v)

    @property
    def has_f(self) -> bool:
        return bool(np.any(self.f != 0))

    @property
    def has_fvec(self) -> bool:
        return bool(np.any(self.fvec != 0))

    @property
    def has_h(self) -> bool:
        return bool(np.any(self.h != 0))

    def ellipticity(self) -> EllipticityData:
        a_lo, a_hi = check_coefficient(self.A)
        b_lo, b_hi = self.law.bounds(self.grid)
        return EllipticityData(a_lo, a_hi, b_lo, b_hi, self.law.ell)

    def field(self, name: str) -> GridFunction:
        return GridFunction(self.grid, getattr(self, name))


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    newton_max: int = 50
    linear_tol: float = 1e-12
    damping: float = 1.0

    def __post_init__(self) -> None:
        if not (self.newton_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.newton_max < 1:
            raise ValueError("newton_max must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolveStats:
    newton_iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)


class _Stepper:
    """Per-instance operators shared by the solver and the residual."""

    def __init__(self, inst: ProblemInstance) -> None:
        self.inst = inst
        self.space = Q1Space(inst.grid)
        self.K = self.space.stiffness(inst.A)
        self.Mdt = self.space.mass / inst.grid.dt
        self.wg = self.space.gamma_weights
        self.beta = inst.law.beta_nodes(inst.grid)

    def rhs(self, n: int) -> np.ndarray:
        i = self.inst
        return self.space.load(i.f[n], i.fvec[n], i.h[n])

    def residual(self, u, u_prev, F) -> np.ndarray:
        return self.Mdt @ (u - u_prev) + self.K @ u + self.wg * self.inst.law.flux(u, self.beta) - F

    def jacobian(self, u) -> sp.csr_matrix:
        d = self.wg * self.inst.law.dflux(u, self.beta)
        return (self.Mdt + self.K + sp.diags(d)).tocsr()


def newton(residual, jacobian, u, opts: SolverOptions, what: str = "step"):
    """Newton with backtracking on the residual 2-norm; CG + Jacobi for the updates.

    Returns ``(u, iterations, residual_norm)``.
    """
    R = residual(u)
    r = float(np.linalg.norm(R))
    it = 0
    while r > opts.newton_tol:
        if it >= opts.newton_max:
            raise SolverError(f"Newton did not converge in {opts.newton_max} iterations "
                              f"({what}); last residual {r:.3e}", r)
        J = jacobian(u)
        dinv = 1.0 / J.diagonal()
        du, info = cg(J, -R, rtol=opts.linear_tol, atol=0.0, maxiter=20 * J.shape[0],
                      M=sp.diags(dinv))
        if info != 0:
            raise SolverError(f"conjugate gradients failed (info={info}, {what})", r)
        lam = opts.damping
        for _ in range(40):
            cand = u + lam * du
            Rc = residual(cand)
            rc = float(np.linalg.norm(Rc))
            if rc < r or rc <= opts.newton_tol:
                break
            lam *= 0.5
        else:
            raise SolverError(f"line search failed ({what}); residual {r:.3e}", r)
        u, R, r = cand, Rc, rc
        it += 1
    return u, it, r


def solve_with_stats(inst: ProblemInstance, opts: SolverOptions = SolverOptions()
                     ) -> tuple[GridFunction, SolveStats]:
    st = _Stepper(inst)
    g = inst.grid
    U = np.empty((g.nt + 1, st.space.ndof))
    U[0] = inst.u0.ravel()
    stats = SolveStats()
    for n in range(1, g.nt + 1):
        F = st.rhs(n)
        prev = U[n - 1]
        u, it, r = newton(lambda v: st.residual(v, prev, F), st.jacobian, prev.copy(), opts,
                          what=f"time step {n}")
        U[n] = u
        stats.newton_iterations.append(it)
        stats.residuals.append(r)
    return GridFunction(g, U.reshape(g.shape)), stats


def solve(inst: ProblemInstance, opts: SolverOptions = SolverOptions()) -> GridFunction:
    """Discrete solution on all time levels; level 0 is the interpolant of ``u0``."""
    return solve_with_stats(inst, opts)[0]


def weak_residual(inst: ProblemInstance, u: GridFunction) -> float:
    """Largest 2-norm over time steps of the discrete Galerkin residual vector.

    The vector entries are integrals against the nodal basis, so they carry
    the mesh measure.
    """
    if u.values.shape != inst.grid.shape:
        raise ValueError("u does not live on the instance grid")
    st = _Stepper(inst)
    U = u.values.reshape(inst.grid.nt + 1, -1)
    out = 0.0
    for n in range(1, inst.grid.nt + 1):
        out = max(out, float(np.linalg.norm(st.residual(U[n], U[n - 1], st.rhs(n)))))
    return out


def mass_norms(u: GridFunction) -> np.ndarray:
    """Consistent-mass L2 norm of every time level (the norm implicit Euler dissipates)."""
    M = Q1Space(u.grid).mass
    U = u.values.reshape(u.grid.nt + 1, -1)
    return np.sqrt(np.maximum(np.einsum("ki,ki->k", U, (M @ U.T).T), 0.0))


def manufactured_instance(nx: int, nt: int, T: float = 1.0) -> tuple[ProblemInstance, Callable]:
    """``u = cos(pi x) cos(pi y) exp(-t)`` on the unit square, ``A = I``, ``ell = 2``,
    ``beta = 1``, Gamma = every edge.  The normal derivative vanishes on the
    edges, so ``h = u`` there, and ``f = (2 pi^2 - 1) u``."""
    grid = SpaceTimeGrid(1.0, 1.0, nx, nx, T=T, nt=nt)

    def exact(x, y, t):
        return np.cos(np.pi * x) * np.cos(np.pi * y) * np.exp(-t)

    inst = ProblemInstance.from_functions(
        grid, np.eye(2), BoundaryLaw(2.0, 1.0),
        f=lambda x, y, t: (2 * np.pi ** 2 - 1) * exact(x, y, t),
        h=exact,
        u0=lambda x, y: exact(x, y, 0.0),
    )
    return inst, exact
