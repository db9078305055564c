"""Uniform rectangle grids, grid functions and their discrete norms.

Space fields have shape ``(nx+1, ny+1)`` (index ``[i, j]`` is the node at
``x0 + i*hx, y0 + j*hy``); space-time fields have a leading time axis,
``(nt+1, nx+1, ny+1)``.  Vector fields carry one extra trailing axis.

Integrals use the composite trapezoid rule in every coordinate; boundary
integrals use the 1-D trapezoid rule along each edge.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "EDGES",
    "GridError",
    "SpaceTimeGrid",
    "GridFunction",
    "ParabolicCube",
    "StieltjesFn",
    "space_weights",
    "time_weights",
    "boundary_weights",
    "lp_norm",
    "ess_sup_lp",
    "gradient",
    "weighted_mean_U",
    "time_reflect",
    "stieltjes_integral",
    "cube_restrict",
    "cutoff",
    "trace_constant_lower_bound",
    "write_csv",
    "read_csv",
]

EDGES = ("left", "right", "bottom", "top")
CSV_MAGIC = "# mixedpower grid-function v1"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform node grid on ``[x0, x0+Lx] x [y0, y0+Ly]`` (times ``[t0, t0+T]``).

    ``nt=None`` makes a purely spatial grid.  ``gamma_edges`` marks the edges
    carrying the power-type boundary law.
    """

    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 16
    ny: int = 16
    T: float = 0.0
    nt: Optional[int] = None
    gamma_edges: frozenset = field(default_factory=lambda: frozenset(EDGES))
    x0: float = 0.0
    y0: float = 0.0
    t0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma_edges", frozenset(self.gamma_edges))
        bad = set(self.gamma_edges) - set(EDGES)
        if bad:
            raise GridError(f"unknown edges {sorted(bad)}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise GridError("Lx and Ly must be positive")
        if self.nx < 1 or self.ny < 1:
            raise GridError("nx and ny must be positive")
        if self.nt is not None and (self.nt < 1 or not self.T > 0):
            raise GridError("a space-time grid needs nt >= 1 and T > 0")

    @property
    def is_spacetime(self) -> bool:
        return self.nt is not None

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def dt(self) -> float:
        if self.nt is None:
            raise GridError("spatial grid has no time step")
        return self.T / self.nt

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.hy * np.arange(self.ny + 1)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt + 1)

    @property
    def space_shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.nt is None:
            return self.space_shape
        return (self.nt + 1,) + self.space_shape

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def spatial(self) -> "SpaceTimeGrid":
        return replace(self, T=0.0, nt=None, t0=0.0)

    def with_time(self, T: float, nt: int, t0: float = 0.0) -> "SpaceTimeGrid":
        return replace(self, T=T, nt=nt, t0=t0)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(X, Y)`` with ``indexing='ij'``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def edge_mask(self, edges: Iterable[str]) -> np.ndarray:
        m = np.zeros(self.space_shape, dtype=bool)
        for e in edges:
            m[_edge_index(e)] = True
        return m

    @property
    def gamma_mask(self) -> np.ndarray:
        return self.edge_mask(self.gamma_edges)


def _edge_index(edge: str):
    return {
        "left": (0, slice(None)),
        "right": (-1, slice(None)),
        "bottom": (slice(None), 0),
        "top": (slice(None), -1),
    }[edge]


class GridFunction:
    """Immutable node values on a ``SpaceTimeGrid``."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: SpaceTimeGrid, values) -> None:
        arr = np.array(values, dtype=float)
        if arr.shape == ():
            arr = np.full(grid.shape, float(arr))
        if arr.shape[: len(grid.shape)] != grid.shape or arr.ndim > len(grid.shape) + 1:
            raise GridError(f"values of shape {arr.shape} do not match grid shape {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("grid function values must be finite")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == len(self.grid.shape) + 1

    @property
    def is_spacetime(self) -> bool:
        return self.grid.is_spacetime

    def magnitude(self) -> np.ndarray:
        if self.is_vector:
            return np.sqrt(np.sum(self.values ** 2, axis=-1))
        return np.abs(self.values)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def slice_at(self, k: int) -> "GridFunction":
        return GridFunction(self.grid.spatial(), self.values[k])

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values - other.values)

    def __repr__(self) -> str:
        return f"GridFunction(shape={self.values.shape}, grid={self.grid!r})"

    @classmethod
    def from_callable(cls, grid: SpaceTimeGrid, fn) -> "GridFunction":
        """Sample ``fn(x, y)`` (spatial) or ``fn(x, y, t)`` (space-time) at the nodes."""
        X, Y = grid.mesh()
        if grid.is_spacetime:
            t = grid.t[:, None, None]
            vals = np.broadcast_to(fn(X[None], Y[None], t), grid.shape)
        else:
            vals = np.broadcast_to(fn(X, Y), grid.shape)
        return cls(grid, np.array(vals, dtype=float))


@dataclass(frozen=True)
class ParabolicCube:
    """``Q_R(z) = (x0-R, x0+R) x (y0-R, y0+R) x (t0-R^2, t0+R^2)``."""

    x0: float
    y0: float
    t0: float
    R: float

    def __post_init__(self) -> None:
        if not self.R > 0:
            raise GridError("cube radius must be positive")

    def shrink(self, r: float) -> "ParabolicCube":
        return ParabolicCube(self.x0, self.y0, self.t0, r)


# ---------------------------------------------------------------------------
# Quadrature weights and norms
# ---------------------------------------------------------------------------


def _trap(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    return w


def space_weights(grid: SpaceTimeGrid) -> np.ndarray:
    return np.outer(_trap(grid.nx, grid.hx), _trap(grid.ny, grid.hy))


def time_weights(grid: SpaceTimeGrid) -> np.ndarray:
    return _trap(grid.nt, grid.dt)


def boundary_weights(grid: SpaceTimeGrid, edges: Optional[Iterable[str]] = None) -> np.ndarray:
    """Node weights of the edge trapezoid rule on ``edges`` (default: Gamma)."""
    edges = grid.gamma_edges if edges is None else edges
    w = np.zeros(grid.space_shape)
    wx, wy = _trap(grid.nx, grid.hx), _trap(grid.ny, grid.hy)
    for e in edges:
        idx = _edge_index(e)
        w[idx] += wy if e in ("left", "right") else wx
    return w


def _region_weights(grid: SpaceTimeGrid, region: str) -> np.ndarray:
    if region == "interior":
        return space_weights(grid)
    if region == "gamma_trace":
        if not grid.gamma_edges:
            raise GridError("Gamma is empty; no trace norm")
        return boundary_weights(grid)
    if region == "full_boundary":
        return boundary_weights(grid, EDGES)
    raise GridError(f"unknown region {region!r}")


def lp_norm(u: GridFunction, p: float, region: str = "interior",
            mixed: Optional[Sequence[float]] = None) -> float:
    """Discrete ``L^p`` norm over ``Omega`` (``interior``), ``Gamma`` or the whole boundary.

    Space-time fields integrate over time as well.  ``mixed=(l1, l2)`` gives
    the time ``l2``-norm of spatial ``l1``-norms and ignores ``p``.
    Vector fields use the pointwise Euclidean length.
    """
    w = _region_weights(u.grid, region)
    a = u.magnitude()
    if mixed is not None:
        if not u.is_spacetime:
            raise GridError("mixed norms need a space-time field")
        l1, l2 = mixed
        inner = np.einsum("kij,ij->k", a ** l1, w) ** (1 / l1)
        return float(np.dot(time_weights(u.grid), inner ** l2) ** (1 / l2))
    if p < 1:
        raise GridError("p must be >= 1")
    if math.isinf(p):
        mask = w > 0
        return float(a[..., mask].max()) if a.size else 0.0
    if u.is_spacetime:
        s = np.dot(time_weights(u.grid), np.einsum("kij,ij->k", a ** p, w))
    else:
        s = np.sum(w * a ** p)
    return float(s ** (1 / p))


def slice_norms(u: GridFunction, p: float, region: str = "interior") -> np.ndarray:
    """Spatial ``L^p`` norm of every time slice."""
    w = _region_weights(u.grid, region)
    a = u.magnitude()
    return np.einsum("kij,ij->k", a ** p, w) ** (1 / p)


def ess_sup_lp(u: GridFunction, p: float) -> float:
    """Largest spatial ``L^p`` norm over the time slices.

    A max over discrete slices; it can only underestimate the continuum sup.
    """
    if not u.is_spacetime:
        raise GridError("ess_sup_lp needs a space-time field")
    return float(slice_norms(u, p).max())


def gradient(u: GridFunction) -> GridFunction:
    """Nodal gradient: centred differences inside, second-order one-sided at the edges."""
    if u.is_vector:
        raise GridError("gradient of a vector field is not supported")
    g = u.grid
    if g.nx < 2 or g.ny < 2:
        raise GridError("gradient needs at least 3 nodes per direction")
    ax = (1, 2) if u.is_spacetime else (0, 1)
    gx, gy = np.gradient(u.values, g.hx, g.hy, axis=ax, edge_order=2)
    return GridFunction(g, np.stack([gx, gy], axis=-1))


def weighted_mean_U(u: GridFunction, eta: GridFunction) -> np.ndarray:
    """Per-slice mean of ``u`` weighted by ``eta^2``.

    ``eta`` must be a spatial field vanishing on Gamma.
    """
    if eta.is_spacetime or eta.is_vector:
        raise GridError("eta must be a scalar spatial field")
    if np.any(eta.values[u.grid.gamma_mask] != 0):
        raise GridError("supp(eta) meets Gamma; the weighted mean is not defined there (use U = 0)")
    w = space_weights(u.grid) * eta.values ** 2
    mass = w.sum()
    if not mass > 0:
        raise GridError("integral of eta^2 must be positive")
    if u.is_spacetime:
        return np.einsum("kij,ij->k", u.values, w) / mass
    return np.array(np.sum(u.values * w) / mass)


def time_reflect(u: GridFunction) -> GridFunction:
    """Even extension of a space-time field to ``(t0-T, t0+2T)``."""
    if not u.is_spacetime:
        raise GridError("time_reflect needs a space-time field")
    g = u.grid
    v = u.values
    vals = np.concatenate([v[:0:-1], v, v[-2::-1]], axis=0)
    return GridFunction(replace(g, T=3 * g.T, nt=3 * g.nt, t0=g.t0 - g.T), vals)


# ---------------------------------------------------------------------------
# Cubes
# ---------------------------------------------------------------------------


def _index_range(origin: float, h: float, n: int, lo: float, hi: float) -> tuple[int, int]:
    tol = 1e-9 * h
    i0 = max(0, math.ceil((lo - origin - tol) / h))
    i1 = min(n, math.floor((hi - origin + tol) / h))
    return i0, i1


def cube_restrict(u: GridFunction, c: ParabolicCube) -> GridFunction:
    """Restriction of ``u`` to the nodes inside the closed cube ``c``.

    Time windows leaving ``[t0, t0+T]`` are served by the even reflection.
    At least two nodes per direction must remain.
    """
    g = u.grid
    i0, i1 = _index_range(g.x0, g.hx, g.nx, c.x0 - c.R, c.x0 + c.R)
    j0, j1 = _index_range(g.y0, g.hy, g.ny, c.y0 - c.R, c.y0 + c.R)
    if i1 <= i0 or j1 <= j0:
        raise GridError("cube does not meet the grid region in at least one cell")
    gamma = set()
    for e, cond in (("left", i0 == 0), ("right", i1 == g.nx),
                    ("bottom", j0 == 0), ("top", j1 == g.ny)):
        if cond and e in g.gamma_edges:
            gamma.add(e)
    sub = replace(g, Lx=(i1 - i0) * g.hx, Ly=(j1 - j0) * g.hy, nx=i1 - i0, ny=j1 - j0,
                  x0=g.x0 + i0 * g.hx, y0=g.y0 + j0 * g.hy, gamma_edges=frozenset(gamma))
    if not u.is_spacetime:
        return GridFunction(sub, u.values[i0:i1 + 1, j0:j1 + 1])
    lo, hi = c.t0 - c.R ** 2, c.t0 + c.R ** 2
    src = u
    if lo < g.t0 or hi > g.t0 + g.T:
        if lo < g.t0 - g.T or hi > g.t0 + 2 * g.T:
            raise GridError("time window exceeds the reflected range (need R^2 < T)")
        src = time_reflect(u)
    sg = src.grid
    k0, k1 = _index_range(sg.t0, sg.dt, sg.nt, lo, hi)
    if k1 <= k0:
        raise GridError("cube time window holds fewer than two time levels")
    sub = replace(sub, T=(k1 - k0) * sg.dt, nt=k1 - k0, t0=sg.t0 + k0 * sg.dt)
    return GridFunction(sub, src.values[k0:k1 + 1, i0:i1 + 1, j0:j1 + 1])


def cutoff(grid: SpaceTimeGrid, c: ParabolicCube, r: float) -> GridFunction:
    """Spatial cut-off: 1 on the inner cube of radius ``r``, 0 outside radius ``R``.

    Piecewise linear with slope ``1/(R-r)``.
    """
    if not 0 < r < c.R:
        raise GridError("need 0 < r < R")
    X, Y = grid.spatial().mesh()
    d = np.maximum(np.abs(X - c.x0), np.abs(Y - c.y0))
    return GridFunction(grid.spatial(), np.clip((c.R - d) / (c.R - r), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Stieltjes integrals of step functions
# ---------------------------------------------------------------------------


class StieltjesFn:
    """Right-continuous nonincreasing step function on ``[1, inf)``.

    ``h(tau) = values[k]`` for ``breakpoints[k] <= tau < breakpoints[k+1]``;
    ``breakpoints[0] == 1`` and ``values[-1] == 0`` (compact support).
    """

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]) -> None:
        b = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b.size < 1:
            raise ValueError("breakpoints and values must be 1-D arrays of equal length")
        if b[0] != 1.0:
            raise ValueError("the first breakpoint must be 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("values must be nonnegative and nonincreasing")
        if v[-1] != 0:
            raise ValueError("the last value must be 0")
        self.breakpoints = b
        self.values = v

    @classmethod
    def from_jumps(cls, points: Sequence[float], sizes: Sequence[float]) -> "StieltjesFn":
        """Step function dropping by ``sizes[k]`` at ``points[k] > 1``."""
        pts = np.asarray(points, dtype=float)
        sz = np.asarray(sizes, dtype=float)
        order = np.argsort(pts)
        pts, sz = pts[order], sz[order]
        if pts.size and pts[0] <= 1:
            raise ValueError("jump points must exceed 1")
        if np.any(sz < 0):
            raise ValueError("jump sizes must be nonnegative")
        tail = np.concatenate([np.cumsum(sz[::-1])[::-1], [0.0]])
        return cls(np.concatenate([[1.0], pts]), tail)

    @classmethod
    def zero(cls) -> "StieltjesFn":
        return cls([1.0], [0.0])

    @property
    def jump_points(self) -> np.ndarray:
        return self.breakpoints[1:]

    @property
    def jump_sizes(self) -> np.ndarray:
        return self.values[:-1] - self.values[1:]

    @property
    def support_max(self) -> float:
        return float(self.breakpoints[-1])

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        k = np.searchsorted(self.breakpoints, tau, side="right") - 1
        return self.values[np.clip(k, 0, None)]


def stieltjes_integral(h: StieltjesFn, gamma: float, lower: float = 1.0) -> float:
    """``-int_lower^inf tau^gamma dh(tau)`` over ``(lower, inf)``.

    The measure ``-dh`` is a sum of atoms at the jump points; an atom sitting
    exactly at ``lower`` is excluded, so ``gamma = 0`` returns ``h(lower)``.
    """
    pts, sz = h.jump_points, h.jump_sizes
    m = pts > lower
    return float(np.sum(sz[m] * pts[m] ** gamma))


# ---------------------------------------------------------------------------
# Trace constant helper
# ---------------------------------------------------------------------------


def trace_constant_lower_bound(grid: SpaceTimeGrid, samples: int = 200, seed: int = 0,
                               n: int = 2) -> float:
    """Numerical lower bound for the trace constant ``K_{2n/(n+1)}`` on ``grid``.

    Maximises ``||v||_{2,Gamma} / (||v||_q + ||grad v||_q)``, ``q = 2n/(n+1)``,
    over random smooth fields and boundary layers.  This is a lower bound,
    not a certified constant.
    """
    g = grid.spatial()
    if not g.gamma_edges:
        raise GridError("Gamma is empty")
    q = 2 * n / (n + 1)
    rng = np.random.default_rng(seed)
    X, Y = g.mesh()
    xs, ys = (X - g.x0) / g.Lx, (Y - g.y0) / g.Ly
    dist = {
        "left": xs, "right": 1 - xs, "bottom": ys, "top": 1 - ys,
    }
    best = 0.0
    for k in range(samples):
        if k == 0:
            v = np.ones(g.space_shape)
        elif k % 2:
            kx, ky = rng.integers(0, 5, size=2)
            v = np.cos(kx * np.pi * xs + rng.uniform(0, np.pi)) * np.cos(ky * np.pi * ys)
            v = v + rng.normal(scale=0.3)
        else:
            e = sorted(g.gamma_edges)[rng.integers(len(g.gamma_edges))]
            s = rng.uniform(0.5, 8.0)
            v = np.exp(-s * dist[e])
        f = GridFunction(g, v)
        den = lp_norm(f, q) + lp_norm(gradient(f), q)
        if den > 0:
            best = max(best, lp_norm(f, 2, "gamma_trace") / den)
    return best


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(u: GridFunction, path: Union[str, Path, None] = None) -> str:
    """Serialise a scalar grid function.

    Layout: a magic/comment line carrying the Gamma edges, the header
    ``nx,ny,nt,Lx,Ly,T``, its values, then one row per time level holding the
    node values in C order (``i`` outer, ``j`` inner).  Spatial fields write
    ``nt = 0`` and one row.  Floats use 17 significant digits, so the text is
    byte-stable and round-trips exactly.
    """
    if u.is_vector:
        raise GridError("only scalar fields can be written")
    g = u.grid
    out = io.StringIO()
    out.write(f"{CSV_MAGIC} gamma={';'.join(e for e in EDGES if e in g.gamma_edges)}\n")
    out.write("nx,ny,nt,Lx,Ly,T\n")
    out.write(f"{g.nx},{g.ny},{g.nt or 0},{_fmt(g.Lx)},{_fmt(g.Ly)},{_fmt(g.T)}\n")
    rows = u.values.reshape(1, -1) if not u.is_spacetime else u.values.reshape(g.nt + 1, -1)
    for row in rows:
        out.write(",".join(_fmt(x) for x in row))
        out.write("\n")
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(source: Union[str, Path]) -> GridFunction:
    """Inverse of ``write_csv``; accepts a path or the CSV text itself."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    lines = text.strip("\n").split("\n")
    if not lines[0].startswith(CSV_MAGIC):
        raise GridError("not a grid-function CSV")
    gamma_part = lines[0].split("gamma=", 1)[1] if "gamma=" in lines[0] else ""
    gamma = frozenset(e for e in gamma_part.split(";") if e)
    nx, ny, nt = (int(s) for s in lines[2].split(",")[:3])
    Lx, Ly, T = (float(s) for s in lines[2].split(",")[3:])
    grid = SpaceTimeGrid(Lx=Lx, Ly=Ly, nx=nx, ny=ny, T=T, nt=nt or None, gamma_edges=gamma)
    data = np.array([[float(s) for s in row.split(",")] for row in lines[3:]])
    return GridFunction(grid, data.reshape(grid.shape))
