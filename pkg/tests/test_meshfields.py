import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedpower.meshfields import (GridError, GridFunction, ParabolicCube, SpaceTimeGrid,
                                   StieltjesFn, cube_restrict, cutoff, ess_sup_lp, gradient,
                                   lp_norm, read_csv, slice_norms, stieltjes_integral,
                                   time_reflect, trace_constant_lower_bound, weighted_mean_U,
                                   write_csv)

SQ = SpaceTimeGrid(1.0, 1.0, 16, 16)
ST = SpaceTimeGrid(1.0, 1.0, 8, 8, T=1.0, nt=8)


def field(grid, fn):
    return GridFunction.from_callable(grid, fn)


# --- grids -----------------------------------------------------------------

def test_grid_spacings_and_validation():
    g = SpaceTimeGrid(2.0, 1.0, 8, 4, T=0.5, nt=10)
    assert (g.hx, g.hy, g.dt) == (0.25, 0.25, 0.05)
    assert g.shape == (11, 9, 5)
    for bad in (dict(nx=0), dict(Lx=-1.0), dict(T=1.0, nt=0), dict(gamma_edges=frozenset({"up"}))):
        with pytest.raises((GridError, ValueError)):
            SpaceTimeGrid(**{"Lx": 1.0, "Ly": 1.0, "nx": 4, "ny": 4, **bad})


def test_gridfunction_rejects_bad_values():
    with pytest.raises((GridError, ValueError)):
        GridFunction(SQ, np.zeros((3, 3)))
    v = np.zeros(SQ.shape)
    v[0, 0] = np.nan
    with pytest.raises((GridError, ValueError)):
        GridFunction(SQ, v)


# --- norms -------------------------------------------------------------------

def test_lp_norm_examples():
    assert lp_norm(field(SQ, lambda x, y: 1.0 + 0 * x), 2) == pytest.approx(1.0, rel=1e-14)
    g = SpaceTimeGrid(1.0, 1.0, 256, 256)
    assert lp_norm(field(g, lambda x, y: x), 2) == pytest.approx(1 / math.sqrt(3), rel=1e-5)
    u = field(SQ, lambda x, y: np.sin(3 * x) + y)
    for c in (-2.5, 0.0, 3.0):
        assert lp_norm(u * c, 3) == pytest.approx(abs(c) * lp_norm(u, 3), rel=1e-13, abs=1e-15)


def test_lp_norm_regions():
    one = field(SQ, lambda x, y: 1.0 + 0 * x)
    assert lp_norm(one, 1, "gamma_trace") == pytest.approx(4.0)
    assert lp_norm(one, 1, "full_boundary") == pytest.approx(4.0)
    g = SpaceTimeGrid(1.0, 1.0, 8, 8, gamma_edges=frozenset({"left"}))
    assert lp_norm(GridFunction(g, np.ones(g.shape)), 1, "gamma_trace") == pytest.approx(1.0)
    empty = SpaceTimeGrid(1.0, 1.0, 8, 8, gamma_edges=frozenset())
    with pytest.raises(GridError):
        lp_norm(GridFunction(empty, np.ones(empty.shape)), 2, "gamma_trace")


def test_mixed_norm():
    u = field(ST, lambda x, y, t: (1 + t) * (1 + 0 * x))
    # spatial L1 norm is 1 + t; temporal L2 of that, trapezoid in time
    tw = np.full(9, 1 / 8)
    tw[[0, -1]] /= 2
    want = math.sqrt(np.dot(tw, (1 + ST.t) ** 2))
    assert lp_norm(u, 2, mixed=(1, 2)) == pytest.approx(want, rel=1e-13)
    with pytest.raises(GridError):
        lp_norm(field(SQ, lambda x, y: x), 2, mixed=(1, 2))


def test_quadrature_order():
    errs = []
    for n in (8, 16, 32):
        g = SpaceTimeGrid(1.0, 1.0, n, n)
        val = lp_norm(field(g, lambda x, y: np.exp(x) * np.cos(y)), 2) ** 2
        exact = (math.e ** 2 - 1) / 2 * (0.5 + math.sin(2) / 4)
        errs.append(abs(val - exact))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 4.0))
def test_norm_axioms(seed, p):
    rng = np.random.default_rng(seed)
    g = SpaceTimeGrid(1.0, 1.0, 6, 5)
    u, v = (GridFunction(g, rng.normal(size=g.shape)) for _ in range(2))
    assert lp_norm(u + v, p) <= lp_norm(u, p) + lp_norm(v, p) + 1e-10
    c = float(rng.normal())
    assert lp_norm(u * c, p) == pytest.approx(abs(c) * lp_norm(u, p), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 3.0), st.floats(0.0, 3.0))
def test_holder_on_unit_measure(seed, p, dq):
    rng = np.random.default_rng(seed)
    u = GridFunction(SQ, rng.normal(size=SQ.shape))
    assert lp_norm(u, p) <= lp_norm(u, p + dq) * (1 + 1e-12)


def test_ess_sup_examples():
    u = field(ST, lambda x, y, t: np.cos(x) + 0 * t)
    assert ess_sup_lp(u, 2) == pytest.approx(lp_norm(field(ST.spatial(), lambda x, y: np.cos(x)), 2))
    d = field(ST, lambda x, y, t: np.exp(-t) + 0 * x)
    assert ess_sup_lp(d, 3) == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    r = GridFunction(ST, rng.normal(size=ST.shape))
    scan = max(lp_norm(r.slice_at(k), 2.5) for k in range(ST.nt + 1))
    assert ess_sup_lp(r, 2.5) == pytest.approx(scan, rel=1e-13)
    assert np.allclose(slice_norms(r, 2.5), [lp_norm(r.slice_at(k), 2.5) for k in range(9)])


# --- gradient ----------------------------------------------------------------

def test_gradient_examples():
    assert np.all(gradient(field(SQ, lambda x, y: 3.0 + 0 * x)).values == 0)
    g = gradient(field(SQ, lambda x, y: x)).values
    assert np.allclose(g[..., 0], 1.0, atol=1e-12) and np.allclose(g[..., 1], 0.0, atol=1e-12)
    errs = []
    for n in (16, 32, 64):
        grid = SpaceTimeGrid(1.0, 1.0, n, n)
        gx = gradient(field(grid, lambda x, y: np.sin(np.pi * x))).values[..., 0]
        X, _ = grid.mesh()
        errs.append(np.max(np.abs(gx - np.pi * np.cos(np.pi * X))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)


def test_gradient_spacetime_shape():
    g = gradient(field(ST, lambda x, y, t: x * t + y))
    assert g.values.shape == ST.shape + (2,)
    assert np.allclose(g.values[..., 1], 1.0)


# --- weighted mean --------------------------------------------------------

def test_weighted_mean_examples():
    free = SpaceTimeGrid(1.0, 1.0, 8, 8, T=1.0, nt=4, gamma_edges=frozenset())
    u = field(free, lambda x, y, t: 2.5 + 0 * x)
    eta = field(free.spatial(), lambda x, y: np.sin(np.pi * x) + 0.1)
    assert np.allclose(weighted_mean_U(u, eta), 2.5)
    v = field(free, lambda x, y, t: x * y + t)
    ones = GridFunction(free.spatial(), np.ones(free.space_shape))
    assert np.allclose(weighted_mean_U(v, ones), 0.25 + free.t)
    check = field(free.spatial(), lambda x, y: np.cos(np.pi * x))
    sym = field(free.spatial(), lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    assert abs(float(weighted_mean_U(check, sym))) < 1e-14


def test_weighted_mean_rejects_gamma_support():
    u = field(SQ, lambda x, y: x)
    with pytest.raises(GridError):
        weighted_mean_U(u, GridFunction(SQ, np.ones(SQ.shape)))
    with pytest.raises(GridError):
        weighted_mean_U(u, GridFunction(SQ, np.zeros(SQ.shape)))


# --- reflection and cubes ---------------------------------------------------

def test_time_reflect():
    u = field(ST, lambda x, y, t: np.sin(3 * t) + x)
    r = time_reflect(u)
    assert r.grid.nt == 3 * ST.nt and r.grid.t[0] == pytest.approx(-1.0)
    n = ST.nt
    for k in range(n + 1):
        assert np.array_equal(r.values[n - k], u.values[k])
        assert np.array_equal(r.values[n + k], u.values[k])
        assert np.array_equal(r.values[3 * n - k], u.values[k])
    const = time_reflect(field(ST, lambda x, y, t: x + 0 * t))
    assert np.all(const.values == const.values[0])
    pos_u = field(ST, lambda x, y, t: 2 + np.sin(5 * t) * x)
    assert lp_norm(time_reflect(pos_u), 1) == pytest.approx(3 * lp_norm(pos_u, 1), rel=1e-13)


def test_cube_restrict():
    g = SpaceTimeGrid(1.0, 1.0, 8, 8, T=1.0, nt=32)
    u = field(g, lambda x, y, t: 1 + x * y * t)
    whole = cube_restrict(u, ParabolicCube(0.5, 0.5, 0.5, 0.71))
    assert lp_norm(whole, 2) == pytest.approx(lp_norm(u, 2))
    with pytest.raises(GridError):
        cube_restrict(u, ParabolicCube(5.0, 5.0, 0.5, 0.2))
    c = GridFunction(g, np.full(g.shape, 2.0))
    half = cube_restrict(c, ParabolicCube(0.25, 0.5, 0.5, 0.25))
    # x in [0, .5], y in [.25, .75], t in [.4375, .5625] (clipped to nodes)
    vol = half.grid.Lx * half.grid.Ly * half.grid.T
    assert lp_norm(half, 3) == pytest.approx(2.0 * vol ** (1 / 3), rel=1e-12)


def test_cutoff():
    c = ParabolicCube(0.5, 0.5, 0.0, 0.4)
    eta = cutoff(SQ, c, 0.2).values
    X, Y = SQ.mesh()
    d = np.maximum(abs(X - 0.5), abs(Y - 0.5))
    assert np.all(eta[d <= 0.2] == 1) and np.all(eta[d >= 0.4] == 0)
    with pytest.raises(GridError):
        cutoff(SQ, c, 0.5)


# --- Stieltjes -----------------------------------------------------------------

def test_stieltjes_examples():
    one = StieltjesFn.from_jumps([2.0], [1.0])
    for gamma in (0.0, 0.5, 3.0):
        assert stieltjes_integral(one, gamma) == pytest.approx(2.0 ** gamma)
    two = StieltjesFn.from_jumps([2.0, 3.0], [0.5, 0.5])
    assert stieltjes_integral(two, 1.0) == pytest.approx(2.5)
    for lower in (1.0, 1.5, 2.0, 2.5, 3.0, 7.0):
        assert stieltjes_integral(two, 0.0, lower) == pytest.approx(float(two(lower)))


def test_stieltjes_fn_validation():
    with pytest.raises(ValueError):
        StieltjesFn([1.0, 2.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        StieltjesFn([1.0, 2.0], [0.5, 1.0])
    with pytest.raises(ValueError):
        StieltjesFn([2.0, 3.0], [1.0, 0.0])
    assert StieltjesFn.zero()(5.0) == 0.0


def _riemann_stieltjes(h, gamma, lower):
    """Sum over an adaptively refined partition of (lower, top]; only cells with
    a nonzero increment are refined, the rest contribute exactly 0."""
    top = float(h.breakpoints[-1]) + 1.0
    cells = list(zip(np.linspace(lower, top, 65)[:-1], np.linspace(lower, top, 65)[1:]))
    total = 0.0
    while cells:
        nxt = []
        for a, b in cells:
            inc = float(h(a)) - float(h(b))
            if inc == 0:
                continue
            if b - a < 1e-13 * top:
                total += inc * b ** gamma
            else:
                m = 0.5 * (a + b)
                nxt += [(a, m), (m, b)]
        cells = nxt
    return total


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(1.01, 20), st.floats(0.0, 1.0)), min_size=0, max_size=6),
       st.floats(0.0, 3.0), st.floats(1.0, 15.0))
def test_stieltjes_matches_partition_oracle(jumps, gamma, lower):
    pts = sorted({round(p, 6) for p, _ in jumps})
    sizes = [s for (_, s) in jumps[:len(pts)]]
    h = StieltjesFn.from_jumps(pts, sizes)
    got = stieltjes_integral(h, gamma, lower)
    assert got == pytest.approx(_riemann_stieltjes(h, gamma, lower), rel=1e-9, abs=1e-9)


# --- trace constant and CSV ----------------------------------------------------

def test_trace_constant_lower_bound_positive_and_deterministic():
    k1 = trace_constant_lower_bound(SQ, samples=50, seed=3)
    assert k1 > 0 and k1 == trace_constant_lower_bound(SQ, samples=50, seed=3)
    with pytest.raises(GridError):
        trace_constant_lower_bound(SpaceTimeGrid(1, 1, 4, 4, gamma_edges=frozenset()))


def test_csv_round_trip_and_stability(tmp_path):
    g = SpaceTimeGrid(2.0, 1.0, 4, 3, T=0.5, nt=2, gamma_edges=frozenset({"left", "top"}))
    u = field(g, lambda x, y, t: np.exp(x) * np.sin(y + t) / 3)
    text = write_csv(u)
    back = read_csv(text)
    assert np.array_equal(back.values, u.values)
    assert back.grid == g
    p = tmp_path / "u.csv"
    write_csv(u, p)
    assert p.read_text() == text
    assert write_csv(read_csv(p)) == text
    s = field(SQ, lambda x, y: x - y)
    assert np.array_equal(read_csv(write_csv(s)).values, s.values)
    lines = text.splitlines()
    assert lines[1] == "nx,ny,nt,Lx,Ly,T"
    with pytest.raises(GridError):
        read_csv("a,b\n1,2\n")
