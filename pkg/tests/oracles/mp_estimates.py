"""Extended-precision reference values for the estimate constants.

Written directly from the formulas, without importing the package, so that
a transcription slip in one copy shows up as a disagreement.  Inputs are
plain numbers; outputs are mpmath floats.
"""
from functools import lru_cache

import mpmath as mp

mp.mp.dps = 30


@lru_cache(maxsize=None)
def S(n):
    n = mp.mpf(n)
    val = mp.pi ** mp.mpf(-0.5) * n ** ((2 - 3 * n) / (2 * n))
    if n > 2:
        val *= (n - 2) ** ((n - 2) / (2 * n))
    return val * (mp.gamma(n) / mp.gamma(n / 2)) ** (1 / n)


def rate(p, nu0, bzero=False):
    p, nu0 = mp.mpf(p), mp.mpf(nu0)
    root = nu0 ** (1 / (p - 1)) if nu0 > 0 else mp.mpf(0)
    if bzero:
        return (p - 1) * (1 + root)
    return p - 2 + (p - 1) * root


def calG(p, a, b, ell, nu0, norms, n=2, bzero=False):
    """norms: u0, f, fv, hmix, K, vol (hmix is the boundary integral of the variant)."""
    p, a, b, ell = map(mp.mpf, (p, a, b, ell))
    u0, f, fv, hmix, K, vol = (mp.mpf(norms[k]) for k in ("u0", "f", "fv", "hmix", "K", "vol"))
    out = u0 ** p + ((p - 1) / a) ** (p / 2) * fv ** p
    if f != 0:
        out += f ** p / mp.mpf(nu0)
    if hmix == 0:
        return out
    if bzero:
        c = (p - 1) * ((p ** 2 / (2 * a * (p - 1))) ** (1 / (p - 1)) + 1)
        return out + c * K ** (2 / (p - 1)) * vol ** (1 / ((p - 1) * n)) * hmix
    return out + p * (ell - 1) / ((ell + p - 2) * b ** ((p - 1) / (ell - 1))) * hmix


def calE(p, a, b, ell, nu0, norms, T, n=2, bzero=False):
    k = rate(p, nu0, bzero) * mp.mpf(T)
    return calG(p, a, b, ell, nu0, norms, n, bzero) * (1 + k * mp.exp(k))


@lru_cache(maxsize=None)
def upsilon(B, n, p, m1=2, m2=2, r=2, l1=2, l2=2, s=2, d=2, surface=True, phi=True):
    B, p, m1, m2, r, l1, l2, s, d = map(mp.mpf, (B, p, m1, m2, r, l1, l2, s, d))
    pp = p / (p - 1)
    inner = 2 ** (n + 2) * (2 ** (n + 2) * B) ** (1 / p) + 3 / pp
    inner += mp.mpf(2) ** ((n / m1 + 1 / m2) * r / p)
    if surface:
        inner += mp.mpf(2) ** (((n - 1) / l1 + 1 / l2) * s / p)
    if phi:
        inner += mp.mpf(2) ** (n * d / p)
    inner += mp.mpf(2) ** (2 * n + 3)
    return (4 ** n + 1) * inner ** p


@lru_cache(maxsize=None)
def B_interior(a, A, nu0, n):
    a, A, nu0 = map(mp.mpf, (a, A, nu0))
    return mp.mpf(2) ** (2 * (2 - mp.mpf(1) / n)) / a * (2 * A ** 2 / a + 2 + nu0) * (4 * S(n)) ** 2


@lru_cache(maxsize=None)
def B_boundary(a, A, nu0, n):
    a, A, nu0 = map(mp.mpf, (a, A, nu0))
    return mp.mpf(2) ** (5 - mp.mpf(2) / n) / a * (2 * A ** 2 / a + mp.mpf(19) / 8 + nu0) * (4 * S(n)) ** 2


@lru_cache(maxsize=None)
def ups_gradient(a, A, nu0, n, boundary=True):
    """Gehring constant for Phi = |grad u|^(2n/(n+2)), no time-independent datum."""
    B = B_boundary(a, A, nu0, n) if boundary else B_interior(a, A, nu0, n)
    return upsilon(B, n, mp.mpf(n + 2) / n, surface=boundary, phi=False)


def C_cover(n, N, cn, r_sharp, beta, eps, ups):
    eps, beta, ups = map(mp.mpf, (eps, beta, ups))
    core = (2 * n * beta ** (-eps * (n + 2) / 2) / (4 - (n + 2) * (ups - 1) * eps)) ** (1 / (2 + eps))
    return N * mp.mpf(2) ** cn * mp.mpf(r_sharp) ** (-mp.mpf(n + 2) / 2) * core


def calM(p, a, A, b, ell, fp, norms, norms2, T, n=2, bzero=False):
    p, a = mp.mpf(p), mp.mpf(a)
    ups = ups_gradient(a, A, fp["nu0"], n, True)
    C = C_cover(n, fp["cover_N"], fp["cn"], fp["cover_r"], fp["beta"], p - 2, ups)
    E2 = calE(2, a, b, ell, fp["nu0"], norms2, T, n, bzero)
    f = mp.mpf(norms["f"])
    data = mp.sqrt(1 + a) * norms["fv"] + mp.sqrt(1 + a) * norms["K"] * norms["hp"]
    if f != 0:
        data += f / mp.sqrt(fp["nu0"])
    return C * (mp.sqrt(E2 / a) + (1 + ups) ** (1 / p) / a * data)


def caccioppoli(a, A, nu0, nu1, nu2, R, r, K, w, f, fv, h):
    a, A, nu0, nu1, nu2, R, r, K, w, f, fv, h = map(mp.mpf, (a, A, nu0, nu1, nu2, R, r, K, w, f, fv, h))
    out = (2 * A ** 2 / a + 2 + nu0 + 3 * nu2 / 2) * 2 / (R - r) ** 2 * w ** 2
    if f:
        out += f ** 2 / nu0
    if fv:
        out += (1 / (a * nu1) + 2) * fv ** 2
    if h:
        out += 2 * R * K ** 2 / nu2 * (1 / a + 2) * h ** 2
    return out


def higher_integrability(boundary, a, nu0, beta, R, eps, n, ups, grad, fv, f, h, K):
    a, nu0, beta, R, eps, ups, grad, fv, f, h, K = map(
        mp.mpf, (a, nu0, beta, R, eps, ups, grad, fv, f, h, K))
    q = 2 + eps
    lead = (2 * n * beta ** (-eps * (n + 2) / 2) / (4 - (n + 2) * (ups - 1) * eps)) ** (1 / q)
    t1 = (2 * (4 + eps) / (n * q * R ** (eps * (n + 2) / 2))) ** (1 / q) * grad
    w2 = (2 ** (1 + eps * (n + 1) / 2) * eps / (n * q) + ups * (4 + eps * (n + 2)) / (2 * n)) ** (1 / q)
    if boundary:
        data = 2 * mp.sqrt(2 * (1 + a)) / a * fv + (2 / mp.sqrt(a * nu0) * f if f else 0)
    else:
        data = 2 * mp.sqrt(1 + a) / a * fv + (mp.sqrt(2 / (a * nu0)) * f if f else 0)
    total = t1 + w2 * data
    if boundary and h:
        w3 = (2 ** (1 + eps * n / 2) * eps / (n * q * R ** (eps / 2))
              + ups * (4 + eps * (n + 2)) / (2 * n)) ** (1 / q)
        total += w3 * 4 / a * mp.sqrt(2 * (1 + a)) * K * h
    return lead * total


def marcinkiewicz(p, q, r, T1, T2):
    p, q, r, T1, T2 = map(mp.mpf, (p, q, r, T1, T2))
    alpha = (1 / p - 1 / r) / (1 / q - 1 / r)
    return alpha, 2 * (p / (p - q) + p / (r - p)) ** (1 / p) * T1 ** alpha * T2 ** (1 - alpha)


def lambda_p(p, fp, T, K, vol, n=2):
    """M(1,1) + E(1,1,p) at ell = 2 with unit data norms and zero initial value."""
    unit = {"u0": 0, "f": 1, "fv": 1, "hmix": 1, "hp": 1, "K": K, "vol": vol}
    return calM(p, 1, 1, 1, 2, fp, unit, unit, T, n) + calE(p, 1, 1, 2, fp["nu0"], unit, T, n)


def steady_ups(a, A, nu0, n):
    a, A, nu0 = map(mp.mpf, (a, A, nu0))
    return (8 ** n + 1) * mp.mpf(2) ** (6 * n) * (mp.sqrt((4 * A / a) ** 2 + (4 + nu0) / a) + 1) ** 2


def steady_rhs(a, A, nu0, n, N, r_sharp, eps, grad2, Fn, Hn):
    eps, grad2, Fn, Hn, r_sharp = map(mp.mpf, (eps, grad2, Fn, Hn, r_sharp))
    ups = steady_ups(a, A, nu0, n)
    q = 2 + eps
    bracket = (8 / r_sharp ** n) ** (eps / 2) * 4 * grad2 ** q
    bracket += (2 ** (2 + 3 * eps / 2) + ups * (4 + (n + 2) * eps)) * Fn ** q
    bracket += (4 + ups * (4 + (n + 2) * eps)) * Hn ** q
    return ups, 2 ** (n * (1 + eps / 2)) * N / (4 - (n + 2) * (ups - 1) * eps) * bracket


def contraction(a, A, b, Mp, p):
    a, A, b, Mp, p = map(mp.mpf, (a, A, b, Mp, p))
    kappa = max(mp.sqrt(A ** 2 - a ** 2), abs(A - a * b / A))
    q = Mp * max(mp.sqrt(1 - (a / A) ** 2), abs(1 - a * b / A ** 2))
    return {"t": a / A ** 2, "kappa": kappa, "q": q, "el2": Mp * a / (A - kappa * Mp),
            "necas": mp.mpf(2) ** (mp.mpf(1) / 2 - 1 / p)}


def best_nu0(p, a, b, ell, norms, T, n=2, bzero=False, lo=1e-6, hi=1e3):
    """Minimiser over nu0 in [lo, hi] of log(G) + rate*T.

    Only the f term of G depends on nu0, so the derivative in s = log nu0 is
    -(f^p/nu0)/G + T nu0^(1/(p-1)), increasing in s; its root is the minimiser.
    """
    p, T = mp.mpf(p), mp.mpf(T)
    fp_ = mp.mpf(norms["f"]) ** p

    def obj(s):
        nu = mp.exp(s)
        return mp.log(calG(p, a, b, ell, nu, norms, n, bzero)) + rate(p, nu, bzero) * T

    G0 = calG(p, a, b, ell, 1, norms, n, bzero) - fp_  # the nu0-free part of G
    e = 1 / (p - 1)

    def slope(s):
        nu = mp.exp(s)
        return -fp_ / (nu * G0 + fp_) + T * nu ** e

    s0, s1 = mp.log(lo), mp.log(hi)
    if slope(s0) >= 0:
        s = s0
    elif slope(s1) <= 0:
        s = s1
    else:
        s = mp.findroot(slope, (s0, s1), solver="illinois", tol=mp.mpf(10) ** -24, maxsteps=200)
    return mp.exp(s), obj(s), obj
