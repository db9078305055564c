"""Explicit constants of the a-priori estimates.

Every function here is a pure evaluation of a closed-form bound: no grids, no
solvers.  Data enter only through norms (``DataNorms``) or local norms passed
as mappings.  Inputs that would make a bound meaningless raise
``ParameterError`` (or its subclass ``InfeasibleParameters`` when a
feasibility condition such as a positive denominator fails).

Zero-data convention: a quotient such as ``||f||^p / nu0`` is defined as 0
when the datum vanishes, in which case ``nu0 = 0`` is allowed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from scipy.optimize import minimize_scalar

__all__ = [
    "ParameterError",
    "InfeasibleParameters",
    "EllipticityData",
    "FreeParameters",
    "DataNorms",
    "GehringExponents",
    "MainBounds",
    "EpsilonInterval",
    "W1pBounds",
    "SteadyBounds",
    "ContractionData",
    "poincare_sobolev_constant",
    "theorem_main_bounds",
    "caccioppoli_rhs",
    "gehring_B",
    "gehring_upsilon",
    "boundary_upsilon",
    "interior_upsilon",
    "gradient_epsilon_cap",
    "epsilon_admissible",
    "higher_integrability_rhs",
    "covering_constant",
    "linear_w1p",
    "marcinkiewicz_exponent",
    "marcinkiewicz_constant",
    "steady_upsilon",
    "steady_state_bounds",
    "contraction_data",
    "optimal_nu0",
]


class ParameterError(ValueError):
    """Inputs outside the domain of a bound formula."""


class InfeasibleParameters(ParameterError):
    """A feasibility condition of a bound (positive denominator, contraction) fails."""


def _require(cond: bool, msg: str, exc: type = ParameterError) -> None:
    if not cond:
        raise exc(msg)


def _quotient(term: float, nu: float, name: str) -> float:
    # nu = 0 is only legal for a vanishing datum; the term is then 0.
    if term == 0.0:
        return 0.0
    if nu <= 0.0:
        raise ParameterError(
            f"{name} is zero but its datum is nonzero; a positive {name} is required"
        )
    return term / nu


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipticityData:
    """Structural constants of the coefficient ``A`` and the boundary law ``b``.

    ``a_lo`` is the uniform ellipticity constant, ``a_hi`` the sup-norm of
    ``A``; ``b_lo``/``b_hi`` bound ``b(x, s) / |s|^(ell-2)`` from below/above.
    """

    a_lo: float
    a_hi: float
    b_lo: float
    b_hi: float
    ell: float = 2.0

    def __post_init__(self) -> None:
        _require(self.a_lo > 0, "a_lo must be positive")
        _require(self.a_lo <= self.a_hi, "need a_lo <= a_hi")
        _require(0 <= self.b_lo <= self.b_hi, "need 0 <= b_lo <= b_hi")
        _require(self.ell >= 2, "the boundary exponent ell must be >= 2")


@dataclass(frozen=True)
class FreeParameters:
    """Scalars the estimates leave free.

    ``cn`` is the value of the degree-one polynomial ``c(n)`` in the covering
    constant; ``cover_N`` and ``cover_r`` are the overlap count and the
    smallest cube side of the spatial cover.
    """

    nu0: float = 1.0
    nu1: float = 0.5
    nu2: float = 0.25
    eps: float = 0.0
    delta: float = 1.0
    beta: float = 0.5
    cover_N: int = 5
    cover_r: float = 0.5
    cn: float = 3.0

    def __post_init__(self) -> None:
        for name in ("nu0", "nu1", "nu2", "eps"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0")
        _require(self.delta > 0, "delta must be positive")
        _require(0 < self.beta < 1, "beta must lie in (0, 1)")
        _require(int(self.cover_N) == self.cover_N and self.cover_N >= 1,
                 "cover_N must be a positive integer")
        _require(self.cover_r > 0, "cover_r must be positive")
        _require(self.cn > 0, "cn must be positive")

    @classmethod
    def for_data(cls, *, has_f: bool, has_fvec: bool, has_h: bool, n: int = 2,
                 **overrides) -> "FreeParameters":
        """Default choice: nu0 = 1, nu1 = 1/2, nu2 = 1/4, each zeroed with its datum.

        ``cn`` defaults to ``n + 1`` and ``cover_N`` to ``2**n + 1``.
        """
        kw = dict(
            nu0=1.0 if has_f else 0.0,
            nu1=0.5 if has_fvec else 0.0,
            nu2=0.25 if has_h else 0.0,
            cover_N=2 ** n + 1,
            cn=float(n + 1),
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class DataNorms:
    """Norms of the data, all at a common integrability exponent ``p``.

    ``h_mixed`` is the boundary integral entering ``G`` for the chosen variant:
    ``int_{Sigma_T} |h|^((ell+p-2)/(ell-1))`` for the standard estimate and
    ``||h||_{p',Sigma_T}^{p'}`` for the ``b_zero`` variant.
    """

    u0_p: float = 0.0
    f_p: float = 0.0
    fvec_p: float = 0.0
    h_mixed: float = 0.0
    h_p: float = 0.0
    omega_vol: float = 1.0
    K_trace: float = 1.0
    S_dual: float = 0.0

    def __post_init__(self) -> None:
        for name in ("u0_p", "f_p", "fvec_p", "h_mixed", "h_p", "omega_vol", "S_dual"):
            v = getattr(self, name)
            _require(v >= 0 and math.isfinite(v), f"{name} must be finite and >= 0")
        _require(self.K_trace > 0, "K_trace must be positive")


@dataclass(frozen=True)
class GehringExponents:
    """Exponents of the reverse Hoelder hypothesis.

    ``(m1, m2, r)`` belong to the volume datum, ``(l1, l2, s)`` to the surface
    datum and ``d`` to the time-independent datum.
    """

    p: float
    m1: float = 2.0
    m2: float = 2.0
    r: float = 2.0
    l1: float = 2.0
    l2: float = 2.0
    s: float = 2.0
    d: float = 2.0
    n: int = 2

    def __post_init__(self) -> None:
        _require(self.p > 1, "p must exceed 1")
        _require(int(self.n) == self.n and self.n >= 2, "n must be an integer >= 2")

    @classmethod
    def gradient(cls, n: int) -> "GehringExponents":
        """Exponents used for ``Phi = |grad u|^(2n/(n+2))``."""
        return cls(p=(n + 2) / n, d=(n + 2) / n, n=n)

    def check(self, *, surface: bool, phi: bool) -> None:
        n = self.n
        tol = 1e-12
        _require(self.r >= self.m2 >= self.m1 >= 1, "need r >= m2 >= m1 >= 1")
        _require(n / self.m1 + 2 / self.m2 >= (n + 2) / self.r - tol,
                 "volume exponents violate n/m1 + 2/m2 >= (n+2)/r")
        if surface:
            _require(self.s >= self.l2 >= self.l1 >= 1, "need s >= l2 >= l1 >= 1")
            _require((n - 1) / self.l1 + 2 / self.l2 >= (n + 1) / self.s - tol,
                     "surface exponents violate (n-1)/l1 + 2/l2 >= (n+1)/s")
        if phi:
            _require(n * self.d >= n + 2 - tol, "need n*d >= n+2")


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MainBounds:
    G: float
    E: float
    M: float
    kappa: float
    upsilon: float = float("nan")
    C_n: float = float("nan")


@dataclass(frozen=True)
class EpsilonInterval:
    """The interval ``[0, upper)`` (or ``[0, upper]`` when ``closed``)."""

    upper: float
    closed: bool
    binding: str

    def __contains__(self, eps: float) -> bool:
        if eps < 0:
            return False
        return eps <= self.upper if self.closed else eps < self.upper


@dataclass(frozen=True)
class W1pBounds:
    Lambda_p: float
    grad_bound: float
    trace_bound: float


@dataclass(frozen=True)
class SteadyBounds:
    upsilon_s: float
    rhs_cotam1: float
    F_mult: float
    H_mult: float
    f_mult: float = 0.0


@dataclass(frozen=True)
class ContractionData:
    t: float
    kappa_c: float
    q_factor: float
    el2_mult: float
    necas_c: Optional[float] = field(default=None)


# ---------------------------------------------------------------------------
# Sobolev-Poincare constant
# ---------------------------------------------------------------------------


def poincare_sobolev_constant(n: int) -> float:
    """Closed-form constant of the local Poincare inequality in dimension ``n``.

    The factor ``(n-2)^((n-2)/(2n))`` is taken as 1 at ``n = 2``.

    >>> round(poincare_sobolev_constant(2), 5)
    0.28209
    """
    if int(n) != n or n < 2:
        raise ParameterError("the Poincare-Sobolev constant needs an integer n >= 2")
    n = int(n)
    log_s = -0.5 * math.log(math.pi) + (2 - 3 * n) / (2 * n) * math.log(n)
    if n > 2:
        log_s += (n - 2) / (2 * n) * math.log(n - 2)
    log_s += (math.lgamma(n) - math.lgamma(n / 2)) / n
    return math.exp(log_s)


# ---------------------------------------------------------------------------
# Global energy estimates
# ---------------------------------------------------------------------------


def _growth_rate(p: float, nu0: float, variant: str) -> float:
    if variant == "standard":
        return p - 2 + (p - 1) * nu0 ** (1 / (p - 1))
    return (p - 1) * (1 + nu0 ** (1 / (p - 1)))


def _G(p: float, ed: EllipticityData, fp: FreeParameters, dn: DataNorms,
       variant: str, n: int) -> float:
    a = ed.a_lo
    ell = ed.ell
    G = dn.u0_p ** p + _quotient(dn.f_p ** p, fp.nu0, "nu0")
    G += ((p - 1) / a) ** (p / 2) * dn.fvec_p ** p
    if variant == "standard":
        if dn.h_mixed > 0:
            G += p * (ell - 1) / ((ell + p - 2) * ed.b_lo ** ((p - 1) / (ell - 1))) * dn.h_mixed
    else:
        coef = (p - 1) * ((p * p / (2 * a * (p - 1))) ** (1 / (p - 1)) + 1)
        G += coef * dn.K_trace ** (2 / (p - 1)) * dn.omega_vol ** (1 / ((p - 1) * n)) * dn.h_mixed
    return G


def boundary_upsilon(ed: EllipticityData, nu0: float, n: int) -> float:
    """Gehring constant for boundary cubes (boundary ``B``, no ``phi`` term)."""
    return gehring_upsilon(gehring_B(ed, nu0, n, "boundary"),
                           GehringExponents.gradient(n), "no_phi")


def interior_upsilon(ed: EllipticityData, nu0: float, n: int) -> float:
    """Gehring constant for interior cubes (interior ``B``, no ``phi`` term)."""
    return gehring_upsilon(gehring_B(ed, nu0, n, "interior"),
                           GehringExponents.gradient(n), "interior_no_phi")


def gradient_epsilon_cap(n: int, upsilon: float) -> float:
    """Supremum of admissible gradient exponent gains, ``4/((n+2)(upsilon-1))``."""
    _require(upsilon > 1, "upsilon must exceed 1")
    return 4.0 / ((n + 2) * (upsilon - 1))


def theorem_main_bounds(p: float, ed: EllipticityData, fp: FreeParameters, dn: DataNorms,
                        T: float, variant: str = "standard", *, n: int = 2,
                        dn2: Optional[DataNorms] = None) -> MainBounds:
    """Global bounds ``G``, ``E``, ``M`` and the Gronwall rate ``kappa``.

    ``G * exp(kappa*T)`` bounds ``ess sup_t ||u(t)||_p^p``; ``E`` bounds the
    weighted gradient energy plus ``b_lo`` times the boundary integral;
    ``M`` bounds ``||grad u||_{p,Q_T}``.  ``M`` needs the data norms at
    exponent 2 as well (``dn2``); they default to ``dn`` when ``p == 2``.
    ``M`` (and ``C_n``) is ``inf`` when ``p - 2`` is not below the gradient
    epsilon cap.

    Parameters
    ----------
    variant : {"standard", "b_zero"}
        ``b_zero`` is the reformulation for a boundary law without a positive
        lower bound; it needs ``K_trace`` and ``omega_vol`` in ``dn``.
    """
    _require(p >= 2, "p must be >= 2")
    _require(T > 0, "T must be positive")
    if variant not in ("standard", "b_zero"):
        raise ParameterError(f"unknown variant {variant!r}")
    if variant == "standard" and ed.b_lo <= 0:
        raise ParameterError(
            "b_lo = 0 is not covered by the standard estimate; use variant='b_zero' "
            "(the reformulation for a boundary law without a positive lower bound)"
        )
    if dn.f_p > 0 and fp.nu0 <= 0:
        raise ParameterError("nu0 must be positive when f is nonzero")

    kappa = _growth_rate(p, fp.nu0, variant)
    G = _G(p, ed, fp, dn, variant, n)
    growth = kappa * T
    E = G * (1 + growth * math.exp(growth))

    a = ed.a_lo
    ups = boundary_upsilon(ed, fp.nu0, n)
    if p - 2 >= gradient_epsilon_cap(n, ups):
        # outside the higher-integrability range there is no gradient bound
        return MainBounds(G=G, E=E, M=math.inf, kappa=kappa, upsilon=ups, C_n=math.inf)
    if dn2 is None:
        if p != 2:
            raise ParameterError("the gradient bound M needs data norms at p = 2 (dn2)")
        dn2 = dn
    G2 = _G(2.0, ed, fp, dn2, variant, n)
    k2 = _growth_rate(2.0, fp.nu0, variant) * T
    E2 = G2 * (1 + k2 * math.exp(k2))

    C_n = covering_constant(n, fp, p - 2, ups)
    f_term = 0.0
    if dn.f_p > 0:
        f_term = dn.f_p / math.sqrt(fp.nu0)
    data = math.sqrt(1 + a) * dn.fvec_p + f_term + math.sqrt(1 + a) * dn.K_trace * dn.h_p
    M = C_n * (math.sqrt(E2 / a) + (1 + ups) ** (1 / p) / a * data)
    return MainBounds(G=G, E=E, M=M, kappa=kappa, upsilon=ups, C_n=C_n)


def optimal_nu0(p: float, ed: EllipticityData, fp: FreeParameters, dn: DataNorms,
                T: float, variant: str = "standard", *, n: int = 2,
                bounds: tuple[float, float] = (1e-6, 1e3)) -> float:
    """``nu0`` minimising ``G * exp(kappa*T)`` over ``bounds`` (log-scale search)."""
    if dn.f_p == 0:
        return 0.0

    def objective(log_nu: float) -> float:
        fq = FreeParameters(**{**fp.__dict__, "nu0": math.exp(log_nu)})
        kappa = _growth_rate(p, fq.nu0, variant)
        return math.log(_G(p, ed, fq, dn, variant, n)) + kappa * T

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(math.exp(res.x))


# ---------------------------------------------------------------------------
# Local estimates
# ---------------------------------------------------------------------------


def caccioppoli_rhs(ed: EllipticityData, fp: FreeParameters, R: float, r: float,
                    K_trace: float, local_norms: Mapping[str, float]) -> float:
    """Right-hand side of the local energy (Caccioppoli) inequality.

    ``local_norms`` holds the L2 norms over the larger cube ``Q_R``:
    ``eta_u_minus_U_R``, ``f_R``, ``fvec_R`` and ``h_R`` (the last on the
    lateral part ``Sigma_R``).  The inequality it bounds reads

        ess sup ||eta (u-U)||^2(t) + a_lo (1 - nu1 - nu2) ||grad u||^2_{Q_r}  <=  RHS
    """
    _require(0 < r < R, "need 0 < r < R")
    _require((R - r) ** 2 <= 2, "need (R - r)^2 <= 2")
    _require(fp.nu1 + fp.nu2 < 1, "need nu1 + nu2 < 1")
    _require(K_trace > 0, "K_trace must be positive")
    a, A = ed.a_lo, ed.a_hi
    w = local_norms["eta_u_minus_U_R"]
    f = local_norms["f_R"]
    fv = local_norms["fvec_R"]
    h = local_norms["h_R"]

    out = (2 * A * A / a + 2 + fp.nu0 + 1.5 * fp.nu2) * 2 / (R - r) ** 2 * w * w
    out += _quotient(f * f, fp.nu0, "nu0")
    if fv > 0:
        _require(fp.nu1 > 0, "nu1 must be positive when the vector datum is nonzero")
        out += (1 / (a * fp.nu1) + 2) * fv * fv
    if h > 0:
        _require(fp.nu2 > 0, "nu2 must be positive when h is nonzero")
        out += 2 * R * K_trace ** 2 / fp.nu2 * (1 / a + 2) * h * h
    return out


def gehring_B(ed: EllipticityData, nu0: float, n: int, variant: str = "interior") -> float:
    """Reverse Hoelder constant for ``|grad u|^(2n/(n+2))`` on interior or boundary cubes."""
    _require(nu0 >= 0, "nu0 must be >= 0")
    a, A = ed.a_lo, ed.a_hi
    S4 = (4 * poincare_sobolev_constant(n)) ** 2
    if variant == "interior":
        return 2 ** (2 * (2 - 1 / n)) / a * (2 * A * A / a + 2 + nu0) * S4
    if variant == "boundary":
        return 2 ** (5 - 2 / n) / a * (2 * A * A / a + 19 / 8 + nu0) * S4
    raise ParameterError(f"unknown variant {variant!r}")


_UPSILON_TERMS = {
    "general": (True, True),
    "no_phi": (True, False),
    "interior": (False, True),
    "interior_no_phi": (False, False),
}


def gehring_upsilon(B: float, ge: GehringExponents, variant: str = "general") -> float:
    """Gehring constant ``upsilon`` of the higher-integrability conclusion.

    ``variant`` picks which bracket terms are present: the surface term
    (dropped for interior cubes) and the ``phi`` term (dropped when there is
    no time-independent datum).
    """
    try:
        surface, phi = _UPSILON_TERMS[variant]
    except KeyError:
        raise ParameterError(f"unknown variant {variant!r}") from None
    _require(B > 0, "B must be positive")
    ge.check(surface=surface, phi=phi)
    n, p = ge.n, ge.p
    p_dual = p / (p - 1)
    bracket = 2 ** (n + 2) * (2 ** (n + 2) * B) ** (1 / p) + 3 / p_dual
    bracket += 2 ** ((n / ge.m1 + 1 / ge.m2) * ge.r / p)
    if surface:
        bracket += 2 ** (((n - 1) / ge.l1 + 1 / ge.l2) * ge.s / p)
    if phi:
        bracket += 2 ** (n * ge.d / p)
    bracket += 2 ** (2 * n + 3)
    return (4 ** n + 1) * bracket ** p


def epsilon_admissible(delta: float, p: float, upsilon: float) -> EpsilonInterval:
    """Admissible gains ``[0, delta] & [0, (p-1)/(upsilon-1))``."""
    if not upsilon > 1:
        raise ParameterError("upsilon must exceed 1")
    _require(delta > 0 and p > 1, "need delta > 0 and p > 1")
    cap = (p - 1) / (upsilon - 1)
    if delta < cap:
        return EpsilonInterval(delta, True, "delta")
    return EpsilonInterval(cap, False, "upsilon" if cap < delta else "both")


def higher_integrability_rhs(variant: str, ed: EllipticityData, fp: FreeParameters,
                             R: float, eps: float, n: int, upsilon: float,
                             norms: Mapping[str, float], K_trace: float = 1.0,
                             *, radius_cap: Optional[float] = None) -> float:
    """Bound on ``||grad u||_{2+eps, Q_{(1-beta)R}}`` for an interior or boundary cube.

    ``norms``: ``grad_u_R`` is ``||grad u||_{2,Q_R}``; ``fvec``, ``f`` are the
    ``(2+eps)``-norms over ``Q_R``; ``h`` the ``(2+eps)``-norm on ``Sigma_R``
    (boundary variant only).  ``radius_cap`` is the caller's geometric cap
    (time horizon and distance to the boundary); ``1/(4S)`` is always enforced.
    """
    if variant not in ("interior", "boundary"):
        raise ParameterError(f"unknown variant {variant!r}")
    S = poincare_sobolev_constant(n)
    cap = 1 / (4 * S) if radius_cap is None else min(radius_cap, 1 / (4 * S))
    _require(0 < R < cap, f"R must lie in (0, {cap:.6g})")
    _require(eps >= 0, "eps must be >= 0")
    if eps > fp.delta or eps >= gradient_epsilon_cap(n, upsilon):
        raise InfeasibleParameters(
            f"eps={eps:.6g} outside the admissible interval for upsilon={upsilon:.6g}"
        )
    a = ed.a_lo
    q = 2 + eps
    denom = 4 - (n + 2) * (upsilon - 1) * eps
    pre = (2 * n * fp.beta ** (-eps * (n + 2) / 2) / denom) ** (1 / q)
    grad_w = (2 * (4 + eps) / (n * q * R ** (eps * (n + 2) / 2))) ** (1 / q)
    ups_term = upsilon * (4 + eps * (n + 2)) / (2 * n)
    data_w = (2 ** (1 + eps * (n + 1) / 2) * eps / (n * q) + ups_term) ** (1 / q)

    fv, f = norms.get("fvec", 0.0), norms.get("f", 0.0)
    f_part = 0.0
    if variant == "interior":
        data = 2 * math.sqrt(1 + a) / a * fv
        if f > 0:
            f_part = math.sqrt(2 / (a * _nu_pos(fp.nu0))) * f
    else:
        data = 2 * math.sqrt(2 * (1 + a)) / a * fv
        if f > 0:
            f_part = 2 / math.sqrt(a * _nu_pos(fp.nu0)) * f
    total = grad_w * norms.get("grad_u_R", 0.0) + data_w * (data + f_part)
    if variant == "boundary":
        h = norms.get("h", 0.0)
        if h > 0:
            h_w = (2 ** (1 + eps * n / 2) * eps / (n * q * R ** (eps / 2)) + ups_term) ** (1 / q)
            total += h_w * 4 / a * math.sqrt(2 * (1 + a)) * K_trace * h
    return pre * total


def _nu_pos(nu: float) -> float:
    if nu <= 0:
        raise ParameterError("nu0 must be positive when f is nonzero")
    return nu


def covering_constant(n: int, fp: FreeParameters, eps: float, upsilon: float) -> float:
    """Constant assembling local gradient bounds over a cover of ``Omega x (0,T)``."""
    _require(eps >= 0, "eps must be >= 0")
    denom = 4 - (n + 2) * (upsilon - 1) * eps
    if denom <= 0:
        raise InfeasibleParameters(
            f"eps={eps:.6g} too large for upsilon={upsilon:.6g}: 4-(n+2)(upsilon-1)eps <= 0"
        )
    q = 2 + eps
    core = (2 * n * fp.beta ** (-eps * (n + 2) / 2) / denom) ** (1 / q)
    return fp.cover_N * 2 ** fp.cn * fp.cover_r ** (-(n + 2) / 2) * core


# ---------------------------------------------------------------------------
# Linear W^{1,p} theory
# ---------------------------------------------------------------------------


def linear_w1p(p: float, ed: EllipticityData, T: float, dn: DataNorms,
               fp: Optional[FreeParameters] = None, *, n: int = 2,
               h_2: Optional[float] = None) -> W1pBounds:
    """``Lambda_p`` and the perturbative gradient/trace bounds (``ell = 2``).

    ``Lambda_p`` evaluates ``M(1,1) + E(1,1,p)`` with unit forcing norms and a
    zero initial value.  ``h_2`` is ``||h||_{2,Sigma_T}``; it defaults to
    ``dn.h_p``.
    """
    _require(ed.ell == 2, "the linear W^{1,p} bounds need ell = 2")
    fp = fp or FreeParameters()
    _require(fp.nu0 > 0, "Lambda_p is a sup over nonzero f, so nu0 must be positive")
    unit_ed = EllipticityData(1.0, 1.0, 1.0, 1.0, 2.0)
    unit = DataNorms(u0_p=0.0, f_p=1.0, fvec_p=1.0, h_mixed=1.0, h_p=1.0,
                     omega_vol=dn.omega_vol, K_trace=dn.K_trace)
    mb = theorem_main_bounds(p, unit_ed, fp, unit, T, n=n, dn2=unit)
    lam = mb.M + mb.E

    ga = 1 - lam * (1 - ed.a_lo)
    gb = 1 - lam * (1 - ed.b_lo)
    if ga <= 0 or gb <= 0:
        raise InfeasibleParameters(
            f"perturbation too large: 1-Lambda_p(1-a_lo)={ga:.4g}, 1-Lambda_p(1-b_lo)={gb:.4g}"
        )
    s = dn.fvec_p + dn.f_p + (dn.h_p if h_2 is None else h_2)
    return W1pBounds(Lambda_p=lam, grad_bound=lam * s / ga, trace_bound=lam * s / gb)


def marcinkiewicz_exponent(p: float, q: float, r: float) -> float:
    """``alpha`` with ``1/p = alpha/q + (1-alpha)/r``."""
    _require(1 <= q < p < r < math.inf, "need 1 <= q < p < r < inf")
    return (1 / p - 1 / r) / (1 / q - 1 / r)


def marcinkiewicz_constant(p: float, q: float, r: float, T1: float, T2: float) -> float:
    """Operator-norm bound on ``L^p`` from weak-type ``(q,q)`` and ``(r,r)`` bounds."""
    alpha = marcinkiewicz_exponent(p, q, r)
    _require(T1 > 0 and T2 > 0, "T1, T2 must be positive")
    return 2 * (p / (p - q) + p / (r - p)) ** (1 / p) * T1 ** alpha * T2 ** (1 - alpha)


# ---------------------------------------------------------------------------
# Steady state
# ---------------------------------------------------------------------------


def steady_upsilon(ed: EllipticityData, nu0: float, n: int) -> float:
    """Gehring constant of the steady problem."""
    a, A = ed.a_lo, ed.a_hi
    return (8 ** n + 1) * 2 ** (6 * n) * (math.sqrt((4 * A / a) ** 2 + (4 + nu0) / a) + 1) ** 2


def steady_state_bounds(ed: EllipticityData, fp: FreeParameters, n: int,
                        R0_cover: Mapping[str, float], eps: float,
                        norms: Mapping[str, float], K_trace: float = 1.0) -> SteadyBounds:
    """Gehring constant and the ``W^{1,2+eps}`` bound of the steady problem.

    ``norms``: ``grad_u_2`` = ``||grad u||_2``; ``F_norm``/``H_norm`` are the
    ``(2+eps)``-norms of the combined data fields.  Those fields are built
    pointwise as ``F = sqrt((F_mult |fvec|)^2 + (f_mult |f|)^2)`` and
    ``H = H_mult |h|``.
    """
    a = ed.a_lo
    nu0 = fp.nu0
    ups = steady_upsilon(ed, nu0, n)
    denom = 4 - (n + 2) * (ups - 1) * eps
    if not (0 < eps < 1 / (ups - 1)) or denom <= 0:
        raise InfeasibleParameters(
            f"eps={eps:.6g} must lie in (0, {1 / (ups - 1):.6g}) with a positive denominator"
        )
    N = R0_cover["N"]
    r_lo = R0_cover["r_lo"]
    _require(N >= 1 and r_lo > 0, "cover needs N >= 1 and r_lo > 0")
    q = 2 + eps
    F_mult = math.sqrt((2 / a + 2) / a)
    f_mult = 1 / math.sqrt(a * nu0) if nu0 > 0 else 0.0
    H_mult = 2 * math.sqrt(2 + 2 ** (-1 / n) * a) / a * K_trace

    g2 = norms.get("grad_u_2", 0.0)
    Fn = norms.get("F_norm", 0.0)
    Hn = norms.get("H_norm", 0.0)
    growth = ups * (4 + (n + 2) * eps)
    bracket = (8 / r_lo ** n) ** (eps / 2) * 4 * g2 ** q
    bracket += (2 ** (2 + 1.5 * eps) + growth) * Fn ** q
    bracket += (4 + growth) * Hn ** q
    rhs = 2 ** (n * (1 + eps / 2)) * N / denom * bracket
    return SteadyBounds(upsilon_s=ups, rhs_cotam1=rhs, F_mult=F_mult, H_mult=H_mult,
                        f_mult=f_mult)


def contraction_data(ed: EllipticityData, Mp: float, p: float, n: int) -> ContractionData:
    """Step size, contraction factor and ``W^{1,p}`` multiplier of the fixed-point scheme.

    Raises ``InfeasibleParameters`` when ``a_hi / Mp <= kappa_c``.
    """
    _require(ed.ell == 2, "the contraction argument needs ell = 2")
    _require(Mp > 0, "Mp must be positive")
    a, A, b = ed.a_lo, ed.a_hi, ed.b_lo
    t = a / (A * A)
    kappa = max(math.sqrt(max(A * A - a * a, 0.0)), abs(A - a * b / A))
    q = Mp * max(math.sqrt(max(1 - (a / A) ** 2, 0.0)), abs(1 - a * b / (A * A)))
    if not A / Mp > kappa:
        raise InfeasibleParameters(
            f"contraction infeasible: a_hi/Mp = {A / Mp:.6g} <= kappa = {kappa:.6g}"
        )
    el2 = Mp * a / (A - kappa * Mp)
    necas = 2 ** (0.5 - 1 / p) if n == 2 else None
    return ContractionData(t=t, kappa_c=kappa, q_factor=q, el2_mult=el2, necas_c=necas)
