"""Closed-form constants, parameter thresholds and the region curve qbar(lam, N).

Everything Gamma-based routes through the single `gammafn` entry point so the
whole module can be validated at once against a high-precision oracle.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .radial_core import radial_integral, sphere_area, _kernel_mean

# single Gamma entry point for every closed form below; the C library routine
# is a Lanczos-class implementation with relative error well under 1e-13
gammafn = math.gamma


class ParameterRangeError(ValueError):
    """Parameters outside the regime where the requested formula is defined."""


def alpha_exponent(dim: int, lam: float, q: float) -> float:
    """alpha = (2N - q(2N + lam)) / (N (1 - q)); rejects q = 1."""
    if q == 1.0:
        raise ParameterRangeError("q = 1 is the logarithmic endpoint; see regimes_q_ge_1")
    return (2 * dim - q * (2 * dim + lam)) / (dim * (1 - q))


@dataclass(frozen=True)
class Thresholds:
    """Parameter thresholds at fixed (N, lam); q_concentration only for N >= 3."""

    q_admissible: float
    q_conformal: float
    q_concentration: Optional[float]
    q_mccann: float
    q_bar: float
    q_explicit_bound: float


def thresholds(dim: int, lam: float) -> Thresholds:
    return Thresholds(
        q_admissible=dim / (dim + lam),
        q_conformal=2 * dim / (2 * dim + lam),
        q_concentration=(1 - 2 / dim) if dim >= 3 else None,
        q_mccann=1 - 1 / dim,
        q_bar=qbar_curve(dim, lam),
        q_explicit_bound=explicit_bound_curve(dim, lam),
    )


def conformal_constant(dim: int, lam: float) -> float:
    """Optimal constant at the conformal exponent q = 2N/(2N + lam):

    pi^{-lam/2} Gamma(N/2 + lam/2)/Gamma(N + lam/2) (Gamma(N)/Gamma(N/2))^{1 + lam/N},
    attained at rho = (1 + |x|^2)^{-N/q}.
    """
    N = dim
    return (
        math.pi ** (-lam / 2)
        * gammafn(N / 2 + lam / 2)
        / gammafn(N + lam / 2)
        * (gammafn(N) / gammafn(N / 2)) ** (1 + lam / N)
    )


def lambda2_constant(dim: int, q: float) -> float:
    """Optimal constant at lam = 2 for N/(N+2) < q < 1, attained at
    rho = (1 + |x|^2)^{-1/(1-q)}:

    C = N(1-q)/(pi q) ((N+2)q - N)/(2q))^{(2 - N(1-q))/(N(1-q))}
        (Gamma(1/(1-q)) / Gamma(1/(1-q) - N/2))^{2/N}.
    """
    N = dim
    if not N / (N + 2) < q < 1:
        raise ParameterRangeError(f"lam=2 constant requires {N/(N+2)} < q < 1, got q={q}")
    p = 1 / (1 - q)
    return (
        N * (1 - q) / (math.pi * q)
        * (((N + 2) * q - N) / (2 * q)) ** ((2 - N * (1 - q)) / (N * (1 - q)))
        * (gammafn(p) / gammafn(p - N / 2)) ** (2 / N)
    )


def closed_form_constant(dim: int, lam: float, q: float, rel_tol: float = 1e-12) -> Optional[float]:
    """The sharp constant when one is known in closed form, else None.

    Two families are covered: the conformal line q = 2N/(2N + lam) and the
    lam = 2 segment; where they intersect the two formulas agree.
    """
    conformal_q = 2 * dim / (2 * dim + lam)
    if math.isclose(q, conformal_q, rel_tol=rel_tol):
        return conformal_constant(dim, lam)
    if math.isclose(lam, 2.0, rel_tol=rel_tol) and dim / (dim + 2) < q < 1:
        return lambda2_constant(dim, q)
    return None


class CarlsonLevin(NamedTuple):
    constant: float
    optimizer: Callable[[np.ndarray], np.ndarray]


def carlson_levin(dim: int, lam: float, q: float) -> CarlsonLevin:
    """Sharp constant c_{N,lam,q} of the interpolation bound

    (int rho)^{1 - N(1-q)/(lam q)} (int |x|^lam rho)^{N(1-q)/(lam q)}
        >= c_{N,lam,q} (int rho^q)^{1/q},

    with equality exactly at rho = (1 + |x|^lam)^{-1/(1-q)} (up to translation,
    dilation and constant multiples); the optimizer is returned as an analytic
    radial factory.
    """
    N = dim
    if not N / (N + lam) < q < 1:
        raise ParameterRangeError(
            f"Carlson-Levin requires N/(N+lam) < q < 1; got q={q}, bound={N/(N+lam)}"
        )
    p = 1 / (1 - q)
    c = (
        (1 / lam)
        * (((N + lam) * q - N) / q) ** (1 / q)
        * (N * (1 - q) / ((N + lam) * q - N)) ** ((N / lam) * (1 - q) / q)
        * (
            gammafn(N / 2) * gammafn(p)
            / (2 * math.pi ** (N / 2) * gammafn(p - N / lam) * gammafn(N / lam))
        ) ** ((1 - q) / q)
    )

    def optimizer(r):
        return (1.0 + np.asarray(r, dtype=float) ** lam) ** (-p)

    return CarlsonLevin(constant=c, optimizer=optimizer)


def carlson_levin_quotient(
    fn: Callable[[np.ndarray], np.ndarray], dim: int, lam: float, q: float
) -> float:
    """(int rho)^{1-theta} (int |x|^lam rho)^{theta} / (int rho^q)^{1/q},
    theta = N(1-q)/(lam q), for an analytic radial rho, by adaptive quadrature."""
    theta = dim * (1 - q) / (lam * q)
    mass = radial_integral(lambda r: float(fn(r)), dim)
    mom = radial_integral(lambda r: float(fn(r)), dim, power=lam)
    lqi = radial_integral(lambda r: float(fn(r)) ** q, dim)
    return mass ** (1 - theta) * mom**theta / lqi ** (1 / q)


# ---------------------------------------------------------------------------
# ball ratio F(R, S), its sup A_{N, lam}, and the region curve qbar
# ---------------------------------------------------------------------------

_GL_NODES = 160


def ratio_F(dim: int, lam: float, R: float, S: float) -> float:
    """F(R, S) = iint_{B_R x B_S} |x-y|^lam / (|B_R| int_{B_S} |x|^lam
    + |B_S| int_{B_R} |y|^lam); symmetric and scale invariant."""
    if not (R > 0 and S > 0):
        raise ParameterRangeError("R, S must be positive")
    x, wx = np.polynomial.legendre.leggauss(_GL_NODES)
    r = R * (x + 1) / 2
    wr = R * wx / 2
    s = S * (x + 1) / 2
    ws = S * wx / 2
    km = _kernel_mean(dim, lam, r[:, None], s[None, :])
    area = sphere_area(dim)
    num = area**2 * float((wr * r ** (dim - 1)) @ km @ (ws * s ** (dim - 1)))
    ball = lambda rad: area * rad**dim / dim
    mom = lambda rad: area * rad ** (dim + lam) / (dim + lam)
    return num / (ball(R) * mom(S) + ball(S) * mom(R))


class SupRatio(NamedTuple):
    value: float
    argmax_t: float
    evaluations: int
    bracket_width: float


def sup_ratio_A(dim: int, lam: float, full_output: bool = False):
    """A_{N,lam} = sup_{R,S} F(R,S), reduced by scale invariance to
    t = S/R in (0, 1] and located by golden-section search.

    The t -> 0 endpoint limit is 1 analytically (only the |B_S| int_{B_R}
    term survives in the denominator); the search reports its diagnostics
    since only bounds on the sup, not its location, are known a priori.
    """
    res = _sup_ratio_cached(dim, float(lam))
    return res if full_output else res.value


@functools.lru_cache(maxsize=512)
def _sup_ratio_cached(dim: int, lam: float) -> "SupRatio":
    if math.isclose(lam, 2.0, rel_tol=1e-12):
        # F == 1 identically at lam = 2 by expanding the square
        return SupRatio(1.0, 1.0, 0, 0.0)
    f = lambda t: ratio_F(dim, lam, 1.0, t)
    invphi = (math.sqrt(5.0) - 1) / 2
    a, b = 1e-4, 1.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    neval = 2
    while b - a > 1e-10:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        neval += 1
    t_star = (a + b) / 2
    # endpoint t -> 0 gives exactly 1; compare interior optimum and t = 1
    value, arg = max(((1.0, 0.0), (f(1.0), 1.0), (max(fc, fd), t_star)))
    neval += 1
    return SupRatio(value=value, argmax_t=arg, evaluations=neval, bracket_width=b - a)


def B_lower_bound(dim: int, lam: float) -> float:
    """B_{N,lam} = (N+lam)/(2N) (2N/(N+2))^{lam/2}; monotone increasing in lam
    with B_{N,2} = 1, and A_{N,lam} >= B_{N,lam}."""
    return (dim + lam) / (2 * dim) * (2 * dim / (dim + 2)) ** (lam / 2)


def qbar_curve(dim: int, lam: float) -> float:
    """qbar = 2N(1 - 1/(2A)) / (2N(1 - 1/(2A)) + lam) with A = A_{N,lam};
    above this curve the relaxed minimizer carries no Dirac mass.  At lam = 2
    it coincides with N/(N + lam)."""
    A = sup_ratio_A(dim, lam)
    g = 2 * dim * (1 - 1 / (2 * A))
    return g / (g + lam)


def explicit_bound_curve(dim: int, lam: float) -> float:
    """q = 2N(1 - 2^{-lam}) / (2N(1 - 2^{-lam}) + lam), the elementary
    kernel-bound version of qbar (an upper bound for it when lam >= 1)."""
    g = 2 * dim * (1 - 2.0 ** (-lam))
    return g / (g + lam)


def kappa_star(dim: int, lam: float, q: float) -> float:
    """kappa_star = (lam - N(1-q))/((1-q) lam) (2N)^{N(1-q)/(lam - N(1-q))},
    the prefactor linking the free-energy infimum to the sharp constant."""
    N = dim
    if not lam > N * (1 - q):
        raise ParameterRangeError("kappa_star requires lam > N(1-q), i.e. q > N/(N+lam) margin")
    expo = N * (1 - q) / (lam - N * (1 - q))
    return (lam - N * (1 - q)) / ((1 - q) * lam) * (2 * N) ** expo


def uniqueness_region(dim: int, lam: float, q: float) -> bool:
    """True where the measure-valued minimizer is known to be unique up to
    translation: q > N/(N+lam) and ((q >= 1 - 1/N and lam >= 1) or 2 <= lam <= 4)."""
    if not q > dim / (dim + lam):
        return False
    return (q >= 1 - 1 / dim and lam >= 1) or (2 <= lam <= 4)
