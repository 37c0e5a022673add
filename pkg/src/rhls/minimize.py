"""Minimization of the relaxed interaction quotient Q[rho, M].

The scheme is a damped fixed-point iteration on the stationarity equation of
Q with respect to rho,

    2 (W(x)) / (I + 2 M J) - alpha / mass - (2 - alpha) rho(x)^{q-1} / int rho^q = 0,
    W(x) = int |x-y|^lam rho(y) dy + M |x|^lam,

inverted for rho, together with the exact inner minimization over the Dirac
mass M (optimal_dirac_mass).  Two gauge freedoms (amplitude and dilation)
leave Q invariant; the iteration pins them by renormalizing total mass to 1
and holding int rho^q at its initial value through an exact-dilation
resampling step.  Reports are emitted in the gauge where the dilation is
free-energy optimal, so the virial identity I + 2 M J = 2 N int rho^q holds
at the reported measure.

No convergence proof is claimed for the scheme; the damping schedule (halve
on an increase of Q, restore after three consecutive decreases) is purely a
practical stabilizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import betainc

from .constants import ParameterRangeError, carlson_levin
from .radial_core import (
    DegenerateProfileError,
    Params,
    RadialGrid,
    RadialProfile,
    RelaxedMeasure,
    kernel_matrix,
    quotient,
    sphere_area,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DEFAULT_DAMPING = 0.5
CLASSIFY_DELTA = 1e-6

CASE1 = "case1_bounded"
CASE2 = "case2_unbounded_no_dirac"
CASE3 = "case3_dirac"
BOUNDARY = "boundary_undetermined"


@dataclass
class MinimizerReport:
    """Outcome of a relaxed-quotient minimization."""

    estimate_C: float
    measure: RelaxedMeasure
    classification: str
    virial_residual: float
    origin_exponent: float
    iterations: int
    converged: bool
    predicted_rho0: Optional[float] = None
    predicted_dirac: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "estimate_C": self.estimate_C,
            "dirac_mass": self.measure.dirac_mass,
            "classification": self.classification,
            "virial_residual": self.virial_residual,
            "origin_exponent": self.origin_exponent,
            "iterations": self.iterations,
            "converged": self.converged,
            "predicted_rho0": self.predicted_rho0,
            "predicted_dirac": self.predicted_dirac,
            **{f"diag_{k}": v for k, v in self.diagnostics.items()},
        }


def optimal_dirac_mass(A: float, B: float, alpha: float) -> float:
    """Minimizer of M -> (A + M)/(B + M)^alpha on [0, inf).

    For 0 < alpha < 1 the minimum sits at 0 when alpha A <= B and at
    (alpha A - B)/(1 - alpha) otherwise.  For alpha <= 0 adding mass only
    raises the quotient, so the optimum is 0 (extension used by the scheme).
    """
    if not (A > 0 and B > 0):
        raise ValueError("A and B must be positive")
    if alpha <= 0:
        return 0.0
    if alpha >= 1:
        raise ParameterRangeError("optimal_dirac_mass requires alpha < 1")
    if alpha * A <= B:
        return 0.0
    return (alpha * A - B) / (1 - alpha)


# ---------------------------------------------------------------------------
# internal state machinery
# ---------------------------------------------------------------------------


def _dilate_resample(values: np.ndarray, log_centers: np.ndarray, ell: float, dim: int) -> np.ndarray:
    """rho -> ell^{-N} rho(./ell) resampled onto the same grid.

    Log-log linear interpolation; tails extended with the edge log-log slope.
    Exact at ell = 1, which is the regime at a converged fixed point.
    """
    if ell == 1.0:
        return values
    lf = np.log(np.maximum(values, 1e-300))
    x = log_centers - math.log(ell)
    out = np.interp(x, log_centers, lf)
    if ell < 1.0:
        slope = (lf[-1] - lf[-2]) / (log_centers[-1] - log_centers[-2])
        m = x > log_centers[-1]
        out[m] = lf[-1] + slope * (x[m] - log_centers[-1])
    else:
        slope = (lf[1] - lf[0]) / (log_centers[1] - log_centers[0])
        m = x < log_centers[0]
        out[m] = lf[0] + slope * (x[m] - log_centers[0])
    return np.exp(out) * ell ** (-dim)


class _State:
    """Mutable iteration scratch bound to one grid and one kernel matrix."""

    def __init__(self, grid: RadialGrid, p: Params):
        self.grid = grid
        self.p = p
        self.kmat = kernel_matrix(grid, p.lam)
        self.w = grid.vol_weights
        self.clam = grid.centers**p.lam
        self.logc = np.log(grid.centers)

    def functionals(self, f: np.ndarray, M: float):
        u = self.w * f
        mass = float(u.sum()) + M
        J = float(self.clam @ u)
        lq = float(self.w @ np.power(f, self.p.q))
        Kv = self.kmat @ u
        I = float(u @ Kv)
        return mass, J, lq, Kv, I

    def el_step(self, f: np.ndarray, M: float, damping: float):
        """One damped inversion of the stationarity equation plus the exact
        M update; renormalizes total mass to 1.  Returns (f, M, pressure)
        where pressure flags a nonpositive bracket (concentration pressure).
        """
        p = self.p
        alpha = p.alpha
        pexp = 1 / (1 - p.q)
        mass, J, lq, Kv, I = self.functionals(f, M)
        W = Kv + M * self.clam
        denom = I + 2 * M * J
        g = 2 * W / denom - alpha / mass
        pressure = bool(np.any(g <= 0))
        g = np.maximum(g, 1e-300)
        with np.errstate(over="ignore"):
            fn = np.float_power(lq / (2 - alpha) * g, -pexp)
        cap = 10.0 * float(f.max())
        fn = np.minimum(fn, cap)
        f2 = (1 - damping) * f + damping * fn
        A = I / (2 * J)
        B = float(self.w @ f2)
        M2 = optimal_dirac_mass(A, B, alpha) if 0 < alpha < 1 else 0.0
        total = B + M2
        return f2 / total, M2 / total, pressure

    def pin_dilation(self, f: np.ndarray, lq_target: float) -> np.ndarray:
        lq = float(self.w @ np.power(f, self.p.q))
        ell = (lq_target / lq) ** (1 / (self.grid.dim * (1 - self.p.q)))
        return _dilate_resample(f, self.logc, ell, self.grid.dim)

    def quotient(self, f: np.ndarray, M: float) -> float:
        mass, J, lq, _, I = self.functionals(f, M)
        alpha = self.p.alpha
        return (I + 2 * M * J) / (mass**alpha * lq ** ((2 - alpha) / self.p.q))


def el_iterate(m: RelaxedMeasure, p: Params, damping: float = DEFAULT_DAMPING) -> RelaxedMeasure:
    """One damped fixed-point step of the stationarity equation.

    The output has total mass 1 (renormalization contract); the inner Dirac
    optimization runs only in the 0 < alpha < 1 window where a positive
    optimum is possible.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    state = _State(m.profile.grid, p)
    f = np.maximum(m.profile.values, 1e-300)
    f2, M2, _ = state.el_step(f, m.dirac_mass, damping)
    return RelaxedMeasure(profile=m.profile.with_values(f2), dirac_mass=M2)


# ---------------------------------------------------------------------------
# grid sizing
# ---------------------------------------------------------------------------


def suggest_r_max(
    p: Params,
    mass_tail_tol: float = 1e-8,
    moment_tail_tol: float = 3e-5,
    safety: float = 3.0,
) -> float:
    """Smallest radius at which the mass and lam-moment tails of the
    interpolation optimizer (1 + r^lam)^{-1/(1-q)} fall below their
    tolerances, times a safety factor.  Tail fractions are incomplete-Beta
    values of the substitution u = r^lam/(1 + r^lam).

    The moment tolerance is looser than the mass tolerance: since the inner
    grid cutoff scales with r_max (r_min = r_max * 1e-6), chasing a tiny
    moment tail on slowly decaying profiles would starve the core of
    resolution, costing far more accuracy than the tail it saves.
    """
    pexp = 1 / (1 - p.q)
    pairs = [
        (p.dim / p.lam, pexp - p.dim / p.lam, mass_tail_tol),
        ((p.dim + p.lam) / p.lam, pexp - (p.dim + p.lam) / p.lam, moment_tail_tol),
    ]
    for _, b, _tol in pairs:
        if b <= 0:
            raise ParameterRangeError("q outside the admissible range: tails not integrable")

    def tail_ok(R: float) -> bool:
        u = R**p.lam / (1 + R**p.lam)
        return all(1.0 - betainc(a, b, u) <= tol for a, b, tol in pairs)

    lo, hi = 0.3, 8.0  # log10 bracket
    if tail_ok(10.0**lo):
        return max(20.0, safety * 10.0**lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if tail_ok(10.0**mid):
            hi = mid
        else:
            lo = mid
    return min(safety * 10.0**hi, 3e5)


def default_grid(p: Params, cells: int = 2048, r_max: Optional[float] = None) -> RadialGrid:
    return RadialGrid.make(p.dim, r_max if r_max is not None else suggest_r_max(p), cells=cells)


# ---------------------------------------------------------------------------
# the minimizer
# ---------------------------------------------------------------------------


def minimize_relaxed(
    p: Params,
    init: Optional[RelaxedMeasure] = None,
    cells: int = 2048,
    r_max: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = DEFAULT_DAMPING,
    second_run: bool = True,
) -> MinimizerReport:
    """Minimize Q[rho, M] over nonnegative radial densities plus a Dirac mass.

    Requires N/(N+lam) < q < 1; at or below the lower endpoint the inequality
    degenerates (C = 0) and the call is rejected.  The default initialization
    is the interpolation optimizer shape; for 0 < alpha < 1 a second run
    starting from Dirac mass 0.5 guards against basin dependence and the
    lower quotient wins.
    """
    if not 0 < p.q < 1:
        raise ParameterRangeError("minimize_relaxed requires q in (0, 1)")
    if p.q <= p.q_admissible:
        raise ParameterRangeError(
            f"inequality degenerate: C = 0 for q <= N/(N+lam) = {p.q_admissible}"
        )
    if init is not None:
        grid = init.profile.grid
    else:
        grid = default_grid(p, cells=cells, r_max=r_max)
    state = _State(grid, p)

    runs = [_run_fixed_point(state, p, init, 0.0, tol, max_iter, damping)]
    if second_run and init is None and 0 < p.alpha < 1:
        runs.append(_run_fixed_point(state, p, None, 0.5, tol, max_iter, damping))
    best = min(runs, key=lambda r: r["Q"])
    return _build_report(state, p, best, n_runs=len(runs))


def _run_fixed_point(state, p, init, init_dirac, tol, max_iter, damping0):
    grid = state.grid
    if init is not None:
        f = np.maximum(np.asarray(init.profile.values, dtype=float), 1e-300)
        M = init.dirac_mass
    else:
        f = carlson_levin(p.dim, p.lam, p.q).optimizer(grid.centers)
        M = init_dirac
    total = float(grid.vol_weights @ f) + M
    f, M = f / total, M / total
    lq_pin = float(grid.vol_weights @ np.power(f, p.q))

    damping = damping0
    q_prev = state.quotient(f, M)
    decreases = 0
    pressure_events = 0
    relch = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f2, M2, pressure = state.el_step(f, M, damping)
        pressure_events += int(pressure)
        f2 = state.pin_dilation(f2, lq_pin)
        q_now = state.quotient(f2, M2)
        if q_now > q_prev * (1 + 1e-14):
            damping = max(damping / 2, 1e-3)
            decreases = 0
        else:
            decreases += 1
            if decreases >= 3:
                damping = damping0
        relch = float(np.max(np.abs(f2 - f)) / np.max(f))
        f, M, q_prev = f2, M2, q_now
        if relch < tol:
            converged = True
            break
    return {
        "f": f,
        "M": M,
        "Q": q_prev,
        "iterations": it,
        "converged": converged,
        "relch": relch,
        "damping": damping,
        "pressure_events": pressure_events,
        "init_dirac": init_dirac,
    }


def _build_report(state, p, run, n_runs):
    grid = state.grid
    f, M = run["f"], run["M"]
    mass, J, lq, _, I = state.functionals(f, M)
    # report in the gauge where the dilation is free-energy optimal; the
    # dilation is applied exactly by scaling the grid, so the virial identity
    # holds at the reported measure up to roundoff
    ell = (2 * p.dim * lq / (I + 2 * M * J)) ** (1 / (p.lam - p.dim * (1 - p.q)))
    profile = RadialProfile(grid=grid, values=f).dilate(ell)
    measure = RelaxedMeasure(profile=profile, dirac_mass=M)
    est = quotient(measure, p)
    mom_mass = measure.total_mass()
    from .radial_core import moments, relaxed_interaction

    mm = moments(measure, p)
    vir = (relaxed_interaction(measure, p.lam) - 2 * p.dim * mm.lq_integral) / (
        2 * p.dim * mm.lq_integral
    )
    classification, pred_rho0, pred_dirac = classify_minimizer(measure, p)
    try:
        origin_slope = fit_origin_exponent(profile)
    except ValueError:
        origin_slope = math.nan
    return MinimizerReport(
        estimate_C=est,
        measure=measure,
        classification=classification,
        virial_residual=vir,
        origin_exponent=origin_slope,
        iterations=run["iterations"],
        converged=run["converged"],
        predicted_rho0=pred_rho0,
        predicted_dirac=pred_dirac,
        diagnostics={
            "relch": run["relch"],
            "damping_final": run["damping"],
            "pressure_events": run["pressure_events"],
            "report_dilation": ell,
            "r_max": grid.r_max,
            "cells": grid.cells,
            "runs": n_runs,
            "total_mass": mom_mass,
        },
    )


# ---------------------------------------------------------------------------
# classification and probes
# ---------------------------------------------------------------------------


def classify_minimizer(m: RelaxedMeasure, p: Params, delta: float = CLASSIFY_DELTA):
    """Trichotomy test on T = int rho - (alpha/2) I/J, normalized to the scale
    of its two terms.

    T > delta: no Dirac, bounded profile, with the predicted central value
    rho(0) = ((2-alpha) I B / (int rho^q (2 J B - alpha I)))^{1/(1-q)};
    T < -delta: Dirac mass predicted at (alpha I - 2 J B)/(2 (1-alpha) J);
    |T| <= delta: boundary band, reported as the unbounded/no-Dirac case when
    the profile visibly blows up at the origin and as undetermined otherwise.
    For alpha <= 0 the test quantity is automatically positive.
    """
    from .radial_core import interaction_energy, moments

    alpha = p.alpha
    mm = moments(m, p)
    I = interaction_energy(m.profile, p.lam)
    J = mm.lambda_moment
    B = mm.mass - m.dirac_mass  # int rho alone
    A = I / (2 * J)
    scale = max(B, abs(alpha) * A, 1e-300)
    t = (B - alpha * A) / scale
    pred_rho0 = None
    pred_dirac = None
    if t > delta:
        label = CASE1
        pref = (2 - alpha) * I * B / (mm.lq_integral * (2 * J * B - alpha * I))
        pred_rho0 = pref ** (1 / (1 - p.q))
    elif t < -delta:
        label = CASE3
        pred_dirac = (alpha * I - 2 * J * B) / (2 * (1 - alpha) * J)
    else:
        try:
            slope = fit_origin_exponent(m.profile)
        except ValueError:
            slope = 0.0
        label = CASE2 if slope < -1 / (1 - p.q) else BOUNDARY
    return label, pred_rho0, pred_dirac


def fit_origin_exponent(f: RadialProfile, decades: float = 1.0) -> float:
    """Least-squares slope of log rho against log r over the innermost decade
    of cells with positive radius and positive value."""
    r = f.grid.centers
    v = f.values
    mask = (r > 0) & (v > 0) & (r <= r[0] * 10.0**decades)
    if mask.sum() < 8:
        raise ValueError("fewer than 8 usable cells near the origin")
    x = np.log(r[mask])
    y = np.log(v[mask])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class DiracProbeResult:
    epsilons: np.ndarray
    delta_q: np.ndarray          # at the probe tau
    gain: np.ndarray             # fitted c1 eps^{N(1-q)} component (per eps)
    cost: np.ndarray             # fitted c2 eps^{min(2,lam)} component (per eps)
    gain_exponent: float
    cost_exponent: float
    lowers_Q: bool
    predicts_no_dirac: bool


def dirac_exchange_probe(
    m: RelaxedMeasure,
    p: Params,
    sigma: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    epsilons: Optional[Sequence[float]] = None,
    tau: Optional[float] = None,
) -> DiracProbeResult:
    """Exchange Dirac mass tau for a concentrating bump eps^{-N} tau sigma(./eps)
    and track Q along the family.

    The leading orders are dQ ~= -c1 eps^{N(1-q)} tau^q + c2 eps^{min(2,lam)} tau;
    the two components are separated by evaluating at tau and tau/2 (a 2x2
    solve per eps) and their exponents fitted by log-log least squares.  When
    min(2, lam) > N(1-q), a strictly negative dQ at small eps is the numerical
    footprint of the no-Dirac conclusion for minimizers.
    """
    M = m.dirac_mass
    if not M > 0:
        raise ParameterRangeError("probe requires a positive Dirac mass")
    if tau is None:
        tau = 0.5 * M
    if tau > M or tau <= 0:
        raise ParameterRangeError("tau must lie in (0, M]")
    if sigma is None:
        sigma = lambda r: np.exp(-np.asarray(r) ** 2 / 2) / (2 * math.pi) ** (p.dim / 2)
    if epsilons is None:
        epsilons = np.geomspace(1e-3, 1e-1, 9)
    epsilons = np.asarray(sorted(epsilons), dtype=float)

    grid = m.profile.grid
    q0 = quotient(m, p)
    taus = (tau, tau / 2)

    def q_at(eps: float, t: float) -> float:
        bump = eps ** (-p.dim) * t * sigma(grid.centers / eps)
        pert = RelaxedMeasure(
            profile=m.profile.with_values(m.profile.values + bump),
            dirac_mass=M - t,
        )
        return quotient(pert, p)

    dq = np.array([[q_at(e, t) - q0 for t in taus] for e in epsilons])
    # per-eps solve: dq = -g t^q + h t for t in {tau, tau/2}
    t1, t2 = taus
    det = -(t1**p.q) * t2 + (t2**p.q) * t1
    gain = (dq[:, 0] * t2 - dq[:, 1] * t1) / det
    cost = (dq[:, 0] * t2**p.q - dq[:, 1] * t1**p.q) / det

    def _slope(y: np.ndarray) -> float:
        ok = y > 0
        if ok.sum() < 3:
            return math.nan
        s, _ = np.polyfit(np.log(epsilons[ok]), np.log(y[ok]), 1)
        return float(s)

    beta = min(2.0, p.lam)
    return DiracProbeResult(
        epsilons=epsilons,
        delta_q=dq[:, 0],
        gain=gain,
        cost=cost,
        gain_exponent=_slope(gain),
        cost_exponent=_slope(cost),
        lowers_Q=bool(dq[0, 0] < 0),
        predicts_no_dirac=beta > p.dim * (1 - p.q),
    )


def degenerate_quotient_curve(
    dim: int, lam: float, R_list: Sequence[float], cells: int = 4096
) -> np.ndarray:
    """J(rho_R)/(int rho_R^q)^{1/q} at the endpoint q = N/(N+lam) for the
    witness rho_R = |x|^{-(N+lam)} 1_{1 <= |x| <= R}.

    The values equal (|S^{N-1}| log R)^{-lam/N} and decay to zero, which is
    how the optimal constant degenerates at the endpoint.
    """
    q = dim / (dim + lam)
    area = sphere_area(dim)
    out = []
    for R in R_list:
        if R <= 1:
            raise ParameterRangeError("R must exceed 1")
        edges = np.geomspace(1.0, R, cells + 1)
        lo, hi = edges[:-1], edges[1:]
        w = area * (hi**dim - lo**dim) / dim
        c = ((hi ** (dim + 1) - lo ** (dim + 1)) / (dim + 1)) / ((hi**dim - lo**dim) / dim)
        f = c ** (-(dim + lam))
        J = float((w * c**lam) @ f)
        lq = float(w @ f**q)
        out.append(J / lq ** (1 / q))
    return np.asarray(out)
