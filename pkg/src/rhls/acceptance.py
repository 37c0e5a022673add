"""Acceptance checks: every numbered criterion as a callable returning a
pass/fail line, grouped into named suites for the `verify` subcommand.

Each check pins its tolerance here; nothing is deferred to later calibration.
Randomized checks take a seed and are deterministic given it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import constants as cst
from .energy import (
    attraction_part,
    coercivity_constant,
    coercivity_stationarity_residual,
    moment_bound_check,
)
from .flow import RunOptions, flow_energy, run, toy_critical_mass, toy_mass, toy_run
from .minimize import degenerate_quotient_curve, minimize_relaxed
from .radial_core import (
    Params,
    RadialGrid,
    RadialProfile,
    RelaxedMeasure,
    interaction_energy,
    kernel_matrix,
    moments,
    quotient,
    radial_integral,
    sphere_area,
)
from .regimes_q_ge_1 import PMParams, log_deficit, pm_minimize, pm_quotient


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name} ({self.seconds:.1f}s): {self.detail}"


def _check(name: str, fn: Callable[[], tuple]) -> CheckResult:
    t0 = time.time()
    try:
        passed, detail = fn()
    except Exception as exc:
        passed, detail = False, f"exception {type(exc).__name__}: {exc}"
    return CheckResult(name=name, passed=bool(passed), detail=detail, seconds=time.time() - t0)


# ---------------------------------------------------------------------------
# 1. closed-form consistency
# ---------------------------------------------------------------------------


def check_closed_forms(ctx: dict) -> CheckResult:
    def body():
        target = 1.0 / (2 * math.pi**2)
        conf = cst.conformal_constant(1, 2.0)
        lam2 = cst.lambda2_constant(1, 0.5)
        c = cst.carlson_levin(1, 2.0, 0.5).constant
        errs = [
            abs(conf / target - 1),
            abs(lam2 / target - 1),
            abs(c * 2 * math.pi - 1),
            abs(2 * c**2 / target - 1),
        ]
        ok = max(errs) < 1e-12
        return ok, f"conformal/lam2/CL agree at 1/(2 pi^2); max rel err {max(errs):.2e} (tol 1e-12)"

    return _check("1 closed-form consistency", body)


# ---------------------------------------------------------------------------
# 2-3, 6. sharpness of the minimizer and the virial identity
# ---------------------------------------------------------------------------

_SHARPNESS_L2 = [(1, 0.5), (1, 0.7), (3, 0.8)]
_SHARPNESS_CONF = [(2, 1.0, 0.8), (1, 1.0, 2.0 / 3.0)]


def _minimizer_runs(ctx: dict) -> dict:
    if "minimizer_runs" not in ctx:
        runs = {}
        for dim, q in _SHARPNESS_L2:
            p = Params(dim=dim, lam=2.0, q=q)
            runs[(dim, 2.0, q)] = (p, minimize_relaxed(p, cells=2048))
        for dim, lam, q in _SHARPNESS_CONF:
            p = Params(dim=dim, lam=lam, q=q)
            runs[(dim, lam, q)] = (p, minimize_relaxed(p, cells=2048))
        ctx["minimizer_runs"] = runs
    return ctx["minimizer_runs"]


def check_sharpness_lambda2(ctx: dict) -> CheckResult:
    def body():
        runs = _minimizer_runs(ctx)
        details = []
        ok = True
        for dim, q in _SHARPNESS_L2:
            p, rep = runs[(dim, 2.0, q)]
            ref = cst.lambda2_constant(dim, q)
            err = abs(rep.estimate_C / ref - 1)
            v = rep.measure.profile.values
            monotone = bool(np.all(np.diff(v) <= 1e-10 * v.max()))
            good = err < 1e-2 and rep.measure.dirac_mass == 0.0 and monotone
            ok &= good
            details.append(f"(N={dim},q={q}) err={err:.1e} M={rep.measure.dirac_mass:.1e} mono={monotone}")
        return ok, "; ".join(details) + " (tol 1%)"

    return _check("2 sharpness at lam=2", body)


def check_sharpness_conformal(ctx: dict) -> CheckResult:
    def body():
        runs = _minimizer_runs(ctx)
        details = []
        ok = True
        for dim, lam, q in _SHARPNESS_CONF:
            p, rep = runs[(dim, lam, q)]
            ref = cst.conformal_constant(dim, lam)
            err = abs(rep.estimate_C / ref - 1)
            ok &= err < 1e-2
            details.append(f"(N={dim},lam={lam},q={q:.4g}) err={err:.1e}")
        return ok, "; ".join(details) + " (tol 1%)"

    return _check("3 sharpness at conformal points", body)


def check_virial(ctx: dict) -> CheckResult:
    def body():
        runs = _minimizer_runs(ctx)
        residuals = {k: rep.virial_residual for k, (p, rep) in runs.items()}
        worst = max(abs(v) for v in residuals.values())
        return worst < 1e-3, f"max |virial residual| {worst:.1e} over {len(residuals)} minimizers (tol 1e-3)"

    return _check("6 virial identity at minimizers", body)


# ---------------------------------------------------------------------------
# 4. Carlson-Levin equality case
# ---------------------------------------------------------------------------


def check_carlson_levin(ctx: dict) -> CheckResult:
    def body():
        rng = np.random.default_rng(ctx.get("seed", 0))
        worst = 0.0
        for _ in range(10):
            dim = int(rng.integers(1, 4))
            lam = float(rng.uniform(0.5, 6.0))
            q_lo = dim / (dim + lam)
            q = float(rng.uniform(q_lo + 0.08 * (1 - q_lo), 0.95))
            cl = cst.carlson_levin(dim, lam, q)
            quot = cst.carlson_levin_quotient(cl.optimizer, dim, lam, q)
            worst = max(worst, abs(quot / cl.constant - 1))
        return worst < 1e-6, f"10 random admissible points, worst rel err {worst:.1e} (tol 1e-6)"

    return _check("4 Carlson-Levin equality case", body)


# ---------------------------------------------------------------------------
# 5. degenerate endpoint
# ---------------------------------------------------------------------------


def check_degenerate_endpoint(ctx: dict) -> CheckResult:
    def body():
        ok = True
        details = []
        for dim, lam in ((1, 1.0), (2, 1.5), (3, 2.0)):
            Rs = [1e2, 1e4, 1e6]
            vals = degenerate_quotient_curve(dim, lam, Rs)
            refs = np.array([(sphere_area(dim) * math.log(R)) ** (-lam / dim) for R in Rs])
            err = float(np.max(np.abs(vals / refs - 1)))
            slope, _ = np.polyfit(np.log(np.log(Rs)), np.log(vals), 1)
            slope_err = abs(slope / (-lam / dim) - 1)
            good = err < 1e-3 and slope_err < 0.05
            ok &= good
            details.append(f"(N={dim},lam={lam}) err={err:.1e} slope={slope:.3f}")
        return ok, "; ".join(details) + " (tol 1e-3, slope 5%)"

    return _check("5 degenerate endpoint q = N/(N+lam)", body)


# ---------------------------------------------------------------------------
# 7. region machinery
# ---------------------------------------------------------------------------


def check_regions(ctx: dict) -> CheckResult:
    def body():
        ok = True
        details = []
        for dim in (3, 4, 10):
            a2 = cst.sup_ratio_A(dim, 2.0)
            qbar2 = cst.qbar_curve(dim, 2.0)
            exact = dim / (dim + 2)
            ok &= abs(a2 - 1.0) < 1e-10 and qbar2 == exact
            for lam in (2.5, 3.0, 4.0, 6.0):
                A = cst.sup_ratio_A(dim, lam)
                B = cst.B_lower_bound(dim, lam)
                ok &= A >= B - 1e-9
            for lam in (1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0):
                ok &= cst.qbar_curve(dim, lam) <= cst.explicit_bound_curve(dim, lam) + 1e-12
            details.append(f"N={dim}: A_2={a2:.2e}-1={a2-1:.1e}, qbar(2)={qbar2:.6f}")
        return ok, "; ".join(details)

    return _check("7 region machinery A, B, qbar", body)


# ---------------------------------------------------------------------------
# 8. positivity proxy
# ---------------------------------------------------------------------------


def check_positivity_proxy(ctx: dict) -> CheckResult:
    def body():
        rng = np.random.default_rng(ctx.get("seed", 0) + 8)
        dim = 3
        grid = RadialGrid.make(dim, 30.0, cells=512)
        w = grid.vol_weights
        c = grid.centers
        worst = 0.0
        for lam in (2.0, 2.5, 3.0, 3.5, 4.0):
            kmat = kernel_matrix(grid, lam)
            scale_vec = 1.0 + c**lam
            for _ in range(200):
                h = rng.standard_normal(c.size) * np.exp(-c / rng.uniform(0.5, 4.0))
                h -= (w @ h) / w.sum()          # exact zero mass
                h /= np.abs(w * h) @ scale_vec  # fixes the magnitude of I
                u = w * h
                I = float(u @ (kmat @ u))
                worst = min(worst, I)
        return worst >= -1e-8, f"1000 trials over lam in 2..4: min I = {worst:.2e} (tol -1e-8)"

    return _check("8 positivity proxy for uniqueness", body)


# ---------------------------------------------------------------------------
# 9. flow benchmark
# ---------------------------------------------------------------------------


def check_flow_benchmark(ctx: dict) -> CheckResult:
    def body():
        p = Params(dim=1, lam=2.0, q=0.7)
        grid = RadialGrid.make(1, 40.0, cells=512)
        init = RadialProfile(
            grid=grid, values=np.exp(-grid.centers**2 / 2) / math.sqrt(2 * math.pi)
        )
        init = init.with_values(init.values / init.mass())
        state = run(init, p, t_end=20.0, opts=RunOptions(stationary_tol=1e-8))
        hist = state.history_array()
        mass_drift = float(np.max(np.abs(hist[:, 1] / hist[0, 1] - 1)))
        energy_incs = float(np.max(np.diff(hist[:, 2]), initial=-np.inf))
        # stationary target: (a + b r^2)^{-1/(1-q)} with b = (1-q) m /(2 q),
        # a fixed by mass matching through the exact Beta-function mass
        pexp = 1 / (1 - p.q)
        b = (1 - p.q) / (2 * p.q)

        def mass_of(a):
            return radial_integral(lambda r: (a + b * r * r) ** (-pexp), 1)

        a = brentq(lambda a: mass_of(a) - 1.0, 1e-6, 1e3)
        target = (a + b * grid.centers**2) ** (-pexp)
        l1 = float(grid.vol_weights @ np.abs(state.profile.values - target))
        ok = mass_drift < 1e-8 and energy_incs <= 1e-12 and l1 < 2e-2
        return ok, (
            f"mass drift {mass_drift:.1e} (tol 1e-8), max energy step {energy_incs:.1e} "
            f"(slack 1e-12), L1 to stationary {l1:.2e} (tol 2e-2), t={state.time:.2f}"
        )

    return _check("9 flow benchmark N=1 lam=2 q=0.7", body)


# ---------------------------------------------------------------------------
# 10. toy model
# ---------------------------------------------------------------------------


def check_toy_model(ctx: dict) -> CheckResult:
    def body():
        p = Params(dim=3, lam=4.0, q=0.2)
        hs = [0.0, 0.5, 1.0, 2.0, 5.0]
        masses = [toy_mass(h, p) for h in hs]
        decreasing = all(m1 > m2 for m1, m2 in zip(masses, masses[1:]))
        m0_a = toy_mass(0.0, p, rule="adaptive")
        m0_g = toy_mass(0.0, p, rule="gauss")
        dual = abs(m0_a / m0_g - 1)
        sub = toy_run(None, p, 0.5 * m0_a)
        sup = toy_run(None, p, 2.0 * m0_a)
        ok = (
            decreasing
            and dual < 1e-8
            and sub.verdict == "relaxing"
            and (sub.l1_error is not None and sub.l1_error < 5e-2)
            and sup.verdict == "concentrating"
        )
        return ok, (
            f"m(h) decreasing={decreasing}, dual-rule m(0) rel {dual:.1e} (tol 1e-8), "
            f"sub verdict={sub.verdict} L1={sub.l1_error}, super verdict={sup.verdict} "
            f"share ratio {sup.innermost_share_ratio:.1e}"
        )

    return _check("10 toy model concentration threshold", body)


# ---------------------------------------------------------------------------
# 11. Appendix B regimes
# ---------------------------------------------------------------------------


def check_appendix_b(ctx: dict) -> CheckResult:
    def body():
        rng = np.random.default_rng(ctx.get("seed", 0) + 11)
        p = PMParams(dim=1, lam=2.0, q=2.0)
        rep1 = pm_minimize(p, cells=1024)
        rep2 = pm_minimize(p, cells=2048)
        # compact support: a terminal fraction of the grid is exactly zero
        frac_zero = 1.0 - rep1.support_cells / rep1.profile.grid.cells
        spacing = np.diff(rep1.profile.grid.edges)
        idx = np.searchsorted(rep1.profile.grid.centers, rep1.support_radius)
        local = spacing[min(idx, spacing.size - 1)]
        stable = abs(rep1.support_radius - rep2.support_radius) <= 2 * local
        cstar = cst.conformal_constant(1, 2.0)
        grid = rep1.profile.grid
        viol = 0
        for _ in range(50):
            vals = rng.uniform(0, 1, grid.cells) * np.exp(-grid.centers / rng.uniform(0.3, 3.0))
            f = RadialProfile(grid=grid, values=vals)
            if pm_quotient(f, p) < cstar:
                viol += 1
        # log endpoint: dilation invariance and nonnegativity of the deficit
        lgrid = RadialGrid.make(1, 60.0, cells=1024)
        dil_err = 0.0
        neg = 0
        for _ in range(50):
            vals = np.exp(-lgrid.centers**2 / rng.uniform(0.5, 4.0)) * rng.uniform(0.2, 1.0, lgrid.cells)
            f = RadialProfile(grid=lgrid, values=vals)
            f = f.with_values(f.values / f.mass())
            d0 = log_deficit(f, 2.0, cstar)
            d1 = log_deficit(f.dilate(1.7), 2.0, cstar)
            dil_err = max(dil_err, abs(d1 - d0))
            neg += int(d0 < 0)
        ok = frac_zero > 0.02 and stable and viol == 0 and dil_err < 1e-10 and neg == 0
        return ok, (
            f"support radius {rep1.support_radius:.4f} vs {rep2.support_radius:.4f} "
            f"(stable={stable}), zero tail fraction {frac_zero:.1%}, pm_quotient >= C* "
            f"violations {viol}/50, log deficit dilation err {dil_err:.1e} (tol 1e-10), "
            f"negative deficits {neg}/50"
        )

    return _check("11 appendix-B: q>1 and q=1", body)


# ---------------------------------------------------------------------------
# 12. property suites
# ---------------------------------------------------------------------------


def _random_monotone_profile(rng, grid) -> np.ndarray:
    steps = rng.uniform(0, 1, grid.cells)
    vals = np.cumsum(steps[::-1])[::-1]  # nonincreasing, positive
    scale = np.exp(-grid.centers / rng.uniform(0.5, 5.0))
    return vals * scale / vals[0]


def check_property_suites(ctx: dict) -> CheckResult:
    def body():
        rng = np.random.default_rng(ctx.get("seed", 0) + 12)
        cases = 200
        fails = {}

        dim = int(rng.integers(1, 4))
        grid = RadialGrid.make(dim, 25.0, cells=384)
        # rearrangement lower bound and kernel upper bound
        n_lo = n_hi = 0
        for _ in range(cases):
            lam = float(rng.uniform(0.3, 5.0))
            f = RadialProfile(grid=grid, values=_random_monotone_profile(rng, grid))
            I = interaction_energy(f, lam)
            w = grid.vol_weights
            mass = f.mass()
            J = float((w * grid.centers**lam) @ f.values)
            if not I >= J * mass * (1 - 1e-10):
                n_lo += 1
            if lam >= 1 and not I <= 2**lam * J * mass * (1 + 1e-10):
                n_hi += 1
        fails["rearrangement"] = n_lo
        fails["kernel_upper"] = n_hi

        # moment bound on random relaxed measures
        n_mb = 0
        for _ in range(cases):
            lam = float(rng.uniform(0.3, 5.0))
            vals = rng.uniform(0, 1, grid.cells) * np.exp(-grid.centers / rng.uniform(0.5, 4.0))
            m = RelaxedMeasure(
                profile=RadialProfile(grid=grid, values=vals),
                dirac_mass=float(rng.uniform(0, 0.5)),
            )
            a = float(rng.uniform(0, 10.0))
            r = float(rng.uniform(0.1, 15.0))
            if not moment_bound_check(m, a, r, lam).holds:
                n_mb += 1
        fails["moment_bound"] = n_mb

        # coercivity with certified closed-form constants
        n_co = 0
        for _ in range(cases):
            dimc = int(rng.integers(1, 4))
            if rng.uniform() < 0.5:
                lam, q = 2.0, float(rng.uniform(dimc / (dimc + 2) + 0.05, 0.95))
            else:
                lam = float(rng.uniform(0.5, 4.0))
                q = 2 * dimc / (2 * dimc + lam)
            p = Params(dim=dimc, lam=lam, q=q)
            Cv = cst.closed_form_constant(dimc, lam, q)
            gridc = RadialGrid.make(dimc, 25.0, cells=256)
            vals = rng.uniform(0, 1, gridc.cells) * np.exp(-gridc.centers / rng.uniform(0.5, 3.0))
            prof = RadialProfile(grid=gridc, values=vals)
            M = float(rng.uniform(0, 0.5))
            total = prof.mass() + M
            m = RelaxedMeasure(profile=prof.with_values(vals / total), dirac_mass=M / total)
            from .radial_core import relaxed_interaction

            G = attraction_part(m, p)
            I_mu = relaxed_interaction(m, p.lam)
            C = coercivity_constant(p, Cv)
            if not G >= I_mu / (4 * p.lam) - C - 1e-9:
                n_co += 1
            if abs(coercivity_stationarity_residual(p, Cv)) > 1e-12:
                n_co += 1
        fails["coercivity"] = n_co

        # quotient homogeneity and dilation invariance
        n_q = 0
        for _ in range(cases):
            dimq = int(rng.integers(1, 4))
            lam = float(rng.uniform(0.5, 4.0))
            q_lo = dimq / (dimq + lam)
            q = float(rng.uniform(q_lo + 0.05, 0.95))
            p = Params(dim=dimq, lam=lam, q=q)
            gridq = RadialGrid.make(dimq, 20.0, cells=256)
            vals = rng.uniform(0.1, 1, gridq.cells) * np.exp(-gridq.centers)
            m = RelaxedMeasure(
                profile=RadialProfile(grid=gridq, values=vals),
                dirac_mass=float(rng.uniform(0, 1.0)),
            )
            q0 = quotient(m, p)
            c_amp = float(rng.uniform(0.2, 5.0))
            scaled = RelaxedMeasure(
                profile=m.profile.with_values(vals * c_amp), dirac_mass=m.dirac_mass * c_amp
            )
            ell = float(rng.uniform(0.3, 3.0))
            if abs(quotient(scaled, p) / q0 - 1) > 1e-12:
                n_q += 1
            if abs(quotient(m.dilate(ell), p) / q0 - 1) > 1e-11:
                n_q += 1
        fails["quotient_invariance"] = n_q

        total_fails = sum(fails.values())
        return total_fails == 0, f"{cases} cases per suite, violations: {fails}"

    return _check("12 property suites", body)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

SUITES: dict = {
    "closed-forms": [check_closed_forms, check_carlson_levin],
    "minimize": [check_sharpness_lambda2, check_sharpness_conformal, check_virial],
    "degenerate": [check_degenerate_endpoint],
    "regions": [check_regions],
    "positivity": [check_positivity_proxy],
    "flow": [check_flow_benchmark],
    "toy": [check_toy_model],
    "appendix-b": [check_appendix_b],
    "properties": [check_property_suites],
}

ALL_CHECKS = [
    check_closed_forms,
    check_sharpness_lambda2,
    check_sharpness_conformal,
    check_carlson_levin,
    check_degenerate_endpoint,
    check_virial,
    check_regions,
    check_positivity_proxy,
    check_flow_benchmark,
    check_toy_model,
    check_appendix_b,
    check_property_suites,
]


def run_suite(suite: str = "all", seed: int = 0) -> list:
    if suite == "all":
        checks = ALL_CHECKS
    elif suite in SUITES:
        checks = SUITES[suite]
    else:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(SUITES)} or 'all'")
    ctx = {"seed": seed}
    return [fn(ctx) for fn in checks]
