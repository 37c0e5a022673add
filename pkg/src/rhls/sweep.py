"""Parameter sweeps over the (lam, q) plane: analytic region labels and
minimize-and-classify maps, with CSV and SVG emission.

The analytic labels encode, per point: admissibility (q > N/(N+lam)), the
sign of alpha, position relative to the qbar and explicit-bound curves, the
uniqueness region, and the open concentration window (the region where a
Dirac mass in the relaxed minimizer is not excluded: N >= 3,
lam > 2N/(N-2), N/(N+lam) < q < min(qbar, 1 - 2/N)).  The classifier mode
reports what the minimizer finds there without asserting ground truth.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import constants as cst
from .minimize import minimize_relaxed
from .radial_core import Params

MODES = ("analytic_regions", "minimize_classify")


@dataclass(frozen=True)
class SweepSpec:
    dim: int
    lambda_range: tuple  # (min, max, steps)
    q_range: tuple       # (min, max, steps)
    mode: str = "analytic_regions"
    cells: int = 512
    max_iter: int = 4000

    def __post_init__(self) -> None:
        for rng, lo_ok in ((self.lambda_range, 0.0), (self.q_range, 0.0)):
            lo, hi, steps = rng
            if steps < 2:
                raise ValueError("steps must be >= 2")
            if not (lo > lo_ok and hi > lo):
                raise ValueError(f"invalid range {rng}")
        if self.q_range[1] >= 1.0:
            raise ValueError("q range must stay below 1 for this sweep")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def lambdas(self) -> np.ndarray:
        lo, hi, n = self.lambda_range
        return np.linspace(lo, hi, int(n))

    def qs(self) -> np.ndarray:
        lo, hi, n = self.q_range
        return np.linspace(lo, hi, int(n))


def region_labels(dim: int, lam: float, q: float) -> dict:
    q_adm = dim / (dim + lam)
    q_conf = 2 * dim / (2 * dim + lam)
    qbar = cst.qbar_curve(dim, lam)
    qexp = cst.explicit_bound_curve(dim, lam)
    labels = {
        "admissible": q > q_adm,
        "alpha": cst.alpha_exponent(dim, lam, q) if q != 1 else float("nan"),
        "on_conformal_line": abs(q - q_conf) <= 1e-9,
        "above_qbar": q > qbar,
        "above_explicit_bound": q > qexp,
        "uniqueness": cst.uniqueness_region(dim, lam, q),
        "q_admissible": q_adm,
        "q_conformal": q_conf,
        "q_bar": qbar,
        "q_explicit_bound": qexp,
    }
    open_window = (
        dim >= 3
        and lam > 2 * dim / (dim - 2)
        and q_adm < q < min(qbar, 1 - 2 / dim)
    )
    labels["concentration_open"] = open_window
    return labels


def _classify_point(spec: SweepSpec, lam: float, q: float) -> dict:
    p = Params(dim=spec.dim, lam=lam, q=q)
    rep = minimize_relaxed(p, cells=spec.cells, max_iter=spec.max_iter, tol=1e-9)
    return {
        "classification": rep.classification,
        "estimate_C": rep.estimate_C,
        "dirac_mass": rep.measure.dirac_mass,
        "converged": rep.converged,
        "virial_residual": rep.virial_residual,
    }


def sweep_region(spec: SweepSpec, threads: Optional[int] = None, progress=None) -> list:
    """Evaluate the sweep grid; per-point failures are recorded in the row
    and the sweep continues.  Results come back in input order."""
    points = [(lam, q) for lam in spec.lambdas() for q in spec.qs()]
    if threads is None:
        threads = int(os.environ.get("RHLS_THREADS", "0")) or min(8, os.cpu_count() or 1)

    def evaluate(pt):
        lam, q = pt
        row = {"lambda": float(lam), "q": float(q)}
        try:
            row.update(region_labels(spec.dim, lam, q))
            if spec.mode == "minimize_classify" and row["admissible"] and q < 1:
                row.update(_classify_point(spec, lam, q))
        except Exception as exc:  # recorded, sweep continues
            row["error"] = f"{type(exc).__name__}: {exc}"
        return row

    if threads <= 1 or spec.mode == "analytic_regions":
        rows = [evaluate(pt) for pt in points]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(evaluate, points))
    return rows


def rows_to_csv(rows: list) -> str:
    keys: list = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(str(row.get(k, "")) for k in keys))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# direct SVG region map (no plotting dependency)
# ---------------------------------------------------------------------------

_REGION_COLORS = {
    "inadmissible": "#ffffff",
    "admissible": "#d9d9d9",
    "no_dirac": "#bdbdbd",
    "concentration_open": "#636363",
    "uniqueness": "#9ecae1",
}

_CLASS_COLORS = {
    "case1_bounded": "#74c476",
    "case2_unbounded_no_dirac": "#fd8d3c",
    "case3_dirac": "#de2d26",
    "boundary_undetermined": "#fdd0a2",
    "error": "#9e9ac8",
}


def region_svg(rows: list, spec: SweepSpec, width: int = 720, height: int = 520) -> str:
    lam_lo, lam_hi, _ = spec.lambda_range
    q_lo, q_hi, _ = spec.q_range
    ml, mr, mt, mb = 60, 160, 20, 45
    pw, ph = width - ml - mr, height - mt - mb

    def sx(lam):
        return ml + (lam - lam_lo) / (lam_hi - lam_lo) * pw

    def sy(q):
        return mt + (q_hi - q) / (q_hi - q_lo) * ph

    nl, nq = int(spec.lambda_range[2]), int(spec.q_range[2])
    cw, ch = pw / max(nl - 1, 1), ph / max(nq - 1, 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    classify = spec.mode == "minimize_classify"
    for row in rows:
        if "error" in row and "admissible" not in row:
            color = _CLASS_COLORS["error"]
        elif classify and "classification" in row:
            color = _CLASS_COLORS.get(row["classification"], _CLASS_COLORS["error"])
        elif not row.get("admissible", False):
            color = _REGION_COLORS["inadmissible"]
        elif row.get("concentration_open", False):
            color = _REGION_COLORS["concentration_open"]
        elif row.get("uniqueness", False):
            color = _REGION_COLORS["uniqueness"]
        elif row.get("above_qbar", False):
            color = _REGION_COLORS["no_dirac"]
        else:
            color = _REGION_COLORS["admissible"]
        x = sx(row["lambda"]) - cw / 2
        y = sy(row["q"]) - ch / 2
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="{color}"/>'
        )
    # analytic curves drawn densely on top
    lams = np.linspace(lam_lo, lam_hi, 240)
    curves = {
        "q = N/(N+lam)": ([spec.dim / (spec.dim + l) for l in lams], "#000000", "4 2"),
        "q = 2N/(2N+lam)": ([2 * spec.dim / (2 * spec.dim + l) for l in lams], "#1f78b4", ""),
        "qbar": ([cst.qbar_curve(spec.dim, l) for l in lams], "#e31a1c", ""),
        "explicit bound": ([cst.explicit_bound_curve(spec.dim, l) for l in lams], "#33a02c", "2 3"),
    }
    for name, (qs, color, dash) in curves.items():
        pts = " ".join(
            f"{sx(l):.2f},{sy(q):.2f}" for l, q in zip(lams, qs) if q_lo <= q <= q_hi
        )
        if pts:
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr}/>'
            )
    # axes
    parts.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    for lam in np.linspace(lam_lo, lam_hi, 6):
        parts.append(
            f'<text x="{sx(lam):.1f}" y="{height-18}" font-size="11" text-anchor="middle">{lam:.2g}</text>'
        )
    for q in np.linspace(q_lo, q_hi, 6):
        parts.append(
            f'<text x="{ml-8}" y="{sy(q):.1f}" font-size="11" text-anchor="end">{q:.2g}</text>'
        )
    parts.append(
        f'<text x="{ml+pw/2}" y="{height-4}" font-size="12" text-anchor="middle">lambda</text>'
    )
    parts.append(f'<text x="16" y="{mt+ph/2}" font-size="12">q</text>')
    legend = _CLASS_COLORS if classify else _REGION_COLORS
    y0 = mt + 10
    for name, color in legend.items():
        parts.append(f'<rect x="{width-mr+10}" y="{y0}" width="12" height="12" fill="{color}" stroke="black" stroke-width="0.4"/>')
        parts.append(f'<text x="{width-mr+27}" y="{y0+10}" font-size="10">{name}</text>')
        y0 += 18
    for name, (qs, color, dash) in curves.items():
        parts.append(f'<line x1="{width-mr+10}" y1="{y0+6}" x2="{width-mr+22}" y2="{y0+6}" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width-mr+27}" y="{y0+10}" font-size="10">{name}</text>')
        y0 += 18
    parts.append("</svg>")
    return "\n".join(parts)


def write_manifest(out_dir: str, artifacts: list, extra: Optional[dict] = None) -> str:
    manifest = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path
