"""Radial representation of densities and quadrature of the interaction functionals.

Everything in this package works with radial measures on R^N written as a
cell-centered profile rho(r) on a graded grid, optionally augmented by a point
mass M >= 0 pinned at the origin.  The central object is the interaction energy

    I_lam[rho] = iint |x-y|^lam rho(x) rho(y) dx dy ,   lam > 0,

which reduces, for radial densities, to a double radial integral against the
angular kernel

    k(r, s) = |S^{N-1}| |S^{N-2}| int_0^pi (r^2 + s^2 - 2 r s cos(phi))^{lam/2}
              (sin phi)^{N-2} dphi            (N >= 2)
    k(r, s) = 2 (|r-s|^lam + (r+s)^lam)       (N = 1).

The phi-integral has the closed form

    k(r, s) = |S^{N-1}|^2 (r^2+s^2)^{lam/2}
              2F1(-lam/4, (2-lam)/4; N/2; z^2),   z = 2 r s / (r^2 + s^2),

which is what the default evaluation path uses (exact to hypergeometric
accuracy, uniformly in r/s, including the near-diagonal region where a fixed
Gauss rule loses digits).  A Gauss-Jacobi quadrature route with weight
(1-u^2)^{(N-3)/2}, u = cos(phi), is kept as an independent cross-check.

Quadrature convention: with per-cell volume weights w_i = |S^{N-1}|
int_cell r^{N-1} dr and values f_i at the cell's volume centroid,

    I_lam[f] ~= sum_ij  K(r_i, r_j) (w_i f_i) (w_j f_j),
    K = k / |S^{N-1}|^2 .

All types are immutable after construction and every operation is pure, so
profiles and cached kernel matrices can be shared freely across workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as _gamma, hyp2f1, roots_jacobi

DEFAULT_CELLS = 2048
LINEAR_PATCH_CELLS = 16
ANGULAR_ORDER = 64
VALUE_FLOOR = 1e-300


class DegenerateProfileError(ValueError):
    """The profile is identically zero where a positive L^q integral is required."""


def sphere_area(dim: int) -> float:
    """Surface measure |S^{N-1}| of the unit sphere in R^N (|S^0| = 2)."""
    return 2.0 * math.pi ** (dim / 2.0) / _gamma(dim / 2.0)


def ball_volume(dim: int, radius: float = 1.0) -> float:
    return sphere_area(dim) * radius**dim / dim


def wallis_integral(dim: int) -> float:
    """W_N = int_0^pi (sin phi)^{N-2} dphi, the angular normalization for N >= 2."""
    if dim < 2:
        raise ValueError("Wallis integral is used for dim >= 2 only")
    return math.sqrt(math.pi) * _gamma((dim - 1) / 2.0) / _gamma(dim / 2.0)


@dataclass(frozen=True)
class Params:
    """Parameter triple (N, lam, q) with the scaling exponent alpha.

    alpha = (2N - q(2N + lam)) / (N (1 - q)) is the unique exponent making the
    interaction quotient invariant under amplitude scaling; it satisfies
    alpha + (2 - alpha)/q = (2N + lam)/N.  q = 1 is outside this regime (the
    logarithmic endpoint lives in `regimes_q_ge_1`).
    """

    dim: int
    lam: float
    q: float

    def __post_init__(self) -> None:
        if self.dim < 1 or int(self.dim) != self.dim:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q}")

    @property
    def alpha(self) -> float:
        if self.q == 1.0:
            raise ValueError("alpha is undefined at q = 1 (logarithmic endpoint)")
        return (2 * self.dim - self.q * (2 * self.dim + self.lam)) / (self.dim * (1 - self.q))

    @property
    def q_admissible(self) -> float:
        """Below or at q = N/(N+lam) the optimal constant is zero."""
        return self.dim / (self.dim + self.lam)

    @property
    def q_conformal(self) -> float:
        """alpha = 0 exactly at q = 2N/(2N+lam)."""
        return 2 * self.dim / (2 * self.dim + self.lam)


@dataclass(frozen=True)
class RadialGrid:
    """Cell-centered radial grid: strictly increasing edges from 0 to r_max.

    Cells are geometric from r_max * 1e-6 up to r_max, with a small uniform
    patch next to the origin.  `centers` are per-cell volume centroids, so the
    rule sum(w_i f(c_i)) is exact for f affine in r.  `vol_weights` are exact
    cell volumes |S^{N-1}| (hi^N - lo^N)/N.
    """

    dim: int
    edges: np.ndarray
    centers: np.ndarray
    vol_weights: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("edges must be a 1-D array with at least two entries")
        if edges[0] < 0 or not np.all(np.diff(edges) > 0):
            raise ValueError("edges must be nonnegative and strictly increasing")
        if not np.isfinite(edges[-1]) or edges[-1] <= 0:
            raise ValueError("r_max must be finite and positive")
        if np.any(self.vol_weights <= 0):
            raise ValueError("vol_weights must be positive")
        for name in ("edges", "centers", "vol_weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def make(
        cls,
        dim: int,
        r_max: float,
        cells: int = DEFAULT_CELLS,
        linear_cells: int = LINEAR_PATCH_CELLS,
    ) -> "RadialGrid":
        if cells <= linear_cells + 8:
            raise ValueError("cells too small for the requested linear patch")
        r_min = r_max * 1e-6
        geo = np.geomspace(r_min, r_max, cells - linear_cells + 1)
        lin = np.linspace(0.0, r_min, linear_cells + 1)[:-1]
        edges = np.concatenate([lin, geo])
        lo, hi = edges[:-1], edges[1:]
        area = sphere_area(dim)
        weights = area * (hi**dim - lo**dim) / dim
        # volume centroid of each cell: exact first moment / volume
        centers = ((hi ** (dim + 1) - lo ** (dim + 1)) / (dim + 1)) / ((hi**dim - lo**dim) / dim)
        return cls(dim=dim, edges=edges, centers=centers, vol_weights=weights)

    @property
    def cells(self) -> int:
        return self.centers.size

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])

    def dilate(self, ell: float) -> "RadialGrid":
        """Exact dilation: scaled edges, weights * ell^N (no resampling)."""
        if not ell > 0:
            raise ValueError("dilation factor must be positive")
        return RadialGrid(
            dim=self.dim,
            edges=self.edges * ell,
            centers=self.centers * ell,
            vol_weights=self.vol_weights * ell**self.dim,
        )

    def cache_token(self) -> tuple:
        h = hashlib.sha1(np.ascontiguousarray(self.edges).tobytes()).hexdigest()
        return (self.dim, h)


@dataclass(frozen=True)
class RadialProfile:
    """Per-cell density values on a RadialGrid.

    `signed=False` (the default) asserts a nonnegative density; signed
    profiles are allowed for positivity tests of the interaction form.
    """

    grid: RadialGrid
    values: np.ndarray
    signed: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.centers.shape:
            raise ValueError("values must match the grid cell count")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if not self.signed and np.any(values < 0):
            raise ValueError("nonnegative profile has negative entries; set signed=True")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(
        cls, grid: RadialGrid, fn: Callable[[np.ndarray], np.ndarray], signed: bool = False
    ) -> "RadialProfile":
        return cls(grid=grid, values=np.asarray(fn(grid.centers), dtype=float), signed=signed)

    def mass(self) -> float:
        return float(self.grid.vol_weights @ self.values)

    def with_values(self, values: np.ndarray) -> "RadialProfile":
        return replace(self, values=np.asarray(values, dtype=float))

    def dilate(self, ell: float) -> "RadialProfile":
        """Mass-preserving dilation rho -> ell^{-N} rho(./ell), applied exactly
        by dilating the grid itself."""
        return RadialProfile(
            grid=self.grid.dilate(ell),
            values=self.values * ell ** (-self.grid.dim),
            signed=self.signed,
        )


@dataclass(frozen=True)
class RelaxedMeasure:
    """A nonnegative radial density plus a Dirac mass M >= 0 at the origin."""

    profile: RadialProfile
    dirac_mass: float = 0.0

    def __post_init__(self) -> None:
        if self.profile.signed:
            raise ValueError("RelaxedMeasure requires a nonnegative profile")
        if not self.dirac_mass >= 0:
            raise ValueError("dirac_mass must be nonnegative")

    def total_mass(self) -> float:
        return self.profile.mass() + self.dirac_mass

    def dilate(self, ell: float) -> "RelaxedMeasure":
        # the Dirac sits at the origin, so dilation leaves it untouched
        return RelaxedMeasure(profile=self.profile.dilate(ell), dirac_mass=self.dirac_mass)


# ---------------------------------------------------------------------------
# angular kernel
# ---------------------------------------------------------------------------


def _kernel_mean(dim: int, lam: float, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Spherical mean of |x-y|^lam for |x| = r, |y| = s, i.e. k / |S^{N-1}|^2."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if dim == 1:
        return 0.5 * (np.abs(r - s) ** lam + (r + s) ** lam)
    if dim == 3:
        # elementary closed form: the u-integral of (A - B u)^{lam/2} on [-1, 1]
        rs = r * s
        out = ((r + s) ** (lam + 2) - np.abs(r - s) ** (lam + 2)) / (2 * (lam + 2))
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rs > 0, out / np.where(rs > 0, rs, 1.0), (r + s) ** lam)
        return out
    a2 = r * r + s * s
    safe = np.where(a2 > 0, a2, 1.0)
    # roundoff can push z^2 just past 1 when r ~= s; the function is defined
    # up to z^2 = 1 (convergent there since c - a - b = (N + lam - 1)/2 > 0)
    z2 = np.minimum(np.where(a2 > 0, (2 * r * s / safe) ** 2, 0.0), 1.0)
    return safe ** (lam / 2) * hyp2f1(-lam / 4, (2 - lam) / 4, dim / 2, z2) * np.where(a2 > 0, 1.0, 0.0)


def angular_kernel(dim: int, lam: float, r, s, method: str = "closed", order: int = ANGULAR_ORDER):
    """Angular kernel k_{N,lam}(r, s); symmetric, >= 0, homogeneous of degree lam.

    `method="closed"` evaluates the hypergeometric closed form (default);
    `method="quadrature"` integrates with a Gauss-Jacobi rule of the given
    order adapted to the weight (1-u^2)^{(N-3)/2}, u = cos(phi). On the
    diagonal r = s the (1-u)^{lam/2} kink is absorbed into the Jacobi weight.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not lam > 0:
        raise ValueError("lam must be positive")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if method == "closed":
        return sphere_area(dim) ** 2 * _kernel_mean(dim, lam, r, s)
    if method != "quadrature":
        raise ValueError(f"unknown kernel method {method!r}")
    if dim == 1:
        return 2.0 * (np.abs(r - s) ** lam + (r + s) ** lam)
    return _angular_kernel_quadrature(dim, lam, r, s, order)


def _angular_kernel_quadrature(dim: int, lam: float, r, s, order: int):
    """Gauss-Jacobi route for k_{N,lam}; diagnostic / cross-check path."""
    norm = sphere_area(dim) * sphere_area(dim - 1)
    r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
    out = np.empty(r.shape)
    it = np.nditer([r, s], flags=["multi_index"])
    exp = (dim - 3) / 2.0
    nodes, weights = roots_jacobi(order, exp, exp)
    # diagonal rule: (r^2+s^2-2rs u)^{lam/2} = (2 r^2)^{lam/2} (1-u)^{lam/2} at r = s,
    # so shift the (1-u) Jacobi exponent by lam/2 to absorb the kink exactly
    dn, dw = roots_jacobi(order, exp + lam / 2.0, exp)
    for rv, sv in it:
        rv, sv = float(rv), float(sv)
        if rv == sv:
            val = (2 * rv * rv) ** (lam / 2) * float(dw.sum()) if rv > 0 else 0.0
        else:
            val = float(
                weights @ (rv * rv + sv * sv - 2 * rv * sv * nodes) ** (lam / 2)
            )
        out[it.multi_index] = norm * val
    return out if out.shape else float(out)


_KERNEL_CACHE: dict = {}
_KERNEL_LOCK = threading.Lock()


def kernel_matrix(grid: RadialGrid, lam: float) -> np.ndarray:
    """K(r_i, r_j) = k/|S^{N-1}|^2 on the grid centers; cached per (N, lam, grid).

    Initialize-once semantics: concurrent callers may race to build the same
    matrix, but the stored (read-only) result is identical either way.
    """
    key = grid.cache_token() + (float(lam),)
    mat = _KERNEL_CACHE.get(key)
    if mat is not None:
        return mat
    c = grid.centers
    mat = _kernel_mean(grid.dim, lam, c[:, None], c[None, :])
    mat.setflags(write=False)
    with _KERNEL_LOCK:
        return _KERNEL_CACHE.setdefault(key, mat)


def kernel_matrix_gradient(grid: RadialGrid, lam: float, at: np.ndarray) -> np.ndarray:
    """d/dr of the spherical-mean kernel K(r, s) at radii `at` x grid centers.

    Used to differentiate the convolution potential exactly; rows correspond
    to evaluation radii, columns to source cells.
    """
    r = np.asarray(at, dtype=float)[:, None]
    s = grid.centers[None, :]
    dim = grid.dim
    if dim == 1:
        return 0.5 * lam * (np.sign(r - s) * np.abs(r - s) ** (lam - 1) + (r + s) ** (lam - 1))
    if dim == 3:
        rs = np.where(r * s > 0, r * s, 1.0)
        kmean = _kernel_mean(dim, lam, r, s)
        lead = ((r + s) ** (lam + 1) - np.sign(r - s) * np.abs(r - s) ** (lam + 1)) / (2 * rs)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = lead - np.where(r > 0, kmean / np.where(r > 0, r, 1.0), 0.0)
        return np.where(r > 0, out, 0.0)
    a2 = r * r + s * s
    safe = np.where(a2 > 0, a2, 1.0)
    z = 2 * r * s / safe
    a, b, c = -lam / 4, (2 - lam) / 4, dim / 2
    g = hyp2f1(a, b, c, z * z)
    gp = (a * b / c) * hyp2f1(a + 1, b + 1, c + 1, z * z)
    dz_dr = 2 * s * (s * s - r * r) / safe**2
    out = lam * r * safe ** (lam / 2 - 1) * g + safe ** (lam / 2) * gp * 2 * z * dz_dr
    return np.where(a2 > 0, out, 0.0)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


class Moments(NamedTuple):
    mass: float
    lambda_moment: float
    lq_integral: float


def moments(m: RelaxedMeasure, p: Params) -> Moments:
    """Mass (including the Dirac), lam-moment and L^q integral of the density.

    The Dirac at the origin contributes |0|^lam = 0 to the moment and, per the
    relaxed functional, nothing to the L^q term.
    """
    grid = m.profile.grid
    f = m.profile.values
    w = grid.vol_weights
    mass = float(w @ f) + m.dirac_mass
    lam_mom = float((w * grid.centers**p.lam) @ f)
    lq = float(w @ np.power(f, p.q))
    return Moments(mass=mass, lambda_moment=lam_mom, lq_integral=lq)


def interaction_energy(f: RadialProfile, lam: float) -> float:
    """I_lam[f] by the cached kernel quadrature; symmetric bilinear in f."""
    u = f.grid.vol_weights * f.values
    return float(u @ (kernel_matrix(f.grid, lam) @ u))


def interaction_bilinear(f: RadialProfile, g: RadialProfile, lam: float) -> float:
    """B(f, g) = iint |x-y|^lam f(x) g(y); the polarization of I_lam."""
    if f.grid is not g.grid and f.grid.cache_token() != g.grid.cache_token():
        raise ValueError("profiles must share a grid")
    uf = f.grid.vol_weights * f.values
    ug = g.grid.vol_weights * g.values
    return float(uf @ (kernel_matrix(f.grid, lam) @ ug))


def relaxed_interaction(m: RelaxedMeasure, lam: float) -> float:
    """I_lam[rho] + 2 M int |x|^lam rho; the Dirac self-interaction vanishes."""
    grid = m.profile.grid
    w = grid.vol_weights
    lam_mom = float((w * grid.centers**lam) @ m.profile.values)
    return interaction_energy(m.profile, lam) + 2.0 * m.dirac_mass * lam_mom


def potential(f: RadialProfile, dirac_mass: float, at, lam: float) -> np.ndarray:
    """W_lam * (rho + M delta_0) at the given radii, W_lam = |x|^lam / lam.

    V(r) -> (mass/lam) r^lam as r -> infinity; V is continuous down to r = 0
    where it equals (lam-moment + 0)/lam.
    """
    at = np.atleast_1d(np.asarray(at, dtype=float))
    u = f.grid.vol_weights * f.values
    km = _kernel_mean(f.grid.dim, lam, at[:, None], f.grid.centers[None, :])
    return (km @ u + dirac_mass * at**lam) / lam


def quotient(m: RelaxedMeasure, p: Params) -> float:
    """Relaxed interaction-energy quotient Q[rho, M].

    Q = (I_lam[rho] + 2 M J) / ((mass + M)^alpha (int rho^q)^{(2-alpha)/q});
    invariant under (rho, M) -> (c rho, c M) and under exact dilation.
    """
    if not 0 < p.q < 1:
        raise ValueError("quotient requires q in (0, 1)")
    mom = moments(m, p)
    if mom.lq_integral <= 0.0:
        raise DegenerateProfileError("profile is identically zero")
    alpha = p.alpha
    return relaxed_interaction(m, p.lam) / (
        mom.mass**alpha * mom.lq_integral ** ((2 - alpha) / p.q)
    )


# ---------------------------------------------------------------------------
# adaptive quadrature for analytic radial integrands
# ---------------------------------------------------------------------------


def radial_integral(
    fn: Callable[[float], float],
    dim: int,
    power: float = 0.0,
    r_break: Optional[float] = 1.0,
) -> float:
    """|S^{N-1}| int_0^inf r^{N-1+power} fn(r) dr by adaptive quadrature.

    Splitting at `r_break` keeps the infinite-interval transform away from any
    origin singularity of fn.
    """
    g = lambda r: r ** (dim - 1 + power) * fn(r)
    if r_break is None:
        val, _ = quad(g, 0.0, np.inf, limit=400)
    else:
        v1, _ = quad(g, 0.0, r_break, limit=400)
        v2, _ = quad(g, r_break, np.inf, limit=400)
        val = v1 + v2
    return sphere_area(dim) * val


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def profile_to_csv(f: RadialProfile, p: Optional[Params] = None) -> str:
    """Serialize to CSV with columns (r_center, value); the header comment
    carries N, lambda, q, R_max and the cell count."""
    buf = io.StringIO()
    lam = p.lam if p is not None else float("nan")
    q = p.q if p is not None else float("nan")
    buf.write(
        f"# N={f.grid.dim} lambda={lam!r} q={q!r} R_max={f.grid.r_max!r} K={f.grid.cells}\n"
    )
    writer = csv.writer(buf)
    writer.writerow(["r_center", "value"])
    for r, v in zip(f.grid.centers, f.values):
        writer.writerow([repr(float(r)), repr(float(v))])
    return buf.getvalue()


def profile_from_csv(text: str) -> tuple[RadialProfile, dict]:
    """Inverse of profile_to_csv; rebuilds the grid from the stored metadata.

    The stored centers must match the reconstructed grid (same r_max and K),
    otherwise the file is rejected.
    """
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing metadata header")
    meta: dict = {}
    for tok in lines[0].lstrip("# ").split():
        key, _, val = tok.partition("=")
        meta[key] = float(val) if key != "N" and key != "K" else int(float(val))
    rows = list(csv.reader(lines[1:]))
    if rows and rows[0][0] == "r_center":
        rows = rows[1:]
    values = np.array([float(v) for _, v in rows])
    grid = RadialGrid.make(meta["N"], meta["R_max"], cells=meta["K"])
    centers = np.array([float(r) for r, _ in rows])
    if centers.shape != grid.centers.shape or not np.allclose(centers, grid.centers, rtol=1e-9):
        raise ValueError("stored centers do not match the reconstructed grid")
    return RadialProfile(grid=grid, values=values), meta
