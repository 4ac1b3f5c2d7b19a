"""Reverse Holder weight analysis and the auxiliary critical-scale function.

A weight is a nonnegative scalar field. For a weight w the auxiliary scale
m(x, w) is the reciprocal of the critical radius

    1/m(x, w) = sup { r > 0 : r^2 * avg_{Q(x,r) ∩ box} w <= 1 },

where Q(x, r) is the cube of sidelength r centered at x. The supremum is
located by a geometric radius scan refined by bisection; the scan is capped
to [h, r_max] and results outside the scan are clamped and flagged (box
truncation is an artifact limit, not a math failure).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Cube, GridSpec, GridError, IntegralImage, ScalarField, cube_average

N_SCAN = 64
BISECT_RTOL = 1e-8


class WeightError(ValueError):
    pass


@dataclass
class Weight:
    """Nonnegative scalar field, optionally clamped to a positivity floor."""

    field: ScalarField
    floor: float = 0.0

    def __post_init__(self):
        if not self.field.is_real:
            raise WeightError("weight must be real-valued")
        vals = self.field.values
        if self.floor > 0:
            vals = np.maximum(vals, self.floor)
            self.field = ScalarField(self.field.grid, vals)
        if np.any(vals < 0):
            raise WeightError("weight must be nonnegative")
        if not np.any(vals > 0):
            raise WeightError("weight must not vanish identically")

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def scaled(self, lam: float) -> "Weight":
        return Weight(ScalarField(self.grid, lam * self.values))

    def power(self, s: float) -> "Weight":
        return Weight(ScalarField(self.grid, self.values**s))


@dataclass
class RHReport:
    q: float
    constant: float
    worst_cube: Cube
    family_size: int


@dataclass
class AuxField:
    """m(x, w) evaluated at every grid cell."""

    grid: GridSpec
    values: np.ndarray
    r_max: float
    tol: float
    clamped_small: np.ndarray = field(repr=False, default=None)
    clamped_large: np.ndarray = field(repr=False, default=None)

    def as_scalar_field(self) -> ScalarField:
        return ScalarField(self.grid, self.values)


@dataclass
class AuxValue:
    value: float
    flag: str  # "", "clamped-small", "clamped-large"


def rh_constant(w: Weight, q: float, cubes) -> RHReport:
    """Largest (avg_Q w^q)^(1/q) / (avg_Q w) over the cube family.

    q = inf uses the essential supremum on Q for the left-hand side.
    """
    if not (q > 1):
        raise WeightError(f"reverse Holder exponent must exceed 1, got {q}")
    best = -np.inf
    worst = None
    vals = w.values
    for Q in cubes:
        block = vals[Q.slices()]
        denom = block.mean()
        if denom <= 0:
            raise WeightError("weight vanishes on cube")
        if q == np.inf:
            num = block.max()
        else:
            num = (block**q).mean() ** (1.0 / q)
        ratio = num / denom
        if ratio > best:
            best = ratio
            worst = Q
    return RHReport(q=q, constant=float(best), worst_cube=worst, family_size=len(cubes))


def doubling_constant(w: Weight, cubes) -> float:
    """Largest integral ratio over 2Q vs Q (clipped to the box)."""
    best = -np.inf
    vals = w.values
    for Q in cubes:
        denom = vals[Q.slices()].sum()
        if denom <= 0:
            raise WeightError("weight vanishes on cube")
        Q2 = Q.dilate(2.0)
        num = vals[Q2.slices()].sum()
        best = max(best, num / denom)
    return float(best)


# --------------------------------------------------------------------------
# auxiliary scale function
# --------------------------------------------------------------------------


def _window_average(image: IntegralImage, grid: GridSpec, centers, radius):
    """Average of the weight over Q(x, r) ∩ box, vectorized over points.

    centers: array (n, m) of coordinates; radius: scalar or array (m,).
    Returns (avg, count) arrays of shape (m,).
    """
    h = grid.h
    N = grid.N
    n = grid.n
    centers = np.asarray(centers, dtype=np.float64)
    r = np.asarray(radius, dtype=np.float64)
    lo = np.ceil((centers - r / 2) / h - 0.5 - 1e-9).astype(np.int64)
    hi = np.floor((centers + r / 2) / h - 0.5 + 1e-9).astype(np.int64) + 1
    lo = np.clip(lo, 0, N)
    hi = np.clip(hi, 0, N)
    hi = np.maximum(hi, lo)
    count = np.prod(hi - lo, axis=0).astype(np.float64)
    sums = image.window_sums(lo, hi)
    avg = np.divide(sums, count, out=np.zeros_like(sums), where=count > 0)
    return avg, count


def _aux_scan(w: Weight, centers, r_max: float, tol: float):
    """Vectorized critical-radius search at a set of points.

    Returns (m_values, flags) with flags 0 = interior, -1 = clamped-small,
    +1 = clamped-large.
    """
    grid = w.grid
    image = IntegralImage(w.values)
    centers = np.asarray(centers, dtype=np.float64)
    m_pts = centers.shape[1]
    r_min = grid.h
    radii = np.geomspace(r_min, r_max, N_SCAN)

    admissible = np.zeros((N_SCAN, m_pts), dtype=bool)
    for i, r in enumerate(radii):
        avg, count = _window_average(image, grid, centers, r)
        # empty windows admit the radius only vacuously; treat as admissible
        # (weight mass zero), matching r^2 * avg <= 1 with avg = 0
        admissible[i] = (r * r * avg <= 1.0) | (count == 0)

    # largest admissible scanned radius
    any_adm = admissible.any(axis=0)
    last_adm = np.where(any_adm, N_SCAN - 1 - np.argmax(admissible[::-1], axis=0), -1)

    flags = np.zeros(m_pts, dtype=np.int8)
    m_out = np.empty(m_pts, dtype=np.float64)

    clamped_small = ~any_adm
    flags[clamped_small] = -1
    m_out[clamped_small] = 1.0 / r_min

    clamped_large = last_adm == N_SCAN - 1
    flags[clamped_large & ~clamped_small] = 1
    m_out[clamped_large & ~clamped_small] = 1.0 / r_max

    interior = any_adm & ~clamped_large
    if np.any(interior):
        idx = last_adm[interior]
        lo = radii[idx]
        hi = radii[idx + 1]
        c_int = centers[:, interior]
        # bisection: lo admissible, hi not
        while np.max((hi - lo) / hi) > tol:
            mid = 0.5 * (lo + hi)
            avg, count = _window_average(image, grid, c_int, mid)
            ok = (mid * mid * avg <= 1.0) | (count == 0)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        m_out[interior] = 2.0 / (lo + hi)
    return m_out, flags


def aux_m(w: Weight, x, r_max: Optional[float] = None, tol: float = BISECT_RTOL) -> AuxValue:
    """Auxiliary scale m(x, w) at a single point."""
    grid = w.grid
    if r_max is None:
        r_max = grid.L
    centers = np.asarray(x, dtype=np.float64).reshape(grid.n, 1)
    m_vals, flags = _aux_scan(w, centers, r_max, tol)
    flag = {0: "", -1: "clamped-small", 1: "clamped-large"}[int(flags[0])]
    return AuxValue(value=float(m_vals[0]), flag=flag)


def aux_field(w: Weight, r_max: Optional[float] = None, tol: float = BISECT_RTOL) -> AuxField:
    """Auxiliary scale evaluated at every grid cell center."""
    grid = w.grid
    if r_max is None:
        r_max = grid.L
    pts = np.stack([c.ravel() for c in grid.coords()])
    m_vals, flags = _aux_scan(w, pts, r_max, tol)
    values = m_vals.reshape(grid.shape)
    fl = flags.reshape(grid.shape)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise WeightError("auxiliary scale must be positive and finite")
    return AuxField(
        grid=grid,
        values=values,
        r_max=r_max,
        tol=tol,
        clamped_small=fl == -1,
        clamped_large=fl == 1,
    )


# --------------------------------------------------------------------------
# empirical fit of the comparability / growth properties of m(., w)
# --------------------------------------------------------------------------


@dataclass
class MPropertyReport:
    comparability_constant: float
    k0: float
    upper_constant: float
    lower_constant: float
    n_pairs: int
    n_near_pairs: int


def check_m_properties(w: Weight, samples, aux: Optional[AuxField] = None) -> MPropertyReport:
    """Fit the smallest constants in the scale-comparison inequalities.

    samples: sequence of point pairs (x, y). Fits, over all pairs,
      - comparability: max of m(x)/m(y) over pairs with |x-y| < (1/2)/m(x),
      - growth exponent k0 by least squares on log(m(y)/m(x)) against
        log(1 + |x-y| m(x)), then the smallest upper constant C with
        m(y) <= C (1 + |x-y| m(x))^k0 m(x),
      - the largest lower constant c with
        m(y) >= c m(x) / (1 + |x-y| m(x))^(k0/(k0+1)).
    Violations are reported as fitted constants, never as failures.
    """
    grid = w.grid
    if aux is None:
        aux = aux_field(w)

    def m_at(pt):
        idx = tuple(
            int(np.clip(np.floor(np.asarray(pt[d]) / grid.h), 0, grid.N - 1))
            for d in range(grid.n)
        )
        return aux.values[idx]

    ratios = []
    dists = []
    mxs = []
    comp = 1.0
    n_near = 0
    for x, y in samples:
        mx = m_at(x)
        my = m_at(y)
        d = float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
        ratios.append(my / mx)
        dists.append(d)
        mxs.append(mx)
        if d < 0.5 / mx:
            comp = max(comp, my / mx, mx / my)
            n_near += 1
    ratios = np.asarray(ratios)
    dists = np.asarray(dists)
    mxs = np.asarray(mxs)

    growth = np.log1p(dists * mxs)
    logratio = np.log(ratios)
    pos = growth > 1e-12
    if np.count_nonzero(pos) >= 2:
        k0 = float(np.sum(growth[pos] * logratio[pos]) / np.sum(growth[pos] ** 2))
        k0 = max(k0, 1e-6)
    else:
        k0 = 1e-6
    upper = float(np.max(ratios / np.exp(k0 * growth)))
    lower = float(np.min(ratios * np.exp((k0 / (k0 + 1.0)) * growth)))
    return MPropertyReport(
        comparability_constant=float(comp),
        k0=k0,
        upper_constant=upper,
        lower_constant=lower,
        n_pairs=len(samples),
        n_near_pairs=n_near,
    )


def rh_exponent_for_dimension(n: int, delta: float = 0.1) -> float:
    """Exponent used for the field-strength reverse Holder test.

    The natural exponent n/2 equals 1 in dimension 2, outside the q > 1
    range of the definition; self-improvement justifies testing at 1 + delta.
    """
    q = n / 2.0
    return q if q > 1 else 1.0 + delta
