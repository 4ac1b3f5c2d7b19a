"""Uniform box grids, scalar/vector fields, cubes, averages, norms, gradients.

The computational domain is the box [0, L]^n discretized into N^n cells of
width h = L/N; field samples live at cell centers (i + 1/2) h. All cube
integrals use the midpoint rule: the integral over a cube is h^n times the
sum of samples at cell centers inside the cube, and averages divide by the
measured count, so clipped cubes are averaged over Q intersected with the box.
Fields are implicitly zero outside the box (Dirichlet convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# index-space slack when testing whether a cell center lies inside a cube;
# keeps exact-boundary centers (e.g. dilated dyadic cubes) classified stably
_EDGE_EPS = 1e-9


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of the box [0, L]^n with N cells per axis."""

    n: int
    N: int
    L: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.n}")
        if self.N < 8 or (self.N & (self.N - 1)) != 0:
            raise GridError(f"N must be a power of two >= 8, got {self.N}")
        if self.N > 128:
            raise GridError(f"N must be <= 128, got {self.N}")
        if not (self.L > 0):
            raise GridError(f"box sidelength must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def cell_measure(self) -> float:
        return self.h**self.n

    def axis_centers(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return (np.arange(self.N) + 0.5) * self.h

    def coords(self) -> tuple:
        """Meshgrid of cell-center coordinates, one array per axis."""
        c = self.axis_centers()
        return np.meshgrid(*([c] * self.n), indexing="ij")

    def levels(self) -> int:
        """Number of dyadic refinement levels, log2(N)."""
        return int(self.N).bit_length() - 1


class ScalarField:
    """Real or complex samples at the cell centers of a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values: np.ndarray):
        values = np.asarray(values)
        if values.shape != grid.shape:
            raise GridError(f"field shape {values.shape} != grid shape {grid.shape}")
        if values.dtype == np.complex128:
            pass
        elif np.iscomplexobj(values):
            values = values.astype(np.complex128)
        else:
            values = values.astype(np.float64)
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.coords())) * np.ones(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, value) -> "ScalarField":
        return cls(grid, np.full(grid.shape, value))

    @classmethod
    def zeros(cls, grid: GridSpec, complex_: bool = False) -> "ScalarField":
        dtype = np.complex128 if complex_ else np.float64
        return cls(grid, np.zeros(grid.shape, dtype=dtype))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def real_part(self) -> "ScalarField":
        return ScalarField(self.grid, np.real(self.values))

    def abs(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


class VectorField:
    """n scalar components on a shared grid."""

    __slots__ = ("grid", "components")

    def __init__(self, components: Sequence[ScalarField]):
        grids = {id(c.grid) for c in components}
        if len(components) == 0:
            raise GridError("vector field needs at least one component")
        g = components[0].grid
        if any(c.grid is not g and c.grid != g for c in components):
            raise GridError("vector field components must share one grid")
        if len(components) != g.n:
            raise GridError(f"expected {g.n} components, got {len(components)}")
        del grids
        self.grid = g
        self.components = tuple(components)

    def magnitude(self) -> ScalarField:
        """Pointwise euclidean magnitude of the component vector."""
        sq = sum(np.abs(c.values) ** 2 for c in self.components)
        return ScalarField(self.grid, np.sqrt(sq))


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube [center - R/2, center + R/2]^n clipped to the box.

    clip holds per-axis half-open index ranges (lo, hi) of the cells whose
    centers lie in the closed cube; the clipped set may be empty.
    """

    grid: GridSpec
    center: tuple
    R: float
    clip: tuple = field(init=False)

    def __post_init__(self):
        if not (self.R > 0):
            raise GridError(f"cube sidelength must be positive, got {self.R}")
        if len(self.center) != self.grid.n:
            raise GridError("cube center dimension mismatch")
        h = self.grid.h
        N = self.grid.N
        ranges = []
        for c in self.center:
            # centers (i + 1/2) h inside [c - R/2, c + R/2]
            lo = int(np.ceil((c - self.R / 2) / h - 0.5 - _EDGE_EPS))
            hi = int(np.floor((c + self.R / 2) / h - 0.5 + _EDGE_EPS)) + 1
            lo = max(lo, 0)
            hi = min(hi, N)
            ranges.append((lo, hi))
        object.__setattr__(self, "clip", tuple(ranges))

    @property
    def is_empty(self) -> bool:
        return any(hi <= lo for lo, hi in self.clip)

    @property
    def cell_count(self) -> int:
        if self.is_empty:
            return 0
        out = 1
        for lo, hi in self.clip:
            out *= hi - lo
        return out

    @property
    def clipped_measure(self) -> float:
        """Measured |Q ∩ box| (cell count times cell measure)."""
        return self.cell_count * self.grid.cell_measure

    def slices(self) -> tuple:
        return tuple(slice(lo, hi) for lo, hi in self.clip)

    def dilate(self, lam: float) -> "Cube":
        """Co-centered cube with sidelength lam * R."""
        return Cube(self.grid, self.center, lam * self.R)

    def inside_box(self) -> bool:
        """True when the cube region lies inside [0, L]^n (unclipped)."""
        L = self.grid.L
        return all(
            c - self.R / 2 >= -_EDGE_EPS * self.grid.h
            and c + self.R / 2 <= L + _EDGE_EPS * self.grid.h
            for c in self.center
        )

    def key(self) -> tuple:
        return (tuple(round(c, 12) for c in self.center), round(self.R, 12))


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def cube_average(f: ScalarField, Q: Cube):
    """Midpoint-rule average of f over Q intersected with the box."""
    if Q.is_empty:
        raise GridError("degenerate cube: no grid cells inside")
    block = f.values[Q.slices()]
    return block.mean()


def cube_integral(f: ScalarField, Q: Cube):
    """Midpoint-rule integral of f over Q intersected with the box."""
    if Q.is_empty:
        raise GridError("degenerate cube: no grid cells inside")
    return f.values[Q.slices()].sum() * f.grid.cell_measure


def lp_norm(f: ScalarField, p: float) -> float:
    """Discrete L^p norm (h^n sum |f|^p)^(1/p); p = inf gives max |f|."""
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if p < 1:
        raise GridError(f"p must satisfy p >= 1 or p = inf, got {p}")
    a = np.abs(f.values)
    return float((f.grid.cell_measure * np.sum(a**p)) ** (1.0 / p))


def array_lp_norm(values: np.ndarray, grid: GridSpec, p: float) -> float:
    return lp_norm(ScalarField(grid, values), p)


def fd_gradient(f: ScalarField) -> VectorField:
    """Second-order centered differences, one-sided at the boundary layer."""
    if f.is_real:
        vals = f.values
    else:
        vals = f.values
    grads = np.gradient(vals, f.grid.h, edge_order=2)
    if f.grid.n == 1:
        grads = [grads]
    return VectorField([ScalarField(f.grid, g) for g in grads])


def laplacian(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Standard 2n+1-point discrete Laplacian with zero outside the box."""
    n = grid.n
    h2 = grid.h * grid.h
    out = -2.0 * n * values.astype(values.dtype) / h2
    for j in range(n):
        dst = [slice(None)] * n
        src = [slice(None)] * n
        dst[j] = slice(0, -1)
        src[j] = slice(1, None)
        shifted = np.zeros_like(values)
        shifted[tuple(dst)] = values[tuple(src)]
        out += shifted / h2
        shifted = np.zeros_like(values)
        shifted[tuple(src)] = values[tuple(dst)]
        out += shifted / h2
    return out


def cube_family(grid: GridSpec, strategy: str = "dyadic") -> list:
    """Dyadic cubes at all levels, optionally with half-shifted copies.

    strategy "dyadic": levels 0..log2(N), 2^(n*level) cubes per level.
    strategy "dyadic+half-shifted": adds, for every nonempty axis subset,
    a copy shifted by half a sidelength along those axes, clipped to the box.
    """
    if strategy not in ("dyadic", "dyadic+half-shifted"):
        raise GridError(f"unknown cube family strategy: {strategy}")
    cubes = []
    n = grid.n
    for level in range(grid.levels() + 1):
        side = grid.L / (2**level)
        m = 2**level
        centers_1d = (np.arange(m) + 0.5) * side
        shifts = [np.zeros(n)]
        if strategy == "dyadic+half-shifted":
            for mask in range(1, 2**n):
                vec = np.array([(side / 2) if (mask >> d) & 1 else 0.0 for d in range(n)])
                shifts.append(vec)
        for shift in shifts:
            for idx in np.ndindex(*([m] * n)):
                center = tuple(centers_1d[idx[d]] + shift[d] for d in range(n))
                Q = Cube(grid, center, side)
                if not Q.is_empty:
                    cubes.append(Q)
    return cubes


class IntegralImage:
    """Summed-area table for O(1) box sums of a real array."""

    def __init__(self, values: np.ndarray):
        self.shape = values.shape
        table = values.astype(np.float64)
        for axis in range(values.ndim):
            table = np.cumsum(table, axis=axis)
        self.table = np.pad(table, [(1, 0)] * values.ndim)

    def box_sum(self, clip) -> float:
        """Sum over half-open index ranges ((lo, hi), ...)."""
        n = len(self.shape)
        total = 0.0
        for mask in range(2**n):
            idx = []
            sign = 1
            for d in range(n):
                lo, hi = clip[d]
                if (mask >> d) & 1:
                    idx.append(lo)
                    sign = -sign
                else:
                    idx.append(hi)
            total += sign * self.table[tuple(idx)]
        return total

    def window_sums(self, lo_idx: np.ndarray, hi_idx: np.ndarray) -> np.ndarray:
        """Vectorized box sums: lo_idx/hi_idx have shape (n, ...) of ranges."""
        n = len(self.shape)
        out = np.zeros(lo_idx.shape[1:], dtype=np.float64)
        for mask in range(2**n):
            idx = []
            sign = 1
            for d in range(n):
                if (mask >> d) & 1:
                    idx.append(lo_idx[d])
                    sign = -sign
                else:
                    idx.append(hi_idx[d])
            out += sign * self.table[tuple(idx)]
        return out
