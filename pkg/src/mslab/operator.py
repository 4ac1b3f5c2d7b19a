"""Matrix-free discrete magnetic Schrodinger operator and its exact inequalities.

The covariant derivative along axis j is discretized with unit-modulus link
factors U_j(x) = exp(-i h a_j(x + h e_j / 2)) on grid edges:

    (L_j u)(x) = (U_j(x) u(x + h e_j) - u(x)) / (i h),

with u = 0 outside the box. The operator is assembled as
H = sum_j L_j^* L_j + V + shift, which makes hermiticity, positivity, the
energy identity and the pointwise diamagnetic inequality exact at the
discrete level (up to roundoff), not merely up to discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .grid import (
    Cube,
    GridError,
    GridSpec,
    ScalarField,
    VectorField,
    cube_integral,
    fd_gradient,
)
from .weights import AuxField, Weight


class OperatorError(ValueError):
    pass


@dataclass
class MagneticData:
    """Field-strength components b_jk and the strength weight |B|."""

    grid: GridSpec
    components: dict  # (j, k) with j < k -> ScalarField of b_jk
    absB: Weight = field(init=False)

    def __post_init__(self):
        vals = np.zeros(self.grid.shape)
        for (j, k), f in self.components.items():
            if not (0 <= j < k < self.grid.n):
                raise OperatorError(f"bad component index pair {(j, k)}")
            vals += 2.0 * np.abs(f.values)  # b_kj = -b_jk counted too
        if not np.any(vals > 0):
            vals = vals + 1e-300  # identically zero field: keep Weight valid
        self.absB = Weight(ScalarField(self.grid, vals))

    def component(self, j: int, k: int) -> np.ndarray:
        """Signed component b_jk (antisymmetric in (j, k); zero if absent)."""
        if j == k or (min(j, k), max(j, k)) not in self.components:
            return np.zeros(self.grid.shape)
        if j < k:
            return self.components[(j, k)].values
        return -self.components[(k, j)].values

    def grad_magnitude(self) -> ScalarField:
        """Sum over ordered pairs of |grad b_jk| (finite differences)."""
        total = np.zeros(self.grid.shape)
        for (j, k), f in self.components.items():
            g = fd_gradient(f).magnitude().values
            total += 2.0 * g
        return ScalarField(self.grid, total)


class LinkField:
    """Unit-modulus edge factors exp(-i h a_j(edge midpoint)) per axis."""

    __slots__ = ("grid", "links")

    def __init__(self, grid: GridSpec, links: np.ndarray):
        links = np.asarray(links, dtype=np.complex128)
        if links.shape != (grid.n,) + grid.shape:
            raise OperatorError("link array shape mismatch")
        dev = np.max(np.abs(np.abs(links) - 1.0))
        if dev > 1e-14:
            raise OperatorError(f"links must be unit modulus, deviation {dev:.2e}")
        self.grid = grid
        self.links = links

    @classmethod
    def free(cls, grid: GridSpec) -> "LinkField":
        return cls(grid, np.ones((grid.n,) + grid.shape, dtype=np.complex128))

    @classmethod
    def from_callables(cls, grid: GridSpec, a_fns: Sequence[Callable]) -> "LinkField":
        """Sample the potential components at edge midpoints."""
        links = np.empty((grid.n,) + grid.shape, dtype=np.complex128)
        coords = grid.coords()
        for j in range(grid.n):
            mid = [c.copy() for c in coords]
            mid[j] = mid[j] + grid.h / 2.0
            links[j] = np.exp(-1j * grid.h * np.asarray(a_fns[j](*mid)))
        return cls(grid, links)

    @classmethod
    def from_fields(cls, a: VectorField) -> "LinkField":
        """Edge midpoints approximated by averaging adjacent cell samples."""
        grid = a.grid
        links = np.empty((grid.n,) + grid.shape, dtype=np.complex128)
        for j in range(grid.n):
            vals = np.real(a.components[j].values)
            dst = [slice(None)] * grid.n
            src = [slice(None)] * grid.n
            dst[j] = slice(0, -1)
            src[j] = slice(1, None)
            mid = vals.copy()
            mid[tuple(dst)] = 0.5 * (vals[tuple(dst)] + vals[tuple(src)])
            links[j] = np.exp(-1j * grid.h * mid)
        return cls(grid, links)

    def conjugated(self, phi: ScalarField) -> "LinkField":
        """Exact discrete gauge change: U_j(x) -> U_j(x) e^{-i dphi_j(x)}.

        dphi_j(x) = phi(x + h e_j) - phi(x); with fields also multiplied by
        e^{i phi} this is an exact unitary equivalence of the operator.
        """
        grid = self.grid
        pv = np.real(phi.values)
        links = self.links.copy()
        for j in range(grid.n):
            dst = [slice(None)] * grid.n
            src = [slice(None)] * grid.n
            dst[j] = slice(0, -1)
            src[j] = slice(1, None)
            dphi = np.zeros(grid.shape)
            dphi[tuple(dst)] = pv[tuple(src)] - pv[tuple(dst)]
            links[j] = links[j] * np.exp(-1j * dphi)
        return LinkField(grid, links)


class OperatorHandle:
    """Matrix-free application of H, L_j, and L_j adjoint."""

    def __init__(self, grid: GridSpec, links: Optional[LinkField], V: Optional[Weight], shift: float = 0.0):
        if shift < 0:
            raise OperatorError("shift must be nonnegative")
        self.grid = grid
        self.links = links if links is not None else LinkField.free(grid)
        if V is None:
            v_vals = np.zeros(grid.shape)
        else:
            if V.grid != grid:
                raise OperatorError("potential grid mismatch")
            v_vals = V.values
        self.V = v_vals
        self.shift = float(shift)
        self._vps = v_vals + self.shift

    def apply_h(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.complex128)
        return _kernels.apply_h(values, self.links.links, self._vps, self.grid.h)

    def apply_l(self, j: int, values: np.ndarray) -> np.ndarray:
        """Cell view of L_j u (one value per cell, the cell's forward edge)."""
        values = np.asarray(values, dtype=np.complex128)
        return _kernels.apply_l(values, self.links.links[j], j, self.grid.h)

    def apply_l_edges(self, j: int, values: np.ndarray) -> np.ndarray:
        """Edge view of L_j u: axis j extended by the entering ghost edge.

        The ghost edge at the lower wall carries (u(first cell) - 0)/(ih)
        (unit wall phase); including it makes sum_j ||L_j u||^2 match the
        quadratic form of the Dirichlet stencil exactly.
        """
        values = np.asarray(values, dtype=np.complex128)
        cells = self.apply_l(j, values)
        n = self.grid.n
        ghost_shape = list(self.grid.shape)
        ghost_shape[j] = 1
        take = [slice(None)] * n
        take[j] = slice(0, 1)
        ghost = values[tuple(take)].reshape(ghost_shape) / (1j * self.grid.h)
        return np.concatenate([ghost, cells], axis=j)

    def apply_l_adj(self, j: int, values: np.ndarray) -> np.ndarray:
        """Adjoint of the cell view of L_j."""
        values = np.asarray(values, dtype=np.complex128)
        return _kernels.apply_l_adj(values, self.links.links[j], j, self.grid.h)

    def apply_l_all(self, values: np.ndarray) -> np.ndarray:
        """Stack of cell-view L_j values, shape (n, *grid.shape)."""
        return np.stack([self.apply_l(j, values) for j in range(self.grid.n)])

    def covariant_magnitude(self, values: np.ndarray) -> np.ndarray:
        """|Lu| = (sum_j |L_j u|^2)^(1/2) pointwise at cells."""
        return np.sqrt(np.sum(np.abs(self.apply_l_all(values)) ** 2, axis=0))

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.vdot(v, u) * self.grid.cell_measure)

    def energy(self, values: np.ndarray) -> float:
        """sum_j ||L_j u||^2 (edge view) + ||V^(1/2) u||^2 + shift ||u||^2.

        Equals <H u, u> to roundoff by construction.
        """
        values = np.asarray(values, dtype=np.complex128)
        meas = self.grid.cell_measure
        total = 0.0
        for j in range(self.grid.n):
            lj = self.apply_l_edges(j, values)
            total += float(np.sum(np.abs(lj) ** 2)) * meas
        total += float(np.sum(self._vps * np.abs(values) ** 2)) * meas
        return total

    def edge_p_norm(self, edge_values: np.ndarray, p: float) -> float:
        """Discrete L^p norm of an edge (or cell) array with cell measure h^n."""
        a = np.abs(edge_values)
        if p == np.inf:
            return float(a.max())
        return float((self.grid.cell_measure * np.sum(a**p)) ** (1.0 / p))

    def to_dense(self) -> np.ndarray:
        """Materialize H as a dense complex Hermitian matrix."""
        grid = self.grid
        M = grid.size
        h2 = grid.h * grid.h
        A = np.zeros((M, M), dtype=np.complex128)
        diag = 2.0 * grid.n / h2 + self._vps.ravel()
        A[np.arange(M), np.arange(M)] = diag
        strides = []
        s = 1
        for d in range(grid.n - 1, -1, -1):
            strides.insert(0, s)
            s *= grid.N
        idx = np.arange(M).reshape(grid.shape)
        for j in range(grid.n):
            src = [slice(None)] * grid.n
            src[j] = slice(0, -1)
            rows = idx[tuple(src)].ravel()
            cols = rows + strides[j]
            U = self.links.links[j][tuple(src)].ravel()
            A[rows, cols] += -U / h2
            A[cols, rows] += -np.conj(U) / h2
        return A


def curl(a: VectorField) -> MagneticData:
    """Field strength b_jk = d a_j / d x_k - d a_k / d x_j (finite differences)."""
    for c in a.components:
        if not c.is_real:
            raise OperatorError("magnetic potential must be real")
    grid = a.grid
    grads = [fd_gradient(c) for c in a.components]
    comps = {}
    for j in range(grid.n):
        for k in range(j + 1, grid.n):
            b = grads[j].components[k].values - grads[k].components[j].values
            comps[(j, k)] = ScalarField(grid, b)
    return MagneticData(grid=grid, components=comps)


def assemble(
    a,
    V: Optional[Weight],
    shift: float = 0.0,
    grid: Optional[GridSpec] = None,
) -> OperatorHandle:
    """Build the operator from a potential (VectorField, callables, or None)."""
    if isinstance(a, VectorField):
        grid = a.grid
        links = LinkField.from_fields(a)
    elif a is None:
        if grid is None and V is not None:
            grid = V.grid
        if grid is None:
            raise OperatorError("grid required when no potential is given")
        links = LinkField.free(grid)
    elif isinstance(a, LinkField):
        grid = a.grid
        links = a
    else:  # sequence of callables
        if grid is None and V is not None:
            grid = V.grid
        if grid is None:
            raise OperatorError("grid required for callable potentials")
        links = LinkField.from_callables(grid, a)
    if V is not None and np.any(V.values < 0):
        raise OperatorError("electric potential must be nonnegative")
    return OperatorHandle(grid, links, V, shift)


# --------------------------------------------------------------------------
# exact discrete inequality checks
# --------------------------------------------------------------------------


@dataclass
class DiamagneticReport:
    max_violation: float
    max_slack: float  # largest strict gap observed


def diamagnetic_check(u: ScalarField, handle: OperatorHandle) -> DiamagneticReport:
    """Pointwise |d_j |u|| <= |L_j u| on every edge (exact for unit links)."""
    grid = handle.grid
    au = np.abs(u.values)
    worst = 0.0
    slack = 0.0
    for j in range(grid.n):
        dst = [slice(None)] * grid.n
        src = [slice(None)] * grid.n
        dst[j] = slice(0, -1)
        src[j] = slice(1, None)
        shifted = np.zeros_like(au)
        shifted[tuple(dst)] = au[tuple(src)]
        grad_abs = np.abs(shifted - au) / grid.h
        lj = np.abs(handle.apply_l(j, u.values))
        diff = grad_abs - lj
        worst = max(worst, float(np.max(diff)))
        slack = max(slack, float(np.max(-diff)))
    return DiamagneticReport(max_violation=worst, max_slack=slack)


@dataclass
class KatoSimonReport:
    lam: float
    max_deficit: float  # max of |u_magnetic| - resolvent_free(f); <= tol passes
    strict_gap: float

    def passes(self, tol: float) -> bool:
        return self.max_deficit <= tol


def kato_simon_check(
    f: ScalarField,
    lam: float,
    handle: OperatorHandle,
    free_handle: Optional[OperatorHandle] = None,
    solver_tol: float = 1e-12,
) -> KatoSimonReport:
    """Componentwise |(H + lam)^-1 f| <= (-Laplace + lam)^-1 f for f >= 0."""
    from .calculus import solve_shifted

    if lam <= 0:
        raise OperatorError("resolvent comparison requires lam > 0")
    if np.any(np.real(f.values) < -1e-15) or not f.is_real:
        raise OperatorError("comparison probe must be nonnegative")
    grid = handle.grid
    if free_handle is None:
        free_handle = OperatorHandle(grid, LinkField.free(grid), None, 0.0)
    u_mag = solve_shifted(handle, f.values.astype(np.complex128), lam, solver_tol)
    u_free = solve_shifted(free_handle, f.values.astype(np.complex128), lam, solver_tol)
    diff = np.abs(u_mag) - np.real(u_free)
    return KatoSimonReport(
        lam=lam,
        max_deficit=float(np.max(diff)),
        strict_gap=float(np.max(-diff)),
    )


@dataclass
class FieldConditionReport:
    c_gradient: float  # smallest c with |grad B| <= c m(., w)^3
    worst_gradient_point: tuple
    c_potential: Optional[float] = None  # smallest C with V <= C m(., w)^2
    worst_potential_point: Optional[tuple] = None


def check_shen_conditions(
    B: MagneticData,
    aux: AuxField,
    V: Optional[Weight] = None,
    aux_with_potential: Optional[AuxField] = None,
) -> FieldConditionReport:
    """Fit the constants in the field-regularity conditions.

    c_gradient bounds |grad B| by the cube of the auxiliary scale of |B|;
    when V is given, c_potential bounds V by the square of the auxiliary
    scale of |B| + V (pass its aux field as aux_with_potential).
    """
    grid = B.grid
    interior = tuple(slice(1, -1) for _ in range(grid.n))
    gradB = B.grad_magnitude().values[interior]
    m3 = aux.values[interior] ** 3
    ratio = gradB / m3
    flat = int(np.argmax(ratio))
    worst_g = np.unravel_index(flat, ratio.shape)
    report = FieldConditionReport(
        c_gradient=float(np.max(ratio)),
        worst_gradient_point=tuple(int(i) + 1 for i in worst_g),
    )
    if V is not None:
        m2 = (aux_with_potential or aux).values ** 2
        ratio_v = V.values / m2
        flat = int(np.argmax(ratio_v))
        report.c_potential = float(np.max(ratio_v))
        report.worst_potential_point = tuple(int(i) for i in np.unravel_index(flat, ratio_v.shape))
    return report


def caccioppoli_check(u: ScalarField, f: ScalarField, Q: Cube, handle: OperatorHandle) -> float:
    """Smallest C with int_Q |Lu|^2 + V|u|^2 <= C (int_2Q |f||u| + R^-2 int_2Q |u|^2)."""
    Q2 = Q.dilate(2.0)
    if not Q2.inside_box():
        raise OperatorError("doubled cube exceeds the box")
    grid = handle.grid
    labs2 = handle.covariant_magnitude(u.values) ** 2
    lhs_field = ScalarField(grid, labs2 + handle.V * np.abs(u.values) ** 2)
    lhs = cube_integral(lhs_field, Q)
    fu = ScalarField(grid, np.abs(f.values) * np.abs(u.values))
    usq = ScalarField(grid, np.abs(u.values) ** 2)
    rhs = cube_integral(fu, Q2) + cube_integral(usq, Q2) / (Q.R * Q.R)
    if rhs <= 0:
        return 0.0
    return float(lhs / rhs)
