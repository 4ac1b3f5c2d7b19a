"""Empirical operator-norm probing: first and second order Riesz transforms,
reverse estimates, and the local-to-global boundedness diagnostic.

Norms are reported as lower bounds max_probes ||T f||_p / ||f||_p over a
seeded probe family. Probes are continuum recipes (bumps, modulated bumps,
random gaussian superpositions at three scales, mollified cube indicators)
sampled per grid, so estimates are comparable across refinements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .calculus import SpectralDecomposition, power_apply
from .decomp import maximal_function
from .grid import Cube, GridSpec, ScalarField, lp_norm
from .operator import OperatorHandle
from .scenarios import ScenarioContext


class RieszError(ValueError):
    pass


# --------------------------------------------------------------------------
# probe family
# --------------------------------------------------------------------------


@dataclass
class ProbeRecipe:
    kind: str
    params: dict

    def sample(self, grid: GridSpec) -> ScalarField:
        coords = grid.coords()
        p = self.params
        if self.kind == "bump":
            r2 = sum((x - c) ** 2 for x, c in zip(coords, p["center"]))
            vals = np.exp(-r2 / (2 * p["width"] ** 2))
        elif self.kind == "wave_bump":
            r2 = sum((x - c) ** 2 for x, c in zip(coords, p["center"]))
            phase = sum(k * x for k, x in zip(p["wavevector"], coords))
            vals = np.exp(1j * phase) * np.exp(-r2 / (2 * p["width"] ** 2))
        elif self.kind == "gaussian_mix":
            vals = np.zeros(grid.shape, dtype=np.complex128)
            for c, w, amp in zip(p["centers"], p["widths"], p["amps"]):
                r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
                vals = vals + amp * np.exp(-r2 / (2 * w**2))
        elif self.kind == "mollified_cube":
            vals = np.ones(grid.shape)
            for x, c in zip(coords, p["center"]):
                xi = np.clip((np.abs(x - c) - p["half"]) / p["taper"], 0.0, 1.0)
                vals = vals * (1.0 - xi * xi * (3 - 2 * xi))
        else:
            raise RieszError(f"unknown probe kind {self.kind!r}")
        return ScalarField(grid, vals)


@dataclass
class ProbeFamily:
    seed: int
    size: int
    n: int
    recipes: list = field(default_factory=list)

    def __post_init__(self):
        if self.recipes:
            return
        rng = np.random.default_rng(self.seed)
        smoothing_scales = (1 / 4, 1 / 8, 1 / 16)
        per_kind = max(self.size // 4, 1)
        for _ in range(per_kind):
            self.recipes.append(
                ProbeRecipe(
                    "bump",
                    {
                        "center": tuple(rng.uniform(0.25, 0.75, size=self.n)),
                        "width": float(rng.uniform(0.04, 0.15)),
                    },
                )
            )
        for _ in range(per_kind):
            self.recipes.append(
                ProbeRecipe(
                    "wave_bump",
                    {
                        "center": tuple(rng.uniform(0.3, 0.7, size=self.n)),
                        "width": float(rng.uniform(0.05, 0.15)),
                        "wavevector": tuple(
                            2 * np.pi * k for k in rng.integers(1, 5, size=self.n)
                        ),
                    },
                )
            )
        for _ in range(per_kind):
            scale = smoothing_scales[len(self.recipes) % 3]
            m = 12
            self.recipes.append(
                ProbeRecipe(
                    "gaussian_mix",
                    {
                        "centers": [tuple(c) for c in rng.uniform(0.15, 0.85, size=(m, self.n))],
                        "widths": [float(w) for w in rng.uniform(0.6, 1.4, size=m) * scale],
                        "amps": [
                            complex(a, b)
                            for a, b in rng.standard_normal(size=(m, 2))
                        ],
                    },
                )
            )
        while len(self.recipes) < self.size:
            self.recipes.append(
                ProbeRecipe(
                    "mollified_cube",
                    {
                        "center": tuple(rng.uniform(0.3, 0.7, size=self.n)),
                        "half": float(rng.uniform(0.05, 0.2)),
                        "taper": float(rng.uniform(0.03, 0.08)),
                    },
                )
            )

    def sample_all(self, grid: GridSpec):
        return [(i, r.sample(grid)) for i, r in enumerate(self.recipes)]


# --------------------------------------------------------------------------
# operator catalog
# --------------------------------------------------------------------------


@dataclass
class NormEstimate:
    operator: str
    p: float
    N: int
    lower_bound: float
    probe_id: int
    seed: int


def riesz_apply(j: int, f: ScalarField, dec: SpectralDecomposition, handle: OperatorHandle) -> np.ndarray:
    """L_j H^(-1/2) f as an edge array."""
    half = power_apply(dec, -0.5, f)
    return handle.apply_l_edges(j, half.values)


def _operator_output_norm(op_id: str, f: ScalarField, ctx: ScenarioContext, p: float) -> float:
    """||T f||_p for one catalog operator."""
    grid = ctx.grid
    handle = ctx.handle
    dec = ctx.dec
    if op_id == "identity":
        return lp_norm(f, p)
    if op_id == "riesz_vector":
        half = power_apply(dec, -0.5, f)
        if p == 2:
            # edge view: sum_j ||L_j H^-1/2 f||_2^2 is exactly the magnetic
            # part of the energy, hence <= ||f||_2^2
            sq = sum(
                float(np.sum(np.abs(handle.apply_l_edges(j, half.values)) ** 2))
                for j in range(grid.n)
            )
            return float(np.sqrt(sq * grid.cell_measure))
        # p != 2: euclidean magnitude over components at cells
        cells = np.sqrt(
            sum(np.abs(handle.apply_l(j, half.values)) ** 2 for j in range(grid.n))
        )
        return handle.edge_p_norm(cells, p)
    if op_id.startswith("riesz_"):
        j = int(op_id.split("_")[1])
        return handle.edge_p_norm(riesz_apply(j, f, dec, handle), p)
    if op_id == "aux_halfinv":
        half = power_apply(dec, -0.5, f)
        return lp_norm(ScalarField(grid, ctx.aux.values * half.values), p)
    if op_id == "aux2_inv":
        inv = power_apply(dec, -1.0, f)
        return lp_norm(ScalarField(grid, ctx.aux.values**2 * inv.values), p)
    if op_id == "V_inv":
        if ctx.V is None:
            raise RieszError("scenario has no electric potential")
        inv = power_apply(dec, -1.0, f)
        return lp_norm(ScalarField(grid, ctx.V.values * inv.values), p)
    if op_id == "sqrtV_halfinv":
        if ctx.V is None:
            raise RieszError("scenario has no electric potential")
        half = power_apply(dec, -0.5, f)
        return lp_norm(ScalarField(grid, np.sqrt(ctx.V.values) * half.values), p)
    if op_id == "H0_inv":
        inv = power_apply(dec, -1.0, f)
        out = ctx.handle_free_field.apply_h(inv.values)
        return lp_norm(ScalarField(grid, out), p)
    if op_id.startswith("second_"):
        _, s, k = op_id.split("_")
        s, k = int(s), int(k)
        inv = power_apply(dec, -1.0, f)
        lk = handle.apply_l(k, inv.values)
        lslk = handle.apply_l(s, lk)
        return handle.edge_p_norm(lslk, p)
    raise RieszError(f"unknown operator id {op_id!r}")


def norm_curve(
    op_id: str,
    p_list,
    probes: ProbeFamily,
    ctx: ScenarioContext,
) -> list:
    """Lower bounds for ||T||_p->p over the probe family, one row per p."""
    grid = ctx.grid
    sampled = probes.sample_all(grid)
    out = []
    for p in p_list:
        best = -np.inf
        best_id = -1
        for i, f in sampled:
            denom = lp_norm(f, p)
            if denom <= 0:
                continue
            val = _operator_output_norm(op_id, f, ctx, p) / denom
            if val > best:
                best = val
                best_id = i
        out.append(
            NormEstimate(
                operator=op_id,
                p=float(p),
                N=grid.N,
                lower_bound=float(best),
                probe_id=best_id,
                seed=probes.seed,
            )
        )
    return out


def reverse_constant(
    p: float,
    probes: ProbeFamily,
    ctx: ScenarioContext,
    use_aux_scale: bool = False,
) -> float:
    """max over probes of ||H^(1/2) f||_p over the gradient-side sum.

    Denominator: ||Lf||_p + |||B|^(1/2) f||_p + ||V^(1/2) f||_p, with the
    field-strength term replaced by ||m f||_p when use_aux_scale is set.
    """
    grid = ctx.grid
    handle = ctx.handle
    dec = ctx.dec
    best = -np.inf
    for _, f in probes.sample_all(grid):
        half = power_apply(dec, 0.5, f)
        num = lp_norm(half, p)
        if p == 2:
            sq = sum(
                float(np.sum(np.abs(handle.apply_l_edges(j, f.values)) ** 2))
                for j in range(grid.n)
            )
            l_term = float(np.sqrt(sq * grid.cell_measure))
        else:
            mags = np.sqrt(
                sum(np.abs(handle.apply_l(j, f.values)) ** 2 for j in range(grid.n))
            )
            l_term = handle.edge_p_norm(mags, p)
        if use_aux_scale:
            b_term = lp_norm(ScalarField(grid, ctx.aux.values * np.abs(f.values)), p)
        else:
            b_term = lp_norm(
                ScalarField(grid, np.sqrt(ctx.absB.values) * np.abs(f.values)), p
            )
        v_term = 0.0
        if ctx.V is not None:
            v_term = lp_norm(ScalarField(grid, np.sqrt(ctx.V.values) * np.abs(f.values)), p)
        denom = l_term + b_term + v_term
        if denom <= 0:
            continue
        best = max(best, num / denom)
    return float(best)


# --------------------------------------------------------------------------
# local-to-global criterion diagnostic
# --------------------------------------------------------------------------


@dataclass
class LocalCriterionReport:
    constant: float
    per_cube: list  # (cube, worst ratio, probes used)
    rejected_probes: int


def _apply_lhinv_lstar(ctx: ScenarioContext, F_components) -> np.ndarray:
    """|L H^-1 L* F| at cells for a vector field F given per component."""
    handle = ctx.handle
    grid = ctx.grid
    lstar = np.zeros(grid.shape, dtype=np.complex128)
    for j, comp in enumerate(F_components):
        if comp is None:
            continue
        lstar += handle.apply_l_adj(j, comp)
    inv = power_apply(ctx.dec, -1.0, ScalarField(grid, lstar))
    return np.sqrt(
        sum(np.abs(handle.apply_l(j, inv.values)) ** 2 for j in range(grid.n))
    )


def _s_operator(ctx: ScenarioContext, F_components) -> ScalarField:
    """S F = (M(|m H^-1 L* F|^2))^(1/2), the maximal-of-squares control."""
    handle = ctx.handle
    grid = ctx.grid
    lstar = np.zeros(grid.shape, dtype=np.complex128)
    for j, comp in enumerate(F_components):
        if comp is None:
            continue
        lstar += handle.apply_l_adj(j, comp)
    inv = power_apply(ctx.dec, -1.0, ScalarField(grid, lstar))
    weighted = ScalarField(grid, (ctx.aux.values * np.abs(inv.values)) ** 2)
    mf = maximal_function(weighted)
    return ScalarField(grid, np.sqrt(mf.values))


def local_criterion_check(
    op_id: str,
    cubes,
    p0: float,
    q0: float,
    probes: ProbeFamily,
    ctx: ScenarioContext,
    support_tol: float = 1e-12,
) -> LocalCriterionReport:
    """Smallest C in the cube-local control of T f by its coarser average
    plus the maximal control S|f| at the cube center, over probes supported
    away from the quadrupled cube."""
    if op_id not in ("zero", "LHinvLstar"):
        raise RieszError(f"unsupported operator for the local criterion: {op_id!r}")
    grid = ctx.grid
    for Q in cubes:
        if Q.is_empty or Q.dilate(2.0).is_empty:
            raise RieszError("criterion cube has an empty grid window")
    sampled = probes.sample_all(grid)
    worst = 0.0
    per_cube = []
    rejected = 0
    for Q in cubes:
        sl4 = Q.dilate(4.0).slices()
        cube_worst = 0.0
        used = 0
        for i, f in sampled:
            support = np.abs(f.values) > support_tol * np.max(np.abs(f.values))
            if np.any(support[sl4]):
                rejected += 1
                continue
            used += 1
            for axis in range(grid.n):
                comps = [None] * grid.n
                comps[axis] = f.values.astype(np.complex128)
                if op_id == "zero":
                    tf = np.zeros(grid.shape)
                    s_val = 1.0
                else:
                    tf = _apply_lhinv_lstar(ctx, comps)
                    s_field = _s_operator(ctx, comps)
                    idx = tuple(
                        int(np.clip(np.floor(c / grid.h), 0, grid.N - 1))
                        for c in Q.center
                    )
                    s_val = float(s_field.values[idx])
                lhs = float(np.mean(tf[Q.slices()] ** q0)) ** (1.0 / q0)
                rhs = (
                    float(np.mean(tf[Q.dilate(2.0).slices()] ** p0)) ** (1.0 / p0)
                    + s_val
                )
                if rhs > 0:
                    cube_worst = max(cube_worst, lhs / rhs)
        per_cube.append((Q, cube_worst, used))
        worst = max(worst, cube_worst)
    return LocalCriterionReport(constant=worst, per_cube=per_cube, rejected_probes=rejected)
