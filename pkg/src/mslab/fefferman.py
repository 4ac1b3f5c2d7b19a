"""Weighted lower-bound (Fefferman-Phong type) inequality measurements.

Classical form on a cube Q of sidelength R:

    int_Q |u|^p min{(avg_Q w)^(p/2), R^-p} <= C (int_Q |Lu|^p + w |u|^p),

reported as the measured ratio C = mass/energy. The improved form replaces
the min by the concave gain m_beta(R^2 avg_Q w)/R^2 at p = 2, with
m_beta(x) = x for x <= 1 and x^beta for x >= 1, so it reduces to the
classical form exactly on the identity branch. At p = 2 the classical form
is the literal statement; for p != 2 the (avg w)^(p/2) homogenization keeps
both sides dimensionally consistent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Cube, GridSpec, ScalarField
from .operator import OperatorHandle
from .weights import Weight

BETA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class FeffermanError(ValueError):
    pass


@dataclass
class FPReport:
    form: str  # "classical" | "improved"
    p: float
    beta: Optional[float]
    worst_constant: float
    worst_cube: Optional[Cube]
    worst_probe: Optional[int]
    n_evaluations: int
    n_vacuous: int


def m_beta(x, beta: float):
    """Concave gain: identity below 1, power beta above."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x <= 1.0, x, x ** beta)
    return out if out.ndim else float(out)


def _mass_and_energy(u: ScalarField, w: Weight, Q: Cube, p: float, handle: OperatorHandle, factor: float):
    grid = u.grid
    sl = Q.slices()
    uabs = np.abs(u.values[sl])
    mass = factor * float(np.sum(uabs**p)) * grid.cell_measure
    labs = handle.covariant_magnitude(u.values)[sl]
    energy = float(np.sum(labs**p) + np.sum(w.values[sl] * uabs**p)) * grid.cell_measure
    return mass, energy


def fp_classical(u: ScalarField, w: Weight, Q: Cube, p: float, handle: OperatorHandle) -> float:
    """Measured constant of the classical inequality; inf flags a vacuous
    energy with positive mass, 0.0 a fully vacuous pair."""
    if p < 1:
        raise FeffermanError("exponent must satisfy p >= 1")
    avg_w = float(np.mean(w.values[Q.slices()]))
    factor = min(avg_w ** (p / 2.0), Q.R ** (-p))
    mass, energy = _mass_and_energy(u, w, Q, p, handle, factor)
    if energy <= 0:
        return np.inf if mass > 0 else 0.0
    return mass / energy


def fp_improved(u: ScalarField, w: Weight, Q: Cube, beta: float, handle: OperatorHandle) -> float:
    """Measured constant of the improved inequality at p = 2."""
    if not (0 < beta < 1):
        raise FeffermanError("beta must lie in (0, 1)")
    avg_w = float(np.mean(w.values[Q.slices()]))
    factor = m_beta(Q.R * Q.R * avg_w, beta) / (Q.R * Q.R)
    mass, energy = _mass_and_energy(u, w, Q, 2.0, handle, factor)
    if energy <= 0:
        return np.inf if mass > 0 else 0.0
    return mass / energy


def fp_improved_sweep(u: ScalarField, w: Weight, Q: Cube, handle: OperatorHandle, betas=BETA_GRID) -> dict:
    return {beta: fp_improved(u, w, Q, beta, handle) for beta in betas}


def fp_batch(
    probes,
    cubes,
    w: Weight,
    handle: OperatorHandle,
    form: str = "classical",
    p: float = 2.0,
    beta: Optional[float] = None,
) -> FPReport:
    """Worst measured constant over a probe/cube batch."""
    worst = 0.0
    worst_cube = None
    worst_probe = None
    vacuous = 0
    count = 0
    for i, u in enumerate(probes):
        for Q in cubes:
            if form == "classical":
                c = fp_classical(u, w, Q, p, handle)
            elif form == "improved":
                if beta is None:
                    raise FeffermanError("improved form needs beta")
                c = fp_improved(u, w, Q, beta, handle)
            else:
                raise FeffermanError(f"unknown form {form!r}")
            count += 1
            if not np.isfinite(c):
                vacuous += 1
                continue
            if c > worst:
                worst = c
                worst_cube = Q
                worst_probe = i
    return FPReport(
        form=form,
        p=p,
        beta=beta,
        worst_constant=worst,
        worst_cube=worst_cube,
        worst_probe=worst_probe,
        n_evaluations=count,
        n_vacuous=vacuous,
    )
