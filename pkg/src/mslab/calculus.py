"""Functional calculus for the discrete operator.

Fractional powers come from a dense Hermitian eigendecomposition (the single
source of truth at desk scale); the inverse is also available matrix-free
through a conjugate-gradient solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, ScalarField
from .operator import OperatorHandle

DENSE_LIMIT = 8192


class CalculusError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvectors as columns."""

    grid: GridSpec
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def smallest(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[-1])


def eig(handle: OperatorHandle) -> SpectralDecomposition:
    """Full dense Hermitian eigendecomposition of the materialized operator."""
    M = handle.grid.size
    if M > DENSE_LIMIT:
        raise CalculusError(
            f"problem size {M} exceeds dense feasibility limit {DENSE_LIMIT}: use iterative path"
        )
    A = handle.to_dense()
    w, v = np.linalg.eigh(A)
    return SpectralDecomposition(grid=handle.grid, eigenvalues=w, eigenvectors=v)


def power_apply(dec: SpectralDecomposition, s: float, f) -> ScalarField:
    """Spectral mapping sum_i lambda_i^s <v_i, f> v_i for s in {-1, -1/2, 1/2, 1}."""
    values = f.values if isinstance(f, ScalarField) else np.asarray(f)
    flat = values.reshape(-1).astype(np.complex128)
    if s < 0 and dec.smallest <= 1e-12:
        raise CalculusError("operator not invertible: smallest eigenvalue <= 1e-12")
    coeff = dec.eigenvectors.conj().T @ flat
    mapped = (dec.eigenvalues**s) * coeff
    out = dec.eigenvectors @ mapped
    return ScalarField(dec.grid, out.reshape(dec.grid.shape))


def _cg(apply_op, rhs: np.ndarray, tol: float, maxiter: int):
    """Conjugate gradients for a Hermitian positive definite operator."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = np.vdot(r, r).real
    norm_rhs = np.sqrt(np.vdot(rhs, rhs).real)
    if norm_rhs == 0:
        return x, 0.0
    target = tol * norm_rhs
    for _ in range(maxiter):
        if np.sqrt(rs) <= target:
            return x, float(np.sqrt(rs) / norm_rhs)
        Ap = apply_op(p)
        alpha = rs / np.vdot(p, Ap).real
        x += alpha * p
        r -= alpha * Ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    resid = float(np.sqrt(rs) / norm_rhs)
    if resid <= tol:
        return x, resid
    raise SolverError("conjugate gradient did not converge", resid)


def solve_h(handle: OperatorHandle, f, tol: float = 1e-12) -> ScalarField:
    """Matrix-free solve H u = f to relative residual tol."""
    if not (tol > 0):
        raise CalculusError("tolerance must be positive")
    values = f.values if isinstance(f, ScalarField) else np.asarray(f)
    rhs = values.reshape(-1).astype(np.complex128)
    grid = handle.grid

    def apply_op(vec):
        return handle.apply_h(vec.reshape(grid.shape)).reshape(-1)

    x, _ = _cg(apply_op, rhs, tol, 10 * grid.size)
    return ScalarField(grid, x.reshape(grid.shape))


def solve_shifted(handle: OperatorHandle, values: np.ndarray, lam: float, tol: float = 1e-12) -> np.ndarray:
    """Solve (H + lam) u = f matrix-free; returns the raw array."""
    if not (tol > 0):
        raise CalculusError("tolerance must be positive")
    grid = handle.grid
    rhs = np.asarray(values).reshape(-1).astype(np.complex128)

    def apply_op(vec):
        field = vec.reshape(grid.shape)
        return (handle.apply_h(field) + lam * field).reshape(-1)

    x, _ = _cg(apply_op, rhs, tol, 10 * grid.size)
    return x.reshape(grid.shape)
