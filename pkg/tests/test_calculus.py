import numpy as np
import pytest

from mslab.calculus import (
    CalculusError,
    SolverError,
    eig,
    power_apply,
    solve_h,
    solve_shifted,
)
from mslab.grid import GridSpec, ScalarField, lp_norm
from mslab.operator import assemble
from mslab.scenarios import get_scenario
from mslab.weights import Weight

from conftest import random_complex_field


@pytest.fixture(scope="module")
def grid():
    return GridSpec(n=2, N=16)


@pytest.fixture(scope="module")
def ctx(grid):
    return get_scenario("constant-field-with-potential").build(grid)


class TestEig:
    def test_free_spectrum_closed_form(self):
        g = GridSpec(n=2, N=8)
        handle = assemble(None, None, grid=g)
        dec = eig(handle)
        h = g.h
        ks = np.arange(1, g.N + 1)
        per_axis = (4 / h**2) * np.sin(np.pi * ks / (2 * (g.N + 1))) ** 2
        exact = np.sort((per_axis[:, None] + per_axis[None, :]).ravel())
        np.testing.assert_allclose(dec.eigenvalues, exact, rtol=1e-9)

    def test_constant_potential_shifts_spectrum(self, grid):
        h0 = assemble(None, None, grid=grid)
        c = 3.7
        hc = assemble(None, Weight(ScalarField.constant(grid, c)), grid=grid)
        d0 = eig(h0)
        dc = eig(hc)
        np.testing.assert_allclose(dc.eigenvalues, d0.eigenvalues + c, rtol=1e-12)

    def test_eigenvalue_count(self, ctx):
        assert ctx.dec.eigenvalues.size == ctx.grid.size

    def test_residual_and_orthonormality(self, ctx):
        dec = ctx.dec
        handle = ctx.handle
        rng = np.random.default_rng(0)
        idx = rng.integers(0, dec.eigenvalues.size, size=12)
        scale = max(dec.largest, 1.0)
        for i in idx:
            v = dec.eigenvectors[:, i].reshape(ctx.grid.shape)
            r = handle.apply_h(v) - dec.eigenvalues[i] * v
            assert np.linalg.norm(r) <= 1e-9 * scale
        G = dec.eigenvectors[:, idx].conj().T @ dec.eigenvectors[:, idx]
        assert np.max(np.abs(G - np.eye(len(idx)))) < 1e-10

    def test_dense_limit_guard(self):
        g = GridSpec(n=2, N=128)
        handle = assemble(None, None, grid=g)
        with pytest.raises(CalculusError, match="iterative"):
            eig(handle)


class TestPowerApply:
    def test_inverse_composition(self, ctx):
        rng = np.random.default_rng(1)
        f = random_complex_field(ctx.grid, rng)
        half = power_apply(ctx.dec, 0.5, f)
        back = power_apply(ctx.dec, -0.5, half)
        assert np.max(np.abs(back.values - f.values)) < 1e-9 * np.max(np.abs(f.values))

    def test_half_twice_is_apply(self, ctx):
        rng = np.random.default_rng(2)
        f = random_complex_field(ctx.grid, rng)
        twice = power_apply(ctx.dec, 0.5, power_apply(ctx.dec, 0.5, f))
        direct = ctx.handle.apply_h(f.values)
        assert np.max(np.abs(twice.values - direct)) <= 1e-9 * np.max(np.abs(direct))

    def test_energy_identity_via_sqrt(self, ctx):
        # ||H^(1/2)u||^2 equals the edge-view covariant energy exactly
        rng = np.random.default_rng(3)
        handle = ctx.handle
        for _ in range(20):
            u = random_complex_field(ctx.grid, rng)
            half = power_apply(ctx.dec, 0.5, u)
            lhs = lp_norm(half, 2) ** 2
            rhs = handle.energy(u.values)
            assert abs(lhs - rhs) <= 1e-10 * max(lhs, 1.0)

    def test_spectral_mapping_commutes(self, ctx):
        rng = np.random.default_rng(4)
        f = random_complex_field(ctx.grid, rng)
        a = ctx.handle.apply_h(power_apply(ctx.dec, -0.5, f).values)
        b = power_apply(ctx.dec, 0.5, f).values
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(b))) * ctx.dec.largest ** 0.5


class TestSolve:
    def test_consistency_with_known_solution(self, ctx):
        rng = np.random.default_rng(5)
        v = random_complex_field(ctx.grid, rng)
        f = ScalarField(ctx.grid, ctx.handle.apply_h(v.values))
        u = solve_h(ctx.handle, f, tol=1e-12)
        assert np.max(np.abs(u.values - v.values)) < 1e-8 * np.max(np.abs(v.values))

    def test_agrees_with_dense_inverse(self, ctx):
        rng = np.random.default_rng(6)
        f = random_complex_field(ctx.grid, rng)
        tol = 1e-10
        u_it = solve_h(ctx.handle, f, tol=tol)
        u_dense = power_apply(ctx.dec, -1.0, f)
        diff = lp_norm(ScalarField(ctx.grid, u_it.values - u_dense.values), 2)
        assert diff <= 10 * tol * lp_norm(f, 2)

    def test_zero_tolerance_rejected(self, ctx):
        f = ScalarField.zeros(ctx.grid, complex_=True)
        with pytest.raises(CalculusError, match="positive"):
            solve_h(ctx.handle, f, tol=0.0)

    def test_positivity_of_inverse(self, ctx):
        rng = np.random.default_rng(7)
        for _ in range(5):
            f = random_complex_field(ctx.grid, rng)
            u = solve_h(ctx.handle, f, tol=1e-12)
            quad = np.real(ctx.handle.inner(u.values, f.values))
            assert quad >= -1e-10

    def test_shifted_solve(self, ctx):
        rng = np.random.default_rng(8)
        f = random_complex_field(ctx.grid, rng)
        lam = 2.5
        u = solve_shifted(ctx.handle, f.values, lam, tol=1e-12)
        resid = ctx.handle.apply_h(u) + lam * u - f.values
        assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(f.values)
