import numpy as np
import pytest

from mslab.grid import Cube, GridSpec, ScalarField, VectorField, lp_norm
from mslab.operator import (
    LinkField,
    OperatorError,
    OperatorHandle,
    assemble,
    caccioppoli_check,
    check_shen_conditions,
    curl,
    diamagnetic_check,
    kato_simon_check,
)
from mslab.scenarios import constant_field, get_scenario, polynomial_field
from mslab.weights import Weight, aux_field

from conftest import random_complex_field


@pytest.fixture(scope="module")
def grid():
    return GridSpec(n=2, N=16)


@pytest.fixture(scope="module")
def const_ctx(grid):
    return get_scenario("constant-field").build(grid)


class TestCurl:
    def test_symmetric_gauge_unit_field(self, grid):
        a = VectorField(
            [
                ScalarField.from_function(grid, lambda x1, x2: -x2 / 2),
                ScalarField.from_function(grid, lambda x1, x2: x1 / 2),
            ]
        )
        B = curl(a)
        b12 = B.components[(0, 1)].values
        interior = (slice(1, -1), slice(1, -1))
        assert np.max(np.abs(b12[interior] + 1.0)) < 1e-12
        assert np.max(np.abs(B.absB.values[interior] - 2.0)) < 1e-12

    def test_pure_gauge_curl_free(self, grid):
        a = VectorField(
            [
                ScalarField.from_function(grid, lambda x1, x2: x2),
                ScalarField.from_function(grid, lambda x1, x2: x1),
            ]
        )
        B = curl(a)
        interior = (slice(1, -1), slice(1, -1))
        assert np.max(np.abs(B.components[(0, 1)].values[interior])) < 1e-12

    def test_zero_potential(self, grid):
        a = VectorField([ScalarField.zeros(grid), ScalarField.zeros(grid)])
        B = curl(a)
        assert np.max(np.abs(B.components[(0, 1)].values)) < 1e-14


class TestAssembly:
    def test_free_ground_state_matches_dirichlet_formula(self, grid):
        from mslab.calculus import eig

        handle = assemble(None, None, grid=grid)
        dec = eig(handle)
        h = grid.h
        lam_exact = 2 * grid.n * (1 - np.cos(np.pi / (grid.N + 1))) / h**2
        assert dec.smallest == pytest.approx(lam_exact, rel=1e-10)

    def test_point_source_stencil_weight(self, grid):
        handle = assemble(None, None, grid=grid)
        u = np.zeros(grid.shape, dtype=np.complex128)
        u[8, 8] = 1.0
        out = handle.apply_h(u)
        assert out[8, 8] == pytest.approx(2 * grid.n / grid.h**2, rel=1e-14)

    def test_energy_identity_random(self, const_ctx):
        rng = np.random.default_rng(0)
        handle = const_ctx.handle
        grid = handle.grid
        for _ in range(10):
            u = random_complex_field(grid, rng)
            quad = np.real(handle.inner(handle.apply_h(u.values), u.values))
            en = handle.energy(u.values)
            assert abs(quad - en) <= 1e-12 * max(en, 1.0)

    def test_hermitian_and_positive(self, const_ctx):
        rng = np.random.default_rng(1)
        handle = const_ctx.handle
        grid = handle.grid
        for _ in range(20):
            u = random_complex_field(grid, rng).values
            v = random_complex_field(grid, rng).values
            hu = handle.apply_h(u)
            hv = handle.apply_h(v)
            lhs = handle.inner(hu, v)
            rhs = handle.inner(u, hv)
            norm = lp_norm(ScalarField(grid, u), 2) * lp_norm(ScalarField(grid, v), 2)
            assert abs(lhs - rhs) <= 1e-12 * norm
            quad = np.real(handle.inner(hu, u))
            assert quad >= -1e-12 * lp_norm(ScalarField(grid, u), 2) ** 2

    def test_negative_potential_rejected(self, grid):
        V = ScalarField.constant(grid, 1.0)
        bad = ScalarField(grid, V.values - 2.0)
        with pytest.raises(Exception, match="nonnegative"):
            assemble(None, Weight(bad), grid=grid)

    def test_link_modulus_validated(self, grid):
        links = np.ones((2,) + grid.shape, dtype=np.complex128)
        links[0, 0, 0] = 2.0
        with pytest.raises(OperatorError, match="unit modulus"):
            LinkField(grid, links)

    def test_adjoint_is_exact(self, const_ctx):
        rng = np.random.default_rng(2)
        handle = const_ctx.handle
        grid = handle.grid
        u = random_complex_field(grid, rng).values
        v = random_complex_field(grid, rng).values
        for j in range(grid.n):
            lhs = handle.inner(handle.apply_l(j, u), v)
            rhs = handle.inner(u, handle.apply_l_adj(j, v))
            assert abs(lhs - rhs) < 1e-12 * grid.size


class TestDiamagnetic:
    def test_any_field_no_violation(self, const_ctx):
        rng = np.random.default_rng(3)
        for _ in range(10):
            u = random_complex_field(const_ctx.grid, rng)
            rep = diamagnetic_check(u, const_ctx.handle)
            assert rep.max_violation <= 1e-12

    def test_free_nonnegative_equality(self, grid):
        handle = assemble(None, None, grid=grid)
        rng = np.random.default_rng(4)
        u = ScalarField(grid, np.abs(rng.standard_normal(grid.shape)))
        rep = diamagnetic_check(u, handle)
        assert rep.max_violation <= 1e-12
        assert rep.max_slack <= 1e-12

    def test_phase_field_strict_somewhere(self, const_ctx):
        grid = const_ctx.grid
        rng = np.random.default_rng(5)
        theta = rng.uniform(0, 2 * np.pi, size=grid.shape)
        rho = 1 + rng.random(grid.shape)
        u = ScalarField(grid, rho * np.exp(1j * theta))
        rep = diamagnetic_check(u, const_ctx.handle)
        assert rep.max_violation <= 1e-12
        assert rep.max_slack > 1e-6


class TestKatoSimon:
    def test_free_equality(self, grid):
        handle = assemble(None, None, grid=grid)
        f = ScalarField.from_function(
            grid, lambda x1, x2: np.exp(-80 * ((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2))
        )
        rep = kato_simon_check(f, 1.0, handle)
        assert abs(rep.max_deficit) < 1e-9
        assert abs(rep.strict_gap) < 1e-9

    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_magnetic_domination(self, const_ctx, lam):
        grid = const_ctx.grid
        f = ScalarField.from_function(
            grid, lambda x1, x2: np.exp(-60 * ((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2))
        )
        rep = kato_simon_check(f, lam, const_ctx.handle)
        assert rep.passes(1e-10 * lp_norm(f, np.inf))
        if lam <= 1.0:
            assert rep.strict_gap > 0  # strict inequality somewhere

    def test_negative_probe_rejected(self, const_ctx):
        f = ScalarField.constant(const_ctx.grid, -1.0)
        with pytest.raises(OperatorError, match="nonnegative"):
            kato_simon_check(f, 1.0, const_ctx.handle)


class TestFieldConditions:
    def test_constant_field_zero_gradient_constant(self, const_ctx):
        rep = check_shen_conditions(const_ctx.B, const_ctx.aux)
        assert rep.c_gradient == pytest.approx(0.0, abs=1e-9)

    def test_polynomial_field_stable_constant(self):
        fitted = {}
        for N in (32, 64):
            ctx = get_scenario("polynomial-field").build(GridSpec(n=2, N=N))
            rep = check_shen_conditions(ctx.B, ctx.aux)
            assert np.isfinite(rep.c_gradient) and rep.c_gradient > 0
            fitted[N] = rep.c_gradient
        assert abs(fitted[64] - fitted[32]) / fitted[32] <= 0.20

    def test_constructed_potential_ratio(self, grid):
        ctx = get_scenario("constant-field").build(grid)
        aux_bv_vals = None
        # V = 0.5 * m(., |B| + V)^2 solved by iteration: start from m(., |B|)
        from mslab.weights import Weight as W
        from mslab.weights import aux_field as af

        m = ctx.aux.values.copy()
        for _ in range(40):
            V = 0.5 * m**2
            w = W(ScalarField(grid, ctx.absB.values + V))
            m_new = af(w).values
            if np.max(np.abs(m_new - m)) < 1e-10:
                m = m_new
                break
            m = m_new
        V_weight = W(ScalarField(grid, 0.5 * m**2))
        aux_bv = af(W(ScalarField(grid, ctx.absB.values + V_weight.values)))
        rep = check_shen_conditions(ctx.B, ctx.aux, V=V_weight, aux_with_potential=aux_bv)
        assert rep.c_potential == pytest.approx(0.5, rel=0.10)


class TestCaccioppoli:
    def test_zero_solution_vacuous(self, const_ctx):
        grid = const_ctx.grid
        Q = Cube(grid, (0.5, 0.5), 0.25)
        u = ScalarField.zeros(grid, complex_=True)
        f = ScalarField.zeros(grid, complex_=True)
        assert caccioppoli_check(u, f, Q, const_ctx.handle) == 0.0

    def test_doubled_cube_outside_box_rejected(self, const_ctx):
        grid = const_ctx.grid
        Q = Cube(grid, (0.1, 0.1), 0.3)
        u = ScalarField.zeros(grid, complex_=True)
        with pytest.raises(OperatorError, match="exceeds"):
            caccioppoli_check(u, u, Q, const_ctx.handle)


class TestGaugeCovariance:
    def test_sampled_gauge_change_is_second_order(self):
        # replacing a by a + grad(phi) and u by e^{i phi} u moves |L_j u|
        # by O(h^2) at interior points
        errs = {}
        for N in (16, 32, 64):
            g = GridSpec(n=2, N=N)
            w0 = 1.0

            def phi_fn(x1, x2):
                return np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)

            base = constant_field(w0)
            h1 = assemble(None, None, grid=g)
            a_fns = base.a_fns
            h_a = OperatorHandle(g, LinkField.from_callables(g, a_fns), None)
            shifted_fns = (
                lambda x1, x2: a_fns[0](x1, x2)
                + 2 * np.pi * np.cos(2 * np.pi * x1) * np.cos(2 * np.pi * x2),
                lambda x1, x2: a_fns[1](x1, x2)
                - 2 * np.pi * np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * x2),
            )
            h_shift = OperatorHandle(g, LinkField.from_callables(g, shifted_fns), None)
            u = ScalarField.from_function(
                g, lambda x1, x2: np.exp(-30 * ((x1 - 0.5) ** 2 + (x2 - 0.4) ** 2))
            )
            phi = ScalarField.from_function(g, phi_fn)
            u_conj = ScalarField(g, np.exp(1j * phi.values) * u.values)
            interior = (slice(2, -2), slice(2, -2))
            m1 = np.abs(h_a.apply_l(0, u.values))[interior]
            m2 = np.abs(h_shift.apply_l(0, u_conj.values))[interior]
            errs[N] = np.max(np.abs(m1 - m2))
        o1 = np.log2(errs[16] / errs[32])
        o2 = np.log2(errs[32] / errs[64])
        assert min(o1, o2) >= 1.8

    def test_link_level_conjugation_exact(self, const_ctx):
        grid = const_ctx.grid
        rng = np.random.default_rng(8)
        phi = ScalarField(grid, rng.uniform(-np.pi, np.pi, size=grid.shape))
        conj_links = const_ctx.handle.links.conjugated(phi)
        h2 = OperatorHandle(grid, conj_links, None, 0.0)
        u = random_complex_field(grid, rng)
        u2 = ScalarField(grid, np.exp(1j * phi.values) * u.values)
        e1 = const_ctx.handle_free_field.energy(u.values)
        e2 = h2.energy(u2.values)
        assert abs(e1 - e2) <= 1e-10 * max(e1, 1.0)
