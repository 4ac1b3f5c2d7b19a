"""Scenario catalog: named magnetic/electric configurations on a grid.

A scenario bundles the potential (as exact callables where the catalog knows
them), the field strength, the electric potential, and lazily built expensive
artifacts (operator handle, dense spectral decomposition, auxiliary scale
field). Scenario names double as config keys for the command-line driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import GridSpec, ScalarField, VectorField
from .operator import LinkField, MagneticData, OperatorHandle, assemble, curl
from .weights import AuxField, Weight, aux_field


class ScenarioError(ValueError):
    pass


@dataclass
class FieldSpec:
    """Magnetic potential given by per-component callables of box coordinates."""

    name: str
    a_fns: Optional[tuple] = None  # None means free (a = 0)
    b_fns: Optional[dict] = None  # (j, k) -> callable, analytic strength if known

    def sample_potential(self, grid: GridSpec) -> Optional[VectorField]:
        if self.a_fns is None:
            return None
        comps = [ScalarField.from_function(grid, fn) for fn in self.a_fns]
        return VectorField(comps)

    def magnetic_data(self, grid: GridSpec) -> MagneticData:
        if self.b_fns is not None:
            comps = {
                jk: ScalarField.from_function(grid, fn) for jk, fn in self.b_fns.items()
            }
            return MagneticData(grid=grid, components=comps)
        a = self.sample_potential(grid)
        if a is None:
            return MagneticData(grid=grid, components={})
        return curl(a)


def free_field() -> FieldSpec:
    return FieldSpec(name="free", a_fns=None, b_fns=None)


def constant_field(w0: float, n: int = 2, center: float = 0.5) -> FieldSpec:
    """Symmetric-gauge potential with b_12 = -w0 (|B| = 2 w0)."""
    if n == 2:
        a_fns = (
            lambda x1, x2: -w0 * (x2 - center) / 2.0,
            lambda x1, x2: w0 * (x1 - center) / 2.0,
        )
        b_fns = {(0, 1): lambda x1, x2: -w0 * np.ones_like(x1)}
    else:
        a_fns = (
            lambda x1, x2, x3: -w0 * (x2 - center) / 2.0,
            lambda x1, x2, x3: w0 * (x1 - center) / 2.0,
            lambda x1, x2, x3: np.zeros_like(x3),
        )
        b_fns = {
            (0, 1): lambda x1, x2, x3: -w0 * np.ones_like(x1),
            (0, 2): lambda x1, x2, x3: np.zeros_like(x1),
            (1, 2): lambda x1, x2, x3: np.zeros_like(x1),
        }
    return FieldSpec(name=f"constant_field({w0})", a_fns=a_fns, b_fns=b_fns)


def polynomial_field(c0: float = 1.0, c1: float = 1.0, n: int = 2) -> FieldSpec:
    """Linear-strength scenario b_12 = c0 + c1 x1 via a = (0, -(c0 x1 + c1 x1^2/2))."""
    if n != 2:
        raise ScenarioError("polynomial field scenario is two-dimensional")
    a_fns = (
        lambda x1, x2: np.zeros_like(x1),
        lambda x1, x2: -(c0 * x1 + c1 * x1 * x1 / 2.0),
    )
    b_fns = {(0, 1): lambda x1, x2: c0 + c1 * x1}
    return FieldSpec(name=f"polynomial_field({c0},{c1})", a_fns=a_fns, b_fns=b_fns)


@dataclass
class PotentialSpec:
    """Electric potential V >= 0 as a callable of box coordinates."""

    name: str
    fn: Optional[Callable] = None  # None means V = 0

    def sample(self, grid: GridSpec) -> Optional[Weight]:
        if self.fn is None:
            return None
        return Weight(ScalarField.from_function(grid, self.fn))


def no_potential() -> PotentialSpec:
    return PotentialSpec(name="V=0", fn=None)


def constant_potential(v0: float) -> PotentialSpec:
    if v0 < 0:
        raise ScenarioError("electric potential must be nonnegative")
    return PotentialSpec(name=f"V={v0}", fn=lambda *xs: v0 * np.ones_like(xs[0]))


def radial_power_potential(gamma: float, center=None, scale: float = 1.0) -> PotentialSpec:
    """V(x) = scale * dist(x, x0)^gamma with gamma > 0."""
    if gamma <= 0:
        raise ScenarioError("radial power exponent must be positive")

    def fn(*xs):
        c = center if center is not None else [0.5] * len(xs)
        r2 = sum((x - ci) ** 2 for x, ci in zip(xs, c))
        return scale * np.sqrt(r2) ** gamma

    return PotentialSpec(name=f"V=dist^{gamma}*{scale}", fn=fn)


def expression_potential(name: str, fn: Callable) -> PotentialSpec:
    return PotentialSpec(name=name, fn=fn)


@dataclass
class Scenario:
    field_spec: FieldSpec
    potential_spec: PotentialSpec
    shift: float = 0.0

    @property
    def name(self) -> str:
        return f"{self.field_spec.name}|{self.potential_spec.name}"

    def build(self, grid: GridSpec) -> "ScenarioContext":
        return ScenarioContext(grid=grid, scenario=self)


class ScenarioContext:
    """Lazy bundle of everything the experiments need for one scenario."""

    def __init__(self, grid: GridSpec, scenario: Scenario):
        self.grid = grid
        self.scenario = scenario
        self.a = scenario.field_spec.sample_potential(grid)
        self.V = scenario.potential_spec.sample(grid)
        if scenario.field_spec.a_fns is not None:
            self.links = LinkField.from_callables(grid, scenario.field_spec.a_fns)
        else:
            self.links = LinkField.free(grid)
        self.handle = OperatorHandle(grid, self.links, self.V, scenario.shift)
        self.B = scenario.field_spec.magnetic_data(grid)
        self._dec = None
        self._dec_free = None
        self._handle_free = None
        self._aux = None
        self._aux_bv = None

    @property
    def name(self) -> str:
        return self.scenario.name

    @property
    def absB(self) -> Weight:
        return self.B.absB

    @property
    def handle_free_field(self) -> OperatorHandle:
        """Operator with the same links but V = 0 (pure magnetic part)."""
        if self._handle_free is None:
            self._handle_free = OperatorHandle(self.grid, self.links, None, 0.0)
        return self._handle_free

    @property
    def dec(self):
        if self._dec is None:
            from .calculus import eig

            self._dec = eig(self.handle)
        return self._dec

    @property
    def dec_free_field(self):
        if self._dec_free is None:
            from .calculus import eig

            self._dec_free = eig(self.handle_free_field)
        return self._dec_free

    @property
    def aux(self) -> AuxField:
        """Auxiliary scale of the field strength |B|."""
        if self._aux is None:
            self._aux = aux_field(self.absB)
        return self._aux

    @property
    def aux_with_potential(self) -> AuxField:
        """Auxiliary scale of |B| + V."""
        if self._aux_bv is None:
            vals = self.absB.values.copy()
            if self.V is not None:
                vals = vals + self.V.values
            self._aux_bv = aux_field(Weight(ScalarField(self.grid, vals)))
        return self._aux_bv

    def describe(self) -> dict:
        return {
            "name": self.name,
            "field": self.scenario.field_spec.name,
            "potential": self.scenario.potential_spec.name,
            "shift": self.scenario.shift,
        }


_CATALOG = {}


def register_defaults():
    if _CATALOG:
        return
    _CATALOG.update(
        {
            "free": Scenario(free_field(), no_potential()),
            "constant-field": Scenario(constant_field(1.0), no_potential()),
            "constant-field-strong": Scenario(constant_field(8.0), no_potential()),
            "polynomial-field": Scenario(polynomial_field(1.0, 1.0), no_potential()),
            "constant-field-with-potential": Scenario(
                constant_field(1.0), constant_potential(4.0)
            ),
            "radial-potential": Scenario(
                free_field(), radial_power_potential(1.0, scale=8.0)
            ),
            "constant-field-radial-potential": Scenario(
                constant_field(1.0), radial_power_potential(1.0, scale=8.0)
            ),
        }
    )


def get_scenario(name: str) -> Scenario:
    register_defaults()
    if name not in _CATALOG:
        raise ScenarioError(
            f"unknown scenario {name!r}; available: {sorted(_CATALOG)}"
        )
    return _CATALOG[name]


def scenario_names():
    register_defaults()
    return sorted(_CATALOG)
