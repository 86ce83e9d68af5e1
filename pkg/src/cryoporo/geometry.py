"""One-dimensional spatial domain, quadrature, and boundary data.

The domain is an interval with a uniform node grid; all integrals use the
composite trapezoid rule, whose weights are shared with the solver's mass
lumping so that discrete conservation statements hold exactly.  Boundary
exchange happens through two Robin coefficients per field (fluid permeability
``alpha``, heat conductance ``omega``) against prescribed outer signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError

__all__ = [
    "BoundarySignal",
    "Domain1D",
    "BoundaryData",
    "build_domain",
    "integrate",
    "boundary_eval",
    "g_rate",
]


@dataclass(frozen=True)
class BoundarySignal:
    """Piecewise-linear signal of time, clamped outside its knot range.

    A single knot is a constant, two knots a ramp.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise ConfigError("signal needs matching, non-empty knot arrays")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ConfigError("signal knots must be strictly increasing in time")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float) -> "BoundarySignal":
        return cls(np.array([0.0]), np.array([float(value)]))

    @property
    def kind(self) -> str:
        return {1: "constant", 2: "ramp"}.get(self.times.size, "table")

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def slope(self, t: float) -> float:
        """Right-continuous time derivative; zero outside the knot range."""
        if self.times.size < 2 or t < self.times[0] or t >= self.times[-1]:
            return 0.0
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(i, self.times.size - 2)
        return float((self.values[i + 1] - self.values[i])
                     / (self.times[i + 1] - self.times[i]))

    def min_value(self) -> float:
        return float(np.min(self.values))

    def max_value(self) -> float:
        return float(np.max(self.values))


@dataclass(frozen=True)
class Domain1D:
    """Uniform interval grid with Robin boundary data and body-force potential.

    ``g_profile`` holds the nodal spatial shape of the potential; the applied
    potential is ``g_profile * g_time(t)``.
    """

    length: float
    n_cells: int
    alpha_left: float = 1.0
    alpha_right: float = 1.0
    omega_left: float = 1.0
    omega_right: float = 1.0
    p_star_left: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(0.0))
    p_star_right: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(0.0))
    theta_star_left: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(273.15))
    theta_star_right: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(273.15))
    g_profile: np.ndarray | None = None
    g_time: BoundarySignal = field(default_factory=lambda: BoundarySignal.constant(1.0))
    theta_bar: float | None = None

    def __post_init__(self):
        n = int(self.n_cells)
        x = np.linspace(0.0, self.length, n + 1)
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_h", self.length / n)
        w = np.full(n + 1, self._h)
        w[0] *= 0.5
        w[-1] *= 0.5
        w.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "_weights", w)
        if self.g_profile is None:
            object.__setattr__(self, "g_profile", np.zeros(n + 1))

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def h(self) -> float:
        return self._h

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def node_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights (also the lumped-mass diagonal)."""
        return self._weights


class BoundaryData(NamedTuple):
    p_star_left: float
    p_star_right: float
    theta_star_left: float
    theta_star_right: float
    g: np.ndarray


def integrate(values, domain: Domain1D) -> float:
    """Composite trapezoid rule; exact for nodal samples of affine functions."""
    values = np.asarray(values, dtype=float)
    if values.shape != (domain.n_nodes,):
        raise ValueError(
            f"integrate: field has shape {values.shape}, expected ({domain.n_nodes},)")
    return float(domain.node_weights @ values)


def boundary_eval(domain: Domain1D, t: float) -> BoundaryData:
    """Evaluate all boundary and body signals at time ``t`` (clamped)."""
    return BoundaryData(
        domain.p_star_left(t), domain.p_star_right(t),
        domain.theta_star_left(t), domain.theta_star_right(t),
        domain.g_profile * domain.g_time(t))


def g_rate(domain: Domain1D, t: float) -> np.ndarray:
    """Nodal time derivative of the body-force potential at ``t``."""
    return domain.g_profile * domain.g_time.slope(t)


def build_domain(config) -> Domain1D:
    """Construct and validate a Domain1D from a parsed run configuration.

    Raises ConfigError naming the offending key on invalid geometry, sealed
    boundaries without the explicit opt-out, or outer temperatures below the
    declared floor.
    """
    dom = config.domain
    bnd = config.boundary
    if not dom.length > 0.0:
        raise ConfigError(f"domain.length must be positive (got {dom.length})")
    if dom.n_cells < 4:
        raise ConfigError(f"domain.n_cells must be at least 4 (got {dom.n_cells})")
    for key, val in (("alpha_left", bnd.alpha_left), ("alpha_right", bnd.alpha_right),
                     ("omega_left", bnd.omega_left), ("omega_right", bnd.omega_right)):
        if val < 0.0:
            raise ConfigError(f"boundary.{key} must be nonnegative (got {val})")
    if not bnd.allow_sealed:
        if bnd.alpha_left + bnd.alpha_right <= 0.0:
            raise ConfigError(
                "boundary fluid permeability identically zero "
                "(alpha_left + alpha_right must be positive, or set allow_sealed)")
        if bnd.omega_left + bnd.omega_right <= 0.0:
            raise ConfigError(
                "boundary heat conductivity identically zero "
                "(omega_left + omega_right must be positive, or set allow_sealed)")
    theta_min = min(bnd.theta_star_left.min_value(), bnd.theta_star_right.min_value())
    if theta_min <= 0.0:
        raise ConfigError(
            f"boundary.theta_star must stay positive (minimum {theta_min})")
    if bnd.theta_bar is not None:
        if not bnd.theta_bar > 0.0:
            raise ConfigError(f"boundary.theta_bar must be positive (got {bnd.theta_bar})")
        if theta_min < bnd.theta_bar:
            raise ConfigError(
                f"boundary.theta_star falls below theta_bar = {bnd.theta_bar} "
                f"(minimum {theta_min})")
    nodes = np.linspace(0.0, dom.length, dom.n_cells + 1)
    g_profile = bnd.g_profile.eval(nodes, dom.length)
    return Domain1D(
        length=dom.length, n_cells=dom.n_cells,
        alpha_left=bnd.alpha_left, alpha_right=bnd.alpha_right,
        omega_left=bnd.omega_left, omega_right=bnd.omega_right,
        p_star_left=bnd.p_star_left, p_star_right=bnd.p_star_right,
        theta_star_left=bnd.theta_star_left, theta_star_right=bnd.theta_star_right,
        g_profile=g_profile, g_time=bnd.g_time, theta_bar=bnd.theta_bar)
