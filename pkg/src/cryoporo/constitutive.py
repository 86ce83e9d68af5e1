"""Material laws for freezing flow in a deformable porous medium.

Houses the water retention curve, Darcy mobility, heat conductivity and
phase relaxation coefficient together with their antiderivatives (Kirchhoff
transforms), the clamping operators used to regularise the equations, and a
numeric audit of the admissibility envelopes the solver relies on.

Default laws (chosen as the simplest closed forms satisfying every
admissibility envelope):

    phi(p)    = phi_flat + (1 - c_s - phi_flat) * Sigma_delta(p)
    Sigma_d   = normalised cumulative integral of (1 + t^2)^(-(1+d)/2)
    mu(p)     = mu0                       (constant mobility)
    kappa(th) = kappa_c * (1 + th^(1+a))  (power-law conductivity)
    gamma(th) = gamma_c * (1 + th)        (linear phase relaxation)

Sigma_delta and its integral reduce to the regularised incomplete beta
function, so every evaluator below is closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InvariantError

__all__ = [
    "MaterialParams",
    "ConstitutiveModel",
    "cutoff",
    "validate_hypotheses",
    "ValidationItem",
    "ValidationReport",
]


def cutoff(z, radius):
    """Clamp ``z`` onto [-radius, radius]; return (clamped, remainder).

    ``clamped + remainder == z`` exactly; ``radius=inf`` is a no-op clamp.
    """
    z = np.asarray(z, dtype=float)
    q = np.clip(z, -radius, radius)
    return q, z - q


@dataclass(frozen=True)
class MaterialParams:
    """Physical constants of the model.

    Defaults are laboratory-scale water/ice values; the shipped scenarios
    override them with their own (mostly nondimensional) sets.
    """

    rho_l: float = 1000.0       # liquid density [kg/m^3]
    rho_s: float = 917.0        # solid (ice) density [kg/m^3], < rho_l
    c_s: float = 0.5            # solid matrix volume fraction
    c0: float = 2.0e6           # volumetric heat capacity [J/(m^3 K)]
    latent_heat: float = 3.0e8  # volumetric latent heat [J/m^3]
    theta_c: float = 273.15     # reference melting temperature [K]
    beta: float = 1.0e5         # thermal expansion pressure coefficient [Pa/K]
    nu: float = 1.0e9           # bulk viscosity of the matrix [Pa s]
    lambda_m: float = 1.0e8     # bulk elastic modulus of the matrix [Pa]
    phi_flat: float = 0.1       # residual saturation
    delta: float = 0.2          # retention tail exponent (slope lower bound)
    delta_hat: float = 0.2      # retention tail exponent (slope upper bound)
    mu0: float = 1.0e-6         # Darcy mobility [kg/(m^3 Pa s)]
    kappa_c: float = 0.5        # conductivity scale [W/(m K)]
    a_exp: float = 0.5          # conductivity growth exponent, in (0, 1)
    gamma_c: float = 1.0e5      # phase relaxation scale

    @property
    def rho_star(self) -> float:
        """Solid/liquid density ratio."""
        return self.rho_s / self.rho_l

    def mix(self, chi):
        """Density-weighted phase factor ``chi + rho_star * (1 - chi)``."""
        return chi + self.rho_star * (1.0 - np.asarray(chi, dtype=float))


class ConstitutiveModel:
    """Closed-form evaluators for the material laws.

    All evaluators honour the clamping radius ``cutoff_R``: with the default
    ``inf`` they are the plain physical laws, while a finite radius clamps
    exactly the terms the regularised system clamps.  On any trajectory whose
    fields stay below the radius the two coincide bit for bit.

    Immutable after construction; safe for concurrent reads.
    """

    def __init__(self, params: MaterialParams, cutoff_R: float = math.inf,
                 gamma_r_factor: bool = False):
        self.params = params
        self.cutoff_R = float(cutoff_R)
        self.gamma_r_factor = bool(gamma_r_factor)
        # Retention normaliser: integral of (1+t^2)^(-(1+delta)/2) over R.
        if params.delta > 0.0:
            self._n_delta = special.beta(0.5, 0.5 * params.delta)
        else:
            self._n_delta = math.nan
        self._dphi = 1.0 - params.c_s - params.phi_flat

    # -- retention -----------------------------------------------------

    def _sigma(self, p):
        """Normalised cumulative retention kernel, in (0, 1)."""
        p = np.asarray(p, dtype=float)
        pp = p * p
        with np.errstate(invalid="ignore"):
            x = np.where(np.isinf(pp), 1.0, pp / (1.0 + pp))
        return 0.5 + 0.5 * np.sign(p) * special.betainc(0.5, 0.5 * self.params.delta, x)

    def saturation(self, p):
        """Water retention phi(p), increasing from phi_flat to 1 - c_s."""
        return self.params.phi_flat + self._dphi * self._sigma(p)

    def saturation_slope(self, p):
        """phi'(p) = (1 - c_s - phi_flat) (1+p^2)^(-(1+delta)/2) / N."""
        p = np.asarray(p, dtype=float)
        ex = -0.5 * (1.0 + self.params.delta)
        return self._dphi / self._n_delta * np.exp(ex * np.log1p(p * p))

    def pressure_potential(self, p):
        """V(p) = p phi(p) - Phi(p); positive for p != 0, V(0) = 0."""
        p = np.asarray(p, dtype=float)
        q = 0.5 * (1.0 - self.params.delta)
        base = self._dphi * np.expm1(q * np.log1p(p * p)) / (2.0 * q * self._n_delta)
        if not math.isinf(self.cutoff_R):
            base = base + p * self._p_cut(p) - self._p_cut_integral(p)
        return base

    def saturation_integral(self, p):
        """Phi(p), the antiderivative of phi with Phi(0) = 0."""
        p = np.asarray(p, dtype=float)
        return p * self.saturation(p) - self._pressure_potential_base(p)

    def _pressure_potential_base(self, p):
        q = 0.5 * (1.0 - self.params.delta)
        return self._dphi * np.expm1(q * np.log1p(p * p)) / (2.0 * q * self._n_delta)

    # clamp remainder helpers for the regularised retention curve
    def _p_cut(self, p):
        return cutoff(p, self.cutoff_R)[1]

    def _p_cut_integral(self, p):
        """Integral of the clamp remainder: sign(p) ((|p|-R)^+)^2 / 2."""
        if math.isinf(self.cutoff_R):
            return np.zeros_like(np.asarray(p, dtype=float))
        over = np.maximum(np.abs(p) - self.cutoff_R, 0.0)
        return 0.5 * np.sign(p) * over * over

    def saturation_reg(self, p):
        """phi_R = phi + (p - clamp(p)); equals phi wherever |p| <= R."""
        base = self.saturation(p)
        if math.isinf(self.cutoff_R):
            return base
        return base + self._p_cut(p)

    def saturation_reg_slope(self, p):
        base = self.saturation_slope(p)
        if math.isinf(self.cutoff_R):
            return base
        return base + (np.abs(np.asarray(p, dtype=float)) > self.cutoff_R)

    def saturation_reg_integral(self, p):
        base = self.saturation_integral(p)
        if math.isinf(self.cutoff_R):
            return base
        return base + self._p_cut_integral(p)

    def retention_eval(self, p):
        """Return (phi, phi', Phi, V) of the regularised retention curve."""
        return (self.saturation_reg(p), self.saturation_reg_slope(p),
                self.saturation_reg_integral(p), self.pressure_potential(p))

    # -- mobility --------------------------------------------------------

    def mobility(self, p):
        """Darcy mobility mu(p); constant by default."""
        return np.full_like(np.asarray(p, dtype=float), self.params.mu0)

    def kirchhoff_pressure(self, p):
        """M(p), the mobility antiderivative with M(0) = 0."""
        return self.params.mu0 * np.asarray(p, dtype=float)

    def pressure_from_kirchhoff(self, v):
        """Inverse of M; exact for the constant-mobility default."""
        return np.asarray(v, dtype=float) / self.params.mu0

    def mobility_eval(self, p):
        """Return (mu, M) at ``p``."""
        return self.mobility(p), self.kirchhoff_pressure(p)

    # -- heat ------------------------------------------------------------

    def theta_eff(self, theta):
        """Clamped nonnegative temperature min(max(theta, 0), R)."""
        return np.minimum(np.maximum(np.asarray(theta, dtype=float), 0.0),
                          self.cutoff_R)

    def _kappa_base(self, theta):
        pr = self.params
        th = np.asarray(theta, dtype=float)
        return pr.kappa_c * (1.0 + th ** (1.0 + pr.a_exp))

    def conductivity(self, theta):
        """kappa evaluated at the clamped temperature."""
        return self._kappa_base(self.theta_eff(theta))

    def _k_base(self, theta):
        pr = self.params
        th = np.asarray(theta, dtype=float)
        return pr.kappa_c * (th + th ** (2.0 + pr.a_exp) / (2.0 + pr.a_exp))

    def kirchhoff_temperature(self, theta):
        """K(theta), antiderivative of the clamped conductivity; theta >= 0."""
        th = np.asarray(theta, dtype=float)
        if np.any(th < 0.0):
            raise InvariantError("kirchhoff_temperature: negative temperature "
                                 "(upstream positivity violation)")
        if math.isinf(self.cutoff_R):
            return self._k_base(th)
        below = np.minimum(th, self.cutoff_R)
        over = np.maximum(th - self.cutoff_R, 0.0)
        return self._k_base(below) + self._kappa_base(self.cutoff_R) * over

    def temperature_from_kirchhoff(self, z):
        """Invert K by safeguarded Newton; |K(theta) - z| <= 1e-12 max(1, z).

        K is convex and increasing, so Newton from the upper bound z/kappa_c
        decreases monotonically onto the root.
        """
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        if np.any(z < 0.0):
            raise InvariantError("temperature_from_kirchhoff: negative argument "
                                 "(upstream positivity violation)")
        theta = z / self.params.kappa_c
        tol = 1e-12 * np.maximum(1.0, z)
        for _ in range(80):
            res = self.kirchhoff_temperature(theta) - z
            if np.all(np.abs(res) <= tol):
                break
            step = res / self._kappa_base(np.minimum(theta, self.cutoff_R))
            theta = np.maximum(theta - step, 0.0)
        else:
            raise InvariantError("temperature_from_kirchhoff: Newton did not converge")
        return float(theta[0]) if scalar else theta

    def phase_relaxation(self, theta, p=None):
        """gamma evaluated at the clamped temperature.

        With ``gamma_r_factor`` the regularising factor 1 + (p^2 - R^2)^+ is
        applied as well; it is inert whenever |p| <= R.
        """
        pr = self.params
        g = pr.gamma_c * (1.0 + self.theta_eff(theta))
        if self.gamma_r_factor and p is not None and not math.isinf(self.cutoff_R):
            g = g * (1.0 + np.maximum(np.asarray(p, dtype=float) ** 2
                                      - self.cutoff_R ** 2, 0.0))
        return g

    def heat_eval(self, theta):
        """Return (kappa, K, gamma) at ``theta`` (theta >= 0 required)."""
        th = np.asarray(theta, dtype=float)
        if np.any(th < 0.0):
            raise InvariantError("heat_eval: negative temperature")
        return (self.conductivity(th), self.kirchhoff_temperature(th),
                self.phase_relaxation(th))

    @property
    def c_gamma(self) -> float:
        """Lower envelope constant of gamma/(1+theta) (linear default law)."""
        return self.params.gamma_c


# ----------------------------------------------------------------------
# Admissibility audit
# ----------------------------------------------------------------------

@dataclass
class ValidationItem:
    name: str
    passed: bool
    detail: str = ""

    def __str__(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}" + (f": {self.detail}" if self.detail else "")


@dataclass
class ValidationReport:
    items: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return all(item.passed for item in self.items)

    def failures(self):
        return [item for item in self.items if not item.passed]

    def __str__(self):
        lines = [str(item) for item in self.items]
        lines.append("overall: " + ("valid" if self.valid else "INVALID"))
        return "\n".join(lines)


def _pressure_grid():
    mags = np.logspace(-3.0, 6.0, 301)
    return np.concatenate([-mags[::-1], [0.0], mags])


def _temperature_grid():
    return np.concatenate([[0.0], np.logspace(-3.0, 4.0, 301)])


def validate_hypotheses(params: MaterialParams) -> ValidationReport:
    """Audit the parameter set against the admissibility envelopes.

    Every checkable clause becomes one report item; inequality envelopes are
    sampled on logarithmic grids of p in [-1e6, 1e6] and theta in [0, 1e4].
    Failures are report items, never exceptions.
    """
    rep = ValidationReport()
    pr = params

    if pr.rho_l > 0.0:
        rep.items.append(ValidationItem(
            "rho_star in (0,1)", 0.0 < pr.rho_s / pr.rho_l < 1.0,
            f"rho_s/rho_l = {pr.rho_s / pr.rho_l:.6g}"))
    else:
        rep.items.append(ValidationItem("rho_star in (0,1)", False, "rho_l <= 0"))

    rep.items.append(ValidationItem(
        "solid fraction c_s in (0,1)", 0.0 < pr.c_s < 1.0, f"c_s = {pr.c_s:.6g}"))
    rep.items.append(ValidationItem(
        "residual saturation phi_flat in (0,1)", 0.0 < pr.phi_flat < 1.0,
        f"phi_flat = {pr.phi_flat:.6g}"))
    rep.items.append(ValidationItem(
        "phi_flat + c_s < 1", pr.phi_flat + pr.c_s < 1.0,
        f"phi_flat + c_s = {pr.phi_flat + pr.c_s:.6g}"))

    positive = {"c0": pr.c0, "latent_heat": pr.latent_heat, "theta_c": pr.theta_c,
                "nu": pr.nu, "lambda_m": pr.lambda_m, "mu0": pr.mu0,
                "kappa_c": pr.kappa_c, "gamma_c": pr.gamma_c}
    bad = [k for k, v in positive.items() if not v > 0.0]
    rep.items.append(ValidationItem(
        "positive material constants", not bad,
        "all > 0" if not bad else "non-positive: " + ", ".join(bad)))

    th = _temperature_grid()
    if pr.gamma_c > 0.0:
        ratio = pr.gamma_c * (1.0 + th) / (1.0 + th)
        rep.items.append(ValidationItem(
            "phase relaxation envelope c_gamma(1+theta) <= gamma <= C_gamma(1+theta)",
            bool(np.min(ratio) > 0.0 and np.all(np.isfinite(ratio))),
            f"c_gamma = {np.min(ratio):.6g}, C_gamma = {np.max(ratio):.6g}"))
    else:
        rep.items.append(ValidationItem(
            "phase relaxation envelope c_gamma(1+theta) <= gamma <= C_gamma(1+theta)",
            False, "gamma_c <= 0"))

    rep.items.append(ValidationItem(
        "conductivity exponent 0 < a < 1", 0.0 < pr.a_exp < 1.0,
        f"a = {pr.a_exp:.6g}"))
    if pr.kappa_c > 0.0 and 0.0 < pr.a_exp < 1.0:
        model = ConstitutiveModel(params)
        kap = model._kappa_base(th)
        low = kap / (1.0 + th ** (1.0 + pr.a_exp))
        a_hat_max = 16.0 / 5.0 + 1.2 * pr.a_exp
        rep.items.append(ValidationItem(
            "conductivity envelope c_kappa(1+theta^(1+a)) <= kappa <= C_kappa(1+theta^(1+a_hat))",
            bool(np.min(low) > 0.0 and np.all(np.isfinite(low))),
            f"c_kappa = {np.min(low):.6g}, C_kappa = {np.max(low):.6g}, "
            f"admissible a_hat in ({pr.a_exp:.3g}, {a_hat_max:.3g})"))
    else:
        rep.items.append(ValidationItem(
            "conductivity envelope c_kappa(1+theta^(1+a)) <= kappa <= C_kappa(1+theta^(1+a_hat))",
            False, "kappa_c <= 0 or a outside (0,1)"))

    exps_ok = 0.0 < pr.delta_hat <= pr.delta < 0.25
    rep.items.append(ValidationItem(
        "retention exponents 0 < delta_hat <= delta < 1/4", exps_ok,
        f"delta = {pr.delta:.6g}, delta_hat = {pr.delta_hat:.6g}"))

    if pr.delta > 0.0 and 0.0 < pr.phi_flat + pr.c_s < 1.0:
        model = ConstitutiveModel(params)
        p = _pressure_grid()
        slope = model.saturation_slope(p)
        env = np.maximum(1.0, np.abs(p))
        c_phi = np.min(slope * env ** (1.0 + pr.delta))
        big_phi = np.max(slope * env ** (1.0 + pr.delta_hat))
        rep.items.append(ValidationItem(
            "retention slope envelope c_phi max(1,|p|)^(-1-delta) <= phi' <= C_phi max(1,|p|)^(-1-delta_hat)",
            bool(c_phi > 0.0 and np.isfinite(big_phi)),
            f"c_phi = {c_phi:.6g}, C_phi = {big_phi:.6g}"))
    else:
        rep.items.append(ValidationItem(
            "retention slope envelope c_phi max(1,|p|)^(-1-delta) <= phi' <= C_phi max(1,|p|)^(-1-delta_hat)",
            False, "retention curve not evaluable (delta <= 0 or fractions invalid)"))

    if pr.mu0 > 0.0:
        rep.items.append(ValidationItem(
            "mobility envelope c_mu <= mu <= C_mu", True,
            f"c_mu = C_mu = {pr.mu0:.6g}"))
    else:
        rep.items.append(ValidationItem(
            "mobility envelope c_mu <= mu <= C_mu", False, "mu0 <= 0"))

    return rep
