"""Thermodynamic functionals and per-step consistency residuals.

Evaluates the discrete internal energy and entropy totals, the per-step
balance defect of the energy identity, the signed entropy production of the
second-law inequality, and the explicit positivity floor the temperature is
guaranteed never to undercut.  Rates entering the residuals are the solver's
realised discrete quotients, so these numbers audit exactly what was
integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .geometry import Domain1D, boundary_eval, g_rate, integrate

__all__ = [
    "DiagnosticsRecord",
    "energy_entropy_totals",
    "step_residuals",
    "positivity_floor",
    "floor_constant",
    "step_record",
]


@dataclass
class DiagnosticsRecord:
    """Invariant residuals and summary statistics of one accepted step."""

    t: float
    energy_total: float
    entropy_total: float
    energy_residual: float
    entropy_production: float
    dissipation_total: float
    mean_w: float
    theta_min: float
    theta_floor: float
    chi_mean: float
    p_min: float
    p_max: float

    def __str__(self):
        return ("diagnostics at t={t:.6g}: energy={energy_total:.9g} "
                "entropy={entropy_total:.9g} energy_residual={energy_residual:.3e} "
                "entropy_production={entropy_production:.3e} "
                "dissipation={dissipation_total:.6g} mean_w={mean_w:.3e} "
                "theta_min={theta_min:.6g} theta_floor={theta_floor:.6g}"
                ).format(**self.__dict__)


def energy_entropy_totals(state, domain: Domain1D, model) -> tuple:
    """Trapezoid totals of the internal energy and entropy densities.

    energy density  : c0 theta + L chi + s(chi) V(p) + lambda_m w^2 / 2
                      + (beta theta_c + G) w
    entropy density : (L/theta_c) chi + beta w + c0 (log(theta/theta_c) + 1)

    The caloric entropy part is fixed only up to a linear function, so totals
    are comparable within a run, which is all the production check needs.
    """
    pr = model.params
    if np.min(state.theta) <= 0.0:
        raise InvariantError("energy_entropy_totals: non-positive temperature")
    g = boundary_eval(domain, state.t).g
    energy = (pr.c0 * state.theta + pr.latent_heat * state.chi
              + pr.mix(state.chi) * model.pressure_potential(state.p)
              + 0.5 * pr.lambda_m * state.w ** 2
              + (pr.beta * pr.theta_c + g) * state.w)
    entropy = (pr.latent_heat / pr.theta_c * state.chi + pr.beta * state.w
               + pr.c0 * (np.log(state.theta / pr.theta_c) + 1.0))
    return integrate(energy, domain), integrate(entropy, domain)


def step_residuals(state_old, state_new, domain: Domain1D, model) -> tuple:
    """Per-step defects of the energy balance and the entropy inequality.

    energy_residual     = dE + dt [omega (theta - theta*) + alpha (p - p*) p]
                          - dt integral(G_t w),
    entropy_production  = dS + dt [omega (theta - theta*) / theta],

    with boundary terms evaluated at the new time level.  The production is
    reported signed; for this scheme it is nonnegative up to roundoff.
    """
    dt = state_new.t - state_old.t
    e_old, s_old = energy_entropy_totals(state_old, domain, model)
    e_new, s_new = energy_entropy_totals(state_new, domain, model)
    bd = boundary_eval(domain, state_new.t)
    th, p = state_new.theta, state_new.p
    heat_flux = (domain.omega_left * (th[0] - bd.theta_star_left)
                 + domain.omega_right * (th[-1] - bd.theta_star_right))
    fluid_flux = (domain.alpha_left * (p[0] - bd.p_star_left) * p[0]
                  + domain.alpha_right * (p[-1] - bd.p_star_right) * p[-1])
    forcing = integrate(g_rate(domain, state_new.t) * state_new.w, domain)
    energy_residual = (e_new - e_old) + dt * (heat_flux + fluid_flux) - dt * forcing

    entropy_flux = (domain.omega_left * (th[0] - bd.theta_star_left) / th[0]
                    + domain.omega_right * (th[-1] - bd.theta_star_right) / th[-1])
    entropy_production = (s_new - s_old) + dt * entropy_flux
    return energy_residual, entropy_production, s_new - s_old


def floor_constant(params, c_gamma: float | None = None) -> float:
    """Absorption constant of the temperature floor.

    C = L^2 / (4 theta_c^2 c_gamma) + beta^2 / (4 nu), the Young-inequality
    constant that bounds the sink terms by the square of the temperature.
    """
    if c_gamma is None:
        c_gamma = params.gamma_c
    return (params.latent_heat ** 2 / (4.0 * params.theta_c ** 2 * c_gamma)
            + params.beta ** 2 / (4.0 * params.nu))


def positivity_floor(t: float, params, theta_bar: float,
                     c_gamma: float | None = None) -> float:
    """Explicit lower bound psi(t) = theta_bar c0 / (c0 + theta_bar C t).

    psi solves c0 psi' + C psi^2 = 0 with psi(0) = theta_bar; it is positive
    and nonincreasing, and the implicit heat step never undercuts it.
    """
    c = floor_constant(params, c_gamma)
    return theta_bar * params.c0 / (params.c0 + theta_bar * c * t)


def step_record(state_old, state_new, domain: Domain1D, model,
                theta_bar: float, report) -> tuple:
    """Assemble the DiagnosticsRecord for one accepted step.

    Returns (record, entropy_change); the latter scales the production
    tolerance in the runtime audit.
    """
    e_res, s_prod, ds = step_residuals(state_old, state_new, domain, model)
    e_tot, s_tot = energy_entropy_totals(state_new, domain, model)
    record = DiagnosticsRecord(
        t=state_new.t,
        energy_total=e_tot,
        entropy_total=s_tot,
        energy_residual=e_res,
        entropy_production=s_prod,
        dissipation_total=report.dissipation_total,
        mean_w=integrate(state_new.w, domain),
        theta_min=float(np.min(state_new.theta)),
        theta_floor=positivity_floor(state_new.t, model.params, theta_bar,
                                     model.c_gamma),
        chi_mean=integrate(state_new.chi, domain) / domain.length,
        p_min=float(np.min(state_new.p)),
        p_max=float(np.max(state_new.p)),
    )
    return record, ds
