"""Operator-splitting time integrator for the coupled quasistatic system.

One accepted step of size dt advances the four unknowns in the fixed order

    chi  -> pointwise projection (exact backward-Euler inclusion solve),
    w    -> closed-form implicit Euler with the mean-enforcing constant H,
    p    -> damped Newton on the Kirchhoff variable v = M(p), tridiagonal,
    theta-> linear implicit step with lagged conductivity and implicit sinks.

The ordering makes each sub-problem scalar or tridiagonal and transfers the
structural guarantees to the discrete level: chi stays in [0,1] exactly, the
trapezoid mean of w is preserved exactly, the temperature system is an
M-matrix whenever the sink guard passes (hence positivity with an explicit
floor), and the assembled entropy production is nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_banded

from .constitutive import ConstitutiveModel, validate_hypotheses
from .diagnostics import DiagnosticsRecord, step_record
from .errors import ConfigError, InvariantError, SimulationAbort, StepFailure
from .geometry import Domain1D, boundary_eval, build_domain, integrate

__all__ = [
    "FieldState",
    "StepReport",
    "SolverSettings",
    "Trajectory",
    "compute_h",
    "chi_step",
    "w_step",
    "pressure_step",
    "temperature_step",
    "advance",
    "run",
    "initial_state",
    "vi_margin",
    "MEAN_W_TOL",
    "FLOOR_SLACK",
    "ENTROPY_TOL",
]

# Invariant tolerances used by the per-step audit.
MEAN_W_TOL = 1e-10
FLOOR_SLACK = 1e-6
ENTROPY_TOL = 1e-8


@dataclass
class FieldState:
    """Nodal unknowns at one time level."""

    t: float
    p: np.ndarray
    w: np.ndarray
    chi: np.ndarray
    theta: np.ndarray

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.p.copy(), self.w.copy(),
                          self.chi.copy(), self.theta.copy())


@dataclass
class StepReport:
    """Per-step solver statistics."""

    dt_used: float
    newton_iters_p: int
    newton_iters_theta: int
    h_constant: float
    residual_p: float
    residual_theta: float
    dt_limited_by: str = "none"
    dissipation_total: float = 0.0
    vi_margin: float = 0.0
    fluid_content: float = 0.0


@dataclass(frozen=True)
class SolverSettings:
    tol_p: float = 1e-10
    tol_theta: float = 1e-10
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    newton_max_iter: int = 50


class ChiUpdate(NamedTuple):
    chi: np.ndarray
    rate: np.ndarray
    force: np.ndarray
    gamma: np.ndarray


class StepRates(NamedTuple):
    """Realised discrete rates handed from the flow sub-steps to the heat step."""

    w_rate: np.ndarray
    chi_rate: np.ndarray
    chi_gamma: np.ndarray
    grad_p_sq: np.ndarray
    mu_nodes: np.ndarray


def compute_h(state: FieldState, domain: Domain1D, model: ConstitutiveModel,
              t: float, chi=None) -> float:
    """Mean-enforcing constant of the bulk volume law.

    H = -mean(p * s(chi) + beta (theta - theta_c) - G), with the same
    trapezoid weights as every other integral, so the zero-mean constraint
    on w is preserved exactly by the w update.
    """
    pr = model.params
    if chi is None:
        chi = state.chi
    bd = boundary_eval(domain, t)
    drive = (state.p * pr.mix(chi)
             + pr.beta * (model.theta_eff(state.theta) - pr.theta_c) - bd.g)
    return -integrate(drive, domain) / domain.length


def chi_step(state: FieldState, model: ConstitutiveModel, dt: float) -> ChiUpdate:
    """Backward-Euler phase update, solved exactly by projection onto [0,1].

    Returns the updated fraction together with the realised rate, the driving
    force and the relaxation coefficient actually used; the heat step must
    consume exactly these so the discrete dissipation identities close.
    """
    pr = model.params
    force = ((1.0 - pr.rho_star)
             * (model.saturation_reg_integral(state.p) + state.p * state.w)
             + pr.latent_heat * (model.theta_eff(state.theta) / pr.theta_c - 1.0))
    gamma = np.broadcast_to(model.phase_relaxation(state.theta, state.p),
                            state.chi.shape)
    chi_new = np.clip(state.chi + dt * force / gamma, 0.0, 1.0)
    return ChiUpdate(chi_new, (chi_new - state.chi) / dt, force, gamma)


def vi_margin(update: ChiUpdate) -> float:
    """Worst complementarity product of the projected phase update.

    For every node and both test values in {0, 1} the product
    (F - gamma chi_t)(chi - test) must be nonnegative up to roundoff.
    """
    xi = update.force - update.gamma * update.rate
    worst = np.minimum(xi * update.chi, xi * (update.chi - 1.0))
    return float(np.min(worst))


def w_step(state: FieldState, domain: Domain1D, model: ConstitutiveModel,
           dt: float, t_new: float, chi_new=None):
    """Closed-form implicit Euler for the relative volume change.

    The drive uses the updated phase fraction and lagged p, theta; H is
    evaluated with the same quadrature, so mean(rhs) vanishes identically and
    integrate(w) is preserved (and contracted by the elastic term).
    """
    pr = model.params
    if chi_new is None:
        chi_new = state.chi
    bd = boundary_eval(domain, t_new)
    drive = (state.p * pr.mix(chi_new)
             + pr.beta * (model.theta_eff(state.theta) - pr.theta_c) - bd.g)
    h_const = -integrate(drive, domain) / domain.length
    w_new = (pr.nu * state.w + dt * (drive + h_const)) / (pr.nu + pr.lambda_m * dt)
    return w_new, float(h_const)


def _stiffness_apply(coeff_edges: np.ndarray, values: np.ndarray, h: float) -> np.ndarray:
    """Apply the two-point flux stiffness with edgewise coefficients."""
    flux = coeff_edges * (values[1:] - values[:-1]) / h
    out = np.zeros_like(values)
    out[:-1] -= flux
    out[1:] += flux
    return out


def pressure_step(state: FieldState, domain: Domain1D, model: ConstitutiveModel,
                  dt: float, t_new: float, chi_new: np.ndarray, w_new: np.ndarray,
                  settings: SolverSettings):
    """Backward-Euler mass balance step, Newton on the Kirchhoff variable.

    Solves, for every nodal hat function, the lumped weak form

        m/dt [s(chi+)(phi(p+) + w+) - s(chi)(phi(p) + w)]
            + (1/rho_l) K v  =  alpha (p* - p+) at the endpoints,

    with v = M(p+) the Newton unknown (the diffusion term is linear in v).
    The Jacobian is tridiagonal; damping bisects the Newton step until the
    residual decreases.  Raises StepFailure on non-convergence.
    """
    pr = model.params
    m = domain.node_weights
    h = domain.h
    bd = boundary_eval(domain, t_new)
    s_new = pr.mix(chi_new)
    old_content = pr.mix(state.chi) * (model.saturation_reg(state.p) + state.w)

    def residual(v):
        p = model.pressure_from_kirchhoff(v)
        r = m / dt * (s_new * (model.saturation_reg(p) + w_new) - old_content)
        r += _stiffness_apply(np.full(domain.n_cells, 1.0), v, h) / pr.rho_l
        r[0] -= domain.alpha_left * (bd.p_star_left - p[0])
        r[-1] -= domain.alpha_right * (bd.p_star_right - p[-1])
        return r, p

    def scaled_norm(r, p):
        # dt * |weak residual| / m is an increment in field units
        return float(np.max(np.abs(r) / m)) * dt / (1.0 + float(np.max(np.abs(p))))

    v = model.kirchhoff_pressure(state.p)
    r, p = residual(v)
    best = scaled_norm(r, p)
    iters = 0
    while best > settings.tol_p:
        if iters >= settings.newton_max_iter:
            raise StepFailure("pressure_step", "newton-failure",
                              f"residual {best:.3e} after {iters} iterations")
        mu_nodes = model.mobility(p)
        diag = m / dt * s_new * model.saturation_reg_slope(p) / mu_nodes
        diag += np.concatenate([[1.0 / h], np.full(domain.n_nodes - 2, 2.0 / h),
                                [1.0 / h]]) / pr.rho_l
        diag[0] += domain.alpha_left / mu_nodes[0]
        diag[-1] += domain.alpha_right / mu_nodes[-1]
        off = np.full(domain.n_cells, -1.0 / (h * pr.rho_l))
        ab = np.zeros((3, domain.n_nodes))
        ab[0, 1:] = off
        ab[1, :] = diag
        ab[2, :-1] = off
        delta = solve_banded((1, 1), ab, -r)
        lam = 1.0
        for _ in range(40):
            r_try, p_try = residual(v + lam * delta)
            norm_try = scaled_norm(r_try, p_try)
            if norm_try < best:
                break
            lam *= 0.5
        else:
            raise StepFailure("pressure_step", "newton-failure",
                              "no residual decrease along the Newton direction")
        v = v + lam * delta
        r, p = r_try, p_try
        best = norm_try
        iters += 1
    return p, iters, best


def _nodal_grad_sq(p: np.ndarray, h: float) -> np.ndarray:
    """Average of the squared edge gradients adjacent to each node.

    The trapezoid-weighted sum of these nodal values equals the edgewise
    Dirichlet sum exactly, which is what the heat source must reproduce.
    """
    g2 = ((p[1:] - p[:-1]) / h) ** 2
    out = np.empty_like(p)
    out[0] = g2[0]
    out[-1] = g2[-1]
    out[1:-1] = 0.5 * (g2[:-1] + g2[1:])
    return out


def temperature_step(state: FieldState, domain: Domain1D, model: ConstitutiveModel,
                     dt: float, t_new: float, rates: StepRates,
                     settings: SolverSettings):
    """Semi-implicit heat step: lagged conductivity, implicit sink terms.

    The edge conductivity is the Kirchhoff secant of the lagged temperature,
    the quadratic sources use the realised discrete rates, and the two sink
    terms are linear-implicit in the new temperature.  Whenever the guard
    c0/dt + sink >= c0/(2 dt) holds nodewise the system matrix is an
    M-matrix, which preserves positivity with the explicit floor.
    """
    pr = model.params
    m = domain.node_weights
    h = domain.h
    bd = boundary_eval(domain, t_new)

    sink = (pr.latent_heat / pr.theta_c) * rates.chi_rate + pr.beta * rates.w_rate
    if np.min(pr.c0 / dt + sink) < 0.5 * pr.c0 / dt:
        raise StepFailure("temperature_step", "positivity-guard",
                          f"sink coefficient reaches {float(np.min(sink)):.3e}")

    th = state.theta
    k_vals = model.kirchhoff_temperature(th)
    dth = th[1:] - th[:-1]
    mid = model.conductivity(0.5 * (th[1:] + th[:-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        secant = (k_vals[1:] - k_vals[:-1]) / dth
    kappa_edges = np.where(np.abs(dth) > 1e-12 * np.maximum(1.0, np.abs(th[1:])),
                           secant, mid)

    source = (pr.nu * rates.w_rate ** 2
              + rates.mu_nodes * np.minimum(rates.grad_p_sq, model.cutoff_R) / pr.rho_l
              + rates.chi_gamma * rates.chi_rate ** 2)

    diag = pr.c0 * m / dt + m * sink
    diag[:-1] += kappa_edges / h
    diag[1:] += kappa_edges / h
    diag[0] += domain.omega_left
    diag[-1] += domain.omega_right
    off = -kappa_edges / h
    rhs = pr.c0 * m / dt * th + m * source
    rhs[0] += domain.omega_left * bd.theta_star_left
    rhs[-1] += domain.omega_right * bd.theta_star_right

    ab = np.zeros((3, domain.n_nodes))
    ab[0, 1:] = off
    ab[1, :] = diag
    ab[2, :-1] = off
    theta_new = solve_banded((1, 1), ab, rhs)

    if np.min(theta_new) <= 0.0:
        raise InvariantError(
            f"temperature_step produced a non-positive temperature "
            f"({float(np.min(theta_new)):.3e}) despite the sink guard")

    lhs = diag * theta_new
    lhs[:-1] += off * theta_new[1:]
    lhs[1:] += off * theta_new[:-1]
    residual = (float(np.max(np.abs(lhs - rhs) / m)) * dt
                / (pr.c0 * (1.0 + float(np.max(theta_new)))))
    if residual > settings.tol_theta:
        raise StepFailure("temperature_step", "newton-failure",
                          f"linear solve residual {residual:.3e}")
    return theta_new, residual, source


def advance(state: FieldState, domain: Domain1D, model: ConstitutiveModel,
            dt_target: float, settings: SolverSettings):
    """One accepted time step at dt <= dt_target.

    Runs the sub-steps in order chi -> w -> p -> theta; a sub-step failure
    halves dt and restarts from the pristine state, down to dt_min.
    """
    dt = dt_target
    limited = "none"
    while True:
        try:
            upd = chi_step(state, model, dt)
            t_new = state.t + dt
            w_new, h_const = w_step(state, domain, model, dt, t_new, upd.chi)
            p_new, iters_p, res_p = pressure_step(
                state, domain, model, dt, t_new, upd.chi, w_new, settings)
            rates = StepRates(
                w_rate=(w_new - state.w) / dt,
                chi_rate=upd.rate,
                chi_gamma=np.asarray(upd.gamma, dtype=float),
                grad_p_sq=_nodal_grad_sq(p_new, domain.h),
                mu_nodes=model.mobility(p_new))
            theta_new, res_t, source = temperature_step(
                state, domain, model, dt, t_new, rates, settings)
        except StepFailure as failure:
            limited = failure.reason
            dt *= 0.5
            if dt < settings.dt_min:
                raise SimulationAbort(
                    f"time step underflow below dt_min={settings.dt_min:g} in "
                    f"{failure.substep} ({failure.reason})") from failure
            continue
        break

    new_state = FieldState(t_new, p_new, w_new, upd.chi, theta_new)
    report = StepReport(
        dt_used=dt,
        newton_iters_p=iters_p,
        newton_iters_theta=1,
        h_constant=h_const,
        residual_p=res_p,
        residual_theta=res_t,
        dt_limited_by=limited if dt < dt_target else "none",
        dissipation_total=integrate(source, domain),
        vi_margin=vi_margin(upd),
        fluid_content=integrate(
            model.params.mix(upd.chi) * (model.saturation_reg(p_new) + w_new), domain))
    return new_state, report


# ----------------------------------------------------------------------
# Whole-run driver
# ----------------------------------------------------------------------

@dataclass
class Trajectory:
    """Snapshots, per-step reports and diagnostics of one simulation.

    ``rows`` holds the numeric time-series tuples (the canonical output
    record, complete even across checkpoint resume); ``reports`` and
    ``records`` keep the full per-step objects of the steps computed in this
    process.
    """

    config: object
    theta_bar: float
    snapshot_times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    records: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    current_state: FieldState | None = None

    @property
    def final_state(self) -> FieldState:
        return self.states[-1]


def initial_state(config, domain: Domain1D, model: ConstitutiveModel) -> FieldState:
    """Evaluate the initial profiles and validate them against the data rules.

    Raises ConfigError naming the violated admissibility clause: the
    temperature must stay above the declared (or implied) positive floor,
    the phase fraction must lie in [0,1], and w must have zero mean (small
    quadrature-level means are corrected, larger ones rejected).
    """
    ini = config.initial
    x = domain.x
    p0 = ini.p0.eval(x, domain.length)
    w0 = ini.w0.eval(x, domain.length)
    chi0 = ini.chi0.eval(x, domain.length)
    theta0 = ini.theta0.eval(x, domain.length)

    if np.min(theta0) <= 0.0:
        raise ConfigError(
            "initial temperature must be positive everywhere "
            f"(clause (iii); min theta0 = {float(np.min(theta0)):.6g})")
    if domain.theta_bar is not None and np.min(theta0) < domain.theta_bar:
        raise ConfigError(
            f"initial temperature falls below theta_bar = {domain.theta_bar} "
            f"(clause (iii); min theta0 = {float(np.min(theta0)):.6g})")
    if np.min(chi0) < 0.0 or np.max(chi0) > 1.0:
        raise ConfigError(
            "initial phase fraction must lie in [0, 1] (clause (vii))")
    mean_w = integrate(w0, domain)
    scale = domain.length * max(1.0, float(np.max(np.abs(w0))) if w0.size else 1.0)
    if abs(mean_w) > 1e-8 * scale:
        raise ConfigError(
            f"initial volume change must have zero mean (clause (vii); "
            f"integral = {mean_w:.6g})")
    w0 = w0 - mean_w / domain.length
    return FieldState(0.0, p0, w0, chi0, theta0)


def effective_theta_bar(theta0_min: float, domain: Domain1D) -> float:
    """Sharpest common lower bound of the initial and boundary temperatures."""
    return min(theta0_min,
               domain.theta_star_left.min_value(),
               domain.theta_star_right.min_value())


def _snapshot_schedule(t_end: float, interval: float) -> list:
    times = [0.0]
    k = 1
    while k * interval < t_end * (1.0 - 1e-12):
        times.append(k * interval)
        k += 1
    times.append(t_end)
    return times


def _check_invariants(record: DiagnosticsRecord, state: FieldState,
                      domain: Domain1D, delta_s: float, dt: float) -> None:
    if np.min(state.chi) < 0.0 or np.max(state.chi) > 1.0:
        raise InvariantError(f"phase fraction left [0,1] at t={state.t:.6g}\n{record}")
    if np.min(state.theta) <= 0.0:
        raise InvariantError(f"temperature non-positive at t={state.t:.6g}\n{record}")
    w_scale = domain.length * max(1.0, float(np.max(np.abs(state.w))))
    if abs(record.mean_w) > MEAN_W_TOL * w_scale:
        raise InvariantError(
            f"mean volume change drifted to {record.mean_w:.3e} at t={state.t:.6g}\n{record}")
    if record.theta_min < record.theta_floor * (1.0 - FLOOR_SLACK):
        raise InvariantError(
            f"temperature {record.theta_min:.6g} fell below the floor "
            f"{record.theta_floor:.6g} at t={state.t:.6g}\n{record}")
    # roundoff floor: the production is a difference of O(|S|) totals
    entropy_tol = (ENTROPY_TOL * (abs(delta_s) + dt)
                   + 1e-13 * abs(record.entropy_total))
    if record.entropy_production < -entropy_tol:
        raise InvariantError(
            f"entropy production {record.entropy_production:.3e} negative beyond "
            f"tolerance at t={state.t:.6g}\n{record}")
    if record.dissipation_total < 0.0:
        raise InvariantError(f"negative dissipation at t={state.t:.6g}\n{record}")


def run(config, *, stop_after_steps: int | None = None, resume=None) -> Trajectory:
    """Integrate from t=0 (or a resume point) to t_end.

    Snapshots are taken exactly on the configured interval grid; diagnostics
    are evaluated and audited every accepted step.  ``stop_after_steps``
    truncates the run after that many accepted steps (used for checkpoint
    tests); ``resume`` continues from a loaded checkpoint payload.
    """
    model = ConstitutiveModel(config.material, cutoff_R=config.solver.cutoff_R,
                              gamma_r_factor=config.solver.gamma_r_factor)
    report = validate_hypotheses(config.material)
    if not report.valid:
        raise ConfigError("material parameters violate admissibility:\n"
                          + "\n".join(str(i) for i in report.failures()))
    domain = build_domain(config)
    state = initial_state(config, domain, model)
    theta_bar = effective_theta_bar(float(np.min(state.theta)), domain)
    settings = SolverSettings(
        tol_p=config.solver.tol_p, tol_theta=config.solver.tol_theta,
        dt_min=config.time.dt_min, dt_max=config.time.dt_max)

    tcfg = config.time
    schedule = _snapshot_schedule(tcfg.t_end, config.output.snapshot_interval)
    traj = Trajectory(config=config, theta_bar=theta_bar)

    if resume is None:
        traj.snapshot_times.append(0.0)
        traj.states.append(state.copy())
        next_snap_idx = 1
        steps_done = 0
    else:
        state = resume.state.copy()
        traj.rows.extend(resume.records)
        traj.snapshot_times.extend(t for t, _ in resume.snapshots)
        traj.states.extend(s.copy() for _, s in resume.snapshots)
        next_snap_idx = len(resume.snapshots)
        steps_done = len(resume.records)

    eps = 1e-12
    while state.t < tcfg.t_end * (1.0 - eps) and next_snap_idx < len(schedule):
        if stop_after_steps is not None and steps_done >= stop_after_steps:
            break
        target = schedule[next_snap_idx]
        dt_target = min(tcfg.dt, tcfg.dt_max)
        remaining = target - state.t
        if remaining <= dt_target * (1.0 + 1e-9):
            dt_target = remaining
        old = state
        state, rep = advance(old, domain, model, dt_target, settings)
        landed = abs(state.t - target) <= eps * max(1.0, target)
        if landed:
            state.t = target
        record, delta_s = step_record(old, state, domain, model, theta_bar, rep)
        _check_invariants(record, state, domain, delta_s, rep.dt_used)
        traj.reports.append(rep)
        traj.records.append(record)
        traj.rows.append((
            record.t, rep.dt_used, record.energy_total, record.entropy_total,
            record.energy_residual, record.entropy_production,
            record.dissipation_total, record.mean_w, record.theta_min,
            record.theta_floor, record.chi_mean, record.p_min, record.p_max,
            rep.h_constant, rep.newton_iters_p, rep.newton_iters_theta))
        steps_done += 1
        if landed:
            traj.snapshot_times.append(target)
            traj.states.append(state.copy())
            next_snap_idx += 1
    traj.current_state = state.copy()
    return traj
