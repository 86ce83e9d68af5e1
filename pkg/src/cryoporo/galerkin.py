"""Independent spectral reference solver (cross-validation oracle).

The Kirchhoff variables v = M(p) and z = K(theta) are expanded in the
orthonormal eigenbasis of the zero-flux Laplacian on the interval (cosines),
while w and chi are tracked pointwise at Gauss quadrature nodes; the volume
law and the phase inclusion are genuinely local, so this is exact.  The
resulting ODE system is integrated by an adaptive embedded Runge-Kutta pair
at tight tolerances, making its time error negligible against the main
solver's first-order splitting — which is what qualifies it as an oracle.

The phase inclusion under explicit-in-time integration is realised as rate
clamping (zero outward rate at the active bounds) plus projection of chi
onto [0,1] after every accepted step.

w and chi are additionally carried at the report nodes (the main solver's
grid), whose dynamics are slaved to the reconstructed modal fields; this
makes the field comparison exact rather than interpolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import RK45

from .constitutive import ConstitutiveModel
from .errors import ConfigError, OracleError
from .geometry import Domain1D, boundary_eval, build_domain, integrate
from .solver import initial_state

__all__ = [
    "GalerkinState",
    "OracleTrajectory",
    "SpectralProblem",
    "neumann_basis",
    "oracle_rhs",
    "oracle_integrate",
    "oracle_run",
    "initial_galerkin_state",
    "compare",
    "ComparisonReport",
]


def neumann_basis(k: int, domain: Domain1D):
    """k-th orthonormal zero-flux eigenpair on [0, L].

    Returns (evaluator, eigenvalue): e_0 = 1/sqrt(L) with eigenvalue 0,
    e_k(x) = sqrt(2/L) cos(k pi x / L) with eigenvalue (k pi / L)^2.
    """
    if k < 0:
        raise ValueError("mode index must be nonnegative")
    ell = domain.length
    lam = (k * math.pi / ell) ** 2
    if k == 0:
        def evaluator(x, _ell=ell):
            return np.full_like(np.asarray(x, dtype=float), 1.0 / math.sqrt(_ell))
    else:
        def evaluator(x, _k=k, _ell=ell):
            x = np.asarray(x, dtype=float)
            return math.sqrt(2.0 / _ell) * np.cos(_k * math.pi * x / _ell)
    return evaluator, lam


@dataclass
class GalerkinState:
    """Oracle unknowns: modal Kirchhoff fields plus nodal w and chi."""

    t: float
    v_coeffs: np.ndarray
    z_coeffs: np.ndarray
    w_nodes: np.ndarray     # at the Gauss quadrature nodes
    chi_nodes: np.ndarray
    w_grid: np.ndarray      # at the report (solver) grid nodes
    chi_grid: np.ndarray
    n_modes: int


class OracleDerivatives(NamedTuple):
    v_dot: np.ndarray
    z_dot: np.ndarray
    w_dot: np.ndarray
    chi_dot: np.ndarray


@dataclass
class OracleTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    grid_fields: list = field(default_factory=list)  # dicts p/w/chi/theta


class SpectralProblem:
    """Precomputed basis, quadrature and assembly for the oracle ODE system."""

    def __init__(self, domain: Domain1D, model: ConstitutiveModel, n_modes: int,
                 n_quad: int | None = None):
        self.domain = domain
        self.model = model
        self.n_modes = int(n_modes)
        nm = self.n_modes + 1
        if n_quad is None:
            n_quad = max(40, 4 * nm)
        self.n_quad = int(n_quad)
        nodes, weights = np.polynomial.legendre.leggauss(self.n_quad)
        self.xq = 0.5 * domain.length * (nodes + 1.0)
        self.wq = 0.5 * domain.length * weights
        ks = np.arange(nm)
        self.eigenvalues = (ks * math.pi / domain.length) ** 2
        self.basis = np.empty((nm, self.n_quad))
        self.basis_grad = np.empty((nm, self.n_quad))
        self.basis_left = np.empty(nm)
        self.basis_right = np.empty(nm)
        self.basis_grid = np.empty((nm, domain.n_nodes))
        for k in range(nm):
            e_k, _ = neumann_basis(k, domain)
            self.basis[k] = e_k(self.xq)
            self.basis_left[k] = float(e_k(0.0))
            self.basis_right[k] = float(e_k(domain.length))
            self.basis_grid[k] = e_k(domain.x)
            if k == 0:
                self.basis_grad[k] = 0.0
            else:
                amp = math.sqrt(2.0 / domain.length) * k * math.pi / domain.length
                self.basis_grad[k] = -amp * np.sin(k * math.pi * self.xq / domain.length)
        self.g_quad_base = np.interp(self.xq, domain.x, domain.g_profile)
        self.g_grid_base = domain.g_profile

    # -- reconstruction ------------------------------------------------

    def _temperature(self, z_vals, where: str):
        if np.any(z_vals <= 0.0):
            raise OracleError(
                f"oracle temperature reconstruction non-positive at {where} "
                f"(min Kirchhoff value {float(np.min(z_vals)):.3e})")
        return self.model.temperature_from_kirchhoff(z_vals)

    def pressures(self, state: GalerkinState):
        return self.model.pressure_from_kirchhoff(state.v_coeffs @ self.basis)

    def temperatures(self, state: GalerkinState):
        return self._temperature(state.z_coeffs @ self.basis, "quadrature nodes")

    def grid_fields(self, state: GalerkinState) -> dict:
        """Oracle fields evaluated at the report grid nodes."""
        p = self.model.pressure_from_kirchhoff(state.v_coeffs @ self.basis_grid)
        theta = self._temperature(state.z_coeffs @ self.basis_grid, "grid nodes")
        return {"p": p, "w": state.w_grid.copy(),
                "chi": np.clip(state.chi_grid, 0.0, 1.0), "theta": theta}

    # -- state packing ---------------------------------------------------

    def pack(self, state: GalerkinState) -> np.ndarray:
        return np.concatenate([state.v_coeffs, state.z_coeffs, state.w_nodes,
                               state.chi_nodes, state.w_grid, state.chi_grid])

    def unpack(self, t: float, y: np.ndarray) -> GalerkinState:
        nm = self.n_modes + 1
        nq = self.n_quad
        ng = self.domain.n_nodes
        parts = np.split(y, [nm, 2 * nm, 2 * nm + nq, 2 * nm + 2 * nq,
                             2 * nm + 2 * nq + ng])
        return GalerkinState(t, parts[0], parts[1], parts[2], parts[3],
                             parts[4], parts[5], self.n_modes)

    def chi_slices(self):
        nm = self.n_modes + 1
        nq = self.n_quad
        ng = self.domain.n_nodes
        return (slice(2 * nm + nq, 2 * nm + 2 * nq),
                slice(2 * nm + 2 * nq + ng, 2 * nm + 2 * nq + 2 * ng))

    # -- dynamics --------------------------------------------------------

    def _local_rates(self, p, w, chi, theta, g, h_const):
        """Clamped phase rate and volume rate at a set of collocation points."""
        pr = self.model.params
        force = ((1.0 - pr.rho_star)
                 * (self.model.saturation_reg_integral(p) + p * w)
                 + pr.latent_heat * (self.model.theta_eff(theta) / pr.theta_c - 1.0))
        gamma = self.model.phase_relaxation(theta, p)
        rate = force / gamma
        rate = np.where((chi >= 1.0) & (rate > 0.0), 0.0, rate)
        rate = np.where((chi <= 0.0) & (rate < 0.0), 0.0, rate)
        drive = (p * pr.mix(chi)
                 + pr.beta * (self.model.theta_eff(theta) - pr.theta_c) - g)
        w_rate = (drive + h_const - pr.lambda_m * w) / pr.nu
        return rate, w_rate

    def derivatives(self, t: float, y: np.ndarray):
        """Time derivatives of the packed state (and assembly intermediates)."""
        st = self.unpack(t, y)
        model, pr, dom = self.model, self.model.params, self.domain
        bd = boundary_eval(dom, t)
        g_q = self.g_quad_base * dom.g_time(t)
        g_grid = self.g_grid_base * dom.g_time(t)

        v_q = st.v_coeffs @ self.basis
        z_q = st.z_coeffs @ self.basis
        p_q = model.pressure_from_kirchhoff(v_q)
        theta_q = self._temperature(z_q, "quadrature nodes")
        p_left = float(model.pressure_from_kirchhoff(st.v_coeffs @ self.basis_left))
        p_right = float(model.pressure_from_kirchhoff(st.v_coeffs @ self.basis_right))
        theta_left = float(self._temperature(
            np.atleast_1d(st.z_coeffs @ self.basis_left), "left endpoint")[0])
        theta_right = float(self._temperature(
            np.atleast_1d(st.z_coeffs @ self.basis_right), "right endpoint")[0])

        mean_drive = (p_q * pr.mix(st.chi_nodes)
                      + pr.beta * (model.theta_eff(theta_q) - pr.theta_c) - g_q)
        h_const = -float(self.wq @ mean_drive) / dom.length

        chi_rate, w_rate = self._local_rates(p_q, st.w_nodes, st.chi_nodes,
                                             theta_q, g_q, h_const)

        # transport equation projected on the basis
        mu_q = model.mobility(p_q)
        s_q = pr.mix(st.chi_nodes)
        mass_coeff = s_q * model.saturation_reg_slope(p_q) / mu_q
        a_mat = (self.basis * (self.wq * mass_coeff)) @ self.basis.T
        load = ((1.0 - pr.rho_star) * chi_rate
                * (model.saturation_reg(p_q) + st.w_nodes) + s_q * w_rate)
        b_vec = (-self.eigenvalues / pr.rho_l * st.v_coeffs
                 - self.basis @ (self.wq * load)
                 + dom.alpha_left * (bd.p_star_left - p_left) * self.basis_left
                 + dom.alpha_right * (bd.p_star_right - p_right) * self.basis_right)
        v_dot = np.linalg.solve(a_mat, b_vec)

        # heat equation projected on the basis
        gamma_q = self.model.phase_relaxation(theta_q, p_q)
        grad_p = (st.v_coeffs @ self.basis_grad) / mu_q
        grad_sq = np.minimum(grad_p * grad_p, model.cutoff_R)
        source = (pr.nu * w_rate ** 2 + mu_q * grad_sq / pr.rho_l
                  + gamma_q * chi_rate ** 2)
        sink = model.theta_eff(theta_q) * (pr.latent_heat / pr.theta_c * chi_rate
                                           + pr.beta * w_rate)
        heat_mass = pr.c0 / model.conductivity(theta_q)
        b_heat = (self.basis * (self.wq * heat_mass)) @ self.basis.T
        bz_vec = (-self.eigenvalues * st.z_coeffs
                  + self.basis @ (self.wq * (source - sink))
                  + dom.omega_left * (bd.theta_star_left - theta_left) * self.basis_left
                  + dom.omega_right * (bd.theta_star_right - theta_right) * self.basis_right)
        z_dot = np.linalg.solve(b_heat, bz_vec)

        # slaved dynamics at the report nodes
        p_g = model.pressure_from_kirchhoff(st.v_coeffs @ self.basis_grid)
        theta_g = self._temperature(st.z_coeffs @ self.basis_grid, "grid nodes")
        chi_rate_g, w_rate_g = self._local_rates(p_g, st.w_grid, st.chi_grid,
                                                 theta_g, g_grid, h_const)

        y_dot = np.concatenate([v_dot, z_dot, w_rate, chi_rate,
                                w_rate_g, chi_rate_g])
        aux = {"v_dot": v_dot, "z_dot": z_dot, "h_const": h_const,
               "p_q": p_q, "theta_q": theta_q, "chi_rate": chi_rate,
               "w_rate": w_rate, "v_q": v_q}
        return y_dot, aux

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.derivatives(t, y)[0]

    # -- consistency check -------------------------------------------------

    def transport_power_balance(self, state: GalerkinState, t: float):
        """Quadrature consistency of the projected transport equation.

        Tests the equation against the modal field itself and assembles each
        term independently; the terms must balance to quadrature/solver
        precision.  Returns (terms, residual, scale).
        """
        pr = self.model.params
        _, aux = self.derivatives(t, self.pack(state))
        p_q, v_q = aux["p_q"], aux["v_q"]
        w_q, chi_q = state.w_nodes, state.chi_nodes
        v_dot_q = aux["v_dot"] @ self.basis
        p_t = v_dot_q / self.model.mobility(p_q)
        bd = boundary_eval(self.domain, t)
        p_left = float(self.model.pressure_from_kirchhoff(state.v_coeffs @ self.basis_left))
        p_right = float(self.model.pressure_from_kirchhoff(state.v_coeffs @ self.basis_right))
        v_left = float(state.v_coeffs @ self.basis_left)
        v_right = float(state.v_coeffs @ self.basis_right)
        grad_v = state.v_coeffs @ self.basis_grad
        terms = {
            "phase": float(self.wq @ ((1.0 - pr.rho_star) * aux["chi_rate"]
                                      * (self.model.saturation_reg(p_q) + w_q) * v_q)),
            "storage": float(self.wq @ (pr.mix(chi_q)
                                        * self.model.saturation_reg_slope(p_q)
                                        * p_t * v_q)),
            "volume": float(self.wq @ (pr.mix(chi_q) * aux["w_rate"] * v_q)),
            "dirichlet": float(self.wq @ (grad_v * grad_v)) / pr.rho_l,
            "boundary": (self.domain.alpha_left * (p_left - bd.p_star_left) * v_left
                         + self.domain.alpha_right * (p_right - bd.p_star_right) * v_right),
        }
        residual = sum(terms.values())
        scale = max(abs(v) for v in terms.values())
        return terms, residual, max(scale, 1e-30)


def oracle_rhs(gstate: GalerkinState, domain: Domain1D, model: ConstitutiveModel,
               t: float) -> OracleDerivatives:
    """Time derivatives of a Galerkin state (one-shot convenience wrapper)."""
    problem = SpectralProblem(domain, model, gstate.n_modes)
    if gstate.w_nodes.shape != problem.xq.shape:
        raise ConfigError("galerkin state nodal arrays do not match the "
                          "problem quadrature; build states via "
                          "initial_galerkin_state")
    _, aux = problem.derivatives(t, problem.pack(gstate))
    return OracleDerivatives(aux["v_dot"], aux["z_dot"], aux["w_rate"],
                             aux["chi_rate"])


def initial_galerkin_state(config, domain: Domain1D, model: ConstitutiveModel,
                           n_modes: int, n_quad: int | None = None) -> GalerkinState:
    """Project the configured initial data onto the oracle unknowns."""
    problem = SpectralProblem(domain, model, n_modes, n_quad)
    state0 = initial_state(config, domain, model)
    ini = config.initial
    p_q = ini.p0.eval(problem.xq, domain.length)
    w_q = ini.w0.eval(problem.xq, domain.length)
    chi_q = np.clip(ini.chi0.eval(problem.xq, domain.length), 0.0, 1.0)
    theta_q = ini.theta0.eval(problem.xq, domain.length)
    w_q = w_q - float(problem.wq @ w_q) / domain.length
    v0 = problem.basis @ (problem.wq * model.kirchhoff_pressure(p_q))
    z0 = problem.basis @ (problem.wq * model.kirchhoff_temperature(theta_q))
    return GalerkinState(0.0, v0, z0, w_q, chi_q,
                         state0.w.copy(), state0.chi.copy(), int(n_modes))


def oracle_integrate(gstate: GalerkinState, domain: Domain1D,
                     model: ConstitutiveModel, t_end: float, *,
                     snapshot_times=None, rtol: float = 1e-9,
                     atol: float = 1e-9) -> OracleTrajectory:
    """Adaptive embedded Runge-Kutta integration with per-step projection.

    chi is clamped onto [0,1] after every accepted step (rate clamping keeps
    the drift at integrator-tolerance level).  Snapshots are taken from the
    dense output at the requested times.
    """
    problem = SpectralProblem(domain, model, gstate.n_modes)
    if snapshot_times is None:
        snapshot_times = [gstate.t, t_end]
    traj = OracleTrajectory()

    def emit(t_snap, y):
        st = problem.unpack(t_snap, y.copy())
        for arr in (st.chi_nodes, st.chi_grid):
            np.clip(arr, 0.0, 1.0, out=arr)
        traj.times.append(t_snap)
        traj.states.append(st)
        traj.grid_fields.append(problem.grid_fields(st))

    eps = 1e-12
    pending = list(snapshot_times)
    if pending and abs(pending[0] - gstate.t) <= eps * max(1.0, abs(gstate.t)):
        emit(pending.pop(0), problem.pack(gstate))

    if t_end <= gstate.t + eps:
        return traj

    rk = RK45(problem.rhs, gstate.t, problem.pack(gstate), t_bound=t_end,
              rtol=rtol, atol=atol)
    sl_q, sl_g = problem.chi_slices()
    while rk.status == "running":
        rk.step()
        if rk.status == "failed":
            raise OracleError(f"oracle step failed at t={rk.t:.6g}: step size "
                              "underflow or stiffness breakdown")
        sol = None
        while pending and pending[0] <= rk.t + eps:
            if sol is None:
                sol = rk.dense_output()
            t_snap = pending.pop(0)
            emit(t_snap, sol(min(t_snap, rk.t)))
        clipped_q = np.clip(rk.y[sl_q], 0.0, 1.0)
        clipped_g = np.clip(rk.y[sl_g], 0.0, 1.0)
        if (np.any(clipped_q != rk.y[sl_q]) or np.any(clipped_g != rk.y[sl_g])):
            rk.y[sl_q] = clipped_q
            rk.y[sl_g] = clipped_g
            rk.f = rk.fun(rk.t, rk.y)
    return traj


def oracle_run(config, n_modes: int | None = None, rtol: float = 1e-9,
               atol: float = 1e-9) -> OracleTrajectory:
    """Run the oracle on a parsed configuration (solver snapshot schedule)."""
    from .solver import _snapshot_schedule  # shared schedule arithmetic

    model = ConstitutiveModel(config.material, cutoff_R=config.solver.cutoff_R,
                              gamma_r_factor=config.solver.gamma_r_factor)
    domain = build_domain(config)
    if n_modes is None:
        n_modes = config.solver.n_modes
    g0 = initial_galerkin_state(config, domain, model, n_modes)
    schedule = _snapshot_schedule(config.time.t_end, config.output.snapshot_interval)
    return oracle_integrate(g0, domain, model, config.time.t_end,
                            snapshot_times=schedule, rtol=rtol, atol=atol)


# ----------------------------------------------------------------------
# Solver/oracle comparison
# ----------------------------------------------------------------------

@dataclass
class ComparisonReport:
    times: list
    per_time: dict          # field -> list of relative L2 discrepancies
    max_discrepancy: dict   # field -> worst discrepancy over time

    def __str__(self):
        lines = ["field   max relative L2 discrepancy"]
        for name, value in self.max_discrepancy.items():
            lines.append(f"{name:6s}  {value:.6e}")
        return "\n".join(lines)


def compare(oracle_traj: OracleTrajectory, solver_traj, domain: Domain1D) -> ComparisonReport:
    """Relative L2 discrepancies per field over matched snapshot times."""
    times_o = list(oracle_traj.times)
    times_s = list(solver_traj.snapshot_times)
    if len(times_o) != len(times_s) or any(
            abs(a - b) > 1e-9 * max(1.0, abs(b)) for a, b in zip(times_o, times_s)):
        raise ConfigError(
            f"mismatched snapshot schedules: oracle {times_o} vs solver {times_s}")
    per_time = {name: [] for name in ("p", "w", "chi", "theta")}
    for fields_o, state_s in zip(oracle_traj.grid_fields, solver_traj.states):
        solver_fields = {"p": state_s.p, "w": state_s.w, "chi": state_s.chi,
                         "theta": state_s.theta}
        for name in per_time:
            diff = solver_fields[name] - fields_o[name]
            num = math.sqrt(max(integrate(diff * diff, domain), 0.0))
            den = math.sqrt(max(integrate(fields_o[name] ** 2, domain), 0.0))
            per_time[name].append(num / max(den, 1e-300))
    return ComparisonReport(times_o, per_time,
                            {name: max(vals) for name, vals in per_time.items()})
