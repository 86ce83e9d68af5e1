"""cryoporo: freezing/thawing flow in a deformable porous medium (1-D).

Quasistatic coupled evolution of capillary pressure, relative volume change,
liquid fraction and absolute temperature, integrated by operator splitting
with built-in structural audits (energy balance, entropy production,
temperature positivity floor, zero-mean volume, phase confinement), plus an
independent spectral reference solver for cross-validation.
"""

from .config import RunConfig, parse_config, parse_config_text
from .constitutive import (ConstitutiveModel, MaterialParams, cutoff,
                           validate_hypotheses)
from .diagnostics import (DiagnosticsRecord, energy_entropy_totals,
                          positivity_floor, step_residuals)
from .errors import (ConfigError, CryoporoError, InvariantError, OracleError,
                     SimulationAbort)
from .galerkin import (GalerkinState, compare, initial_galerkin_state,
                       neumann_basis, oracle_integrate, oracle_rhs, oracle_run)
from .geometry import (BoundarySignal, Domain1D, boundary_eval, build_domain,
                       integrate)
from .outputs import load_checkpoint, write_outputs
from .solver import (FieldState, StepReport, Trajectory, advance, chi_step,
                     compute_h, pressure_step, run, temperature_step, w_step)

__version__ = "0.1.0"
