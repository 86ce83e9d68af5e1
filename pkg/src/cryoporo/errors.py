"""Exception hierarchy shared by all cryoporo modules.

The CLI maps these onto exit codes: ConfigError -> 2, SimulationAbort -> 3,
InvariantError -> 4.
"""


class CryoporoError(Exception):
    """Base class for all simulator faults."""


class ConfigError(CryoporoError):
    """Invalid configuration file, material parameters, or initial data."""


class SimulationAbort(CryoporoError):
    """Time stepping could not continue (e.g. dt underflow, I/O failure)."""


class OracleError(SimulationAbort):
    """The spectral reference integration failed."""


class InvariantError(CryoporoError):
    """A structural property the scheme guarantees was violated at runtime."""


class StepFailure(Exception):
    """Internal signal: a sub-step rejected the current dt.

    Not a user-facing fault; ``advance`` catches it and halves the step.
    """

    def __init__(self, substep: str, reason: str, detail: str = ""):
        self.substep = substep
        self.reason = reason  # "newton-failure" | "positivity-guard"
        self.detail = detail
        super().__init__(f"{substep}: {reason}" + (f" ({detail})" if detail else ""))
