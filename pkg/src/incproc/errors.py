"""Exception types shared across the package."""


class IncprocError(Exception):
    """Base class for all package errors."""


class NonIrreducibleWalk(IncprocError):
    """The rate graph of the underlying walk is not strongly connected."""


class SameSite(IncprocError):
    """A particle move was requested with identical source and target."""


class MissingValue(IncprocError):
    """A state-indexed function is undefined at a state the generator needs."""


class StateSpaceTooLarge(IncprocError):
    """The configuration space exceeds the enumeration cap."""

    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"state space has {size} configurations, cap is {cap}")


class SolverFailure(IncprocError):
    """A linear solve did not meet its residual tolerance."""


class ConditionNotSatisfied(IncprocError):
    """A closed-form formula was requested outside its validity conditions."""


class DimensionMismatch(IncprocError):
    """Inputs refer to different state spaces or site sets."""


class OutOfRange(IncprocError):
    """Arguments outside the supported parameter range."""


class InvalidCase(IncprocError):
    """Unknown case label for a closed-form prediction."""


class NotSemiAttracting(IncprocError):
    """The queried set is not semi-attracting, so no prediction applies."""


class PremiseViolated(IncprocError):
    """A limiting-chain hypothesis fails; the message names the hypothesis."""


class NotSkewSymmetric(IncprocError):
    """The certificate solver requires a skew-symmetric matrix."""


class InsufficientData(IncprocError):
    """Too few points for the requested analysis."""


class WindowExceedsTrajectory(IncprocError):
    """The requested rescaled window is longer than the simulated horizon."""


class BudgetExceeded(IncprocError):
    """Every replica hit the step cap; no uncensored observations exist."""


class DegenerateData(IncprocError):
    """Data unusable for a log-log fit (too few or nonpositive points)."""


class SupportTooLarge(IncprocError):
    """Kernel support radius is too large for the torus side (needs L > 2M)."""


class NonSpanningSupport(IncprocError):
    """Kernel support does not generate the full integer lattice."""


class TooFewRelocations(IncprocError):
    """Trajectory contains too few condensate relocations for estimation."""


class ConfigError(IncprocError):
    """Invalid experiment configuration; the message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
