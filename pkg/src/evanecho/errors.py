"""Exception and warning types shared across the package.

Two broad families matter for the CLI exit-code contract: PhysicsError
(a simulation cannot produce a result for physical or numerical reasons,
exit code 1) and ConfigError (the input configuration is malformed or
inconsistent, exit code 2).
"""


class EvanEchoError(Exception):
    """Base class for all package-specific errors."""


class PhysicsError(EvanEchoError):
    """A physically meaningful failure (no mode, no solution, bad grid)."""


class ConfigError(EvanEchoError):
    """A problem with user-supplied configuration."""


# numerics

class NoSignChange(PhysicsError):
    """Root bracket endpoints do not straddle a sign change."""


class MaxIterations(PhysicsError):
    """Iteration cap reached before the requested tolerance."""


class NonFiniteState(PhysicsError):
    """ODE state became NaN or infinite during integration."""


class DegenerateJacobian(PhysicsError):
    """Least-squares normal equations singular beyond damping recovery."""


# waveguide

class NoGuidedMode(PhysicsError):
    """The stack supports no guided mode in the allowed index range."""


class DegenerateMode(NoGuidedMode):
    """Film too thin for the requested mode order (cutoff violated)."""


class NoSolution(PhysicsError):
    """Prism phase matching has no propagating external beam."""


# ensemble

class GridTooNarrow(PhysicsError):
    """Frequency grid does not span enough of the line to be meaningful."""


# stark

class OutOfTimeline(PhysicsError):
    """Queried time precedes the first defined voltage step."""


# config / cli

class ParseError(ConfigError):
    """Configuration file is not syntactically valid."""


class ValidationError(ConfigError):
    """Configuration violates a documented invariant; names the key path."""


# warnings

class GridWarning(UserWarning):
    """Simulation grid is too coarse or may alias; results flagged."""


class BandwidthWarning(UserWarning):
    """Excitation bandwidth is not small compared to the inhomogeneous line."""


class CutoffProximityWarning(UserWarning):
    """Solved mode sits so close to cutoff that decay lengths diverge."""


class ScheduleConflict(UserWarning):
    """Two devices are resonant during the same pulse."""
