"""Exception hierarchy shared across the toolkit.

Two broad families matter to callers: numeric failures (a computation ran
but could not reach the requested accuracy or would overflow) and invariant
violations (inputs or results break a structural guarantee).  The command
line maps these to distinct exit codes.
"""

from __future__ import annotations


class MecatError(Exception):
    """Base class for all toolkit-specific errors."""


class NumericError(MecatError):
    """A numeric routine failed to deliver the requested accuracy."""


class QuadratureError(NumericError):
    """Adaptive quadrature did not converge within its error budget."""


class ConvergenceError(NumericError):
    """An iteration (inverse iteration, root finding) failed to converge."""


class OverflowGuardError(NumericError):
    """A computation was refused because its magnitude bound overflows."""


class InvariantViolation(MecatError):
    """An input or result violates a structural invariant."""


class RateBoundError(InvariantViolation):
    """A rate modulation exceeded the unit bound |f(t)| <= 1."""


class ProbabilityError(InvariantViolation):
    """A vector claimed to be a probability distribution is not one."""


class StateSpaceCapError(InvariantViolation):
    """A generated state space exceeded the configured cap."""


class AdjudicationError(InvariantViolation):
    """Splitting-constant adjudication did not produce a unique winner."""


class AdjudicationPendingError(InvariantViolation):
    """Splitting constants were requested before being adjudicated.

    Run ``mecat.exactexp.ensure_splitting_constants()`` (or any entry point
    that does, such as ``propagate``) before calling code that needs the
    validated constant table.
    """
