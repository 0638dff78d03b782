"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: validation problems exit 2, solver
infeasibility exits 3, I/O failures exit 4.
"""

from __future__ import annotations


class CouponliftError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(CouponliftError):
    """Malformed inputs, broken invariants, undefined estimators."""

    exit_code = 2


class DuplicateItemId(ValidationError):
    pass


class ProbabilityOutOfRange(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyArm(ValidationError):
    """A treatment or control arm contains zero records."""


class MissingGroundTruth(ValidationError):
    """Operation needs true sale probabilities but the dataset has none."""


class InvalidConfig(ValidationError):
    pass


class PopulationMismatch(ValidationError):
    """A plan and an RCT log do not cover the same item population."""


class EmptyCell(ValidationError):
    """An estimator denominator cell is empty; the estimate is undefined."""


class EmptyGroup(ValidationError):
    """A consistent treatment/control provider group is empty."""


class SolverError(CouponliftError):
    exit_code = 3


class InsufficientEligibleItems(SolverError):
    pass


class InfeasibleBudget(SolverError):
    pass


class BruteForceTooLarge(SolverError):
    """Brute-force solver refuses instances above its enumeration cap."""


class IoError(CouponliftError):
    exit_code = 4


class EstimatorWarning(UserWarning):
    """Non-fatal estimator degeneracies (e.g. a zero-coupon plan)."""
