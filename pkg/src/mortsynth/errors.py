"""Exception hierarchy shared across the toolkit.

Input/contract violations derive from :class:`InputError` so the CLI can map
them to exit code 2; everything else is a :class:`MortsynthError`.
"""

from __future__ import annotations


class MortsynthError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MortsynthError):
    """Malformed user input: bad files, bad specs, bad configuration."""


class InvalidSpecError(InputError):
    """A dimension, table, or config description violates its invariants."""


class ConstraintMismatchError(InputError):
    """A constraint references dimensions or levels a table does not have."""


class DegenerateTableError(InputError):
    """A table is unusable for the requested operation (e.g. zero total)."""


class TableParseError(InputError):
    """A table file failed to parse; message carries path and row number."""


class UnknownLevelError(InputError):
    """A categorical value outside the declared levels was encountered."""


class InfeasibleUpdateError(MortsynthError):
    """A scaling update would require mass where the current marginal is zero."""


class InfeasibleConstraintsError(MortsynthError):
    """Marginal constraints have mutually inconsistent totals."""


class InfeasibleSplitError(MortsynthError):
    """A rate split has no solution (zero weighted hazard with positive rate)."""


class RateOverflowError(MortsynthError):
    """A computed mortality rate exceeded 1; inputs are inconsistent."""


class InvalidIntensityError(InputError):
    """A Poisson intensity is negative or non-finite."""


class InsufficientSampleError(InputError):
    """A statistic needs more observations than were supplied."""


class DegenerateBasisError(InputError):
    """A smooth term's covariate cannot support the requested basis."""


class SelectionFailedError(MortsynthError):
    """No candidate smoothing parameter produced a usable fit."""
