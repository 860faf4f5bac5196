"""Exception hierarchy.

Input problems derive from ``ValueError`` and numerical breakdowns from
``ArithmeticError`` so callers (and the CLI exit codes) can tell them apart.
"""


class InputError(ValueError):
    """Invalid user input: shapes, ranges, file contents, config keys."""


class DegenerateGraphError(InputError):
    """A vertex has zero degree or the graph is disconnected."""


class PreconditionError(InputError):
    """A theoretical hypothesis of an operation is violated."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures inside an algorithm."""


class DegenerateDegreeError(NumericalError):
    """Estimated degrees are not strictly positive."""


class IllConditionedKernelError(NumericalError):
    """The landmark kernel block is numerically singular."""


class SingularStepError(NumericalError):
    """A time-step operator is singular."""


class MethodFailureError(NumericalError):
    """A b-computation method broke down; try another one."""
