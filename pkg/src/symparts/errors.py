"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to.
"""


class SympartsError(Exception):
    exit_code = 4


class InputError(SympartsError):
    """Bad file, bad dimensions, or bad user-supplied parameter."""

    exit_code = 2


class ParameterError(InputError, ValueError):
    pass


class GenerationError(InputError):
    pass


class TrainingError(SympartsError):
    exit_code = 3


class FitError(SympartsError, ArithmeticError):
    """Model fit failed (degenerate region or diverging solver)."""

    exit_code = 4


class ContractError(SympartsError):
    exit_code = 4


class VersionError(InputError):
    pass
