"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
1 for usage/configuration problems, 2 for data or protocol problems and
3 for numeric failures.
"""


class AmcError(Exception):
    exit_code = 2


class ConfigurationError(AmcError):
    exit_code = 1


class InputError(AmcError):
    pass


class DegenerateInputError(InputError):
    pass


class ShapeError(AmcError):
    pass


class DomainError(AmcError):
    pass


class FormatError(AmcError):
    pass


class ProtocolError(AmcError):
    pass


class SplitError(AmcError):
    pass


class ThreatModelError(AmcError):
    pass


class NumericError(AmcError):
    exit_code = 3
