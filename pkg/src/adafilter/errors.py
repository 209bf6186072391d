"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
IdentifiabilityError -> 3, NotApplicableError -> 4.
"""


class DimensionError(ValueError):
    """Operands have mismatched support sizes or shapes."""


class MissingLabelError(ValueError):
    """An operation on labeled measures received an unlabeled one."""


class EmptyInputError(ValueError):
    """A sequence argument that must be non-empty was empty."""


class NonErgodicError(ValueError):
    """Kernel is not mixing; stationary behaviour is not guaranteed."""


class InvalidPriorError(ValueError):
    """Prior places no mass anywhere."""


class NotApplicableError(RuntimeError):
    """A bound or diagnostic is undefined here (epsilon = 0 or Lambda = inf)."""


class IdentifiabilityError(ValueError):
    """Distinct grid points induce the same limiting observation law."""


class PreconditionError(ValueError):
    """Caller violated a documented precondition."""


class ConfigError(ValueError):
    """Invalid experiment configuration or model file.

    ``details`` is a list of {"pointer": ..., "message": ...} dicts suitable
    for machine-readable error output.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or []
