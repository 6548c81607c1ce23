"""Error taxonomy shared by the library, the service, and the CLI.

Every domain error carries a ``kind`` string so the HTTP layer can report
it and the CLI can map it onto a process exit code.
"""


class MemcoreError(Exception):
    kind = "internal"
    module = "memcore"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module


class ConfigError(MemcoreError):
    """Invalid input value, shape, or configuration."""

    kind = "config"


class OverdriveError(ConfigError):
    """Evaluation drive would push a device past its write threshold."""

    kind = "config"


class ConvergenceError(MemcoreError):
    """Iterative solve did not reach tolerance within the iteration cap."""

    kind = "convergence"

    def __init__(self, message, residual=None, iterations=None, module=None):
        super().__init__(message, module=module)
        self.residual = residual
        self.iterations = iterations


class CapacityError(MemcoreError):
    """A plan needs more hardware than the configured system provides."""

    kind = "capacity"


class FormatError(MemcoreError):
    """Malformed input file (CSV, IDX, JSON layouts)."""

    kind = "format"


EXIT_CODES = {
    "config": 2,
    "convergence": 3,
    "capacity": 4,
    "format": 5,
}


def exit_code_for(kind: str) -> int:
    return EXIT_CODES.get(kind, 1)
