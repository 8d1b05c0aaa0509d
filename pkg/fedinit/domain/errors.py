"""Exceptions raised by the domain layer.

The domain never knows about exit codes or HTTP statuses; the CLI and the
API translate these errors at the edge.
"""


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments violating its preconditions."""
