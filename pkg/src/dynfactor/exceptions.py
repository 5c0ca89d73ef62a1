"""Exception types shared across the package.

``DataError`` signals malformed or insufficient input data; ``NumericalError``
signals a numerical breakdown (divergent filter, singular system, failed
optimization).  The CLI maps these onto distinct exit codes.
"""


class DataError(ValueError):
    """Input data violates a contract (bad file, bad panel, bad window)."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond its recovery budget."""
