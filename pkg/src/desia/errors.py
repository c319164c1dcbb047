"""Exception types shared across the package."""


class DesiaError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DesiaError):
    """Schema construction or schema/data mismatch."""


class ParseError(DesiaError):
    """Malformed input file; message names the offending row or query."""


class ParameterError(DesiaError, ValueError):
    """Invalid argument value (negative weight, bad epsilon, m too large, ...)."""


class CapacityError(DesiaError):
    """Domain product exceeds the configured cell cap."""


class DegenerateFitError(DesiaError):
    """Classifier training received single-class labels."""
