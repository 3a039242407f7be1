class DimensionError(ValueError):
    """Matrix shapes are inconsistent with the requested operation."""


class NumericError(ArithmeticError):
    """A numerical kernel hit overflow, a non-SPD pivot, or similar."""


class IngestionError(ValueError):
    """An input file does not match the expected schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MetricError(ValueError):
    """A metric is undefined for the supplied inputs."""
