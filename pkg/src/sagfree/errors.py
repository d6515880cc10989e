"""Exception hierarchy shared by all modules."""


class SagFreeError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(SagFreeError, ValueError):
    pass


class DegenerateEdge(GeometryError):
    def __init__(self, edge, length):
        self.edge = int(edge)
        self.length = float(length)
        super().__init__(f"edge {self.edge} is degenerate (length {self.length:.3e})")


class TangentReversal(GeometryError):
    def __init__(self, vertex, value):
        self.vertex = int(vertex)
        self.value = float(value)
        super().__init__(
            f"tangents nearly reverse at vertex {self.vertex} (1 + t.t = {self.value:.3e})"
        )


class NonPositiveRestLength(SagFreeError, ValueError):
    pass


class SolveFailure(SagFreeError, RuntimeError):
    """The factorization of a supposedly SPD system failed."""


class ParseError(SagFreeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SagFreeError, ValueError):
    pass


class UnknownScenario(SagFreeError, KeyError):
    pass
