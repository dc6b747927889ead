"""Exception hierarchy shared across the package."""


class FedPCError(Exception):
    """Base class for all errors raised by fedpc."""


class ShapeMismatch(FedPCError, ValueError):
    """Graphs or datasets over different variable counts were combined."""


class NoOrientation(FedPCError):
    """A partially directed graph could not be extended to a DAG."""


class Degenerate(FedPCError, ValueError):
    """A CI test was asked about a zero-variance column."""


class InsufficientSamples(FedPCError, ValueError):
    """Too few rows for the requested conditioning-set size."""


class ParseError(FedPCError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class InvalidCpt(FedPCError, ValueError):
    """A conditional probability table row does not sum to one."""


class TooFewSamples(FedPCError, ValueError):
    """Not enough rows to give every client its minimum shard."""


class SchemaMismatch(FedPCError, ValueError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__("variable sets differ across clients: " + ", ".join(self.names))
