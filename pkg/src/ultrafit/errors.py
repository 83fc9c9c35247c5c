"""Exception types raised across the package."""


class UltrafitError(Exception):
    """Base class for all errors raised by ultrafit."""


class DatasetError(UltrafitError):
    pass


class RaggedRow(DatasetError):
    def __init__(self, row: int, expected: int, got: int):
        self.row = row
        super().__init__(f"row {row}: expected {expected} fields, got {got}")


class NonNumericField(DatasetError):
    def __init__(self, row: int, field: str):
        self.row = row
        super().__init__(f"row {row}: non-numeric field {field!r}")


class EmptyInput(DatasetError):
    pass


class DuplicatePoints(DatasetError):
    def __init__(self, u: int, v: int):
        self.pair = (u, v)
        super().__init__(f"points {u} and {v} are identical; dedupe the input first")


class Disconnected(UltrafitError):
    """Raised when an edge set does not span all points."""

    def __init__(self, labels):
        self.labels = labels
        self.n_components = int(labels.max()) + 1 if len(labels) else 0
        super().__init__(f"edge set has {self.n_components} connected components")


class StaleHandle(UltrafitError):
    pass


class SelfMerge(UltrafitError):
    pass


class InvalidTree(UltrafitError):
    pass


class MissingWeight(UltrafitError, KeyError):
    def __init__(self, u: int, v: int):
        super().__init__(f"no cut weight for tree edge ({u}, {v})")
        self.edge = (u, v)

    def __str__(self) -> str:
        return self.args[0]
