"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code table: validation, parse, protocol,
contract and format problems are "bad input or config" (exit 2), OS-level
failures are I/O (exit 3), anything else is internal (exit 4).
"""


class VaddError(Exception):
    """Base class for all toolkit errors."""


class ParseError(VaddError):
    """A file could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(VaddError):
    """Input data violates a documented invariant."""


class ProtocolError(VaddError):
    """The swap procedure cannot be carried out on the given data."""


class ContractError(VaddError):
    """A caller violated an operation's precondition."""


class FormatError(VaddError):
    """A serialized artifact (store, plan, checkpoint, weights) is malformed."""


class TrainingDiverged(VaddError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch_index: int):
        self.epoch = epoch
        self.batch_index = batch_index
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch_index}"
        )
