"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an operation's precondition (shapes, ranges, sizes)."""


class ValidationError(ValueError):
    """Input data failed validation (self-loops, empty graphs, bad vocab)."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingError(RuntimeError):
    """Optimisation produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class MissingPrerequisite(FileNotFoundError):
    """A pipeline stage was started before the stage it depends on."""
