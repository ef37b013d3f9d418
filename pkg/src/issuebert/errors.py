"""Exception types shared across the pipeline."""


class IssueBertError(Exception):
    """Base class for all package errors."""


class DataError(IssueBertError, ValueError):
    """Malformed input data: schema, row or label problems."""


class VocabError(IssueBertError, ValueError):
    pass


class ShapeError(IssueBertError, ValueError):
    pass


class ConfigError(IssueBertError, ValueError):
    pass


class InputError(IssueBertError, ValueError):
    """Model input outside the range the model was built for."""


class CheckpointIntegrityError(IssueBertError, ValueError):
    pass


class CheckpointVersionError(IssueBertError, ValueError):
    pass


class NonFiniteLossError(IssueBertError, FloatingPointError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
