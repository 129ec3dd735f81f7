"""Exception hierarchy shared by every leafcnn module."""


class LeafCNNError(Exception):
    """Base class for all errors raised by leafcnn."""


class DimensionError(LeafCNNError, ValueError):
    pass


class ParameterError(LeafCNNError, ValueError):
    pass


class NumericError(LeafCNNError, ArithmeticError):
    pass


class DataError(LeafCNNError, ValueError):
    pass


class StateError(LeafCNNError, RuntimeError):
    pass


class ParseError(DataError):
    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ImageLoadError(LeafCNNError, OSError):
    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"cannot load image {self.path}: {reason}")


class DivergenceError(LeafCNNError, ArithmeticError):
    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")


class CheckpointError(LeafCNNError):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class ManifestError(CheckpointError):
    pass


class BlobLengthError(CheckpointError):
    pass
