"""Exception hierarchy shared by every module."""


class RelugapError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(RelugapError, ValueError):
    pass


class ParseError(RelugapError, ValueError):
    pass


class TrainingDivergedError(RelugapError, RuntimeError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class PoolDegenerateError(RelugapError, RuntimeError):
    pass


class PathRelaxError(RelugapError, RuntimeError):
    def __init__(self, segment, message=None):
        self.segment = segment
        super().__init__(message or f"relaxation diverged on segment {segment}")
