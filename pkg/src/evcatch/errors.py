"""Exception types shared across the package."""


class EvcatchError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(EvcatchError, ValueError):
    pass


class NonTerminatingTrajectoryError(EvcatchError):
    """Ball never left the field of view within the allowed duration."""


class DistributionInfeasibleError(EvcatchError):
    """Rejection sampling acceptance rate fell below the configured floor."""


class DegenerateIntervalError(EvcatchError):
    """Two predictions share a timestamp, so a rate of change is undefined."""


class OutOfEnvelopeError(EvcatchError):
    """Requested robot displacement exceeds the configured vertical range."""


class RankDeficientError(EvcatchError):
    """Too few distinct abscissae to fit the calibration polynomial."""


class CheckpointError(EvcatchError):
    """Checkpoint file is malformed or incompatible with the loader."""


class TrainingError(EvcatchError):
    """Training diverged. Carries the epoch at which the loss became NaN."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
