"""Exception hierarchy shared across the package."""


class ScgError(Exception):
    """Base class for every domain error raised by scgdetect."""


class SchemaError(ScgError):
    pass


class ParseError(ScgError):
    pass


class EmptyRecordError(ScgError):
    pass


class TooShortError(ScgError):
    pass


class RateError(ScgError):
    pass


class ShapeError(ScgError):
    pass


class ChannelError(ScgError):
    pass


class CheckpointError(ScgError):
    pass


class TrainingError(ScgError):
    pass


class ContractError(ScgError):
    pass


class ConfigError(ScgError):
    pass


class DataError(ScgError):
    pass
