class RelqaError(Exception):
    """Base class for data errors raised by this package."""


class CorpusParseError(RelqaError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicatePageError(RelqaError):
    pass


class TripletFormatError(RelqaError):
    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


class GraphFormatError(RelqaError):
    pass


class GraphTruncatedError(GraphFormatError):
    pass


class DatasetFormatError(RelqaError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NotMutualError(RelqaError):
    pass


class InsufficientEntitiesError(RelqaError):
    pass


class InsufficientPassagesError(RelqaError):
    pass


class CheckpointFormatError(RelqaError):
    pass


class TrainingDivergedError(RelqaError):
    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


class ConfigError(RelqaError):
    pass
