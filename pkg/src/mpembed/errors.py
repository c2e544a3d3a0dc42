"""Exception hierarchy shared by all modules."""


class MpEmbedError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class ParseError(MpEmbedError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class IntegrityError(MpEmbedError):
    pass


class TaxonomyError(MpEmbedError):
    pass


class MiningBudgetError(MpEmbedError):
    """Raised when mining exceeds ``MiningConfig.max_records``.

    The dictionary collected so far is attached as ``partial``.
    """

    exit_code = 3

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class OutOfVocabularyError(MpEmbedError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnsupportedConfigError(MpEmbedError):
    pass


class TrainingDivergedError(MpEmbedError):
    pass


class EmptyExperimentError(MpEmbedError):
    pass


class SamplingError(MpEmbedError):
    pass


class DegenerateDataError(MpEmbedError):
    pass
