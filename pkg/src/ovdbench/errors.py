"""Exception hierarchy.

Everything deriving from :class:`ValidationError` is a problem with user input
(malformed files, dangling references, impossible configurations). The CLI maps
those to exit code 2; anything else is treated as an internal bug.
"""


class OVDBenchError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(OVDBenchError):
    """Bad input data or configuration."""


class ParseError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class IntegrityError(ValidationError):
    pass


class NegativeScoreError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class UnknownClassError(ValidationError):
    pass


class TokenNotInCaptionError(ValidationError):
    pass


class MissingScoreError(ValidationError):
    pass


class NoAttributeError(ValidationError):
    pass


class MissingAnswerError(ValidationError):
    pass


class MultipleAnswerError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class InfeasibleError(ValidationError):
    pass
