"""Exception types raised across the toolkit.

Every error derives from :class:`SreError`; most also derive from the builtin
exception a caller would naturally catch (``ValueError``, ``OSError``).
"""


class SreError(Exception):
    """Base class for toolkit errors."""


# corpus
class UnsupportedFormat(SreError, ValueError):
    pass


class TruncatedFile(SreError, ValueError):
    pass


class OddRate(SreError, ValueError):
    pass


class ParseError(SreError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateUttId(SreError, ValueError):
    pass


class EmptyManifest(SreError, ValueError):
    pass


class InvalidSpec(SreError, ValueError):
    pass


# frontend
class TooShort(SreError, ValueError):
    pass


class RateMismatch(SreError, ValueError):
    pass


# ctdnn
class InvalidConfig(SreError, ValueError):
    pass


class ShapeMismatch(SreError, ValueError):
    pass


class LabelOutOfRange(SreError, ValueError):
    pass


class NonFiniteGradient(SreError, FloatingPointError):
    pass


class VersionMismatch(SreError, ValueError):
    pass


class CorruptTensor(SreError, ValueError):
    pass


# backend
class EmptyUtterance(SreError, ValueError):
    pass


class ZeroVector(SreError, ValueError):
    pass


class DimMismatch(SreError, ValueError):
    pass


class DegenerateScatter(SreError, ValueError):
    pass


class TooFewSamples(SreError, ValueError):
    pass


class BadDim(SreError, ValueError):
    pass


class SingularCovariance(SreError, ValueError):
    pass


# evaluation
class InsufficientData(SreError, ValueError):
    pass


class MissingEmbedding(SreError, KeyError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"no embedding for utterance {utt_id!r}")

    def __str__(self):
        return self.args[0]


class OneClassOnly(SreError, ValueError):
    pass


# config
class UnknownKey(SreError, KeyError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"unknown config key {key!r}")

    def __str__(self):
        return self.args[0]
