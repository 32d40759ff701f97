"""Exception hierarchy shared by every pfmalware module."""


class PfMalwareError(Exception):
    """Base class for all errors raised by this package."""


# --- Prefetch parsing -------------------------------------------------------

class PrefetchError(PfMalwareError, ValueError):
    """Raised when a Prefetch file cannot be decoded."""


class TooShort(PrefetchError):
    pass


class UnknownSignature(PrefetchError):
    pass


class UnsupportedVersion(PrefetchError):
    pass


class UnsupportedCompressed(PrefetchError):
    """Windows 10 MAM (LZXPRESS Huffman) compressed Prefetch file."""


class TruncatedSection(PrefetchError):
    pass


class MalformedString(PrefetchError):
    pass


class InvalidArtifact(PrefetchError):
    """An artifact cannot be serialized (name too long, NUL in a path, ...)."""


# --- Labeling ---------------------------------------------------------------

class ReportParseError(PfMalwareError, ValueError):
    def __init__(self, message, line=None, offset=None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {offset})"
        super().__init__(message + where)
        self.line = line
        self.offset = offset


class DuplicateSampleId(PfMalwareError, ValueError):
    pass


class UnparsableLabel(PfMalwareError, ValueError):
    pass


class SchemeError(PfMalwareError, ValueError):
    pass


# --- Corpus / encoder -------------------------------------------------------

class EmptyDataset(PfMalwareError, ValueError):
    pass


class EmptyCorpus(PfMalwareError, ValueError):
    pass


class BadK(PfMalwareError, ValueError):
    pass


class BadConfig(PfMalwareError, ValueError):
    pass


class EmptySplit(PfMalwareError, ValueError):
    pass


# --- Models -----------------------------------------------------------------

class IndexOutOfVocab(PfMalwareError, ValueError):
    pass


class NonFiniteLoss(PfMalwareError, FloatingPointError):
    def __init__(self, loss, epoch=None, batch=None):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.loss = loss
        self.epoch = epoch
        self.batch = batch


class IndexMismatch(PfMalwareError, ValueError):
    pass


class RankTooLarge(PfMalwareError, ValueError):
    pass


class Degenerate(PfMalwareError, ValueError):
    pass


class LengthMismatch(PfMalwareError, ValueError):
    pass


# --- Persistence ------------------------------------------------------------

class ContainerError(PfMalwareError, ValueError):
    pass


class BadMagic(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class ShapeMismatch(ContainerError):
    pass
