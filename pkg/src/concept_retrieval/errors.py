"""Exception types raised across the package."""


class ConceptRetrievalError(Exception):
    """Base class for every error raised by this package."""


# --- ingestion ---------------------------------------------------------------

class EmbeddingFormatError(ConceptRetrievalError, ValueError):
    """An embedding file could not be parsed.

    ``row`` is the zero-based data row (CSV) or embedding row (binary/NPY)
    involved, ``offset`` the byte offset for binary payloads. Either may be
    ``None`` when it does not apply.
    """

    def __init__(self, message, row=None, offset=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if offset is not None:
            location.append(f"byte offset {offset}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.offset = offset


class MalformedHeaderError(EmbeddingFormatError):
    pass


class RaggedRowsError(EmbeddingFormatError):
    pass


class NonFiniteValueError(EmbeddingFormatError):
    pass


class TooFewRowsError(EmbeddingFormatError):
    pass


class ZeroNormRowError(ConceptRetrievalError, ValueError):
    def __init__(self, row_id):
        super().__init__(f"row {row_id!r} has zero norm; cosine similarity is undefined")
        self.row_id = row_id


# --- mixture fitting ---------------------------------------------------------

class InsufficientSamplesError(ConceptRetrievalError, ValueError):
    pass


class DegenerateFitError(ConceptRetrievalError, ValueError):
    """All values coincide, so there is no two-mode structure to fit."""


# --- extraction --------------------------------------------------------------

class NoConceptFound(ConceptRetrievalError):
    """No neighborhood member qualifies as a surrogate.

    ``rejections`` counts the candidates turned down for each reason.
    """

    def __init__(self, message, rejections=None):
        super().__init__(message)
        self.rejections = dict(rejections or {})


class DegenerateSubspaceError(ConceptRetrievalError, ValueError):
    pass


class ZeroConceptEmbeddingError(ConceptRetrievalError, ValueError):
    """The concept embedding vanished; the caller should skip this concept."""


# --- metrics / synthetic data ------------------------------------------------

class PoolTooSmallError(ConceptRetrievalError, ValueError):
    pass


class DegenerateDistributionError(ConceptRetrievalError, ValueError):
    pass


class InfeasibleSpecError(ConceptRetrievalError, ValueError):
    pass
