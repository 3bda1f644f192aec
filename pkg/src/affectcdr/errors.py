"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (input 2, domain 3, integrity 4) and the
HTTP service maps them onto status codes with ``{code, message}`` bodies.
"""


class AffectCdrError(Exception):
    """Base class for all package errors."""

    code = "error"


# --- input / parsing -------------------------------------------------------

class InvalidParameterError(AffectCdrError, ValueError):
    code = "invalid-parameter"


class ShapeError(AffectCdrError, ValueError):
    code = "shape-mismatch"


class ParseError(AffectCdrError):
    code = "parse-error"


class CatalogError(AffectCdrError):
    """Catalog files failed to load: parse failure, duplicate id, bad schema."""

    code = "catalog-error"


# --- domain ----------------------------------------------------------------

class MissingLexiconEntryError(AffectCdrError):
    code = "missing-lexicon-entry"


class DegenerateLabelError(AffectCdrError):
    code = "degenerate-label"


class InvalidCatalogError(AffectCdrError):
    code = "invalid-catalog"


class InsufficientDataError(AffectCdrError):
    code = "insufficient-data"


class DivergenceError(AffectCdrError):
    code = "divergence"


class DegenerateEmbeddingError(AffectCdrError):
    code = "degenerate-embedding"


class UnknownItemError(AffectCdrError):
    code = "unknown-item"


class NoPreferencesError(AffectCdrError):
    code = "no-preferences"


class UniverseError(AffectCdrError):
    code = "universe-mismatch"


class LabelError(AffectCdrError):
    code = "missing-label"


# --- persistence -----------------------------------------------------------

class IntegrityError(AffectCdrError):
    code = "integrity-error"


# --- service ---------------------------------------------------------------

class NotReadyError(AffectCdrError):
    code = "not-ready"


class SessionValidationError(AffectCdrError):
    code = "validation-error"


class SessionStateError(AffectCdrError):
    code = "state-error"


class SessionConflictError(AffectCdrError):
    code = "conflict"


INPUT_ERRORS = (InvalidParameterError, ShapeError, ParseError, CatalogError)
INTEGRITY_ERRORS = (IntegrityError,)
