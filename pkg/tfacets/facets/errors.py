from __future__ import annotations


class TFacetsError(Exception):
    """
    Base class for all errors raised by tfacets

    Attributes
    ----------
    key : str, optional
        The identifier of the offending record (a facet ID, a line number, a path)
    """

    def __init__(self, message: str, key: str = None):
        super().__init__(message)
        self.key = key


class ConfigError(TFacetsError, ValueError):
    """A run configuration is invalid or incomplete"""


class DataError(TFacetsError, ValueError):
    """An input file could not be read or failed validation"""


class TaxonomyError(DataError):
    pass


class MalformedTaxonomy(TaxonomyError):
    pass


class DuplicateFacet(TaxonomyError):
    pass


class MultiParentFacet(DuplicateFacet):
    pass


class OrphanParent(TaxonomyError):
    pass


class TaxonomyCycle(TaxonomyError):
    pass


class LevelMismatch(TaxonomyError):
    pass


class UnknownFacet(TaxonomyError):
    pass


class IntegrityError(DataError):
    """A record refers to something that doesn't exist or breaks an invariant"""


class EmbeddingError(DataError):
    pass
