"""Exception hierarchy for the whole package.

Each error category carries the CLI exit code it maps to: input and
format problems exit 2, model/state problems exit 3, violated internal
invariants exit 4.
"""

from __future__ import annotations


class MgdvdError(Exception):
    exit_code = 3


class InputError(MgdvdError):
    """Malformed external input: event lines, schema files, catalogs."""

    exit_code = 2


class MalformedRecordError(InputError):
    pass


class UnknownEntityTypeError(InputError):
    pass


class UnknownRelationTypeError(InputError):
    pass


class SchemaViolationError(InputError):
    """Event or pattern edge whose endpoint types do not match its relation."""


class DegenerateSchemaError(InputError):
    """Schema with fewer than two entity or relation types."""


class DanglingEndpointError(InputError):
    """Relation declared over an entity type the schema does not list."""


class OutOfOrderStreamError(InputError):
    pass


class SchemaFileError(InputError):
    pass


class CatalogError(InputError):
    pass


class NotADagError(CatalogError):
    pass


class MultipleSourcesError(CatalogError):
    pass


class MultipleTargetsError(CatalogError):
    pass


class NonProcessEndpointError(CatalogError):
    pass


class ModelError(MgdvdError):
    """Problems with model state or numeric preconditions."""

    exit_code = 3


class RootNotInGraphError(ModelError):
    pass


class EmptyGraphError(ModelError):
    pass


class MissingNodeStateError(ModelError):
    pass


class ZeroVarianceError(ModelError):
    pass


class LengthMismatchError(ModelError):
    pass


class EmptyGalleryError(ModelError):
    pass


class EmptyNeighborSetError(ModelError):
    pass


class MissingCheckpointError(ModelError):
    pass


class InsufficientFamiliesError(ModelError):
    pass


class DivergenceError(ModelError):
    """Training loss became non-finite; aborts with diagnostics attached."""


class InternalInvariantError(MgdvdError):
    exit_code = 4
