"""Exception hierarchy. Every error raised by the package derives from OrmError."""


class OrmError(Exception):
    pass


# schema
class SchemaError(OrmError):
    pass


class DuplicateEntity(SchemaError):
    pass


class DuplicateLocation(SchemaError):
    pass


class InvalidDescriptor(SchemaError):
    pass


class FrozenRegistry(SchemaError):
    pass


class SchemaFormatError(SchemaError):
    """The schema document is unreadable or does not have the expected shape."""


# statement generation
class QueryError(OrmError):
    pass


class UnknownEntity(QueryError):
    pass


class UnknownField(QueryError):
    pass


class TypeMismatch(QueryError):
    pass


class MissingField(QueryError):
    pass


class EmptyChanges(QueryError):
    pass


class PrimaryKeyUpdate(QueryError):
    pass


# store access
class StorageError(OrmError):
    pass


class UnknownLocation(StorageError):
    pass


class UnsupportedStoreKind(StorageError):
    pass


class ClosedStore(StorageError):
    pass


class ConstraintViolation(StorageError):
    pass


class MalformedStatement(StorageError):
    pass


class UnknownTableOrField(StorageError):
    pass


# entity runtime
class RuntimeViolation(OrmError):
    pass


class UnknownRelation(RuntimeViolation):
    pass


class ConfidentialityViolation(RuntimeViolation):
    pass


class MissingLocation(RuntimeViolation):
    pass


class RestrictViolation(RuntimeViolation):
    pass


class DanglingForeignKey(RuntimeViolation):
    pass


class NotManyToMany(RuntimeViolation):
    pass


class DanglingEndpoint(RuntimeViolation):
    pass


class DuplicateLink(RuntimeViolation):
    pass


class NoStoresRegistered(RuntimeViolation):
    pass


class PartialCascade(RuntimeViolation):
    """A cascading delete stopped midway; ``completed`` lists what was removed."""

    def __init__(self, message, completed, cause=None):
        super().__init__(message)
        self.completed = list(completed)
        self.cause = cause


# placement
class PlacementError(OrmError):
    pass


class InvalidMetrics(PlacementError):
    pass


class InvalidObservation(PlacementError):
    pass


class NoEligibleStore(PlacementError):
    pass
