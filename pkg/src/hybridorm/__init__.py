"""Location-aware object-relational mapping over several stores.

Records remember which store holds them, relations may span stores, and a
placement policy picks the store for new data when the caller does not.
"""

from .errors import *  # noqa: F401,F403
from .placement import (
    PlacementDecision,
    PlacementPolicy,
    PolicyWeights,
    StoreMetrics,
    choose_location,
    record_observation,
    score,
    update_metrics,
)
from .query import (
    TRUE,
    And,
    Comparison,
    Not,
    Or,
    QueryOptions,
    SortSpec,
    Statement,
    build_delete,
    build_insert,
    build_select,
    build_update,
    eq,
    ge,
    gt,
    le,
    like,
    lt,
    neq,
    render_filter,
)
from .runtime import EntityRuntime, IntegrityViolation, Record, ViewRow, check_integrity
from .schema import (
    LOCATION_ATTRIBUTE,
    Diagnostic,
    EntityDescriptor,
    FieldDescriptor,
    RelationDescriptor,
    SchemaRegistry,
    StoreDescriptor,
    load_schema,
    register_entity,
    register_store,
    validate_schema,
)
from .storage import Measurement, StoreHandle, execute, execute_raw, measure, open_store

__version__ = "0.1.0"
