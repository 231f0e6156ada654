"""Near-RT RIC: node registry, subscription manager, indication/control routing."""
from .core import (
    DuplicateXapp,
    NearRtRic,
    NodeRecord,
    PendingControl,
    PeriodTooSmall,
    RicError,
    Route,
    UnknownNode,
    UnknownXapp,
)
from .server import RicServer
