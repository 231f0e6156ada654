"""xApp SDK: SM connector, feature reducer, action spaces and the example xApps."""
from .actions import (
    Action,
    ActionSpace,
    partition_catalog,
    sched_action_space,
    sched_slicing_action_space,
)
from .apps import InvalidShare, PrioritizeXApp, prioritize_xapp, sched_slicing_xapp, sched_xapp
from .connector import Decision, XApp, XAppDescriptor
from .features import InsufficientHistory, WindowFeatureReducer, window_features
