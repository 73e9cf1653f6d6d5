from .catalog import BENIGN, INVALID, Technique, TechniqueCatalog
from .events import (
    ATTR_KEYS,
    DecryptedRecord,
    Direction,
    EventCategory,
    EventTrace,
    EventType,
    NetworkEvent,
    TraceOrigin,
    Transport,
    compare_events,
    validate_event,
)
from .verdict import Verdict
