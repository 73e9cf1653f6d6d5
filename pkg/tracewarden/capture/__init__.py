from .session import (
    CapturedRun,
    SessionArtifacts,
    SessionHandle,
    begin_session,
    capture_session,
    end_session,
    run_captured,
)
