from .pipeline_offline import TracePipeline, TracePipelineOutput
from .pipeline_streaming import (
    Alert,
    AlertAction,
    SessionReport,
    StreamingPipeline,
    StreamSession,
    alert_action,
)
