from .backends import (  # noqa: F401
    BackendError,
    HttpBackend,
    ScriptRule,
    ScriptedBackend,
    ScriptedMiss,
    echo_merged_results,
)
from .pipeline import (  # noqa: F401
    ClarificationTurn,
    ExecutionResult,
    FinalResponse,
    Pipeline,
    PipelineConfig,
    PipelineError,
    QueryTrace,
    RefinedQuery,
    TaskPlan,
    UserQuery,
    load_prompt,
)
