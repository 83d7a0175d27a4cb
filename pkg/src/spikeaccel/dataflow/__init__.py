"""Dataflow schedules and the cycle-level executor."""

from .executor import (
    ExecCounters,
    ExecutionResult,
    NetworkExecution,
    execute_network,
    execute_schedule,
    finalize_output,
)
from .schedulers import (
    BUF_HEAD_ACC,
    BUF_STDP_K,
    BUF_STDP_S,
    BUF_STDP_V_TILE,
    BUF_WSSL_SPLIT,
    LAYER_PHASE,
    predict_layer,
    predict_sssc,
    predict_stdp,
    predict_wssl,
    predict_zsc,
    schedule_layer,
    schedule_sssc,
    schedule_stdp,
    schedule_wssl,
    schedule_zsc,
)
from .types import (
    PHASE_SSSC,
    PHASE_STDP,
    PHASE_STDP_SCORE,
    PHASE_STDP_SV,
    PHASE_WSSL,
    PHASE_ZSC,
    REPORT_PHASES,
    BufferOp,
    MappingPolicy,
    MemOp,
    PhaseCounters,
    Schedule,
    WorkItem,
)

__all__ = [
    "BUF_HEAD_ACC",
    "BUF_STDP_K",
    "BUF_STDP_S",
    "BUF_STDP_V_TILE",
    "BUF_WSSL_SPLIT",
    "BufferOp",
    "ExecCounters",
    "ExecutionResult",
    "LAYER_PHASE",
    "MappingPolicy",
    "MemOp",
    "NetworkExecution",
    "PHASE_SSSC",
    "PHASE_STDP",
    "PHASE_STDP_SCORE",
    "PHASE_STDP_SV",
    "PHASE_WSSL",
    "PHASE_ZSC",
    "PhaseCounters",
    "REPORT_PHASES",
    "Schedule",
    "WorkItem",
    "execute_network",
    "execute_schedule",
    "finalize_output",
    "predict_layer",
    "predict_sssc",
    "predict_stdp",
    "predict_wssl",
    "predict_zsc",
    "schedule_layer",
    "schedule_sssc",
    "schedule_stdp",
    "schedule_wssl",
    "schedule_zsc",
]
