"""Python bindings for the EfficientASR C++ core."""

from ._easr import (
    EasrError,
    ModelConfig,
    bench_memory,
    build_schedule,
    cer,
    cffn_cost,
    cffn_param_count,
    copy_task_config,
    ctc_loss,
    ffn_cost,
    mha_cost,
    model_cost_report,
    run_experiment,
    srmha_shared_cost,
)

__all__ = [
    "EasrError",
    "ModelConfig",
    "bench_memory",
    "build_schedule",
    "cer",
    "cffn_cost",
    "cffn_param_count",
    "copy_task_config",
    "ctc_loss",
    "ffn_cost",
    "mha_cost",
    "model_cost_report",
    "run_experiment",
    "srmha_shared_cost",
]
