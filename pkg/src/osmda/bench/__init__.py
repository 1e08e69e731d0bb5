from .judge import JudgeFailure, JudgeScore, build_judge_prompt, geval_score
from .metrics import (
    average_rank,
    macro_f1,
    mean_absolute_error,
    multilabel_macro_f1,
    nmae,
    rsvqa_aggregate,
    rsvqa_aggregate_hr,
    rsvqa_aggregate_lr,
)
from .parsing import INVALID, parse_answer
from .prompts import InvalidSampleError, build_benchmark_prompt
from .runner import MetricReport, decode_prediction, load_dataset, run_benchmark
from .tasks import (
    BENCHMARKS,
    FINE_TUNING_SPLIT,
    GENERALIZATION_SPLIT,
    TASKS,
    BenchmarkTask,
    MetricParams,
)

__all__ = [
    "BENCHMARKS",
    "FINE_TUNING_SPLIT",
    "GENERALIZATION_SPLIT",
    "INVALID",
    "TASKS",
    "BenchmarkTask",
    "InvalidSampleError",
    "JudgeFailure",
    "JudgeScore",
    "MetricParams",
    "MetricReport",
    "average_rank",
    "build_benchmark_prompt",
    "build_judge_prompt",
    "decode_prediction",
    "geval_score",
    "load_dataset",
    "macro_f1",
    "mean_absolute_error",
    "multilabel_macro_f1",
    "nmae",
    "parse_answer",
    "rsvqa_aggregate",
    "rsvqa_aggregate_hr",
    "rsvqa_aggregate_lr",
    "run_benchmark",
]
