"""Benchmark/task registry with per-task decoding limits and templates."""

from __future__ import annotations

from dataclasses import dataclass

FINE_TUNING_SPLIT = (
    "nwpu_captions",
    "ucm_captions",
    "rsvqa_lr",
    "rsvqa_hr",
    "vrsbench_cap",
    "vrsbench_vqa",
)
GENERALIZATION_SPLIT = (
    "aid",
    "eurosat",
    "skyscript_bench",
    "million_aid",
    "xlrs_cap",
    "xlrs_vqa",
)
BENCHMARKS = FINE_TUNING_SPLIT + GENERALIZATION_SPLIT

TASK_KINDS = (
    "caption",
    "presence",
    "count",
    "comparison",
    "area",
    "rural_urban",
    "classify",
    "mc_multi",
    "open_vqa",
)

ALLOWED_TOKEN_LIMITS = frozenset({4, 16, 32, 128, 512, 1024})


@dataclass(frozen=True)
class MetricParams:
    m_count_hr: float = 5.0
    m_count_lr: float = 150.0
    m_area: float = 1500.0


@dataclass(frozen=True)
class BenchmarkTask:
    benchmark: str
    kind: str
    max_new_tokens: int
    template: str
    metric: str  # "g_eval", "f1", or "nmae"
    judge_kind: str | None = None  # "caption" or "vqa" when g_eval applies

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.benchmark}")
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind}")
        if self.max_new_tokens not in ALLOWED_TOKEN_LIMITS:
            raise ValueError(f"token limit {self.max_new_tokens} not allowed")


def _caption(bench, tokens, template, judge_kind="caption"):
    return BenchmarkTask(bench, "caption", tokens, template, "g_eval", judge_kind)


TASKS: dict[str, dict[str, BenchmarkTask]] = {
    "nwpu_captions": {"caption": _caption("nwpu_captions", 128, "captions_short")},
    "ucm_captions": {"caption": _caption("ucm_captions", 128, "captions_short")},
    "rsvqa_lr": {
        "rural_urban": BenchmarkTask("rsvqa_lr", "rural_urban", 16,
                                     "rsvqa_rural_urban", "f1"),
        "presence": BenchmarkTask("rsvqa_lr", "presence", 16, "rsvqa_presence", "f1"),
        "count": BenchmarkTask("rsvqa_lr", "count", 16, "rsvqa_count", "nmae"),
        "comparison": BenchmarkTask("rsvqa_lr", "comparison", 16,
                                    "rsvqa_comparison", "f1"),
    },
    "rsvqa_hr": {
        "presence": BenchmarkTask("rsvqa_hr", "presence", 16, "rsvqa_presence", "f1"),
        "count": BenchmarkTask("rsvqa_hr", "count", 16, "rsvqa_count", "nmae"),
        "area": BenchmarkTask("rsvqa_hr", "area", 16, "rsvqa_area", "nmae"),
        "comparison": BenchmarkTask("rsvqa_hr", "comparison", 16,
                                    "rsvqa_comparison", "f1"),
    },
    "vrsbench_cap": {"caption": _caption("vrsbench_cap", 512, "vrsbench_caption")},
    "vrsbench_vqa": {
        "open_vqa": BenchmarkTask("vrsbench_vqa", "open_vqa", 32, "vrsbench_vqa",
                                  "g_eval", "vqa"),
    },
    "aid": {"classify": BenchmarkTask("aid", "classify", 16, "classification", "f1")},
    "eurosat": {
        "classify": BenchmarkTask("eurosat", "classify", 16, "classification", "f1"),
    },
    "skyscript_bench": {
        "classify": BenchmarkTask("skyscript_bench", "classify", 16,
                                  "classification", "f1"),
    },
    "million_aid": {
        "classify": BenchmarkTask("million_aid", "classify", 32, "million_aid", "f1"),
    },
    "xlrs_cap": {"caption": _caption("xlrs_cap", 1024, "xlrs_caption")},
    "xlrs_vqa": {
        "mc_multi": BenchmarkTask("xlrs_vqa", "mc_multi", 4, "xlrs_vqa", "f1"),
    },
}


def m_value(task: BenchmarkTask, params: MetricParams) -> float:
    """Normalization cap for nMAE tasks."""
    if task.kind == "area":
        return params.m_area
    if task.kind == "count":
        return params.m_count_hr if task.benchmark == "rsvqa_hr" else params.m_count_lr
    raise ValueError(f"task {task.kind} has no MAE normalization")
