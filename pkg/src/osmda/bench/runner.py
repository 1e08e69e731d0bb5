"""Benchmark execution: prompt -> decode -> parse -> metric."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..client import ChatClient, EndpointError, image_part, text_part
from .judge import JudgeFailure, geval_score
from .metrics import (
    macro_f1,
    mean_absolute_error,
    multilabel_macro_f1,
    nmae,
    rsvqa_aggregate,
)
from .parsing import INVALID, parse_answer
from .prompts import build_benchmark_prompt
from .tasks import TASKS, BenchmarkTask, MetricParams, m_value

log = logging.getLogger(__name__)


class DatasetLoadError(ValueError):
    pass


@dataclass
class MetricReport:
    benchmark: str
    per_task: dict[str, dict] = field(default_factory=dict)
    aggregate: float | None = None
    predictions: list[dict] = field(default_factory=list)
    flags: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "per_task": self.per_task,
            "aggregate": self.aggregate,
            "predictions": self.predictions,
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MetricReport":
        return cls(
            benchmark=d["benchmark"],
            per_task=d["per_task"],
            aggregate=d.get("aggregate"),
            predictions=d.get("predictions", []),
            flags=d.get("flags", {}),
        )

    def cells(self) -> dict[str, float]:
        """Flat (benchmark, metric) cells for the rank table."""
        if self.aggregate is not None:
            return {f"{self.benchmark}:agg": self.aggregate}
        out = {}
        for kind, stats in self.per_task.items():
            metric = stats["metric"]
            out[f"{self.benchmark}:{metric}"] = stats["score"]
        return out


def load_dataset(path: str | Path) -> list[dict]:
    """Load and validate a JSONL benchmark dataset."""
    samples, bad = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except ValueError:
                bad.append(lineno)
                continue
            if not all(k in d for k in ("id", "image_path", "task", "gold")):
                bad.append(lineno)
                continue
            samples.append(d)
    if bad:
        raise DatasetLoadError(f"{path}: malformed sample lines {bad}")
    return samples


def decode_prediction(
    client: ChatClient, prompt: str, task: BenchmarkTask,
    image_bytes: bytes | None = None,
) -> str | None:
    """Greedy decoding at the task's token limit; None on endpoint failure."""
    content = [text_part(prompt)]
    if image_bytes is not None:
        content = [image_part(image_bytes), text_part(prompt)]
    try:
        resp = client.complete(
            content, temperature=0.0, max_tokens=task.max_new_tokens
        )
        return resp.text
    except EndpointError as e:
        log.warning("decode failed: %s", e)
        return None


def _gold_for(kind: str, gold):
    if kind == "mc_multi":
        return set(gold) if isinstance(gold, (list, str)) else gold
    if kind in ("count", "area"):
        return float(gold)
    return gold


def run_benchmark(
    client: ChatClient,
    benchmark: str,
    dataset_path: str | Path,
    judge: ChatClient | None = None,
    params: MetricParams = MetricParams(),
    rural_urban_literal: bool = False,
) -> MetricReport:
    """Evaluate one benchmark dataset end to end.

    Transport failures score as incorrect/zero and are counted in
    `flags`, never silently dropped.
    """
    if benchmark not in TASKS:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    samples = load_dataset(dataset_path)
    report = MetricReport(benchmark=benchmark)

    by_kind: dict[str, list[dict]] = {}
    for s in samples:
        kind = s["task"]
        if kind not in TASKS[benchmark]:
            raise DatasetLoadError(
                f"sample {s['id']!r}: task {kind!r} not valid for {benchmark}"
            )
        by_kind.setdefault(kind, []).append(s)

    per_kind_scores: dict[str, float] = {}
    for kind in sorted(by_kind):
        task = TASKS[benchmark][kind]
        preds, golds, judged = [], [], []
        for s in by_kind[kind]:
            prompt = build_benchmark_prompt(task, s, rural_urban_literal)
            image_bytes = None
            if s.get("image_path"):
                p = Path(s["image_path"])
                if p.exists():
                    image_bytes = p.read_bytes()
            raw = decode_prediction(client, prompt, task, image_bytes)
            if raw is None:
                report.flags["transport-failure"] = (
                    report.flags.get("transport-failure", 0) + 1
                )
            parsed = parse_answer(kind, raw, s.get("options"))
            preds.append(parsed)
            golds.append(_gold_for(kind, s["gold"]))
            record = {
                "id": s["id"],
                "task": kind,
                "raw": raw,
                "parsed": sorted(parsed) if isinstance(parsed, set) else parsed,
                "gold": sorted(golds[-1]) if isinstance(golds[-1], set) else s["gold"],
            }
            if task.metric == "g_eval":
                if judge is None:
                    raise ValueError(f"benchmark {benchmark} requires a judge endpoint")
                if parsed == INVALID:
                    judged.append(0.2)  # all judge mass on "1"
                    report.flags["judged-invalid"] = (
                        report.flags.get("judged-invalid", 0) + 1
                    )
                else:
                    try:
                        score = geval_score(
                            judge, task.judge_kind, str(s["gold"]), str(parsed),
                            question=s.get("question"),
                        )
                        judged.append(score.normalized)
                        record["g_eval"] = score.normalized
                    except JudgeFailure:
                        judged.append(0.2)
                        report.flags["judge-failure"] = (
                            report.flags.get("judge-failure", 0) + 1
                        )
            report.predictions.append(record)

        if task.metric == "g_eval":
            score = sum(judged) / len(judged)
            stats = {"metric": "g_eval", "score": score, "n": len(judged)}
        elif kind == "mc_multi":
            score = multilabel_macro_f1(preds, golds)
            stats = {"metric": "f1", "score": score, "n": len(golds)}
        elif task.metric == "nmae":
            m = m_value(task, params)
            mae = mean_absolute_error(preds, golds, invalid_error=m)
            score = nmae(mae, m)
            stats = {"metric": "nmae", "score": score, "mae": mae, "n": len(golds)}
        else:
            score = macro_f1(preds, golds, s.get("options"))
            stats = {"metric": "f1", "score": score, "n": len(golds)}
        per_kind_scores[kind] = score
        report.per_task[kind] = stats

    if benchmark in ("rsvqa_lr", "rsvqa_hr") and len(per_kind_scores) == 4:
        report.aggregate = rsvqa_aggregate(per_kind_scores)
    return report
