"""Scoring: macro-F1, MAE/nMAE, RSVQA aggregation, average ranks."""

from __future__ import annotations

from scipy.stats import rankdata

from .parsing import INVALID
from .tasks import FINE_TUNING_SPLIT, GENERALIZATION_SPLIT, MetricParams


def macro_f1(preds, golds, classes=None) -> float:
    """Unweighted mean of per-class F1 over the classes present in golds.

    INVALID predictions count as a false negative for the gold class and
    produce no false positive anywhere.
    """
    if not golds or len(preds) != len(golds):
        raise ValueError("preds and golds must be non-empty and aligned")
    gold_classes = sorted(set(golds))
    f1s = []
    for c in gold_classes:
        tp = sum(1 for p, g in zip(preds, golds) if g == c and p == c)
        fn = sum(1 for p, g in zip(preds, golds) if g == c and p != c)
        fp = sum(
            1 for p, g in zip(preds, golds) if g != c and p == c and p != INVALID
        )
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / len(f1s)


def multilabel_macro_f1(pred_sets, gold_sets) -> float:
    """Macro-F1 over option letters, each letter a binary class."""
    if not gold_sets or len(pred_sets) != len(gold_sets):
        raise ValueError("preds and golds must be non-empty and aligned")
    letters = sorted(set().union(*gold_sets))
    f1s = []
    for letter in letters:
        tp = fp = fn = 0
        for p, g in zip(pred_sets, gold_sets):
            p = p if isinstance(p, (set, frozenset)) else set()
            has_p, has_g = letter in p, letter in g
            tp += has_p and has_g
            fp += has_p and not has_g
            fn += has_g and not has_p
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / len(f1s)


def mean_absolute_error(preds, golds, invalid_error: float) -> float:
    """MAE where INVALID predictions are charged `invalid_error`."""
    if not golds or len(preds) != len(golds):
        raise ValueError("preds and golds must be non-empty and aligned")
    total = 0.0
    for p, g in zip(preds, golds):
        total += invalid_error if p == INVALID else abs(float(p) - float(g))
    return total / len(golds)


def nmae(mae: float, m: float) -> float:
    """Clipped normalized MAE: max((M - MAE) / M, 0)."""
    if mae < 0 or m <= 0:
        raise ValueError("mae must be >= 0 and M > 0")
    return max((m - mae) / m, 0.0)


def rsvqa_aggregate(task_scores) -> float:
    """Arithmetic mean of the four per-task scores of one RSVQA split."""
    values = list(task_scores.values()) if isinstance(task_scores, dict) else list(
        task_scores
    )
    if len(values) != 4:
        raise ValueError(f"RSVQA aggregation needs exactly 4 task scores, got "
                         f"{len(values)}")
    return sum(values) / 4.0


def rsvqa_aggregate_lr(
    rural_urban_f1: float,
    presence_f1: float,
    count_mae: float,
    comparison_f1: float,
    params: MetricParams = MetricParams(),
) -> float:
    return rsvqa_aggregate(
        [rural_urban_f1, presence_f1, nmae(count_mae, params.m_count_lr),
         comparison_f1]
    )


def rsvqa_aggregate_hr(
    presence_f1: float,
    count_mae: float,
    area_mae: float,
    comparison_f1: float,
    params: MetricParams = MetricParams(),
) -> float:
    return rsvqa_aggregate(
        [presence_f1, nmae(count_mae, params.m_count_hr),
         nmae(area_mae, params.m_area), comparison_f1]
    )


def _split_of(cell: str) -> str:
    benchmark = cell.split(":", 1)[0]
    if benchmark in FINE_TUNING_SPLIT:
        return "fine_tuning"
    if benchmark in GENERALIZATION_SPLIT:
        return "generalization"
    raise ValueError(f"cell {cell!r} does not name a known benchmark")


def average_rank(scores: dict[str, dict[str, float]]) -> dict[str, dict[str, float]]:
    """Per-model average rank over (benchmark, metric) cells.

    `scores` maps model -> cell -> value where cell is "benchmark:metric"
    and higher is better. Rank 1 is best; ties get the mean rank. Every
    model must cover every cell.
    """
    models = sorted(scores)
    if not models:
        raise ValueError("no models to rank")
    cells = sorted(scores[models[0]])
    for m in models:
        if sorted(scores[m]) != cells:
            raise ValueError(f"model {m} is missing cells")
    per_model: dict[str, dict[str, list[float]]] = {
        m: {"fine_tuning": [], "generalization": [], "overall": []} for m in models
    }
    for cell in cells:
        values = [-scores[m][cell] for m in models]
        ranks = rankdata(values, method="average")
        split = _split_of(cell)
        for m, r in zip(models, ranks):
            per_model[m][split].append(float(r))
            per_model[m]["overall"].append(float(r))
    return {
        m: {
            split: (sum(rs) / len(rs) if rs else float("nan"))
            for split, rs in groups.items()
        }
        for m, groups in per_model.items()
    }
