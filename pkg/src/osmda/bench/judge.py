"""LLM-as-judge scoring from score-token probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..client import ChatClient
from ..relabel import load_prompt

SCORE_TOKENS = ("1", "2", "3", "4", "5")


class JudgeFailure(RuntimeError):
    """The judge's top logprobs contained none of the score tokens."""


@dataclass(frozen=True)
class JudgeScore:
    probabilities: dict[str, float]  # token -> probability, sums to 1
    continuous: float  # in [1, 5]
    normalized: float  # continuous / 5

    @classmethod
    def from_probabilities(cls, probs: dict[str, float]) -> "JudgeScore":
        total = sum(probs.get(t, 0.0) for t in SCORE_TOKENS)
        if total <= 0:
            raise JudgeFailure("no probability mass on score tokens")
        norm = {t: probs.get(t, 0.0) / total for t in SCORE_TOKENS}
        continuous = sum(int(t) * p for t, p in norm.items())
        return cls(probabilities=norm, continuous=continuous,
                   normalized=continuous / 5.0)


def build_judge_prompt(eval_kind: str, gt: str, pred: str,
                       question: str | None = None) -> str:
    if eval_kind == "caption":
        text = load_prompt("geval_caption")
    elif eval_kind == "vqa":
        if question is None:
            raise ValueError("vqa judging requires the question")
        text = load_prompt("geval_vqa").replace("<q>", question)
    else:
        raise ValueError(f"unknown eval kind {eval_kind!r}")
    return text.replace("<gt>", gt).replace("<pred>", pred)


def geval_score(
    judge: ChatClient,
    eval_kind: str,
    gt: str,
    pred: str,
    question: str | None = None,
) -> JudgeScore:
    """Weighted-sum score over the judge's "1".."5" token probabilities.

    The judge endpoint must expose final-position top logprobs; the five
    score-token probabilities are renormalized before the weighted sum.
    """
    prompt = build_judge_prompt(eval_kind, gt, pred, question)
    resp = judge.complete(prompt, temperature=0.0, max_tokens=1, logprobs=True)
    probs = {
        tok: math.exp(lp)
        for tok, lp in resp.final_top_logprobs.items()
        if tok in SCORE_TOKENS
    }
    if not probs:
        raise JudgeFailure("judge returned no score tokens in top logprobs")
    return JudgeScore.from_probabilities(probs)
