"""Answer normalization from raw model text."""

from __future__ import annotations

import re

INVALID = "__INVALID__"

_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_RURAL_URBAN = re.compile(r"\b(rural|urban|yes|no)\b", re.IGNORECASE)
_INTEGER = re.compile(r"-?\d+")
_AREA = re.compile(r"(\d+)\s*m2\b", re.IGNORECASE)
_LETTER_RUN = re.compile(r"^[A-Za-z][A-Za-z\s,]*")


def parse_answer(kind: str, raw: str | None, options=None):
    """Normalize one raw prediction; unparseable answers become INVALID."""
    if raw is None:
        return INVALID
    raw = raw.strip()
    if not raw:
        return INVALID
    if kind in ("presence", "comparison"):
        m = _YES_NO.search(raw)
        return m.group(1).lower() if m else INVALID
    if kind == "rural_urban":
        m = _RURAL_URBAN.search(raw)
        return m.group(1).lower() if m else INVALID
    if kind == "count":
        m = _INTEGER.search(raw)
        return int(m.group()) if m else INVALID
    if kind == "area":
        m = _AREA.search(raw)
        if m:
            return int(m.group(1))
        m = _INTEGER.search(raw)
        return int(m.group()) if m else INVALID
    if kind == "classify":
        return _parse_classify(raw, options or [])
    if kind == "mc_multi":
        return _parse_letters(raw)
    # caption / open_vqa pass through verbatim
    return raw


def _parse_classify(raw: str, options) -> str:
    """Longest exact case-insensitive class match contained in the text."""
    low = raw.lower()
    best = None
    for cls in options:
        if cls.lower() in low and (best is None or len(cls) > len(best)):
            best = cls
    return best if best is not None else INVALID


def _parse_letters(raw: str):
    """Option letters appearing before any other text, e.g. "AC" -> {A, C}."""
    m = _LETTER_RUN.match(raw)
    if not m:
        return INVALID
    tokens = re.split(r"[\s,]+", m.group().strip())
    letters = set()
    for tok in tokens:
        if len(tok) == 1 and tok.isalpha():
            letters.add(tok.upper())
        elif tok.isalpha() and tok.isupper():
            letters.update(tok)
        elif tok:
            break
    return letters if letters else INVALID
