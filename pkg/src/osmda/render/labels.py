"""Priority-ordered, collision-free label placement.

Text boxes use a fixed embedded monospace metric (char width = 0.6 x
font px) so measurements are deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

CHAR_WIDTH_FACTOR = 0.6
FONT_PX = 12


def measure_text(text: str, font_px: int = FONT_PX) -> tuple[float, float]:
    return len(text) * CHAR_WIDTH_FACTOR * font_px, float(font_px)


@dataclass(frozen=True)
class LabelCandidate:
    text: str
    anchor: tuple[float, float]
    priority: int
    font_px: int = FONT_PX

    @property
    def box(self) -> tuple[float, float, float, float]:
        w, h = measure_text(self.text, self.font_px)
        ax, ay = self.anchor
        return (ax - w / 2, ay - h / 2, ax + w / 2, ay + h / 2)


def boxes_intersect(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _box_area(box) -> float:
    return (box[2] - box[0]) * (box[3] - box[1])


def place_labels(
    candidates: list[LabelCandidate], canvas: tuple[int, int]
) -> list[LabelCandidate]:
    """Greedy placement by (priority desc, box area desc, text asc).

    A candidate is placed iff its box fits the canvas and intersects no
    already-placed box. The result is maximal: no suppressed candidate
    could be added without overlap.
    """
    width, height = canvas
    ordered = sorted(
        candidates, key=lambda c: (-c.priority, -_box_area(c.box), c.text)
    )
    placed: list[LabelCandidate] = []
    for cand in ordered:
        box = cand.box
        if box[0] < 0 or box[1] < 0 or box[2] > width or box[3] > height:
            continue
        if any(boxes_intersect(box, p.box) for p in placed):
            continue
        placed.append(cand)
    return placed
