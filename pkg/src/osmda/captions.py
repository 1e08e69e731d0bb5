"""Two-image caption generation, corpus emission, and corpus mixing."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .client import ChatClient, EndpointError, image_part, text_part
from .geo import ImageRecord
from .relabel import load_prompt

log = logging.getLogger(__name__)

CAPTION_TEMPERATURE = 1.0
CAPTION_MAX_TOKENS = 768


class EmptyCorpusError(RuntimeError):
    pass


@dataclass
class CaptionSample:
    image_id: str
    image_path: str
    map_path: str
    caption: str
    resolution_m: float
    temperature: float
    prompt_hash: str
    model: str
    failed: bool = False
    failure_reason: str | None = None

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "image_path": self.image_path,
            "map_path": self.map_path,
            "caption": self.caption,
            "resolution_m": self.resolution_m,
            "temperature": self.temperature,
            "prompt_hash": self.prompt_hash,
            "model": self.model,
        }


@dataclass
class MixtureSpec:
    components: list[str]
    target_size: int
    seed: int = 0

    def __post_init__(self):
        if self.target_size <= 0:
            raise ValueError("target size must be positive")
        if not self.components:
            raise ValueError("at least one component required")


def build_caption_prompt(resolution_m: float) -> str:
    if resolution_m <= 0:
        raise ValueError("resolution_m must be positive")
    return load_prompt("caption").replace("<res>", f"{resolution_m:.2f}")


def normalize_caption(raw: str) -> str:
    """Collapse to a single paragraph: inner newlines become spaces."""
    return " ".join(raw.split()).strip()


def generate_caption(
    rec: ImageRecord,
    map_path: str | Path,
    client: ChatClient,
    temperature: float = CAPTION_TEMPERATURE,
    max_new_tokens: int = CAPTION_MAX_TOKENS,
) -> CaptionSample:
    """Caption one sample with [satellite image, map image] in that order."""
    prompt = build_caption_prompt(rec.resolution_m)
    sat_bytes = Path(rec.image_path).read_bytes()
    map_bytes = Path(map_path).read_bytes()
    content = [image_part(sat_bytes), image_part(map_bytes), text_part(prompt)]
    sample = CaptionSample(
        image_id=rec.id,
        image_path=str(rec.image_path),
        map_path=str(map_path),
        caption="",
        resolution_m=rec.resolution_m,
        temperature=temperature,
        prompt_hash=hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
        model=client.model,
    )
    try:
        resp = client.complete(
            content, temperature=temperature, max_tokens=max_new_tokens
        )
    except EndpointError as e:
        sample.failed = True
        sample.failure_reason = str(e)
        log.warning("caption failed for %s: %s", rec.id, e)
        return sample
    caption = normalize_caption(resp.text)
    if not caption:
        sample.failed = True
        sample.failure_reason = "empty-caption"
        log.warning("empty caption for %s", rec.id)
    else:
        sample.caption = caption
    return sample


def emit_corpus(samples: list[CaptionSample], path: str | Path) -> dict:
    """Write successful samples as id-sorted JSONL; return a summary."""
    ok = sorted((s for s in samples if not s.failed), key=lambda s: s.image_id)
    if not ok:
        raise EmptyCorpusError("no successful caption samples")
    failures: dict[str, int] = {}
    for s in samples:
        if s.failed:
            reason = s.failure_reason or "unknown"
            failures[reason] = failures.get(reason, 0) + 1
    with open(path, "w", encoding="utf-8") as f:
        for s in ok:
            f.write(json.dumps(s.to_json()) + "\n")
    return {"written": len(ok), "failed": sum(failures.values()),
            "failure_reasons": failures}


def load_corpus(path: str | Path) -> list[CaptionSample]:
    samples = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            samples.append(CaptionSample(
                image_id=d["image_id"],
                image_path=d["image_path"],
                map_path=d["map_path"],
                caption=d["caption"],
                resolution_m=d["resolution_m"],
                temperature=d["temperature"],
                prompt_hash=d["prompt_hash"],
                model=d["model"],
            ))
    return samples


def _read_lines(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [ln.rstrip("\n") for ln in f if ln.strip()]


def mix_corpora(spec: MixtureSpec, out_path: str | Path) -> dict:
    """Mix components so each contributes exactly `target_size` lines.

    Oversized components are uniformly subsampled without replacement;
    undersized ones are repeated whole plus a seeded remainder sample.
    The combined output is shuffled by the seed.
    """
    rng = random.Random(spec.seed)
    mixed: list[str] = []
    manifest_components = []
    for comp in spec.components:
        lines = _read_lines(comp)
        if not lines:
            raise ValueError(f"empty mixture component {comp}")
        n, target = len(lines), spec.target_size
        if n >= target:
            chosen = [lines[i] for i in sorted(rng.sample(range(n), target))]
        else:
            chosen = lines * (target // n)
            rem = target % n
            chosen += [lines[i] for i in sorted(rng.sample(range(n), rem))]
        mixed.extend(chosen)
        digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
        manifest_components.append(
            {"path": str(comp), "size": n, "contributed": len(chosen),
             "digest": digest}
        )
    rng.shuffle(mixed)
    with open(out_path, "w", encoding="utf-8") as f:
        for line in mixed:
            f.write(line + "\n")
    return {
        "seed": spec.seed,
        "target_size": spec.target_size,
        "total": len(mixed),
        "components": manifest_components,
    }
