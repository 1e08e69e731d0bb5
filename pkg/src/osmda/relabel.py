"""Semantic labeling of unique tag sets via a chat-completion endpoint.

Each unique canonicalized tag set is sent once; results are cached in a
JSONL file so warm reruns issue zero requests. Labels are normalized to
at most three lowercase words.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .client import ChatClient, EndpointError
from .filters import classify_object
from .ingest import OsmObject

LABEL_TEMPERATURE = 0.0
LABEL_MAX_TOKENS = 16
MAX_LABEL_WORDS = 3


def load_prompt(name: str) -> str:
    return resources.files("osmda.prompts").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


@dataclass(frozen=True)
class SemanticLabel:
    text: str
    source_tagset_hash: str
    truncated: bool = False
    fallback: bool = False


def canonicalize_tagset(tags: dict[str, str]) -> tuple[str, str]:
    """Sorted `k=v;` join plus a stable 64-bit hash (hex)."""
    if not tags:
        raise ValueError("empty tag set")
    canonical = "".join(f"{k}={tags[k]};" for k in sorted(tags))
    digest = hashlib.blake2b(canonical.encode("utf-8"), digest_size=8).hexdigest()
    return canonical, digest


def build_label_prompt(tags: dict[str, str]) -> str:
    props = ", ".join(f"{k}: {tags[k]}" for k in sorted(tags))
    template = load_prompt("relabel")
    return template.replace("<key>: <value>, ...", props)


def normalize_label(raw: str) -> tuple[str, bool]:
    """Lowercase, strip punctuation, drop digit-only tokens, cap at 3 words.

    Returns (text, truncated). Empty text means the response was unusable.
    """
    cleaned = re.sub(r"[^\w\s-]", "", raw.lower())
    words = [w for w in cleaned.split() if not w.isdigit()]
    truncated = len(words) > MAX_LABEL_WORDS
    return " ".join(words[:MAX_LABEL_WORDS]), truncated


class LabelCache:
    """JSONL-persisted map from tagset hash to label."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, SemanticLabel] = {}
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    d = json.loads(line)
                    self._entries[d["hash"]] = SemanticLabel(
                        d["label"], d["hash"], d.get("truncated", False),
                        d.get("fallback", False),
                    )

    def get(self, tagset_hash: str) -> SemanticLabel | None:
        return self._entries.get(tagset_hash)

    def put(self, tagset_hash: str, canonical: str, label: SemanticLabel):
        if tagset_hash in self._entries:
            return
        self._entries[tagset_hash] = label
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps({
                    "hash": tagset_hash,
                    "tags_canonical": canonical,
                    "label": label.text,
                    "truncated": label.truncated,
                    "fallback": label.fallback,
                }) + "\n")

    def __len__(self):
        return len(self._entries)


def request_label(
    tags: dict[str, str],
    client: ChatClient,
    cache: LabelCache | None = None,
    retries: int = 3,
) -> SemanticLabel:
    """Label one tag set, consulting the cache first.

    After `retries` unusable responses the object falls back to its
    ObjectClass name.
    """
    canonical, h = canonicalize_tagset(tags)
    if cache is not None:
        hit = cache.get(h)
        if hit is not None:
            return hit
    prompt = build_label_prompt(tags)
    label = None
    for _ in range(retries):
        try:
            resp = client.complete(
                prompt, temperature=LABEL_TEMPERATURE, max_tokens=LABEL_MAX_TOKENS
            )
        except EndpointError:
            continue
        text, truncated = normalize_label(resp.text)
        if text:
            label = SemanticLabel(text, h, truncated=truncated)
            break
    if label is None:
        label = SemanticLabel(classify_object(tags), h, fallback=True)
    if cache is not None:
        cache.put(h, canonical, label)
    return label


@dataclass
class RelabelStats:
    objects: int
    unique_tagsets: int
    endpoint_calls: int
    unique_labels: int
    fallbacks: int

    def to_json(self) -> dict:
        return self.__dict__.copy()


def relabel_corpus(
    objects: list[OsmObject],
    client: ChatClient,
    cache: LabelCache | None = None,
    jobs: int = 16,
) -> RelabelStats:
    """Attach a SemanticLabel to every object; request only cache misses."""
    cache = cache if cache is not None else LabelCache()
    by_hash: dict[str, dict[str, str]] = {}
    hashes: list[str] = []
    for obj in objects:
        _, h = canonicalize_tagset(obj.tags)
        hashes.append(h)
        by_hash.setdefault(h, obj.tags)

    misses = [h for h in sorted(by_hash) if cache.get(h) is None]
    calls = len(misses)
    # results merged deterministically by tagset hash order
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        labels = list(
            pool.map(lambda h: request_label(by_hash[h], client, cache=None), misses)
        )
    for h, label in zip(misses, labels):
        canonical, _ = canonicalize_tagset(by_hash[h])
        cache.put(h, canonical, label)

    fallbacks = 0
    for obj, h in zip(objects, hashes):
        label = cache.get(h)
        obj.label = label.text
        fallbacks += int(label.fallback)
    unique_labels = len({cache.get(h).text for h in by_hash})
    return RelabelStats(
        objects=len(objects),
        unique_tagsets=len(by_hash),
        endpoint_calls=calls,
        unique_labels=unique_labels,
        fallbacks=fallbacks,
    )
