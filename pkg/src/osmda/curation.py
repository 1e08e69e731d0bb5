"""Three-stage probabilistic balancing with in-house PCA and K-means.

Stage 1 balances over semantic labels (threshold t1), stage 2 over
log2 object-count bins (t2, frequencies recomputed on survivors), and
stage 3 over K-means clusters of PCA-projected embeddings (t3). Each
(image, query) membership is accepted independently with probability
min(1, t / n_q); an image survives a stage if any membership is
accepted. Acceptance draws come from a counter-based hash RNG keyed by
(seed, image_id, query_id), so results are independent of scheduling.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

EMBEDDING_MAGIC = b"OSMDAEMB"


class CurationCollapseError(RuntimeError):
    def __init__(self, stage: str, trace: "CurationTrace"):
        super().__init__(f"curation collapsed to zero images at stage {stage}")
        self.trace = trace


@dataclass
class CurationParams:
    t1: int = 700
    t2: int = 4000
    t3: int = 15
    pca_dim: int = 256
    n_clusters: int = 25000
    seed: int = 0

    def __post_init__(self):
        if min(self.t1, self.t2, self.t3) < 1:
            raise ValueError("thresholds must be >= 1")


@dataclass
class CurationTrace:
    seed: int
    stages: list[dict] = field(default_factory=list)

    def record(self, name: str, n_in: int, n_out: int, probs: dict):
        self.stages.append(
            {"stage": name, "input": n_in, "output": n_out,
             "acceptance_probabilities": probs}
        )

    def to_json(self) -> dict:
        return {"seed": self.seed, "stages": self.stages}


def _uniform(seed: int, image_id: str, query_id: str) -> float:
    key = f"{seed}|{image_id}|{query_id}".encode("utf-8")
    h = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(h, "little") / 2**64


def balance_by_queries(
    items: list[tuple[str, set]], t: int, seed: int
) -> tuple[list[str], dict]:
    """Retain image ids whose memberships win at least one Bernoulli draw.

    Returns (retained ids in input order, per-query acceptance probs).
    """
    if t < 1:
        raise ValueError("threshold t must be >= 1")
    freq: dict = {}
    for _, queries in items:
        if not queries:
            raise ValueError("every image needs at least one query")
        for q in queries:
            freq[q] = freq.get(q, 0) + 1
    probs = {q: min(1.0, t / n) for q, n in freq.items()}
    retained = []
    for image_id, queries in items:
        if any(_uniform(seed, image_id, str(q)) < probs[q] for q in queries):
            retained.append(image_id)
    return retained, {str(q): p for q, p in probs.items()}


def bin_object_counts(counts: dict[str, int]) -> dict[str, int]:
    """Logarithmic count bins: bin = floor(log2(count + 1))."""
    out = {}
    for image_id, n in counts.items():
        if n < 0:
            raise ValueError("object count must be >= 0")
        out[image_id] = int(n + 1).bit_length() - 1
    return out


class PCAReducer(BaseEstimator, TransformerMixin):
    """Mean-centered PCA via SVD, components in descending variance order.

    Component signs are fixed so the largest-magnitude entry of each
    component is positive, making the projection deterministic.
    """

    def __init__(self, n_components: int = 256):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        if self.n_components > d:
            raise ValueError("n_components exceeds input dimensionality")
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        _, s, vt = np.linalg.svd(Xc, full_matrices=False)
        var = s**2 / max(n - 1, 1)
        total = var.sum()
        self.degenerate_ = total <= 1e-300
        comps = vt[: self.n_components]
        signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
        signs[signs == 0] = 1.0
        self.components_ = comps * signs[:, None]
        self.explained_variance_ = var[: self.n_components]
        self.explained_variance_ratio_ = (
            np.zeros(self.n_components)
            if self.degenerate_
            else self.explained_variance_ / total
        )
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.degenerate_:
            return np.zeros((X.shape[0], self.n_components), dtype=np.float32)
        return ((X - self.mean_) @ self.components_.T).astype(np.float32)


class KMeansLloyd(BaseEstimator, ClusterMixin):
    """Exact Lloyd's K-means with k-means++ seeding and restarts.

    The best of `n_init` seeded runs (by inertia) is kept. Empty clusters
    are reseeded to the point farthest from its centroid. Inertia is
    asserted non-increasing every iteration.
    """

    def __init__(self, n_clusters: int, seed: int = 0, max_iter: int = 100,
                 tol: float = 1e-6, n_init: int = 15):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init

    def _init_centroids(self, X, rng):
        """Greedy k-means++: several candidates per step, keep the one
        that most reduces the potential."""
        n = X.shape[0]
        n_candidates = 2 + int(np.log(self.n_clusters))
        centroids = np.empty((self.n_clusters, X.shape[1]), dtype=np.float64)
        centroids[0] = X[rng.integers(n)]
        d2 = ((X - centroids[0]) ** 2).sum(axis=1)
        for i in range(1, self.n_clusters):
            total = d2.sum()
            if total <= 0:
                idx = rng.integers(n, size=n_candidates)
            else:
                idx = rng.choice(n, size=n_candidates, p=d2 / total)
            cand_d2 = np.minimum(
                d2[None, :],
                ((X[None, :, :] - X[idx][:, None, :]) ** 2).sum(axis=2),
            )
            best = cand_d2.sum(axis=1).argmin()
            centroids[i] = X[idx[best]]
            d2 = cand_d2[best]
        return centroids

    def _lloyd(self, X, rng):
        n = X.shape[0]
        centroids = self._init_centroids(X, rng)
        prev_inertia = np.inf
        history = []
        for _ in range(self.max_iter):
            d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1)
            inertia = d2[np.arange(n), labels].sum()
            assert inertia <= prev_inertia + 1e-9, "inertia increased"
            history.append(float(inertia))
            for k in range(self.n_clusters):
                members = X[labels == k]
                if len(members):
                    centroids[k] = members.mean(axis=0)
                else:
                    far = d2[np.arange(n), labels].argmax()
                    centroids[k] = X[far]
            if prev_inertia < np.inf and prev_inertia > 0:
                if (prev_inertia - inertia) / prev_inertia < self.tol:
                    break
            elif inertia == 0:
                break
            prev_inertia = inertia
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        return centroids, labels, inertia, history

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if self.n_clusters > X.shape[0]:
            raise ValueError("n_clusters exceeds number of points")
        rng = np.random.default_rng(self.seed)
        best = None
        for _ in range(max(1, self.n_init)):
            result = self._lloyd(X, rng)
            if best is None or result[2] < best[2]:
                best = result
            if best[2] == 0.0:
                break
        self.cluster_centers_, self.labels_, self.inertia_, \
            self.inertia_history_ = best
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        d2 = ((X[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)


def write_embeddings(path: str | Path, matrix: np.ndarray, image_ids: list[str]):
    """Binary embedding file: magic, u32 n_rows, u32 dim, f32 LE rows.

    A sidecar `<path>.ids.jsonl` maps row index to image id.
    """
    path = Path(path)
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(image_ids):
        raise ValueError("matrix rows must match image id count")
    with open(path, "wb") as f:
        f.write(EMBEDDING_MAGIC)
        f.write(struct.pack("<II", *matrix.shape))
        f.write(matrix.tobytes())
    with open(str(path) + ".ids.jsonl", "w", encoding="utf-8") as f:
        for i, image_id in enumerate(image_ids):
            f.write(json.dumps({"row": i, "image_id": image_id}) + "\n")


def read_embeddings(path: str | Path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != EMBEDDING_MAGIC:
            raise ValueError(f"bad embedding file magic {magic!r}")
        n_rows, dim = struct.unpack("<II", f.read(8))
        matrix = np.frombuffer(f.read(n_rows * dim * 4), dtype="<f4").reshape(
            n_rows, dim
        )
    if not np.isfinite(matrix).all():
        raise ValueError("embedding matrix contains NaN/Inf")
    ids: list[str] = [""] * n_rows
    with open(str(path) + ".ids.jsonl", encoding="utf-8") as f:
        for line in f:
            d = json.loads(line)
            ids[d["row"]] = str(d["image_id"])
    return matrix.copy(), ids


def curate(
    images: list[str],
    labels: dict[str, list[str]],
    counts: dict[str, int],
    emb: tuple[np.ndarray, list[str]],
    params: CurationParams,
) -> tuple[list[str], CurationTrace]:
    """Run the three balancing stages; each conditioned on the previous.

    `labels` maps image id to its semantic labels, `counts` to its object
    count, and `emb` is (matrix, row image ids) covering all images.
    """
    trace = CurationTrace(seed=params.seed)

    items = [(i, set(labels[i])) for i in images]
    stage1, probs = balance_by_queries(items, params.t1, params.seed)
    trace.record("labels", len(images), len(stage1), probs)
    if not stage1:
        raise CurationCollapseError("labels", trace)

    bins = bin_object_counts({i: counts[i] for i in stage1})
    items = [(i, {bins[i]}) for i in stage1]
    stage2, probs = balance_by_queries(items, params.t2, params.seed)
    trace.record("count-bins", len(stage1), len(stage2), probs)
    if not stage2:
        raise CurationCollapseError("count-bins", trace)

    matrix, row_ids = emb
    row_of = {image_id: i for i, image_id in enumerate(row_ids)}
    X = matrix[[row_of[i] for i in stage2]]
    dim = min(params.pca_dim, X.shape[1], max(1, X.shape[0] - 1))
    projected = PCAReducer(n_components=dim).fit(X).transform(X)
    k = min(params.n_clusters, len(stage2))
    km = KMeansLloyd(n_clusters=k, seed=params.seed).fit(projected)
    clusters = {i: int(c) for i, c in zip(stage2, km.labels_)}
    items = [(i, {clusters[i]}) for i in stage2]
    stage3, probs = balance_by_queries(items, params.t3, params.seed)
    trace.record("clusters", len(stage2), len(stage3), probs)
    if not stage3:
        raise CurationCollapseError("clusters", trace)

    return stage3, trace
