"""Collapse pools of scored architectures into a single base pattern.

Three aggregators are provided:

* N0: the top-cluster member nearest to the cluster centroid.
* N1: per-layer majority vote over the selected members.
* N2: the same vote weighted by ``exp(-decay * rank)`` in test-fitness rank.

Every tie is settled by content (primitive order M < A < Mb, then
architecture text), so shuffling the input never changes a result.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .arch import Architecture, Primitive, encode_onehot, format_architecture, parse_architecture
from .errors import ArchsmithError
from .proxy import Direction
from .workspace import dumps, sig6

DEFAULT_N2_DECAY = 0.1
DEFAULT_MULTIDATASET_DECAY = 0.5


class EmptyPool(ArchsmithError):
    pass


class TooFewPoints(ArchsmithError):
    pass


class LengthMismatch(ArchsmithError, ValueError):
    pass


@dataclass(frozen=True)
class PoolRecord:
    architecture: Architecture
    val_fitness: float
    test_fitness: float
    agent: str = ""
    seed: int = 0
    dataset: str = ""

    @property
    def text(self) -> str:
        return format_architecture(self.architecture)

    def to_dict(self) -> dict:
        return {
            "arch": self.text,
            "val": sig6(self.val_fitness),
            "test": sig6(self.test_fitness),
            "agent": self.agent,
            "seed": self.seed,
            "dataset": self.dataset,
        }


def read_pool_file(path: str | Path, length: int | None = None) -> list[PoolRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            arch_text = raw["arch"]
            n = length or len(arch_text.split())
            records.append(
                PoolRecord(
                    parse_architecture(arch_text, tuple(Primitive), n),
                    float(raw["val"]),
                    float(raw["test"]),
                    str(raw.get("agent", "")),
                    int(raw.get("seed", 0)),
                    str(raw.get("dataset", "")),
                )
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ArchsmithError(f"{path}:{lineno}: bad pool record ({exc})") from None
    return records


def write_pool_file(records: Iterable[PoolRecord], path: str | Path) -> None:
    Path(path).write_text("".join(dumps(r.to_dict()) + "\n" for r in records), encoding="utf-8")


@dataclass(frozen=True)
class RankedPool:
    records: tuple[PoolRecord, ...]
    direction: Direction = Direction.MAXIMIZE
    dataset_id: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def top(self, n: int) -> RankedPool:
        return RankedPool(self.records[:n], self.direction, self.dataset_id)


def _content_key(r: PoolRecord, direction: Direction) -> tuple:
    return (direction.sort_key(r.test_fitness), r.text, direction.sort_key(r.val_fitness), r.agent, r.seed, r.dataset)


def rank_architectures(
    records: Iterable[PoolRecord], direction: Direction = Direction.MAXIMIZE, dataset_id: str = ""
) -> RankedPool:
    """Deduplicate (keeping each architecture's best test score) and sort best-first."""
    best: dict[Architecture, PoolRecord] = {}
    for r in records:
        cur = best.get(r.architecture)
        if cur is None or _content_key(r, direction) < _content_key(cur, direction):
            best[r.architecture] = r
    if not best:
        raise EmptyPool("no records to rank")
    ordered = sorted(best.values(), key=lambda r: (direction.sort_key(r.test_fitness), r.text))
    return RankedPool(tuple(ordered), direction, dataset_id)


# -- k-means -------------------------------------------------------------------


@dataclass
class ClusterAssignment:
    k: int
    labels: np.ndarray
    centroids: np.ndarray
    top_cluster: int
    pool: RankedPool
    primitives: tuple[Primitive, ...]
    inertia_history: list[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]

    def members(self, cluster: int | None = None) -> list[PoolRecord]:
        """Records of ``cluster`` (default: the top cluster), best first."""
        c = self.top_cluster if cluster is None else cluster
        return [r for r, lab in zip(self.pool.records, self.labels) if lab == c]


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = _sq_dists(X, X[chosen]).min(axis=1)
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than clusters: take the next unused index
            rest = [i for i in range(n) if i not in chosen]
            chosen.append(rest[0])
            continue
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return X[chosen].astype(float)


def kmeans_cluster(
    pool: RankedPool,
    k: int = 3,
    seed: int = 0,
    max_iter: int = 100,
    primitives: Sequence[Primitive] | None = None,
) -> ClusterAssignment:
    """Lloyd's algorithm on one-hot encodings with k-means++ seeding."""
    if k < 1:
        raise ValueError("k must be positive")
    if len(pool) < k:
        raise TooFewPoints(f"{len(pool)} architectures cannot form {k} clusters")
    if primitives is None:
        primitives = tuple(sorted({p for r in pool.records for p in r.architecture}))
    X = np.stack([encode_onehot(r.architecture, primitives) for r in pool.records])
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)

    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, C)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(X)), new_labels].sum()))
        if len(history) > 1 and history[-1] > history[-2] + 1e-9:
            raise AssertionError(f"k-means inertia increased at iteration {it}")
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        # empty clusters keep their previous centroid
        for c in range(k):
            mask = labels == c
            if mask.any():
                C[c] = X[mask].mean(axis=0)

    means = []
    for c in range(k):
        vals = [r.test_fitness for r, lab in zip(pool.records, labels) if lab == c]
        means.append(math.fsum(vals) / len(vals) if vals else None)
    scored = [(pool.direction.sort_key(m), c) for c, m in enumerate(means) if m is not None]
    top = min(scored)[1]
    return ClusterAssignment(k, labels, C, top, pool, tuple(primitives), history, it)


# -- aggregators ---------------------------------------------------------------


def aggregate_n0(assign: ClusterAssignment, pool: RankedPool | None = None) -> Architecture:
    """Top-cluster member nearest (Euclidean) to the top cluster's centroid."""
    pool = pool or assign.pool
    centroid = assign.centroids[assign.top_cluster]
    members = [r for r, lab in zip(pool.records, assign.labels) if lab == assign.top_cluster]
    if not members:
        raise EmptyPool("top cluster is empty")

    def key(r: PoolRecord) -> tuple:
        dist = float(np.sqrt(((encode_onehot(r.architecture, assign.primitives) - centroid) ** 2).sum()))
        return (round(dist, 12), pool.direction.sort_key(r.test_fitness), r.text)

    return min(members, key=key).architecture


def aggregate_layerwise_mode(
    members: Sequence[Sequence[Primitive]], weights: Sequence[float] | None = None
) -> Architecture:
    """Per-position (weighted) majority; ties go to the earliest primitive."""
    if not members:
        raise EmptyPool("no members to aggregate")
    length = len(members[0])
    if any(len(m) != length for m in members):
        raise LengthMismatch("members have different lengths")
    if weights is None:
        ws = [Fraction(1)] * len(members)
    else:
        if len(weights) != len(members):
            raise ValueError("one weight per member required")
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("weights must be non-negative with at least one positive")
        # exact sums so genuine ties are detected as ties
        ws = [Fraction(w) for w in weights]
    out = []
    for pos in range(length):
        score: dict[Primitive, Fraction] = {}
        for m, w in zip(members, ws):
            score[m[pos]] = score.get(m[pos], Fraction(0)) + w
        out.append(min(score, key=lambda p: (-score[p], p)))
    return tuple(out)


def rank_weights(n: int, decay: float) -> list[float]:
    return [math.exp(-decay * r) for r in range(n)]


def aggregate_n1(records: Sequence[PoolRecord]) -> Architecture:
    return aggregate_layerwise_mode([r.architecture for r in records])


def aggregate_n2(
    records: Sequence[PoolRecord], direction: Direction = Direction.MAXIMIZE, decay: float = DEFAULT_N2_DECAY
) -> Architecture:
    ranked = sorted(records, key=lambda r: (direction.sort_key(r.test_fitness), r.text))
    return aggregate_layerwise_mode([r.architecture for r in ranked], rank_weights(len(ranked), decay))


def aggregate_exponential_multidataset(
    pools: Sequence[RankedPool], top_n: int = 20, decay: float = DEFAULT_MULTIDATASET_DECAY
) -> Architecture:
    """Rank-decayed vote within each dataset, datasets weighted equally."""
    if not pools or any(len(p) == 0 for p in pools):
        raise EmptyPool("every dataset needs at least one record")
    if top_n < 1 or decay <= 0:
        raise ValueError("top_n must be >= 1 and decay > 0")
    members: list[Architecture] = []
    weights: list[Fraction] = []
    for pool in pools:
        chosen = pool.records[:top_n]
        raw = [Fraction(w) for w in rank_weights(len(chosen), decay)]
        total = sum(raw)
        members.extend(r.architecture for r in chosen)
        weights.extend(w / total for w in raw)
    return aggregate_layerwise_mode(members, weights)


METHODS = ("n0", "n1", "n2")


def aggregate_pool(
    records: Iterable[PoolRecord],
    method: str,
    direction: Direction = Direction.MAXIMIZE,
    k: int | None = 3,
    seed: int = 0,
    top_n: int | None = None,
    decay: float = DEFAULT_N2_DECAY,
) -> Architecture:
    """Rank, optionally truncate to ``top_n``, optionally cluster, then aggregate.

    With ``k=None`` the aggregator sees the whole (truncated) pool; N0 always
    needs a clustering.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    pool = rank_architectures(records, direction)
    if top_n is not None:
        pool = pool.top(top_n)
    if k is None and method == "n0":
        k = 1
    if k is None:
        selected = list(pool.records)
    else:
        assign = kmeans_cluster(pool, k, seed)
        if method == "n0":
            return aggregate_n0(assign)
        selected = assign.members()
    if method == "n1":
        return aggregate_n1(selected)
    return aggregate_n2(selected, direction, decay)
