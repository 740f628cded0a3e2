"""Stand-ins for small-scale proxy training.

The synthetic oracle scores an architecture by a fixed structural formula
plus hash-derived noise, so a record depends only on (architecture, seed).
Real trainers plug in through :class:`ExternalEvaluator`.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

from .arch import A, M, Architecture, Primitive, format_architecture
from .errors import (
    EvaluatorReportedFailure,
    EvaluatorTimeout,
    MalformedResponse,
    TransportError,
)
from .wire import JsonLineChannel


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"

    def better(self, a: float, b: float) -> bool:
        """True if ``a`` is strictly better than ``b``."""
        return a > b if self is Direction.MAXIMIZE else a < b

    def sort_key(self, value: float) -> float:
        """Ascending sort on this key puts the best value first."""
        return -value if self is Direction.MAXIMIZE else value


class Source(str, Enum):
    SYNTHETIC = "synthetic"
    EXTERNAL = "external"


@dataclass(frozen=True)
class FitnessRecord:
    architecture: Architecture
    val_fitness: float
    test_fitness: float
    source: Source = Source.SYNTHETIC
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.val_fitness) and math.isfinite(self.test_fitness)):
            raise ValueError("fitness values must be finite")


# Single source of truth for the synthetic oracle.
SYNTHETIC_WEIGHTS = {
    "offset": 0.5,
    "ratio": 0.2,
    "interleave": 0.2,
    "last_mlp": 0.1,
    "target_attention_share": 0.4,
    "noise": 0.02,
}


def synthetic_base(arch: Sequence[Primitive]) -> float:
    """Noise-free structural score in [0.5, 1.0]."""
    w = SYNTHETIC_WEIGHTS
    n = len(arch)
    target = w["target_attention_share"]
    share = sum(p == A for p in arch) / n
    f_ratio = max(0.0, 1.0 - abs(share - target) / target)
    f_inter = sum(a != b for a, b in zip(arch, arch[1:])) / (n - 1) if n > 1 else 0.0
    f_last = 1.0 if arch[-1] == M else 0.0
    return w["offset"] + w["ratio"] * f_ratio + w["interleave"] * f_inter + w["last_mlp"] * f_last


def _hash_uniform(tokens: str, seed: int, tag: str) -> float:
    digest = hashlib.sha256(f"{tokens}\x1f{seed}\x1f{tag}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    amp = SYNTHETIC_WEIGHTS["noise"]
    return -amp + 2 * amp * u


def synthetic_fitness(
    arch: Sequence[Primitive], seed: int = 0, direction: Direction = Direction.MAXIMIZE
) -> FitnessRecord:
    arch = tuple(arch)
    tokens = format_architecture(arch)
    base = synthetic_base(arch)
    val = base + _hash_uniform(tokens, seed, "val")
    test = base + _hash_uniform(tokens, seed, "test")
    if direction is Direction.MINIMIZE:
        val, test = 1.0 - val, 1.0 - test
    return FitnessRecord(arch, val, test, Source.SYNTHETIC, seed)


class SyntheticEvaluator:
    def __init__(self, seed: int = 0, direction: Direction = Direction.MAXIMIZE):
        self.seed = seed
        self.direction = direction

    def __call__(self, arch: Architecture) -> FitnessRecord:
        return synthetic_fitness(arch, self.seed, self.direction)

    def close(self) -> None:
        pass


def split_train_val(items: int, ratio: float = 0.7, seed: int = 0) -> tuple[list[int], list[int]]:
    """Shuffle ``range(items)`` with ``seed`` and cut it at ``round(ratio * items)``."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    if items < 0:
        raise ValueError("items must be non-negative")
    order = list(range(items))
    random.Random(seed).shuffle(order)
    n_train = math.floor(ratio * items + 0.5)
    return order[:n_train], order[n_train:]


def _parse_evaluator_response(line: str, arch: Architecture, seed: int) -> FitnessRecord:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError:
        raise MalformedResponse(f"evaluator sent non-JSON: {line[:200]!r}") from None
    if not isinstance(payload, dict):
        raise MalformedResponse("evaluator response is not a JSON object")
    if "error" in payload:
        raise EvaluatorReportedFailure(str(payload["error"]))
    try:
        val, test = float(payload["val"]), float(payload["test"])
    except (KeyError, TypeError, ValueError):
        raise MalformedResponse(f"evaluator response lacks numeric val/test: {payload!r}") from None
    if not (math.isfinite(val) and math.isfinite(test)):
        raise MalformedResponse("evaluator returned non-finite fitness")
    return FitnessRecord(arch, val, test, Source.EXTERNAL, seed)


class ExternalEvaluator:
    """Evaluator reached over the line-delimited JSON protocol.

    Sends ``{"arch", "task_id", "seed"}``; expects ``{"val", "test"}`` or
    ``{"error"}`` back.
    """

    def __init__(self, address: str, task_id: str = "", seed: int = 0, timeout: float | None = 600.0):
        self.address = address
        self.task_id = task_id
        self.seed = seed
        self.timeout = timeout
        self._channel: JsonLineChannel | None = None

    def _open(self) -> JsonLineChannel:
        if self._channel is None:
            try:
                self._channel = JsonLineChannel(self.address, self.timeout)
            except TransportError as exc:
                raise MalformedResponse(str(exc)) from exc
        return self._channel

    def __call__(self, arch: Architecture) -> FitnessRecord:
        request = {"arch": format_architecture(arch), "task_id": self.task_id, "seed": self.seed}
        channel = self._open()
        try:
            line = channel.request(request)
        except TimeoutError as exc:
            raise EvaluatorTimeout(str(exc)) from exc
        except TransportError as exc:
            raise MalformedResponse(str(exc)) from exc
        return _parse_evaluator_response(line, tuple(arch), self.seed)

    def close(self) -> None:
        if self._channel is not None:
            self._channel.close()
            self._channel = None


def evaluate_external(
    arch: Architecture,
    endpoint: str | ExternalEvaluator,
    task_id: str = "",
    seed: int = 0,
    timeout: float | None = 600.0,
) -> FitnessRecord:
    """One-off evaluation; pass an :class:`ExternalEvaluator` to reuse a connection."""
    if isinstance(endpoint, ExternalEvaluator):
        return endpoint(arch)
    evaluator = ExternalEvaluator(endpoint, task_id, seed, timeout)
    try:
        return evaluator(arch)
    finally:
        evaluator.close()
