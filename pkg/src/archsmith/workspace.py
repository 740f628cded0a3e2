"""Task directories, manifests and the on-disk artifact formats."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .arch import DEFAULT_LENGTH, Architecture, PrimitivePool, format_architecture, make_pool, parse_architecture
from .errors import ArchsmithError, ConfigError, UnknownToken
from .proxy import Direction

MANIFEST_NAME = "task.json"


class MissingManifest(ArchsmithError, FileNotFoundError):
    pass


class InvalidField(ConfigError):
    def __init__(self, name: str, problem: str):
        super().__init__(f"task.json field {name!r}: {problem}")
        self.field = name
        self.problem = problem


def sig6(x: float) -> float:
    """Round to 6 significant digits (the precision of every file we write)."""
    if not math.isfinite(x) or x == 0:
        return x
    return float(f"{x:.6g}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


@dataclass(frozen=True)
class Limits:
    max_steps: int = 500
    wall_clock: float = 24 * 3600.0

    def __post_init__(self) -> None:
        if self.max_steps <= 0 or self.wall_clock <= 0:
            raise ValueError("limits must be positive")


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str = "synthetic"
    seed: int = 0
    address: str = ""


@dataclass(frozen=True)
class TaskManifest:
    task_id: str
    pool: PrimitivePool
    direction: Direction
    length: int = DEFAULT_LENGTH
    evaluator: EvaluatorSpec = field(default_factory=EvaluatorSpec)
    limits: Limits = field(default_factory=Limits)
    draft_count: int = 5
    split_ratio: float = 0.7
    one_shot: bool = False

    def to_dict(self) -> dict:
        ev: dict[str, Any] = {"type": self.evaluator.kind}
        if self.evaluator.kind == "synthetic":
            ev["seed"] = self.evaluator.seed
        else:
            ev["address"] = self.evaluator.address
        return {
            "task_id": self.task_id,
            "pool": [p.token for p in self.pool],
            "length": self.length,
            "direction": self.direction.value,
            "evaluator": ev,
            "limits": {"max_steps": self.limits.max_steps, "wall_clock": self.limits.wall_clock},
            "draft_count": self.draft_count,
            "split_ratio": self.split_ratio,
            "one_shot": self.one_shot,
        }


def _need(raw: Mapping, key: str, kind: type, expected: str) -> Any:
    if key not in raw:
        raise InvalidField(key, f"missing (expected {expected})")
    value = raw[key]
    if not isinstance(value, kind):
        raise InvalidField(key, f"expected {expected}, got {type(value).__name__}")
    return value


def manifest_from_dict(raw: Mapping) -> TaskManifest:
    if not isinstance(raw, Mapping):
        raise InvalidField("<root>", "expected a JSON object")
    task_id = _need(raw, "task_id", str, "string")
    pool_raw = _need(raw, "pool", list, "list of primitive tokens")
    try:
        pool = make_pool(pool_raw)
    except UnknownToken as exc:
        raise InvalidField("pool", str(exc)) from None
    except ValueError as exc:
        raise InvalidField("pool", f"duplicate or empty ({exc})") from None
    direction_raw = _need(raw, "direction", str, '"maximize" or "minimize"')
    try:
        direction = Direction(direction_raw.lower())
    except ValueError:
        raise InvalidField("direction", f'expected "maximize" or "minimize", got {direction_raw!r}') from None
    length = raw.get("length", DEFAULT_LENGTH)
    if not isinstance(length, int) or isinstance(length, bool) or length < 1:
        raise InvalidField("length", "expected positive integer")

    ev_raw = raw.get("evaluator", {"type": "synthetic", "seed": 0})
    if not isinstance(ev_raw, Mapping):
        raise InvalidField("evaluator", "expected object")
    kind = ev_raw.get("type", "synthetic")
    if kind == "synthetic":
        seed = ev_raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise InvalidField("evaluator.seed", "expected integer")
        evaluator = EvaluatorSpec("synthetic", seed=seed)
    elif kind == "external":
        address = ev_raw.get("address")
        if not isinstance(address, str) or not address:
            raise InvalidField("evaluator.address", "expected non-empty string")
        evaluator = EvaluatorSpec("external", address=address)
    else:
        raise InvalidField("evaluator.type", f'expected "synthetic" or "external", got {kind!r}')

    lim_raw = raw.get("limits", {})
    if not isinstance(lim_raw, Mapping):
        raise InvalidField("limits", "expected object")
    max_steps = lim_raw.get("max_steps", 500)
    wall_clock = lim_raw.get("wall_clock", 24 * 3600.0)
    if not isinstance(max_steps, int) or isinstance(max_steps, bool) or max_steps <= 0:
        raise InvalidField("limits.max_steps", "expected positive integer")
    if not isinstance(wall_clock, (int, float)) or isinstance(wall_clock, bool) or wall_clock <= 0:
        raise InvalidField("limits.wall_clock", "expected positive number of seconds")

    draft_count = raw.get("draft_count", 5)
    if not isinstance(draft_count, int) or isinstance(draft_count, bool) or draft_count < 1:
        raise InvalidField("draft_count", "expected positive integer")
    split_ratio = raw.get("split_ratio", 0.7)
    if not isinstance(split_ratio, (int, float)) or isinstance(split_ratio, bool) or not 0 < split_ratio < 1:
        raise InvalidField("split_ratio", "expected fraction in (0, 1)")
    one_shot = raw.get("one_shot", False)
    if not isinstance(one_shot, bool):
        raise InvalidField("one_shot", "expected boolean")

    return TaskManifest(
        task_id=task_id,
        pool=pool,
        direction=direction,
        length=length,
        evaluator=evaluator,
        limits=Limits(max_steps, float(wall_clock)),
        draft_count=draft_count,
        split_ratio=float(split_ratio),
        one_shot=one_shot,
    )


def load_task(path: str | Path) -> TaskManifest:
    """Read ``task.json`` from a task directory (or the file itself)."""
    path = Path(path)
    manifest = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest.is_file():
        raise MissingManifest(f"no {MANIFEST_NAME} in {path}")
    try:
        raw = json.loads(manifest.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidField("<root>", f"not valid JSON: {exc}") from None
    return manifest_from_dict(raw)


def write_submission(arch: Iterable, path: str | Path) -> None:
    Path(path).write_text(format_architecture(arch) + "\n", encoding="utf-8")


def read_submission(path: str | Path, manifest: TaskManifest) -> Architecture:
    # read_bytes keeps CRLF files intact; str.split() treats \r as whitespace
    text = Path(path).read_bytes().decode("utf-8")
    return parse_architecture(text, manifest.pool, manifest.length)


class Workspace:
    """A task directory with ``pools/``, ``logs/`` and ``patterns/`` beside ``task.json``."""

    def __init__(self, root: str | Path, manifest: TaskManifest | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        if manifest is not None:
            (self.root / MANIFEST_NAME).write_text(dumps(manifest.to_dict()) + "\n", encoding="utf-8")
        self.manifest = load_task(self.root)
        for sub in (self.pools_dir, self.logs_dir, self.patterns_dir):
            sub.mkdir(exist_ok=True)

    @property
    def pools_dir(self) -> Path:
        return self.root / "pools"

    @property
    def logs_dir(self) -> Path:
        return self.root / "logs"

    @property
    def patterns_dir(self) -> Path:
        return self.root / "patterns"

    def log_path(self, seed: int) -> Path:
        return self.logs_dir / f"run_seed{seed:04d}.jsonl"
