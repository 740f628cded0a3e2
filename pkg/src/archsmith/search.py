"""Greedy tree search over fixed-length architectures.

The loop drafts a handful of root candidates, then repeatedly asks the
proposer to improve the best valid node so far. Candidates that fail
:func:`analyze` get up to two debug attempts. Every node is kept in a
:class:`RunLog`, which serialises to JSONL and can be re-checked with
:func:`verify_log`.
"""

from __future__ import annotations

import json
import random
import time
from collections import deque
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Protocol

from .arch import (
    Architecture,
    Primitive,
    format_architecture,
    mutate,
    parse_architecture,
    random_architecture,
)
from .errors import ArchsmithError, EvaluatorFailure, ParseError, ProposerFailure, TransportError
from .proxy import Direction, ExternalEvaluator, FitnessRecord, SyntheticEvaluator
from .wire import JsonLineChannel
from .workspace import Limits, TaskManifest, dumps, sig6

MAX_DEBUG_ATTEMPTS = 2
HISTORY_LIMIT = 20


class Operator(str, Enum):
    DRAFT = "draft"
    IMPROVE = "improve"
    DEBUG = "debug"


class NoValidNode(ArchsmithError):
    pass


@dataclass(frozen=True)
class Diagnosis:
    ok: bool
    reason: str | None = None
    detail: str = ""
    architecture: Architecture | None = None


def analyze(candidate: str | Sequence[Primitive], pool: Sequence[Primitive], length: int) -> Diagnosis:
    """Decide whether a submission is usable; never raises."""
    text = candidate if isinstance(candidate, str) else format_architecture(candidate)
    try:
        arch = parse_architecture(text, pool, length)
    except ParseError as exc:
        return Diagnosis(False, exc.reason, str(exc))
    return Diagnosis(True, architecture=arch)


@dataclass
class SearchNode:
    id: int
    parent_id: int | None
    operator: Operator
    arch: str
    rationale: str
    valid: bool
    step_index: int
    val_fitness: float | None = None
    test_fitness: float | None = None
    diagnosis: str | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["operator"] = self.operator.value
        out["record"] = "node"
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> SearchNode:
        raw = {k: v for k, v in raw.items() if k != "record"}
        raw["operator"] = Operator(raw["operator"])
        return cls(**raw)


@dataclass
class RunLog:
    seed: int
    task_id: str
    direction: Direction
    limits: Limits
    nodes: list[SearchNode] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def best_val_node(self) -> int | None:
        try:
            return select_parent(self.nodes, self.direction)
        except NoValidNode:
            return None

    @property
    def best_test_node(self) -> int | None:
        scored = [n for n in self.nodes if n.valid and n.test_fitness is not None]
        if not scored:
            return None
        return min(scored, key=lambda n: (self.direction.sort_key(n.test_fitness), n.step_index)).id

    def node(self, node_id: int) -> SearchNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def summary(self) -> dict:
        bv, bt = self.best_val_node, self.best_test_node
        return {
            "record": "summary",
            "task_id": self.task_id,
            "seed": self.seed,
            "direction": self.direction.value,
            "limits": {"max_steps": self.limits.max_steps, "wall_clock": self.limits.wall_clock},
            "steps": len(self.nodes),
            "valid": sum(n.valid for n in self.nodes),
            "best_val_node": bv,
            "best_test_node": bt,
            "best_val": None if bv is None else self.node(bv).val_fitness,
            "best_test": None if bt is None else self.node(bt).test_fitness,
            "submitted_arch": None if bv is None else self.node(bv).arch,
            "submitted_test": None if bv is None else self.node(bv).test_fitness,
            "stop_reason": self.stop_reason,
        }

    def to_jsonl(self) -> str:
        lines = [dumps(n.to_dict()) for n in self.nodes]
        lines.append(dumps(self.summary()))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> RunLog:
        nodes: list[SearchNode] = []
        summary = None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ArchsmithError(f"line {lineno}: invalid JSON ({exc})") from None
            if raw.get("record") == "summary":
                summary = raw
            else:
                nodes.append(SearchNode.from_dict(raw))
        if summary is None:
            raise ArchsmithError("run log has no summary record")
        lim = summary["limits"]
        log = cls(
            summary["seed"],
            summary["task_id"],
            Direction(summary["direction"]),
            Limits(lim["max_steps"], lim["wall_clock"]),
            nodes,
            summary.get("stop_reason", ""),
        )
        log._stored_summary = summary
        return log

    @classmethod
    def read(cls, path: str | Path) -> RunLog:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def select_parent(log: RunLog | Iterable[SearchNode], direction: Direction | None = None) -> int:
    """Id of the valid node with the best validation fitness; earliest step wins ties."""
    if isinstance(log, RunLog):
        direction = direction or log.direction
        nodes = log.nodes
    else:
        nodes = log
    direction = direction or Direction.MAXIMIZE
    best = None
    for n in nodes:
        if not n.valid or n.val_fitness is None:
            continue
        if best is None or direction.better(n.val_fitness, best.val_fitness) or (
            n.val_fitness == best.val_fitness and n.step_index < best.step_index
        ):
            best = n
    if best is None:
        raise NoValidNode("no valid node to extend")
    return best.id


# -- proposers -----------------------------------------------------------------


class Proposer(Protocol):
    def propose(self, request: dict[str, Any]) -> dict[str, Any]: ...

    def close(self) -> None: ...


def _request_pool(request: dict) -> tuple[Primitive, ...]:
    return tuple(sorted(Primitive.from_token(t) for t in request["pool"]))


class MutatingProposer:
    """Built-in proposer: random drafts, small point mutations, token repair."""

    def __init__(self, max_edits: int = 3):
        self.max_edits = max_edits

    def propose(self, request: dict[str, Any]) -> dict[str, Any]:
        rng = random.Random(request["seed"])
        pool = _request_pool(request)
        length = request["length"]
        op = request["op"]
        if op == "draft":
            arch = random_architecture(rng, pool, length)
            return {"arch": format_architecture(arch), "rationale": "random draft"}
        parent = request["parent"]
        if op == "improve":
            base = parse_architecture(parent["arch"], pool, length)
            # favour single edits; occasionally jump further
            edits = min(length, rng.choice([1, 1, 1, 2, 2, self.max_edits]))
            child = mutate(base, edits, rng, pool)
            return {"arch": format_architecture(child), "rationale": f"mutated {edits} position(s)"}
        if op == "debug":
            return {"arch": format_architecture(self._repair(parent["arch"], pool, length, rng)),
                    "rationale": f"repaired {parent.get('diagnosis') or 'submission'}"}
        raise ProposerFailure(f"unknown op {op!r}")

    @staticmethod
    def _repair(text: str, pool, length: int, rng: random.Random) -> Architecture:
        fixed = []
        for tok in text.split()[:length]:
            try:
                p = Primitive.from_token(tok)
            except ParseError:
                p = None
            fixed.append(p if p in pool else rng.choice(pool))
        while len(fixed) < length:
            fixed.append(rng.choice(pool))
        return tuple(fixed)

    def close(self) -> None:
        pass


class ExternalProposer:
    """Proposer process or service speaking the line-delimited JSON protocol."""

    def __init__(self, address: str, timeout: float | None = 600.0):
        self.address = address
        self.timeout = timeout
        self._channel: JsonLineChannel | None = None

    def propose(self, request: dict[str, Any]) -> dict[str, Any]:
        try:
            if self._channel is None:
                self._channel = JsonLineChannel(self.address, self.timeout)
            line = self._channel.request(request)
        except (TimeoutError, TransportError) as exc:
            raise ProposerFailure(str(exc)) from exc
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            raise ProposerFailure(f"proposer sent non-JSON: {line[:200]!r}") from None

    def close(self) -> None:
        if self._channel is not None:
            self._channel.close()
            self._channel = None


def resolve_proposer(spec: str) -> Proposer:
    """``builtin:mutate``, ``cmd:<command>`` or ``tcp://host:port``."""
    if spec in ("builtin:mutate", "builtin"):
        return MutatingProposer()
    if spec.startswith(("cmd:", "tcp://")):
        return ExternalProposer(spec)
    raise ArchsmithError(f"unknown proposer {spec!r}")


def make_evaluator(task: TaskManifest) -> Callable[[Architecture], FitnessRecord]:
    if task.evaluator.kind == "synthetic":
        return SyntheticEvaluator(task.evaluator.seed, task.direction)
    return ExternalEvaluator(task.evaluator.address, task.task_id, task.evaluator.seed)


# -- the greedy loop -----------------------------------------------------------


def _request_seed(run_seed: int, step: int) -> int:
    return (run_seed * 1_000_003 + step * 7_919 + 1) % 2**31


def _check_response(resp: Any) -> tuple[str, str]:
    if not isinstance(resp, dict) or not isinstance(resp.get("arch"), str):
        raise ProposerFailure(f"response lacks a string 'arch': {str(resp)[:200]}")
    rationale = resp.get("rationale", "")
    return resp["arch"], rationale if isinstance(rationale, str) else str(rationale)


def run_greedy(
    task: TaskManifest,
    proposer: Proposer,
    evaluator: Callable[[Architecture], FitnessRecord],
    limits: Limits | None = None,
    seed: int = 0,
    clock: Callable[[], float] = time.monotonic,
) -> RunLog:
    """Run one greedy search and return its complete log.

    Raises :class:`EvaluatorFailure` (with ``.log`` set to the partial log)
    if the evaluator breaks; proposer problems only invalidate a node.
    """
    limits = limits or task.limits
    direction = task.direction
    pool_tokens = [p.token for p in task.pool]
    log = RunLog(seed, task.task_id, direction, limits)
    start = clock()

    def out_of_budget() -> str | None:
        if len(log.nodes) >= limits.max_steps:
            return "max_steps"
        if clock() - start >= limits.wall_clock:
            return "wall_clock"
        return None

    def history() -> list[dict]:
        valid = [n for n in log.nodes if n.valid]
        valid.sort(key=lambda n: (direction.sort_key(n.val_fitness), n.step_index))
        return [{"arch": n.arch, "val": n.val_fitness} for n in valid[:HISTORY_LIMIT]]

    def expand(op: Operator, parent: SearchNode | None) -> SearchNode:
        step = len(log.nodes)
        parent_info = None
        if parent is not None:
            parent_info = {"arch": parent.arch, "val": parent.val_fitness, "rationale": parent.rationale}
            if op is Operator.DEBUG:
                parent_info["diagnosis"] = parent.diagnosis
        request = {
            "op": op.value,
            "pool": pool_tokens,
            "length": task.length,
            "parent": parent_info,
            "history_summary": history(),
            "seed": _request_seed(seed, step),
        }
        try:
            arch_text, rationale = _check_response(proposer.propose(request))
        except ProposerFailure as exc:
            node = SearchNode(step, parent and parent.id, op, "", str(exc), False, step, diagnosis="ProposerFailure")
            log.nodes.append(node)
            return node
        arch_text = " ".join(arch_text.split())
        diag = analyze(arch_text, task.pool, task.length)
        node = SearchNode(step, parent and parent.id, op, arch_text, rationale, diag.ok, step, diagnosis=diag.reason)
        if diag.ok:
            node.arch = format_architecture(diag.architecture)
            try:
                record = evaluator(diag.architecture)
            except EvaluatorFailure as exc:
                log.stop_reason = f"evaluator_failure: {exc}"
                exc.log = log
                raise
            # quantise once so the in-memory search and the written log agree
            node.val_fitness = sig6(record.val_fitness)
            node.test_fitness = sig6(record.test_fitness)
        log.nodes.append(node)
        return node

    pending: deque[tuple[SearchNode, int]] = deque()
    drafts = 1 if task.one_shot else task.draft_count
    for _ in range(drafts):
        if reason := out_of_budget():
            log.stop_reason = reason
            return log
        node = expand(Operator.DRAFT, None)
        if not node.valid and not task.one_shot:
            pending.append((node, 1))
    if task.one_shot:
        log.stop_reason = "one_shot"
        return log

    while not (reason := out_of_budget()):
        if pending:
            buggy, attempt = pending.popleft()
            child = expand(Operator.DEBUG, buggy)
            if not child.valid and attempt < MAX_DEBUG_ATTEMPTS:
                pending.append((child, attempt + 1))
            continue
        try:
            parent = log.node(select_parent(log.nodes, direction))
        except NoValidNode:
            log.stop_reason = "no_valid_node"
            return log
        child = expand(Operator.IMPROVE, parent)
        if not child.valid:
            pending.append((child, 1))
    log.stop_reason = reason
    return log


def verify_log(log: RunLog, draft_count: int | None = None) -> list[str]:
    """Replay the tree-shape and greedy-frontier rules; returns violations."""
    problems: list[str] = []
    seen: dict[int, SearchNode] = {}
    last_step = -1
    in_drafts = True
    n_drafts = 0
    # (buggy node id) -> debug attempt index of that node in its chain
    chain_depth: dict[int, int] = {}
    for n in log.nodes:
        where = f"node {n.id}"
        if n.id in seen:
            problems.append(f"{where}: duplicate id")
        if n.step_index <= last_step:
            problems.append(f"{where}: step_index not increasing")
        last_step = n.step_index
        if not n.valid and n.val_fitness is not None:
            problems.append(f"{where}: invalid node carries a validation fitness")
        if n.valid and n.val_fitness is None:
            problems.append(f"{where}: valid node lacks a validation fitness")
        if n.operator is Operator.DRAFT:
            if not in_drafts:
                problems.append(f"{where}: draft after the drafting phase")
            if n.parent_id is not None:
                problems.append(f"{where}: draft has a parent")
            n_drafts += 1
        else:
            in_drafts = False
            parent = seen.get(n.parent_id) if n.parent_id is not None else None
            if parent is None:
                problems.append(f"{where}: parent {n.parent_id} missing or not earlier")
            elif n.operator is Operator.IMPROVE:
                try:
                    expected = select_parent(seen.values(), log.direction)
                except NoValidNode:
                    expected = None
                if n.parent_id != expected:
                    problems.append(f"{where}: improve parent {n.parent_id} is not the greedy frontier {expected}")
            elif n.operator is Operator.DEBUG:
                if parent.valid:
                    problems.append(f"{where}: debug of a valid node")
                depth = chain_depth.get(parent.id, 0) + 1
                if depth > MAX_DEBUG_ATTEMPTS:
                    problems.append(f"{where}: more than {MAX_DEBUG_ATTEMPTS} debug attempts in a chain")
                chain_depth[n.id] = depth
        seen[n.id] = n
    if draft_count is not None and n_drafts != draft_count:
        problems.append(f"expected {draft_count} drafts, found {n_drafts}")
    stored = getattr(log, "_stored_summary", None)
    if stored is not None:
        fresh = log.summary()
        for key in ("best_val_node", "best_test_node", "best_val", "best_test", "steps"):
            if stored.get(key) != fresh[key]:
                problems.append(f"summary {key}={stored.get(key)!r} but nodes give {fresh[key]!r}")
    return problems
