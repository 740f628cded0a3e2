"""Primitives and fixed-length architecture strings.

An architecture is a plain ``tuple`` of :class:`Primitive` values. Tuples are
immutable and hashable, which is all the rest of the package needs.
"""

from __future__ import annotations

import random
import re
from collections.abc import Iterable, Sequence
from enum import IntEnum

import numpy as np

from .errors import OutOfPool, SearchSpaceOverflow, UnknownToken, WrongLength

DEFAULT_LENGTH = 16

# Largest value we are willing to hand to int64 consumers (JSON readers, numpy).
_MAX_EXACT = 2**63 - 1


class Primitive(IntEnum):
    """Computational block. Integer values fix the tie-break order M < A < Mb."""

    MLP = 0
    ATTENTION = 1
    MAMBA = 2

    @property
    def token(self) -> str:
        return _TOKENS[self]

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]

    @classmethod
    def from_token(cls, text: str) -> Primitive:
        try:
            return _ALIASES[text.strip().lower()]
        except KeyError:
            raise UnknownToken(f"unknown primitive token {text!r}") from None

    @classmethod
    def from_symbol(cls, text: str) -> Primitive:
        try:
            return _FROM_SYMBOL[text]
        except KeyError:
            raise UnknownToken(f"unknown primitive symbol {text!r}") from None

    def __str__(self) -> str:
        return self.symbol


M, A, Mb = Primitive.MLP, Primitive.ATTENTION, Primitive.MAMBA

_TOKENS = {M: "mlp", A: "mh-attention", Mb: "mamba2"}
_SYMBOLS = {M: "M", A: "A", Mb: "Mb"}
# Submission vocabulary; aliases are read but never written.
_ALIASES = {"mlp": M, "mh-attention": A, "mamba2": Mb, "mamba": Mb, "mb": Mb}
_FROM_SYMBOL = {"M": M, "A": A, "mA": A, "Mb": Mb}

Architecture = tuple[Primitive, ...]
PrimitivePool = tuple[Primitive, ...]

TWO_PRIMITIVE: PrimitivePool = (M, A)
THREE_PRIMITIVE: PrimitivePool = (M, A, Mb)


def make_pool(members: Iterable[Primitive | str]) -> PrimitivePool:
    """Build a pool from primitives or tokens; duplicates are rejected."""
    prims = [m if isinstance(m, Primitive) else _lookup(m) for m in members]
    if not prims:
        raise ValueError("primitive pool is empty")
    if len(set(prims)) != len(prims):
        raise ValueError(f"duplicate primitive in pool: {[p.token for p in prims]}")
    return tuple(sorted(prims))


def _lookup(name: str) -> Primitive:
    if name in _FROM_SYMBOL:
        return _FROM_SYMBOL[name]
    return Primitive.from_token(name)


def parse_architecture(
    text: str, pool: Sequence[Primitive] = THREE_PRIMITIVE, length: int = DEFAULT_LENGTH
) -> Architecture:
    """Parse whitespace-separated tokens (any case, any line wrapping)."""
    tokens = text.split()
    prims = tuple(Primitive.from_token(t) for t in tokens)
    if len(prims) != length:
        raise WrongLength(f"expected {length} primitives, got {len(prims)}")
    allowed = set(pool)
    for i, p in enumerate(prims):
        if p not in allowed:
            raise OutOfPool(f"layer {i}: {p.token!r} is not in pool {[q.token for q in sorted(allowed)]}")
    return prims


def format_architecture(arch: Iterable[Primitive]) -> str:
    return " ".join(p.token for p in arch)


def to_symbols(arch: Iterable[Primitive]) -> str:
    """Short human form, e.g. ``"A M A M"``."""
    return " ".join(p.symbol for p in arch)


def from_symbols(text: str) -> Architecture:
    """Inverse of :func:`to_symbols`; also accepts ``"AMAM"`` style strings."""
    if " " not in text.strip():
        text = " ".join(re.findall(r"Mb|mA|A|M|.", text.strip()))
    return tuple(Primitive.from_symbol(t) for t in text.split())


def encode_onehot(arch: Sequence[Primitive], pool: Sequence[Primitive]) -> np.ndarray:
    """Concatenated per-layer one-hot blocks, ordered by the pool order."""
    pool = tuple(sorted(pool))
    index = {p: i for i, p in enumerate(pool)}
    vec = np.zeros(len(arch) * len(pool))
    for layer, p in enumerate(arch):
        vec[layer * len(pool) + index[p]] = 1.0
    return vec


def search_space_size(pool: Sequence[Primitive] | int, length: int) -> int:
    n = pool if isinstance(pool, int) else len(pool)
    if n < 1 or length < 1:
        raise ValueError("pool size and length must be positive")
    size = n**length
    if size > _MAX_EXACT:
        raise SearchSpaceOverflow(f"{n}^{length} does not fit in a signed 64-bit integer")
    return size


def mutate(
    arch: Sequence[Primitive],
    edits: int,
    rng: random.Random | int,
    pool: Sequence[Primitive] = TWO_PRIMITIVE,
) -> Architecture:
    """Rewrite ``edits`` distinct positions with a different pool member.

    With a single-member pool no position can change, so the result may
    differ in fewer positions than requested.
    """
    if not 1 <= edits <= len(arch):
        raise ValueError(f"edits must be in [1, {len(arch)}], got {edits}")
    if isinstance(rng, int):
        rng = random.Random(rng)
    pool = tuple(sorted(pool))
    out = list(arch)
    for pos in sorted(rng.sample(range(len(out)), edits)):
        choices = [p for p in pool if p != out[pos]]
        if choices:
            out[pos] = rng.choice(choices)
    return tuple(out)


def random_architecture(
    rng: random.Random, pool: Sequence[Primitive], length: int = DEFAULT_LENGTH
) -> Architecture:
    pool = tuple(sorted(pool))
    return tuple(rng.choice(pool) for _ in range(length))


def hamming(a: Sequence[Primitive], b: Sequence[Primitive]) -> int:
    if len(a) != len(b):
        raise ValueError("architectures differ in length")
    return sum(x != y for x, y in zip(a, b))
