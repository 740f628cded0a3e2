"""Scale a short base pattern up to a full-depth layer layout.

Stacking repeats the base whole; stretching widens each contiguous run in
proportion, using largest-remainder apportionment so depths come out exact.
Patterns round-trip through the compact notation used in layout tables,
e.g. ``2×(3A-4×(M-A)-5M)``.
"""

from __future__ import annotations

import math
import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

from .arch import A, M, Architecture, Mb, Primitive, format_architecture
from .errors import ArchsmithError
from .scale import LayerCounts, ScaleConfig, SsmConfig, params_model


class Origin(str, Enum):
    STACKED = "stacked"
    STRETCHED = "stretched"
    LITERAL = "literal"


class Fill(str, Enum):
    PREFIX = "prefix"
    SUFFIX = "suffix"
    CONSTANT = "constant"


class Unreachable(ArchsmithError):
    pass


class PatternSyntaxError(ArchsmithError, ValueError):
    pass


@dataclass(frozen=True)
class Run:
    primitive: Primitive
    length: int

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("run length must be >= 1")


def run_length_encode(arch: Sequence[Primitive]) -> tuple[Run, ...]:
    runs: list[Run] = []
    for p in arch:
        if runs and runs[-1].primitive == p:
            runs[-1] = Run(p, runs[-1].length + 1)
        else:
            runs.append(Run(p, 1))
    return tuple(runs)


def run_length_decode(runs: Sequence[Run]) -> Architecture:
    return tuple(r.primitive for r in runs for _ in range(r.length))


@dataclass(frozen=True)
class LayerPattern:
    layers: Architecture
    origin: Origin
    base: Architecture

    @property
    def runs(self) -> tuple[Run, ...]:
        return run_length_encode(self.layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def counts(self) -> LayerCounts:
        return LayerCounts.from_layers(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def compact(self) -> str:
        return format_pattern(self.layers)

    def tokens(self) -> str:
        return format_architecture(self.layers)

    def describe(self, cfg: ScaleConfig | None = None, ssm: SsmConfig | None = None) -> dict:
        c = self.counts
        out = {
            "depth": self.depth,
            "counts": {"A": c.attn, "M": c.mlp, "Mb": c.ssm},
            "origin": self.origin.value,
            "pattern": self.compact(),
            "base": format_pattern(self.base),
        }
        if cfg is not None:
            out["params_non_embed"], out["params_total"] = params_model(c, cfg, ssm)
            out["config"] = cfg.name
        return out


def stretch(base: Sequence[Primitive], target_depth: int) -> LayerPattern:
    """Scale every run by ``target_depth / len(base)`` (Hamilton rounding).

    Leftover layers go to the largest fractional parts, earlier runs first on ties.
    """
    base = tuple(base)
    n = len(base)
    if target_depth < n:
        raise ValueError(f"target depth {target_depth} is below base length {n}")
    runs = run_length_encode(base)
    quotas = [Fraction(r.length * target_depth, n) for r in runs]
    sizes = [math.floor(q) for q in quotas]
    left = target_depth - sum(sizes)
    order = sorted(range(len(runs)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    layers = run_length_decode([Run(r.primitive, s) for r, s in zip(runs, sizes)])
    return LayerPattern(layers, Origin.STRETCHED, base)


def stack(
    base: Sequence[Primitive],
    target_depth: int,
    fill: Fill | str = Fill.PREFIX,
    constant: Primitive | None = None,
) -> LayerPattern:
    """Repeat ``base`` whole, then pad the remaining ``target_depth % len(base)`` layers.

    Pass ``fill=Fill.CONSTANT`` with ``constant=M`` (for example) to pad with
    one primitive; a bare :class:`Primitive` as ``fill`` means the same.
    """
    base = tuple(base)
    n = len(base)
    if target_depth < n:
        raise ValueError(f"target depth {target_depth} is below base length {n}")
    if isinstance(fill, Primitive):
        fill, constant = Fill.CONSTANT, fill
    fill = Fill(fill)
    copies, rest = divmod(target_depth, n)
    if fill is Fill.PREFIX:
        tail = base[:rest]
    elif fill is Fill.SUFFIX:
        tail = base[n - rest :] if rest else ()
    else:
        if constant is None:
            raise ValueError("constant fill needs a primitive")
        tail = (constant,) * rest
    return LayerPattern(base * copies + tail, Origin.STACKED, base)


def extrapolate(
    base: Sequence[Primitive],
    target_depth: int,
    mode: Origin | str,
    fill: Fill | str | Primitive = Fill.PREFIX,
) -> LayerPattern:
    mode = Origin(mode)
    if mode is Origin.STRETCHED:
        return stretch(base, target_depth)
    if mode is Origin.STACKED:
        return stack(base, target_depth, fill)
    raise ValueError("only stacked or stretched extrapolation is supported")


def choose_depth(
    base: Sequence[Primitive],
    cfg: ScaleConfig,
    mode: Origin | str,
    target_params: int | float,
    ssm: SsmConfig | None = None,
    fill: Fill | str | Primitive = Fill.PREFIX,
    max_factor: int = 8,
) -> int:
    """Depth in ``[len(base), max_factor * len(base)]`` whose non-embedding
    parameter count is closest to ``target_params`` (smaller depth on ties)."""
    n = len(base)
    best_depth, best_gap = None, None
    for depth in range(n, max_factor * n + 1):
        pattern = extrapolate(base, depth, mode, fill)
        non_embed, _ = params_model(pattern.counts, cfg, ssm)
        gap = abs(non_embed - target_params)
        if best_gap is None or gap < best_gap:
            best_depth, best_gap = depth, gap
    if best_gap > 0.5 * target_params:
        raise Unreachable(
            f"no depth in [{n}, {max_factor * n}] comes within 50% of {target_params:.4g} parameters"
        )
    return best_depth


# -- compact notation ----------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:(\d+)|(×|\\times|x|\*)|(\()|(\))|([-+,])|(Mb|mA|A|M))")
_SYMBOL = {"Mb": Mb, "mA": A, "A": A, "M": M}


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.strip().replace("$", "")
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise PatternSyntaxError(f"unexpected {text[pos:pos + 10]!r} at offset {pos}")
        kinds = ("num", "times", "open", "close", "sep", "sym")
        kind = next(k for k, g in zip(kinds, m.groups()) if g is not None)
        out.append((kind, m.group(m.lastindex)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def parse_pattern(text: str) -> Architecture:
    """Expand compact notation such as ``"2×(3A-4×(M-A)-5M)"`` or
    ``"3 × (2Mb + M + A) + 2Mb + 2M"`` into a flat layer tuple."""
    toks = _tokenize(text)
    pos = 0

    def peek(kind: str) -> bool:
        return pos < len(toks) and toks[pos][0] == kind

    def take(kind: str) -> str:
        nonlocal pos
        if not peek(kind):
            got = toks[pos][1] if pos < len(toks) else "end of pattern"
            raise PatternSyntaxError(f"expected {kind}, got {got!r}")
        pos += 1
        return toks[pos - 1][1]

    def item() -> list[Primitive]:
        nonlocal pos
        count = 1
        if peek("num"):
            count = int(take("num"))
            if peek("times"):
                take("times")
        elif peek("times"):
            raise PatternSyntaxError("multiplier without a count")
        if peek("open"):
            take("open")
            inner = seq()
            take("close")
            return inner * count
        return [_SYMBOL[take("sym")]] * count

    def seq() -> list[Primitive]:
        out = item()
        while peek("sep"):
            take("sep")
            out += item()
        return out

    if not toks:
        raise PatternSyntaxError("empty pattern")
    layers = seq()
    if pos != len(toks):
        raise PatternSyntaxError(f"trailing input at {toks[pos][1]!r}")
    return tuple(layers)


def format_pattern(layers: Sequence[Primitive]) -> str:
    """Shortest compact-notation string for ``layers`` that keeps runs whole.

    Deterministic: among equal lengths the repeat form wins, then the earliest split.
    """
    layers = tuple(layers)
    if not layers:
        return ""
    n = len(layers)

    @lru_cache(maxsize=None)
    def best(i: int, j: int) -> str:
        seg = layers[i:j]
        size = j - i
        if all(p == seg[0] for p in seg):
            sym = seg[0].symbol
            return sym if size == 1 else f"{size}{sym}"
        cand = None
        for p in range(1, size // 2 + 1):
            if size % p == 0 and seg == seg[:p] * (size // p):
                cand = f"{size // p}×({best(i, i + p)})"
                break
        for k in range(i + 1, j):
            if layers[k - 1] == layers[k]:
                continue  # never cut a run in two
            s = f"{best(i, k)}-{best(k, j)}"
            if cand is None or len(s) < len(cand):
                cand = s
        return cand

    # fill shorter intervals first to keep recursion shallow
    for width in range(1, n + 1):
        for i in range(0, n - width + 1):
            best(i, i + width)
    return best(0, n)
