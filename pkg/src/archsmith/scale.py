"""FLOP and parameter accounting for attention, SwiGLU MLP and Mamba-2 layers.

All arithmetic is on Python ints; the only division happens when a FLOP
budget is converted to a step count, and that uses exact fractions.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Literal

from .arch import A, M, Mb, Primitive
from .errors import ConfigError, MissingLatency

Rounding = Literal["nearest", "floor"]

PRESET_NAMES = ("350M-2prim", "1B-2prim", "3B-2prim", "350M-3prim", "1B-3prim", "3B-3prim")


def multiple_of_ceil(x: int, m: int) -> int:
    """Smallest multiple of ``m`` that is >= ``x``."""
    if x < 0 or m <= 0:
        raise ValueError("need x >= 0 and m > 0")
    return -(-x // m) * m


def _exact(value: float | int | str | Fraction | Decimal) -> Fraction:
    # str() of a float gives the shortest repr, so 1.4 becomes 7/5 rather than
    # the binary approximation.
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return Fraction(Decimal(str(value)))


def mlp_hidden_dim(d: int, f: float | str | Fraction) -> int:
    return multiple_of_ceil(math.floor(Fraction(2, 3) * 4 * d * _exact(f)), 1024)


def ssm_hidden_dim(d: int) -> int:
    return multiple_of_ceil(math.floor(Fraction(2, 3) * 3 * d), 256)


@dataclass(frozen=True)
class SsmConfig:
    d_ssm: int
    n_s: int
    k: int = 4
    n_g: int = 1
    d_h_ssm: int = 64

    def __post_init__(self) -> None:
        if min(self.d_ssm, self.n_s, self.k, self.n_g, self.d_h_ssm) <= 0:
            raise ConfigError("SSM dimensions must be positive")
        if self.d_ssm % self.d_h_ssm:
            raise ConfigError(f"d_ssm={self.d_ssm} not divisible by d_h_ssm={self.d_h_ssm}")

    @classmethod
    def for_width(cls, d: int, n_s: int, k: int = 4, n_g: int = 1, d_h_ssm: int = 64) -> SsmConfig:
        return cls(ssm_hidden_dim(d), n_s, k, n_g, d_h_ssm)

    @property
    def n_ssm(self) -> int:
        return self.d_ssm // self.d_h_ssm

    @property
    def d_in_proj(self) -> int:
        return 2 * self.d_ssm + 2 * self.n_g * self.n_s + self.n_ssm

    @property
    def d_conv(self) -> int:
        return self.d_ssm + 2 * self.n_g * self.n_s


@dataclass(frozen=True)
class ScaleConfig:
    """Model width, attention shape and batch size at one scale.

    ``h`` is derived from ``d`` and ``f`` unless given explicitly.
    """

    d: int
    n_h: int
    d_h: int
    n_kv: int
    s: int = 8192
    f: float = 1.0
    vocab: int = 128_256
    tokens_per_step: int = 524_288
    ssm: SsmConfig | None = None
    h: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        ints = (self.d, self.n_h, self.d_h, self.n_kv, self.s, self.vocab, self.tokens_per_step)
        if min(ints) <= 0 or self.f <= 0:
            raise ConfigError("scale config values must be positive")
        if self.d != self.n_h * self.d_h:
            raise ConfigError(f"d={self.d} != n_h*d_h={self.n_h * self.d_h}")
        if self.n_kv > self.n_h:
            raise ConfigError("n_kv must not exceed n_h")
        if not self.h:
            object.__setattr__(self, "h", mlp_hidden_dim(self.d, self.f))

    @property
    def d_kv(self) -> int:
        return self.n_kv * self.d_h

    @classmethod
    def from_dict(cls, raw: Mapping, name: str = "") -> ScaleConfig:
        raw = dict(raw)
        ssm_raw = raw.pop("ssm", None)
        ssm = None
        if ssm_raw is not None:
            ssm_raw = dict(ssm_raw)
            if "d_ssm" in ssm_raw:
                ssm = SsmConfig(**ssm_raw)
            else:
                ssm = SsmConfig.for_width(raw["d"], **ssm_raw)
        known = {f for f in cls.__dataclass_fields__} - {"ssm"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown scale-config keys: {sorted(unknown)}")
        raw.setdefault("name", name)
        try:
            return cls(ssm=ssm, **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.ssm is None:
            out.pop("ssm")
        return out


def load_preset(name: str) -> ScaleConfig:
    """Load a shipped preset such as ``"1B-2prim"``."""
    try:
        text = resources.files("archsmith.presets").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(available_presets())}") from None
    return ScaleConfig.from_dict(json.loads(text), name=name)


def available_presets() -> list[str]:
    files = resources.files("archsmith.presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


def load_scale_config(spec: str | Path) -> ScaleConfig:
    """Preset name or path to a JSON scale-config file."""
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        return ScaleConfig.from_dict(json.loads(path.read_text()), name=path.stem)
    return load_preset(str(spec))


@dataclass(frozen=True)
class LayerCounts:
    attn: int = 0
    mlp: int = 0
    ssm: int = 0

    def __post_init__(self) -> None:
        if min(self.attn, self.mlp, self.ssm) < 0:
            raise ValueError("layer counts must be non-negative")

    @classmethod
    def from_layers(cls, layers: Iterable[Primitive]) -> LayerCounts:
        seq = list(layers)
        return cls(seq.count(A), seq.count(M), seq.count(Mb))

    @classmethod
    def from_mapping(cls, mapping: Mapping[Primitive | str, int]) -> LayerCounts:
        by_prim = {_as_primitive(k): int(v) for k, v in mapping.items()}
        return cls(by_prim.get(A, 0), by_prim.get(M, 0), by_prim.get(Mb, 0))

    def __getitem__(self, prim: Primitive) -> int:
        return {A: self.attn, M: self.mlp, Mb: self.ssm}[prim]

    def items(self) -> list[tuple[Primitive, int]]:
        return [(M, self.mlp), (A, self.attn), (Mb, self.ssm)]

    @property
    def total(self) -> int:
        return self.attn + self.mlp + self.ssm


def _as_primitive(key: Primitive | str) -> Primitive:
    if isinstance(key, Primitive):
        return key
    return Primitive.from_symbol(key) if key in ("A", "M", "Mb", "mA") else Primitive.from_token(key)


def _counts(layers: LayerCounts | Iterable[Primitive]) -> LayerCounts:
    return layers if isinstance(layers, LayerCounts) else LayerCounts.from_layers(layers)


# -- FLOPs per token per layer (training: forward + 2x backward) --------------


def flops_attention(cfg: ScaleConfig) -> int:
    d = cfg.d
    return 6 * (2 * d * d + 2 * d * cfg.d_kv) + 12 * cfg.s * d


def flops_mlp(cfg: ScaleConfig) -> int:
    return 18 * cfg.d * cfg.h


def flops_ssm(cfg: ScaleConfig, ssm: SsmConfig | None = None) -> int:
    ssm = ssm or _require_ssm(cfg)
    d = cfg.d
    return 6 * (
        d * ssm.d_in_proj
        + ssm.d_conv * ssm.k
        + 2 * ssm.n_ssm * ssm.d_h_ssm * ssm.n_s
        + ssm.d_ssm * d
    )


def _require_ssm(cfg: ScaleConfig) -> SsmConfig:
    if cfg.ssm is None:
        raise ConfigError(f"scale config {cfg.name or cfg.d} has no SSM settings")
    return cfg.ssm


def per_layer_flops(cfg: ScaleConfig) -> dict[Primitive, int]:
    out = {A: flops_attention(cfg), M: flops_mlp(cfg)}
    if cfg.ssm is not None:
        out[Mb] = flops_ssm(cfg)
    return out


def flops_per_step(
    counts: LayerCounts | Iterable[Primitive],
    per_layer: Mapping[Primitive, int],
    tokens_per_step: int,
) -> int:
    counts = _counts(counts)
    total = 0
    for prim, n in counts.items():
        if n:
            total += n * per_layer[prim]
    return total * tokens_per_step


def step_flops(counts: LayerCounts | Iterable[Primitive], cfg: ScaleConfig) -> int:
    """C_step for ``counts`` under ``cfg``."""
    return flops_per_step(counts, per_layer_flops(cfg), cfg.tokens_per_step)


def parse_budget(value: float | int | str) -> int:
    """``"2e19"`` / ``2e19`` / ``20000000000000000000`` -> exact int."""
    exact = _exact(value)
    if exact.denominator != 1 or exact <= 0:
        raise ValueError(f"FLOP budget must be a positive integer amount, got {value!r}")
    return int(exact)


def steps_for_budget(budget: float | int | str, c_step: int, rounding: Rounding = "nearest") -> int:
    """Training steps that spend ``budget`` FLOPs at ``c_step`` FLOPs per step.

    ``"nearest"`` rounds half up; ``"floor"`` truncates.
    """
    if c_step <= 0:
        raise ValueError("c_step must be positive")
    ratio = Fraction(parse_budget(budget), c_step)
    if rounding == "floor":
        return math.floor(ratio)
    if rounding == "nearest":
        return math.floor(ratio + Fraction(1, 2))
    raise ValueError(f"unknown rounding mode {rounding!r}")


# -- parameters ----------------------------------------------------------------


def params_attention(cfg: ScaleConfig) -> int:
    return 2 * cfg.d * cfg.d + 2 * cfg.d * cfg.d_kv


def params_mlp(cfg: ScaleConfig) -> int:
    return 3 * cfg.d * cfg.h


def params_ssm(cfg: ScaleConfig, ssm: SsmConfig | None = None) -> int:
    # in/out projections and conv weights only; dt, A, D and norm are ignored
    ssm = ssm or _require_ssm(cfg)
    return cfg.d * ssm.d_in_proj + ssm.d_conv * ssm.k + ssm.d_ssm * cfg.d


def params_model(
    layers: LayerCounts | Iterable[Primitive], cfg: ScaleConfig, ssm: SsmConfig | None = None
) -> tuple[int, int]:
    """``(non_embedding, total)``; the tied embedding is counted once."""
    counts = _counts(layers)
    non_embed = counts.attn * params_attention(cfg) + counts.mlp * params_mlp(cfg)
    if counts.ssm:
        non_embed += counts.ssm * params_ssm(cfg, ssm)
    return non_embed, non_embed + cfg.vocab * cfg.d


def block_latency_total(
    counts: LayerCounts | Iterable[Primitive], latency_table: Mapping[Primitive | str, float]
) -> float:
    table = {_as_primitive(k): float(v) for k, v in latency_table.items()}
    total = 0.0
    for prim, n in _counts(counts).items():
        if not n:
            continue
        if prim not in table:
            raise MissingLatency(f"no latency entry for {prim.token}")
        if table[prim] < 0:
            raise ValueError(f"negative latency for {prim.token}")
        total += n * table[prim]
    return total


@dataclass(frozen=True)
class BudgetPlan:
    counts: LayerCounts
    config: str
    c_step: int
    steps: dict[int, int] = field(default_factory=dict)


def plan_budgets(
    counts: LayerCounts | Iterable[Primitive],
    cfg: ScaleConfig,
    budgets: Iterable[float | int | str],
    rounding: Rounding = "nearest",
) -> BudgetPlan:
    counts = _counts(counts)
    c_step = step_flops(counts, cfg)
    steps = {parse_budget(b): steps_for_budget(b, c_step, rounding) for b in budgets}
    return BudgetPlan(counts, cfg.name, c_step, steps)
