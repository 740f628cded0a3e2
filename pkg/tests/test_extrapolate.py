from __future__ import annotations

import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from archsmith.arch import THREE_PRIMITIVE, A, M, Mb, format_architecture
from archsmith.extrapolate import (
    Fill,
    Origin,
    PatternSyntaxError,
    Run,
    Unreachable,
    choose_depth,
    format_pattern,
    parse_pattern,
    run_length_decode,
    run_length_encode,
    stack,
    stretch,
)
from archsmith.scale import load_preset, params_model

bases = st.lists(st.sampled_from(THREE_PRIMITIVE), min_size=1, max_size=24).map(tuple)

FORMER_B = "2A + 5 × (A + M) + 4M"
FORMER_C = "(2A + M) + 3 × (A + M) + (2A + M) + 4A"
FORMER_C_STACK_UNIT = "2×(2A-M)-3×(A-M)-4A"
FORMER_D = "5 × (2A + M) + A"
HYBRID_A = "2Mb + M + 11Mb + 2M"
HYBRID_E = "5 × (Mb + M + A) + M"
COMPOSITE = "2A-5M-2A-3M-A-3M"


def same(pattern, text):
    """Compare in exploded token form, byte for byte."""
    return format_architecture(pattern.layers) == format_architecture(parse_pattern(text))


# -- run-length encoding ----------------------------------------------------------


def test_rle_examples():
    assert run_length_encode((A, A, M, M, M)) == (Run(A, 2), Run(M, 3))
    assert run_length_encode((A, M, A, M)) == tuple(Run(p, 1) for p in (A, M, A, M))


def test_rle_merges_leading_runs():
    runs = run_length_encode(parse_pattern(FORMER_B))
    expect = [(A, 3), (M, 1), (A, 1), (M, 1), (A, 1), (M, 1), (A, 1), (M, 1), (A, 1), (M, 5)]
    assert [(r.primitive, r.length) for r in runs] == expect


@given(bases)
def test_rle_round_trip(base):
    runs = run_length_encode(base)
    assert run_length_decode(runs) == base
    assert all(a.primitive != b.primitive for a, b in zip(runs, runs[1:]))


# -- stretch ----------------------------------------------------------------------


def test_stretch_exact_double():
    out = stretch((A,) * 2 + (M,) * 14, 32)
    assert out.runs == (Run(A, 4), Run(M, 28))


def test_stretch_tie_goes_to_earlier_run():
    out = stretch((A,) * 3 + (M,) * 13, 24)
    assert out.runs == (Run(A, 5), Run(M, 19))


def test_stretch_identity():
    base = parse_pattern(FORMER_D)
    assert stretch(base, len(base)).layers == base


def test_stretch_below_base_rejected():
    with pytest.raises(ValueError):
        stretch((A, M, A), 2)


@given(bases, st.integers(0, 100))
def test_stretch_sums_and_preserves_order(base, extra):
    depth = len(base) + extra
    out = stretch(base, depth)
    assert out.depth == depth == len(out.layers)
    src, dst = run_length_encode(base), out.runs
    assert [r.primitive for r in src] == [r.primitive for r in dst]
    assert all(r.length >= 1 for r in dst)
    # Hamilton apportionment: each run is within one layer of its exact quota
    for s, d in zip(src, dst):
        assert abs(d.length - s.length * depth / len(base)) < 1


@given(bases)
def test_stretch_ratio_converges(base):
    out = stretch(base, 10 * len(base))
    want, got = Counter(base), Counter(out.layers)
    for p in want:
        assert abs(got[p] / out.depth - want[p] / len(base)) <= 0.02


# -- stack ------------------------------------------------------------------------


def test_stack_exact_copies():
    base = parse_pattern(FORMER_B)
    for fill in (Fill.PREFIX, Fill.SUFFIX, M):
        assert stack(base, 32, fill).layers == base * 2


def test_stack_prefix_fill():
    base = parse_pattern(FORMER_B)
    assert stack(base, 23).layers == base + base[:7]


def test_stack_suffix_fill():
    base = parse_pattern(FORMER_B)
    assert stack(base, 23, Fill.SUFFIX).layers == base + base[-7:]


def test_stack_constant_fill():
    base = parse_pattern(FORMER_B)
    assert stack(base, 23, Fill.CONSTANT, M).layers == base + (M,) * 7
    with pytest.raises(ValueError):
        stack(base, 23, Fill.CONSTANT)


@given(bases, st.integers(0, 100))
def test_stack_properties(base, extra):
    out = stack(base, len(base) + extra)
    assert out.depth == len(base) + extra
    assert out.layers[: len(base)] == base
    if extra % len(base) == 0:
        assert out.layers == base * (1 + extra // len(base))


# -- parity with published layouts ---------------------------------------------------


def test_parity_stacked_rows():
    assert same(stack(parse_pattern(FORMER_B), 32), "2×(3A-4×(M-A)-5M)")
    assert same(stack(parse_pattern(FORMER_B), 23, M), "(3A-4×(M-A)-5M)-7M")
    assert same(stack(parse_pattern(FORMER_C_STACK_UNIT), 48), "3×(2×(2A-M)-3×(A-M)-4A)")
    assert same(stack(parse_pattern(FORMER_C_STACK_UNIT), 34), "2×(2×(2A-M)-3×(A-M)-4A)-2A")
    assert same(stack(parse_pattern(FORMER_D), 48), "3×(5×(2A-M)-A)")
    assert same(stack(parse_pattern(FORMER_D), 34), "2×(5×(2A-M)-A)-2A")
    assert same(stack(parse_pattern(HYBRID_E), 32), "2×(5×(Mb-M-A)-M)")


def test_parity_stretched_rows():
    assert same(stretch(parse_pattern(FORMER_C), 48), "6A-3M-3A-3M-3A-3M-3A-3M-6A-3M-12A")
    assert same(stretch(parse_pattern(FORMER_D), 48), "6A-3M-6A-3M-6A-3M-6A-3M-6A-3M-3A")
    assert same(stretch(parse_pattern(HYBRID_A), 32), "4Mb-2M-22Mb-4M")
    assert same(stretch(parse_pattern(HYBRID_A), 44), "6Mb-3M-30Mb-5M")
    assert same(stretch(parse_pattern(HYBRID_E), 32), "5×(2Mb-2M-2A)-2M")
    assert same(stretch(parse_pattern(COMPOSITE), 26), "3A-8M-3A-5M-2A-5M")
    assert same(stretch(parse_pattern(COMPOSITE), 29), "4A-9M-4A-5M-2A-5M")


def test_known_divergent_row_is_flagged():
    # the published 350M stretched layout for this base sums to 33 layers, not 34
    printed = parse_pattern("4A-2M-4A-2M-4A-2M-4A-2M-4A-2M-2A-M")
    assert len(printed) == 33
    ours = stretch(parse_pattern(FORMER_D), 34)
    assert ours.depth == 34 and ours.layers != printed


def test_appendix_base_differs_from_stacked_unit():
    assert parse_pattern(FORMER_C) != parse_pattern(FORMER_C_STACK_UNIT)


# -- choose_depth -------------------------------------------------------------------


def test_choose_depth_llama_1b():
    assert choose_depth((A, M) * 8, load_preset("1B-2prim"), Origin.STACKED, 0.97e9) == 32


def test_choose_depth_exact_base():
    cfg = load_preset("1B-2prim")
    base = parse_pattern(FORMER_B)
    target, _ = params_model(base, cfg)
    assert choose_depth(base, cfg, Origin.STRETCHED, target) == 16


def test_choose_depth_former_c_stacked_1b():
    cfg = load_preset("1B-2prim")
    assert choose_depth(parse_pattern(FORMER_C_STACK_UNIT), cfg, "stacked", 1.10e9) == 48


def test_choose_depth_tie_prefers_smaller():
    cfg = load_preset("1B-2prim")
    base = (M,) * 16
    per = params_model((M,), cfg)[0]
    # halfway between 20 and 21 layers
    assert choose_depth(base, cfg, "stacked", 20.5 * per) == 20


def test_choose_depth_unreachable():
    with pytest.raises(Unreachable):
        choose_depth((A, M) * 8, load_preset("350M-2prim"), "stacked", 1e12)


# -- compact notation ---------------------------------------------------------------


def test_parse_variants():
    want = (A, A, A, M, A, M, A, M, A, M, A, M, M, M, M, M)
    assert parse_pattern("3A-4×(M-A)-5M") == want
    assert parse_pattern("3A-4x(M-A)-5M") == want
    assert parse_pattern(FORMER_B) == want
    assert parse_pattern("2A + 5 $\\times$ (A + M) + 4M") == want
    assert parse_pattern("3 × (2Mb + M + A) + 2Mb + 2M").count(Mb) == 8


@pytest.mark.parametrize("bad", ["", "3A-(M", "3A--M", "2×", "Q", "3A)"])
def test_parse_errors(bad):
    with pytest.raises(PatternSyntaxError):
        parse_pattern(bad)


def test_format_examples():
    assert format_pattern(parse_pattern("2×(3A-4×(M-A)-5M)")) in ("2×(3A-4×(M-A)-5M)", "2×(2A-5×(A-M)-4M)")
    assert format_pattern((A, M) * 16) == "16×(A-M)"
    assert format_pattern((Mb,) * 4 + (M,) * 2) == "4Mb-2M"
    assert format_pattern((A,)) == "A"


def _brute_shortest(layers):
    """Exhaustive search over the same grammar, for short inputs only."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def best(seg):
        if all(p == seg[0] for p in seg):
            return len(seg[0].symbol) + (len(str(len(seg))) if len(seg) > 1 else 0)
        opts = []
        for p in range(1, len(seg) // 2 + 1):
            if len(seg) % p == 0 and seg == seg[:p] * (len(seg) // p):
                opts.append(len(str(len(seg) // p)) + 3 + best(seg[:p]))
        for k in range(1, len(seg)):
            if seg[k - 1] != seg[k]:
                opts.append(best(seg[:k]) + 1 + best(seg[k:]))
        return min(opts)

    return best(tuple(layers))


def test_format_is_shortest_on_small_inputs():
    rng = random.Random(0)
    for _ in range(300):
        layers = tuple(rng.choice((A, M, Mb)) for _ in range(rng.randint(1, 12)))
        text = format_pattern(layers)
        assert parse_pattern(text) == layers
        assert len(text) == _brute_shortest(layers)


@given(st.lists(st.sampled_from(THREE_PRIMITIVE), min_size=1, max_size=60).map(tuple))
def test_format_parse_round_trip(layers):
    assert parse_pattern(format_pattern(layers)) == layers


def test_describe_sidecar():
    cfg = load_preset("1B-2prim")
    meta = stack(parse_pattern(FORMER_B), 32).describe(cfg)
    assert meta["depth"] == 32
    assert meta["counts"] == {"A": 14, "M": 18, "Mb": 0}
    assert (meta["params_non_embed"], meta["params_total"]) == params_model(stack(parse_pattern(FORMER_B), 32).layers, cfg)
