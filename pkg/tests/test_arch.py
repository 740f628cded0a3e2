from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from archsmith.arch import (
    THREE_PRIMITIVE,
    TWO_PRIMITIVE,
    A,
    M,
    Mb,
    Primitive,
    encode_onehot,
    format_architecture,
    from_symbols,
    hamming,
    make_pool,
    mutate,
    parse_architecture,
    search_space_size,
    to_symbols,
)
from archsmith.errors import OutOfPool, SearchSpaceOverflow, UnknownToken, WrongLength

archs2 = st.lists(st.sampled_from(TWO_PRIMITIVE), min_size=16, max_size=16).map(tuple)
archs3 = st.lists(st.sampled_from(THREE_PRIMITIVE), min_size=16, max_size=16).map(tuple)


def test_primitive_order_is_fixed():
    assert M < A < Mb
    assert sorted([Mb, A, M]) == [M, A, Mb]


def test_parse_alternating_attention_mlp():
    arch = parse_architecture(" ".join(["mh-attention", "mlp"] * 8), TWO_PRIMITIVE)
    assert arch == (A, M) * 8


def test_parse_uniform_mlp():
    assert parse_architecture(" ".join(["mlp"] * 16)) == (M,) * 16


def test_parse_wrong_length():
    with pytest.raises(WrongLength):
        parse_architecture("mlp mamba2 mlp", THREE_PRIMITIVE, 16)


def test_parse_unknown_token():
    with pytest.raises(UnknownToken):
        parse_architecture(" ".join(["mlp"] * 15 + ["conv"]))


def test_parse_out_of_pool():
    with pytest.raises(OutOfPool):
        parse_architecture(" ".join(["mlp"] * 15 + ["mamba2"]), TWO_PRIMITIVE)


def test_parse_is_case_insensitive_and_ignores_wrapping():
    text = "MLP\nmh-attention\r\n" + " ".join(["mlp"] * 14)
    assert parse_architecture(text, TWO_PRIMITIVE)[:2] == (M, A)


def test_symbols_are_not_submission_tokens():
    with pytest.raises(UnknownToken):
        parse_architecture(" ".join(["M"] * 16))


def test_format_hybrid_base_round_trip():
    arch = (Mb, Mb, M) + (Mb,) * 11 + (M, M)
    text = format_architecture(arch)
    assert len(text.split()) == 16
    assert text.startswith("mamba2 mamba2 mlp")
    assert parse_architecture(text) == arch


@given(archs3)
def test_format_parse_round_trip(arch):
    assert parse_architecture(format_architecture(arch)) == arch


@given(archs3)
def test_symbol_round_trip(arch):
    assert from_symbols(to_symbols(arch)) == arch


def test_from_symbols_compact_string():
    assert from_symbols("AMAMb") == (A, M, A, Mb)


def test_onehot_examples():
    np.testing.assert_array_equal(encode_onehot((M, A), TWO_PRIMITIVE), [1, 0, 0, 1])
    np.testing.assert_array_equal(encode_onehot((Mb, M), THREE_PRIMITIVE), [0, 0, 1, 1, 0, 0])


@given(archs3)
def test_onehot_sums_to_length(arch):
    vec = encode_onehot(arch, THREE_PRIMITIVE)
    assert vec.sum() == 16
    assert set(np.unique(vec)) <= {0.0, 1.0}


def test_search_space_size():
    assert search_space_size(TWO_PRIMITIVE, 16) == 65_536
    assert search_space_size(THREE_PRIMITIVE, 16) == 43_046_721
    assert search_space_size(2, 1) == 2


def test_search_space_overflow():
    assert search_space_size(2, 62) == 2**62
    with pytest.raises(SearchSpaceOverflow):
        search_space_size(2, 63)


def test_make_pool_rules():
    assert make_pool(["mh-attention", "mlp"]) == (M, A)
    assert make_pool(["Mb", "M"]) == (M, Mb)
    with pytest.raises(ValueError):
        make_pool(["mamba2", "mamba2"])
    with pytest.raises(ValueError):
        make_pool([])


def test_mutate_rejects_zero_edits():
    with pytest.raises(ValueError):
        mutate((M,) * 16, 0, 1)


def test_mutate_is_deterministic():
    base = (A, M) * 8
    assert mutate(base, 1, 42) == mutate(base, 1, 42)


def test_mutate_hamming_bound_sweep():
    rng = random.Random(0)
    for trial in range(1000):
        base = tuple(rng.choice(THREE_PRIMITIVE) for _ in range(16))
        edits = rng.randint(1, 16)
        child = mutate(base, edits, trial, THREE_PRIMITIVE)
        # every chosen position is forced to change, so the bound is tight
        assert hamming(base, child) == edits
        assert all(p in THREE_PRIMITIVE for p in child)


@given(archs2, st.integers(1, 16), st.integers(0, 2**31))
def test_mutate_stays_in_pool(arch, edits, seed):
    child = mutate(arch, edits, seed, TWO_PRIMITIVE)
    assert len(child) == 16 and set(child) <= set(TWO_PRIMITIVE)
    assert hamming(arch, child) <= edits


def test_primitive_token_lookup():
    assert Primitive.from_token("Mamba2") is Mb
    assert Primitive.from_token("mamba") is Mb
    assert Primitive.from_symbol("mA") is A
