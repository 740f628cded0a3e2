from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from archsmith.arch import A, M, Mb
from archsmith.errors import ConfigError, MissingLatency
from archsmith.scale import (
    LayerCounts,
    ScaleConfig,
    SsmConfig,
    available_presets,
    block_latency_total,
    flops_attention,
    flops_mlp,
    flops_per_step,
    flops_ssm,
    load_preset,
    load_scale_config,
    mlp_hidden_dim,
    multiple_of_ceil,
    params_model,
    per_layer_flops,
    plan_budgets,
    ssm_hidden_dim,
    step_flops,
    steps_for_budget,
)


def test_multiple_of_ceil():
    assert multiple_of_ceil(4096, 1024) == 4096
    assert multiple_of_ceil(7645, 1024) == 8192
    assert multiple_of_ceil(0, 256) == 0


@given(st.integers(0, 10**9), st.integers(1, 4096))
def test_multiple_of_ceil_properties(x, m):
    r = multiple_of_ceil(x, m)
    assert r % m == 0 and x <= r < x + m


@pytest.mark.parametrize(
    "d,f,h", [(1536, 1.0, 4096), (2048, 1.4, 8192), (1536, 1.4, 6144), (3072, 1.0, 8192), (3072, 1.4, 12288)]
)
def test_mlp_hidden_dim(d, f, h):
    assert mlp_hidden_dim(d, f) == h


@pytest.mark.parametrize("d,d_ssm", [(1536, 3072), (2048, 4096), (3072, 6144)])
def test_ssm_hidden_dim(d, d_ssm):
    assert ssm_hidden_dim(d) == d_ssm


def test_f_is_read_exactly():
    # 2/3 * 4 * 2048 * 1.4 = 7645.866..., which a binary 1.4 could push either way
    assert mlp_hidden_dim(2048, "1.4") == mlp_hidden_dim(2048, 1.4) == 8192


def _cfg(**kw) -> ScaleConfig:
    base = dict(d=2048, n_h=32, d_h=64, n_kv=8, f=1.4)
    base.update(kw)
    return ScaleConfig(**base)


def test_flops_attention():
    assert flops_attention(_cfg()) == 264_241_152
    assert flops_attention(ScaleConfig(d=3072, n_h=24, d_h=128, n_kv=8)) == 452_984_832
    tiny = ScaleConfig(d=1, n_h=1, d_h=1, n_kv=1, s=1)
    # s=0 is not a valid config, so subtract the sequence term by hand
    assert flops_attention(tiny) - 12 * tiny.s * tiny.d == 24


def test_flops_mlp():
    assert flops_mlp(_cfg()) == 301_989_888
    assert flops_mlp(ScaleConfig(d=1536, n_h=24, d_h=64, n_kv=8)) == 113_246_208
    assert flops_mlp(ScaleConfig(d=1, n_h=1, d_h=1, n_kv=1, h=1)) == 18


def test_flops_ssm():
    assert flops_ssm(_cfg(), SsmConfig.for_width(2048, 128)) == 161_323_008
    cfg350 = ScaleConfig(d=1536, n_h=24, d_h=64, n_kv=8)
    assert flops_ssm(cfg350, SsmConfig.for_width(1536, 128)) == 92_534_784
    tiny = ScaleConfig(d=1, n_h=1, d_h=1, n_kv=1)
    assert flops_ssm(tiny, SsmConfig(d_ssm=1, n_s=1, k=1, n_g=1, d_h_ssm=1)) == 66


def test_flops_per_step_examples():
    assert step_flops(LayerCounts(attn=10, mlp=19), load_preset("1B-2prim")) == 4_393_648_464_592_896
    c = step_flops(LayerCounts(attn=6, mlp=10, ssm=16), load_preset("1B-3prim"))
    assert c == 3_767_803_010_088_960
    assert flops_per_step(LayerCounts(mlp=1), {M: 18, A: 0, Mb: 0}, 1) == 18


def test_steps_for_budget_examples():
    cfg2, cfg3 = load_preset("1B-2prim"), load_preset("1B-3prim")
    assert steps_for_budget("2e19", step_flops(LayerCounts(10, 19, 0), cfg2)) == 4552
    assert steps_for_budget(2e19, step_flops(LayerCounts(6, 10, 16), cfg3)) == 5308
    assert steps_for_budget(2e19, step_flops(LayerCounts(10, 12, 10), cfg3)) == 4841


def test_rounding_modes():
    assert steps_for_budget(15, 10) == 2
    assert steps_for_budget(14, 10) == 1
    assert steps_for_budget(15, 10, "floor") == 1
    with pytest.raises(ValueError):
        steps_for_budget(15, 10, "up")


@given(st.integers(1, 10**25), st.integers(1, 10**18))
def test_nearest_within_half_step(budget, c_step):
    n = steps_for_budget(budget, c_step)
    assert abs(n * c_step - budget) * 2 <= c_step
    assert steps_for_budget(budget, c_step, "floor") * c_step <= budget


def test_params_llama_1b():
    assert params_model((A, M) * 16, load_preset("1B-2prim")) == (973_078_528, 1_235_746_816)


def test_params_hybrid_a_1b():
    non_embed, total = params_model(LayerCounts(mlp=6, ssm=26), load_preset("1B-3prim"))
    assert abs(non_embed / 1e9 - 0.97) <= 0.0097
    assert abs(total / 1e9 - 1.24) <= 0.0124


def test_params_empty_pattern():
    cfg = load_preset("1B-2prim")
    assert params_model((), cfg) == (0, cfg.vocab * cfg.d)


def test_ssm_needed_for_mamba_layers():
    with pytest.raises(ConfigError):
        params_model(LayerCounts(ssm=1), load_preset("1B-2prim"))


def test_latency_total():
    assert block_latency_total(LayerCounts(10, 19, 0), {"A": 2, "M": 1}) == 39
    assert block_latency_total(LayerCounts(10, 19, 3), {A: 0, M: 0, Mb: 0}) == 0
    with pytest.raises(MissingLatency):
        block_latency_total(LayerCounts(1, 1, 1), {A: 1, M: 1})


def test_presets_load_and_validate():
    names = available_presets()
    for expected in ("350M-2prim", "1B-2prim", "3B-2prim", "350M-3prim", "1B-3prim", "3B-3prim"):
        assert expected in names
    for name in names:
        cfg = load_preset(name)
        assert cfg.d == cfg.n_h * cfg.d_h
        assert cfg.tokens_per_step == 524_288 and cfg.s == 8192 and cfg.vocab == 128_256
    assert load_preset("1B-2prim").h == 8192
    assert load_preset("3B-3prim").d_kv == 768
    assert load_preset("3B-3prim-dkv1024").d_kv == 1024


def test_config_validation():
    with pytest.raises(ConfigError):
        ScaleConfig(d=100, n_h=3, d_h=32, n_kv=1)
    with pytest.raises(ConfigError):
        ScaleConfig(d=64, n_h=2, d_h=32, n_kv=4)
    with pytest.raises(ConfigError):
        ScaleConfig.from_dict({"d": 64, "n_h": 2, "d_h": 32, "n_kv": 1, "bogus": 1})
    with pytest.raises(ConfigError):
        load_preset("nope")


def test_config_file_round_trip(tmp_path):
    cfg = load_preset("1B-3prim")
    path = tmp_path / "custom.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = load_scale_config(path)
    assert per_layer_flops(again) == per_layer_flops(cfg)


def test_plan_budgets_composite_1b():
    plan = plan_budgets(LayerCounts(10, 19, 0), load_preset("1B-2prim"), ["2e19", "4e19", "8e19", "2e20", "4e20"])
    assert list(plan.steps.values()) == [4552, 9104, 18208, 45520, 91041]
    assert plan.c_step == 4_393_648_464_592_896
