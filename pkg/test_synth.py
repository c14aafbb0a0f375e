"""Tests for the seeded instance and model generators."""

import json

import numpy as np
import pytest

from dense_linalg import is_approx_rank, norms, numerical_rank
from errors import ArgumentError
from synth import (
    InstanceParams,
    SeededRng,
    gen_approx_rank_instance,
    gen_exact_rank_instance,
    gen_mlp,
    load_instance,
    save_instance,
)


def test_seeded_rng_is_reproducible_and_stream_dependent():
    a = SeededRng(7, 3).generator().standard_normal(5)
    b = SeededRng(7, 3).generator().standard_normal(5)
    c = SeededRng(7, 4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert SeededRng(7, 3).stream_seed() == SeededRng(7, 3).stream_seed()
    assert SeededRng(7, 3).stream_seed() != SeededRng(8, 3).stream_seed()
    with pytest.raises(ArgumentError):
        SeededRng(-1)


def test_exact_rank_noiseless_observation():
    inst = gen_exact_rank_instance(20, 6, 5, 2, 0.0, 0.0, SeededRng(1).generator())
    np.testing.assert_array_equal(inst.observation, inst.x_check @ inst.m)
    np.testing.assert_allclose(inst.y, inst.x_check @ inst.m, atol=1e-12)
    assert inst.e is None
    assert numerical_rank(inst.m) == 2
    assert inst.params.kind == "exact_rank"


def test_exact_rank_perturbation_norm():
    for stream in range(5):
        inst = gen_exact_rank_instance(30, 8, 6, 3, 0.2, 0.05, SeededRng(2, stream).generator())
        assert norms(inst.e).operator ** 2 == pytest.approx(0.05 * 30, abs=1e-10)
        np.testing.assert_allclose(inst.observation, inst.y + inst.g + inst.e, atol=1e-12)


def test_exact_rank_dimension_checks():
    rng = SeededRng(3).generator()
    with pytest.raises(ArgumentError):
        gen_exact_rank_instance(4, 6, 5, 2, 0.0, 0.0, rng)
    with pytest.raises(ArgumentError):
        gen_exact_rank_instance(10, 6, 5, 7, 0.0, 0.0, rng)
    with pytest.raises(ArgumentError):
        gen_exact_rank_instance(10, 6, 5, 2, -1.0, 0.0, rng)


def test_approx_rank_instance_hypotheses():
    inst = gen_approx_rank_instance(32, 32, 32, 2, 0.8, "bounded_uniform", 0.5, SeededRng(4).generator())
    assert norms(inst.y).max_abs == pytest.approx(0.8, rel=1e-10)
    assert is_approx_rank(inst.y, 2)
    assert np.all(np.abs(inst.g) <= 0.5)
    np.testing.assert_allclose(inst.observation, inst.y + inst.g)
    assert inst.params.beta == 0.5
    assert inst.params.kind == "approx_rank"


def test_approx_rank_zero_tail_is_exact_rank():
    inst = gen_approx_rank_instance(
        20, 10, 12, 3, 1.0, "gaussian", 0.0, SeededRng(5).generator(), tail_ratio=0.0
    )
    assert numerical_rank(inst.y, 1e-9) == 3
    assert is_approx_rank(inst.y, 3)


def test_approx_rank_relu_observation():
    inst = gen_approx_rank_instance(16, 16, 16, 2, 1.0, "gaussian", 0.25, SeededRng(6).generator(), relu=True)
    assert np.all(inst.observation >= 0)
    np.testing.assert_array_equal(inst.observation, np.maximum(inst.y + inst.g, 0.0))
    assert inst.params.kind == "approx_rank_relu"
    assert inst.params.sigma == 0.25


def test_approx_rank_argument_checks():
    rng = SeededRng(7).generator()
    with pytest.raises(ArgumentError):
        gen_approx_rank_instance(8, 8, 8, 2, 0.0, "gaussian", 0.1, rng)
    with pytest.raises(ArgumentError):
        gen_approx_rank_instance(8, 8, 8, 2, 1.0, "laplace", 0.1, rng)
    with pytest.raises(ArgumentError):
        gen_approx_rank_instance(8, 8, 8, 2, 1.0, "gaussian", 0.1, rng, tail_ratio=1.0)


def test_gen_mlp_planted_and_full_rank():
    planted = gen_mlp([4, 4], SeededRng(8).generator(), ranks=[2])
    assert numerical_rank(planted.layers[0].weight) == 2
    assert planted.layers[0].activation == "identity"

    model = gen_mlp([6, 5, 3], SeededRng(9).generator())
    assert [layer.activation for layer in model.layers] == ["relu", "identity"]
    for layer in model.layers:
        assert numerical_rank(layer.weight) == min(layer.weight.shape)
    assert model.dims == [6, 5, 3]


def test_gen_mlp_is_deterministic_and_bias_aware():
    a = gen_mlp([5, 4, 2], SeededRng(10, 1).generator(), ranks=[2, 1], noise=0.1, bias=True)
    b = gen_mlp([5, 4, 2], SeededRng(10, 1).generator(), ranks=[2, 1], noise=0.1, bias=True)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
    assert a.layers[0].weight.shape == (6, 4)
    assert a.layers[1].weight.shape == (5, 2)
    assert a.dims == [5, 4, 2]


def test_gen_mlp_argument_checks():
    rng = SeededRng(11).generator()
    with pytest.raises(ArgumentError):
        gen_mlp([4], rng)
    with pytest.raises(ArgumentError):
        gen_mlp([4, 3], rng, ranks=[4])
    with pytest.raises(ArgumentError):
        gen_mlp([4, 3, 2], rng, ranks=[2])


def test_instance_directory_round_trip(tmp_path):
    inst = gen_exact_rank_instance(12, 4, 3, 2, 0.1, 0.02, SeededRng(12, 5).generator(), seed=12, stream=5)
    save_instance(inst, tmp_path / "inst")
    sidecar = json.loads((tmp_path / "inst" / "instance.json").read_text())
    assert set(sidecar) == {"d1", "d", "d2", "r", "alpha", "sigma", "beta", "epsilon", "seed", "stream", "kind"}
    loaded = load_instance(tmp_path / "inst")
    np.testing.assert_array_equal(loaded.observation, inst.observation)
    np.testing.assert_array_equal(loaded.e, inst.e)
    assert loaded.params == InstanceParams.model_validate(sidecar)
    assert loaded.params.stream == 5


def test_load_instance_rejects_bad_sidecar(tmp_path):
    (tmp_path / "instance.json").write_text(json.dumps({"d1": 3}))
    with pytest.raises(ArgumentError):
        load_instance(tmp_path)
