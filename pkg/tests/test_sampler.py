import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import activation, brute_force_outputs
from qperceptron import models
from qperceptron.circuitry import ParameterTable, compile_network, prepare_input
from qperceptron.errors import ContractError, ResourceError
from qperceptron.sampler import (
    LossFunction, NetworkProgram, accuracy, exact_output_distribution, forward_sample,
    network_loss, output_marginals, predict, sample_outputs, shot_marginals,
    statevector_marginals,
)
from qperceptron.statevector import marginal_distribution, simulate
from strategies import random_feedforward, random_params, seeds


def oracle_marginals(topo, params, bits):
    layers = [[(n.id, n.incoming) for n in layer] for layer in topo.layers]
    return brute_force_outputs(topo.inputs, layers, params.weights, params.biases, bits)


def xor_net():
    topo = models.shallow(2, [], 1)
    return topo, ParameterTable({("x0", "y0"): 1.0, ("x1", "y0"): 1.0}, {"y0": 0.0})


XOR = [([0, 0], [0]), ([0, 1], [1]), ([1, 0], [1]), ([1, 1], [0])]


# -- exact engine -------------------------------------------------------------------


@settings(max_examples=30)
@given(seeds)
def test_exact_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    topo = random_feedforward(rng, max_qubits=10)
    params = random_params(topo, rng)
    X = list(itertools.product([0, 1], repeat=topo.n_inputs))
    got = output_marginals(topo, params, X)
    for bits, row in zip(X, got):
        assert np.allclose(row, oracle_marginals(topo, params, bits), atol=1e-10)


@settings(max_examples=20)
@given(seeds)
def test_exact_matches_statevector(seed):
    """Diagonal controls make the classical engine agree with full circuit simulation."""
    rng = np.random.default_rng(seed)
    topo = random_feedforward(rng, max_qubits=10)
    params = random_params(topo, rng)
    prog = NetworkProgram(topo)
    X = rng.integers(0, 2, (3, topo.n_inputs))
    assert np.allclose(prog.exact(prog.vector(params), X),
                       statevector_marginals(prog, prog.vector(params), X), atol=1e-10)


@settings(max_examples=15)
@given(seeds)
def test_joint_distribution_matches_statevector(seed):
    rng = np.random.default_rng(seed)
    topo = random_feedforward(rng, max_qubits=9)
    params = random_params(topo, rng)
    bits = rng.integers(0, 2, topo.n_inputs).tolist()
    state = simulate(prepare_input(compile_network(topo, params), topo, bits))
    want = marginal_distribution(state, topo.output_qubits)
    got = exact_output_distribution(topo, params, bits)
    assert np.allclose(got, want, atol=1e-10) and got.sum() == pytest.approx(1.0)


def test_batched_parameters_match_single():
    rng = np.random.default_rng(4)
    topo = models.shallow(3, [2, 2], 2)
    prog = NetworkProgram(topo)
    vecs = rng.uniform(size=(5, len(prog.keys)))
    X = rng.integers(0, 2, (6, 3))
    batch = prog.exact(vecs, X)
    for v, row in zip(vecs, batch):
        assert np.allclose(prog.exact(v, X), row, atol=1e-12)


def test_single_layer_is_activation_formula():
    topo, params = xor_net()
    params = ParameterTable({("x0", "y0"): 0.3, ("x1", "y0"): 0.45}, {"y0": 0.1})
    for bits in itertools.product([0, 1], repeat=2):
        want = activation(0.1, [0.3, 0.45], bits)
        assert output_marginals(topo, params, [bits])[0, 0] == pytest.approx(want, abs=1e-12)


def test_enumeration_limit_raises():
    topo = models.shallow(2, [5], 1)
    with pytest.raises(ResourceError, match="limit"):
        output_marginals(topo, ParameterTable.uniform(topo, 0.1), [[0, 0]], limit=4)


def test_wrong_input_width():
    topo, params = xor_net()
    with pytest.raises(ContractError):
        output_marginals(topo, params, [[0, 1, 1]])


# -- sampling -----------------------------------------------------------------------


def test_forward_sample_xor_is_deterministic():
    topo, params = xor_net()
    rng = np.random.default_rng(0)
    for bits, (y,) in XOR:
        assert forward_sample(topo, params, bits, rng).outputs == [y]


@pytest.mark.parametrize("seed", range(3))
def test_sampled_counts_chi_square(seed):
    rng = np.random.default_rng(seed)
    topo = models.shallow(2, [2], 2)
    params = random_params(topo, rng)
    p = exact_output_distribution(topo, params, [1, 0])
    shots = 20000
    counts = sample_outputs(topo, params, [1, 0], shots, np.random.default_rng(seed + 100))
    live = p > 1e-9
    chi2 = np.sum((counts[live] - shots * p[live]) ** 2 / (shots * p[live]))
    # 3 degrees of freedom; 16.27 is the 0.999 quantile
    assert chi2 < 16.27
    assert counts[~live].sum() == 0


def test_shot_marginals_converge():
    rng = np.random.default_rng(7)
    topo = models.shallow(3, [3], 2)
    prog = NetworkProgram(topo)
    vec = prog.vector(random_params(topo, rng))
    X = rng.integers(0, 2, (4, 3))
    exact = prog.exact(vec, X)
    est = shot_marginals(prog, vec, X, 40000, seed=1)
    sigma = np.sqrt(exact * (1 - exact) / 40000) + 1e-9
    assert np.all(np.abs(est - exact) < 4 * sigma + 1e-12)


def test_shot_marginals_reproducible():
    topo = models.shallow(2, [2], 1)
    prog = NetworkProgram(topo)
    vec = np.full(len(prog.keys), 0.4)
    X = np.array([[0, 1], [1, 1]])
    assert np.array_equal(shot_marginals(prog, vec, X, 500, 3), shot_marginals(prog, vec, X, 500, 3))


# -- loss ---------------------------------------------------------------------------


def test_xor_loss_is_zero():
    topo, params = xor_net()
    assert network_loss(topo, params, XOR) == pytest.approx(0.0, abs=1e-12)


def test_loss_all_zero_weights():
    topo, params = xor_net()
    zero = ParameterTable({k: 0.0 for k in params.weights}, {"y0": 0.0})
    assert network_loss(topo, zero, XOR) == pytest.approx(0.5)


def test_loss_half_bias():
    topo = models.shallow(1, [], 1)
    params = ParameterTable({("x0", "y0"): 0.0}, {"y0": 0.5})
    assert network_loss(topo, params, [([0], [1]), ([1], [0])]) == pytest.approx(0.25)


@pytest.mark.parametrize("backend", ["exact", "statevector"])
def test_loss_backends_agree(backend):
    rng = np.random.default_rng(2)
    topo = models.shallow(2, [2], 1)
    params = random_params(topo, rng)
    ref = network_loss(topo, params, XOR, backend="exact")
    assert network_loss(topo, params, XOR, backend=backend) == pytest.approx(ref, abs=1e-10)


def test_shots_loss_close_to_exact():
    rng = np.random.default_rng(3)
    topo = models.shallow(2, [2], 1)
    params = random_params(topo, rng)
    ref = network_loss(topo, params, XOR, backend="exact")
    assert network_loss(topo, params, XOR, backend="shots", shots=50000) == pytest.approx(ref, abs=0.02)


def test_loss_many_matches_single():
    rng = np.random.default_rng(5)
    topo = models.shallow(2, [2], 1)
    fn = LossFunction(topo, XOR)
    vecs = rng.uniform(size=(4, len(fn.prog.keys)))
    assert np.allclose(fn.many(vecs), [fn(v) for v in vecs], atol=1e-12)


def test_loss_weights():
    topo = models.shallow(1, [], 1)
    data = [([0], [1]), ([1], [0])]
    fn = LossFunction(topo, data, weights=[3, 1])
    vec = fn.prog.vector(ParameterTable({("x0", "y0"): 0.0}, {"y0": 1.0}))
    # errors are 0 on the first sample and 1 on the second
    assert fn(vec) == pytest.approx(0.25)


@pytest.mark.parametrize("w", [[1, -1, 1, 1], [0, 0, 0, 0], [1, 1]])
def test_loss_weights_validated(w):
    with pytest.raises(ContractError):
        LossFunction(models.shallow(2, [], 1), XOR, weights=w)


def test_loss_target_width_checked():
    with pytest.raises(ContractError):
        LossFunction(models.shallow(2, [], 2), XOR)


def test_unknown_backend():
    with pytest.raises(ContractError):
        LossFunction(models.shallow(2, [], 1), XOR, backend="gpu")


@given(st.lists(st.floats(0, 1), min_size=2, max_size=5))
def test_loss_bounded_by_outputs(ps):
    topo = models.shallow(1, [], 1)
    fn = LossFunction(topo, [([0], [1])])
    vec = fn.prog.vector(ParameterTable({("x0", "y0"): 0.0}, {"y0": ps[0]}))
    assert 0.0 <= fn(vec) <= 1.0


# -- prediction ---------------------------------------------------------------------


def test_predict_argmax_ties_low():
    assert predict(np.array([[0.2, 0.5, 0.5]])).tolist() == [1]


def test_predict_single_output_threshold():
    assert predict(np.array([[0.5], [0.49]])).tolist() == [1, 0]


def test_accuracy_one_hot():
    P = np.array([[0.9, 0.1], [0.3, 0.6], [0.6, 0.4]])
    Y = np.array([[1, 0], [0, 1], [0, 1]])
    assert accuracy(P, Y) == pytest.approx(2 / 3)
    assert math.isclose(accuracy(np.array([[0.7]]), np.array([[1]])), 1.0)
