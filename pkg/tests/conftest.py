"""Shared instance builders and random-matrix helpers."""

import numpy as np
import pytest

from cqgp.model import CqGpChannel, JointLaw


def random_hermitian(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (g + g.conj().T) / 2.0


def random_psd(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return g @ g.conj().T


def random_density(rng, dim):
    m = random_psd(rng, dim)
    return m / np.trace(m).real


def pure_state(theta, phi=0.0):
    ket = np.array([np.cos(theta), np.sin(theta) * np.exp(1j * phi)])
    return np.outer(ket, ket.conj())


def random_pmf(rng, k):
    v = rng.dirichlet(np.ones(k))
    return v / v.sum()


def tiny_qubit_system():
    """Binary state/quant/aux/input with non-commuting qubit outputs."""
    law = JointLaw(
        p_state=[0.6, 0.4],
        p_quant_given_state=[[0.8, 0.2], [0.25, 0.75]],
        p_aux_given_quant=[[0.7, 0.3], [0.35, 0.65]],
        p_input_given_aux_quant=[
            [[0.9, 0.1], [0.8, 0.2]],
            [[0.15, 0.85], [0.3, 0.7]],
        ],
    )
    states = [
        [pure_state(0.2, 0.3), pure_state(0.5, 1.0)],
        [pure_state(1.2, -0.4), pure_state(1.45, 2.0)],
    ]
    channel = CqGpChannel(["0", "1"], ["0", "1"], 2, states)
    return channel, law


def orthogonal_noiseless_system(quant_flip=0.2, rotate=0.0):
    """Uniform binary aux independent of the quantizer, input = aux, orthogonal outputs.

    ``rotate`` tilts the output basis by a state-dependent angle; zero keeps
    every output diagonal.
    """
    law = JointLaw(
        p_state=[0.5, 0.5],
        p_quant_given_state=[[1 - quant_flip, quant_flip], [quant_flip, 1 - quant_flip]],
        p_aux_given_quant=[[0.5, 0.5], [0.5, 0.5]],
        p_input_given_aux_quant=[
            [[1.0, 0.0], [1.0, 0.0]],
            [[0.0, 1.0], [0.0, 1.0]],
        ],
    )
    states = []
    for x in range(2):
        row = []
        for s in range(2):
            angle = rotate * (1 if s else -1)
            base = np.pi / 2 * x
            row.append(pure_state(base + angle))
        states.append(row)
    channel = CqGpChannel(["0", "1"], ["0", "1"], 2, states)
    return channel, law


def diagonal_noisy_system():
    """Binary everything with diagonal (commuting) noisy outputs."""
    law = JointLaw(
        p_state=[0.7, 0.3],
        p_quant_given_state=[[0.75, 0.25], [0.25, 0.75]],
        p_aux_given_quant=[[0.6, 0.4], [0.3, 0.7]],
        p_input_given_aux_quant=[
            [[0.85, 0.15], [0.75, 0.25]],
            [[0.2, 0.8], [0.1, 0.9]],
        ],
    )
    flips = [0.1, 0.3]
    states = []
    for x in range(2):
        row = []
        for s in range(2):
            p_keep = 1 - flips[s]
            w = [p_keep, flips[s]] if x == 0 else [flips[s], p_keep]
            row.append(np.diag(np.array(w, dtype=complex)))
        states.append(row)
    channel = CqGpChannel(["0", "1"], ["0", "1"], 2, states)
    return channel, law


def statefree_orthogonal_system(n_letters=4):
    """Trivial state, aux = input over n_letters orthogonal pure outputs."""
    law = JointLaw(
        p_state=[1.0],
        p_quant_given_state=[[1.0]],
        p_aux_given_quant=[[1.0 / n_letters] * n_letters],
        p_input_given_aux_quant=[[[1.0 if x == u else 0.0 for x in range(n_letters)]]
                                 for u in range(n_letters)],
    )
    states = [[np.diag([1.0 + 0j if i == x else 0.0 for i in range(n_letters)])]
              for x in range(n_letters)]
    channel = CqGpChannel([str(i) for i in range(n_letters)], ["0"], n_letters, states)
    return channel, law


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
