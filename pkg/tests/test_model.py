import itertools
import json

import numpy as np
import pytest

from conftest import (
    diagonal_noisy_system,
    pure_state,
    random_pmf,
    tiny_qubit_system,
)
from cqgp.errors import ValidationError
from cqgp.model import (
    CqGpChannel,
    JointLaw,
    ProductExtension,
    conditional_output_state,
    cq_marginals,
    detection_projector,
    load_system,
    system_from_dict,
    system_to_dict,
)
from cqgp.qop import HermitianOperator, nonneg_eigenspace_projector, partial_trace


class TestJointLaw:
    def test_row_sum_error_names_row(self):
        with pytest.raises(ValidationError, match="p_quant_given_state"):
            JointLaw([1.0], [[0.5, 0.4]], [[0.5, 0.5], [0.5, 0.5]], [[[1.0]], [[1.0]]])

    def test_negative_entry_rejected(self):
        with pytest.raises(ValidationError, match="negative"):
            JointLaw([1.0], [[1.2, -0.2]], [[1.0], [1.0]], [[[1.0]]])

    def test_zero_marginal_quant_letter_rejected(self):
        with pytest.raises(ValidationError, match="zero marginal"):
            JointLaw(
                [0.5, 0.5],
                [[1.0, 0.0], [1.0, 0.0]],
                [[0.5, 0.5], [0.5, 0.5]],
                [[[1.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]],
            )

    def test_derived_marginals(self):
        _, law = tiny_qubit_system()
        np.testing.assert_allclose(law.p_quant.sum(), 1.0, atol=1e-12)
        np.testing.assert_allclose(law.p_aux.sum(), 1.0, atol=1e-12)
        # Bayes consistency: p(s|q) p(q) = p(s, q)
        recon = law.p_state_given_quant.T * law.p_quant[None, :]
        np.testing.assert_allclose(recon, law.joint_state_quant, atol=1e-12)


class TestChannel:
    def test_missing_state_pair_rejected(self):
        with pytest.raises(ValidationError, match="missing"):
            CqGpChannel(["0", "1"], ["0"], 2, [[np.eye(2, dtype=complex) / 2]])

    def test_invalid_state_named(self):
        bad = np.diag([0.9, 0.2]).astype(complex)
        with pytest.raises(ValidationError, match=r"\('1', '0'\)"):
            CqGpChannel(["0", "1"], ["0"], 2, [[np.eye(2, dtype=complex) / 2], [bad]])


class TestConditionalOutput:
    def test_degenerate_state_deterministic_input(self):
        channel, _ = tiny_qubit_system()
        law = JointLaw(
            p_state=[1.0],
            p_quant_given_state=[[1.0]],
            p_aux_given_quant=[[0.5, 0.5]],
            p_input_given_aux_quant=[[[1.0, 0.0]], [[0.0, 1.0]]],
        )
        states = [[channel.state_mats[x, 0]] for x in range(2)]
        chan1 = CqGpChannel(["0", "1"], ["0"], 2, states)
        ext = ProductExtension(law, chan1, 2)
        rho = conditional_output_state(ext, [0, 1], [0, 0])
        expected = np.kron(chan1.state_mats[0, 0], chan1.state_mats[1, 0])
        np.testing.assert_allclose(rho.mat, expected, atol=1e-12)

    def test_single_letter_uniform_average_diagonal(self):
        channel, law = diagonal_noisy_system()
        ext = ProductExtension(law, channel, 1)
        rho = conditional_output_state(ext, [0], [1])
        expected = np.zeros((2, 2), dtype=complex)
        for s in range(2):
            for x in range(2):
                expected += (
                    law.p_state_given_quant[1, s]
                    * law.p_input_given_aux_quant[0, 1, x]
                    * channel.state_mats[x, s]
                )
        np.testing.assert_allclose(rho.mat, expected, atol=1e-12)

    def test_two_letter_full_enumeration_oracle(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 2)
        aux_word, quant_word = (1, 0), (0, 1)
        rho = conditional_output_state(ext, aux_word, quant_word).mat
        expected = np.zeros((4, 4), dtype=complex)
        for s_word in itertools.product(range(2), repeat=2):
            for x_word in itertools.product(range(2), repeat=2):
                weight = 1.0
                for i in range(2):
                    weight *= law.p_state_given_quant[quant_word[i], s_word[i]]
                    weight *= law.p_input_given_aux_quant[aux_word[i], quant_word[i], x_word[i]]
                expected += weight * np.kron(
                    channel.state_mats[x_word[0], s_word[0]],
                    channel.state_mats[x_word[1], s_word[1]],
                )
        assert np.abs(rho - expected).max() <= 1e-12

    def test_word_length_validation(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 2)
        with pytest.raises(ValidationError):
            conditional_output_state(ext, [0], [0, 1])


def _five_register_state(law, channel):
    """Oracle: dense single-letter joint state over (state, quant, aux, input, output)."""
    ns, nq, nu, nx, d = law.n_state, law.n_quant, law.n_aux, law.n_input, channel.dim_output
    dim = ns * nq * nu * nx * d
    theta = np.zeros((dim, dim), dtype=complex)
    for s in range(ns):
        for q in range(nq):
            for u in range(nu):
                for x in range(nx):
                    p = (
                        law.p_state[s]
                        * law.p_quant_given_state[s, q]
                        * law.p_aux_given_quant[q, u]
                        * law.p_input_given_aux_quant[u, q, x]
                    )
                    if p == 0:
                        continue
                    ket = np.zeros((ns, nq, nu, nx))
                    ket[s, q, u, x] = 1.0
                    basis = np.outer(ket.ravel(), ket.ravel())
                    theta += p * np.kron(basis, channel.state_mats[x, s])
    return theta, (ns, nq, nu, nx, d)


class TestMarginals:
    def test_deterministic_law_gives_state_ensemble(self):
        channel, _ = tiny_qubit_system()
        law = JointLaw(
            p_state=[0.6, 0.4],
            p_quant_given_state=np.eye(2),
            p_aux_given_quant=np.eye(2),
            p_input_given_aux_quant=[
                [[0.5, 0.5], [0.5, 0.5]],
                [[0.5, 0.5], [0.5, 0.5]],
            ],
        )
        ext = ProductExtension(law, channel, 1)
        marg = cq_marginals(ext)
        for u in range(2):
            p, rho = marg.ensemble[(u,)]
            assert p == pytest.approx(law.p_state[u])
            expected = 0.5 * (channel.state_mats[0, u] + channel.state_mats[1, u])
            np.testing.assert_allclose(rho.mat, expected, atol=1e-12)

    def test_avg_output_matches_five_register_oracle(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 1)
        theta, dims = _five_register_state(law, channel)
        ns, nq, nu, nx, d = dims
        avg = partial_trace(
            HermitianOperator(theta), [ns, nq, nu, nx, d], keep=[4]
        ).mat
        np.testing.assert_allclose(ext.avg_output, avg, atol=1e-11)
        # aux-output joint from the oracle matches the block ensemble
        joint_ub = partial_trace(HermitianOperator(theta), [ns, nq, nu, nx, d], keep=[2, 4]).mat
        marg = cq_marginals(ext)
        blocks = np.zeros_like(joint_ub)
        for u in range(nu):
            p, rho = marg.ensemble[(u,)]
            basis = np.zeros((nu, nu))
            basis[u, u] = 1.0
            blocks += p * np.kron(basis, rho.mat)
        np.testing.assert_allclose(joint_ub, blocks, atol=1e-11)

    def test_product_structure_at_n2(self):
        channel, law = tiny_qubit_system()
        ext1 = ProductExtension(law, channel, 1)
        ext2 = ProductExtension(law, channel, 2)
        np.testing.assert_allclose(
            ext2.avg_output_power(),
            np.kron(ext1.avg_output_power(), ext1.avg_output_power()),
            atol=1e-12,
        )

    def test_conditional_consistency_relations(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 1)
        # averaging conditional outputs over aux letters recovers the quant-conditional state
        for q in range(law.n_quant):
            avg_q = sum(
                law.p_aux_given_quant[q, u] * ext.rho_aux_quant[u, q]
                for u in range(law.n_aux)
            )
            direct = sum(
                law.p_state_given_quant[q, s]
                * law.p_aux_given_quant[q, u]
                * law.p_input_given_aux_quant[u, q, x]
                * channel.state_mats[x, s]
                for s in range(law.n_state)
                for u in range(law.n_aux)
                for x in range(law.n_input)
            )
            assert np.abs(avg_q - direct).max() <= 1e-9
        # averaging quant letters with p(q|u) recovers the aux-conditional state
        for u in range(law.n_aux):
            recon = sum(
                law.p_quant_given_aux[u, q] * ext.rho_aux_quant[u, q]
                for q in range(law.n_quant)
            )
            assert np.abs(recon - ext.rho_given_aux[u]).max() <= 1e-9

    def test_word_cap(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 2)
        with pytest.raises(ValidationError):
            cq_marginals(ext, max_words=3)


class TestDetectionProjector:
    def test_zero_difference_gives_identity(self):
        channel, _ = tiny_qubit_system()
        law = JointLaw(
            p_state=[1.0],
            p_quant_given_state=[[1.0]],
            p_aux_given_quant=[[1.0]],
            p_input_given_aux_quant=[[[0.5, 0.5]]],
        )
        states = [[channel.state_mats[x, 0]] for x in range(2)]
        chan1 = CqGpChannel(["0", "1"], ["0"], 2, states)
        ext = ProductExtension(law, chan1, 2)
        gamma = 0.07
        lam = detection_projector(ext, [0, 0], a=gamma, gamma=gamma)
        np.testing.assert_allclose(lam.mat, np.eye(4), atol=1e-9)

    def test_dominated_case_gives_zero(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 1)
        lam = detection_projector(ext, [0], a=60.0, gamma=0.05)
        np.testing.assert_allclose(lam.mat, np.zeros((2, 2)), atol=1e-12)

    def test_commuting_case_matches_classical_indicator_oracle(self):
        channel, law = diagonal_noisy_system()
        n, a, gamma = 3, 0.21, 0.08
        ext = ProductExtension(law, channel, n)
        assert ext.diagonal
        c = 2.0 ** (n * (a - gamma))
        t = np.einsum("uq,uqyy->uy", law.p_quant_given_aux, ext.rho_aux_quant).real
        avg = np.einsum("u,uy->y", law.p_aux, t)
        for word in itertools.product(range(2), repeat=n):
            lam = detection_projector(ext, word, a=a, gamma=gamma).mat
            expected = np.zeros(2 ** n)
            for flat, y_word in enumerate(itertools.product(range(2), repeat=n)):
                num = np.prod([t[u, y] for u, y in zip(word, y_word)])
                den = np.prod([avg[y] for y in y_word])
                expected[flat] = 1.0 if num - c * den >= -1e-12 else 0.0
            np.testing.assert_allclose(np.diag(lam).real, expected, atol=1e-12)

    def test_diagonal_fastpath_matches_dense(self):
        channel, law = diagonal_noisy_system()
        fast = ProductExtension(law, channel, 2)
        dense = ProductExtension(law, channel, 2, allow_diagonal_fastpath=False)
        assert fast.diagonal and not dense.diagonal
        for word in itertools.product(range(2), repeat=2):
            a, gamma = 0.3, 0.1
            np.testing.assert_allclose(
                fast.detection_projector_mat(word, a, gamma),
                dense.detection_projector_mat(word, a, gamma),
                atol=1e-9,
            )

    def test_zero_probability_word_rejected(self):
        channel, _ = tiny_qubit_system()
        law = JointLaw(
            p_state=[1.0],
            p_quant_given_state=[[1.0]],
            p_aux_given_quant=[[1.0, 0.0]],
            p_input_given_aux_quant=[[[1.0, 0.0]], [[0.0, 1.0]]],
        )
        states = [[channel.state_mats[x, 0]] for x in range(2)]
        chan1 = CqGpChannel(["0", "1"], ["0"], 2, states)
        ext = ProductExtension(law, chan1, 1)
        with pytest.raises(ValidationError, match="zero probability"):
            detection_projector(ext, [1], a=0.5, gamma=0.1)


class TestBlockIdentity:
    def test_full_space_matches_per_block_at_n1(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 1)
        a, gamma = 0.4, 0.09
        c = 2.0 ** (a - gamma)
        nu, d = law.n_aux, channel.dim_output
        joint = np.zeros((nu * d, nu * d), dtype=complex)
        marginal = np.zeros_like(joint)
        for u in range(nu):
            basis = np.zeros((nu, nu))
            basis[u, u] = 1.0
            joint += law.p_aux[u] * np.kron(basis, ext.rho_given_aux[u])
            marginal += law.p_aux[u] * np.kron(basis, ext.avg_output)
        pi_full = nonneg_eigenspace_projector(HermitianOperator(joint - c * marginal)).mat
        for u in range(nu):
            basis = np.zeros((nu, nu))
            basis[u, u] = 1.0
            embedded = pi_full @ np.kron(basis, np.eye(d))
            lam_full = partial_trace(
                HermitianOperator((embedded + embedded.conj().T) / 2), [nu, d], keep=[1]
            ).mat
            lam_block = detection_projector(ext, [u], a=a, gamma=gamma).mat
            assert np.abs(lam_full - lam_block).max() <= 1e-9

    def test_weighted_trace_identity_at_n2(self):
        channel, law = tiny_qubit_system()
        ext = ProductExtension(law, channel, 2)
        a, gamma = 0.35, 0.06
        c = 2.0 ** (2 * (a - gamma))
        words = list(itertools.product(range(law.n_aux), repeat=2))
        d2 = channel.dim_output ** 2
        dim = len(words) * d2
        joint = np.zeros((dim, dim), dtype=complex)
        marginal = np.zeros_like(joint)
        for w_idx, word in enumerate(words):
            p = ext.aux_word_prob(word)
            basis = np.zeros((len(words), len(words)))
            basis[w_idx, w_idx] = 1.0
            joint += p * np.kron(basis, ext.output_given_aux_mat(word))
            marginal += p * np.kron(basis, ext.avg_output_power())
        pi_full = nonneg_eigenspace_projector(HermitianOperator(joint - c * marginal)).mat
        lhs = sum(
            ext.aux_word_prob(word)
            * np.einsum(
                "ij,ji->",
                detection_projector(ext, word, a=a, gamma=gamma).mat,
                ext.output_given_aux_mat(word),
            ).real
            for word in words
        )
        rhs = np.einsum("ij,ji->", pi_full, joint).real
        assert lhs == pytest.approx(rhs, abs=1e-9)


class TestSystemJson:
    def test_roundtrip(self, tmp_path):
        channel, law = tiny_qubit_system()
        doc = system_to_dict(channel, law)
        path = tmp_path / "system.json"
        path.write_text(json.dumps(doc))
        chan2, law2 = load_system(path)
        np.testing.assert_allclose(chan2.state_mats, channel.state_mats, atol=0)
        np.testing.assert_allclose(law2.p_aux_given_quant, law.p_aux_given_quant, atol=0)

    def test_missing_file_names_path(self):
        with pytest.raises(ValidationError, match="no/such/file.json"):
            load_system("no/such/file.json")

    def test_missing_field_named(self):
        channel, law = tiny_qubit_system()
        doc = system_to_dict(channel, law)
        del doc["p_state"]
        with pytest.raises(ValidationError, match="p_state"):
            system_from_dict(doc)

    def test_bad_matrix_entry_named(self):
        channel, law = tiny_qubit_system()
        doc = system_to_dict(channel, law)
        doc["output_states"][1][0][0][0] = [1.0]
        with pytest.raises(ValidationError, match=r"output_states\[1\]\[0\]"):
            system_from_dict(doc)
