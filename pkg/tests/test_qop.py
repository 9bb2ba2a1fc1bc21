import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density, random_hermitian, random_psd
from cqgp.errors import NumericalInvariantError, ValidationError
from cqgp.qop import (
    DensityOperator,
    HermitianOperator,
    Povm,
    Projector,
    eigh,
    inv_sqrt_on_support,
    matrix_from_pairs,
    matrix_to_pairs,
    measurement_probabilities,
    nonneg_eigenspace_projector,
    partial_trace,
    positive_eigenspace_projector,
    sample_measurement,
    spectral_norm,
    spectral_test,
    support_projector,
    tensor,
)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def H(mat):
    return HermitianOperator(mat)


class TestTypes:
    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            HermitianOperator(np.ones((2, 3)))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError):
            HermitianOperator(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_density_rejects_bad_trace(self):
        with pytest.raises(ValidationError):
            DensityOperator(np.eye(2, dtype=complex))

    def test_density_rejects_negative_eigenvalue(self):
        with pytest.raises(ValidationError):
            DensityOperator(np.diag([1.5, -0.5]).astype(complex))

    def test_projector_rejects_non_idempotent(self):
        with pytest.raises(ValidationError):
            Projector(np.diag([0.5, 0.5]).astype(complex))

    def test_operators_are_immutable(self):
        op = H(np.eye(2))
        with pytest.raises(ValueError):
            op.mat[0, 0] = 5


class TestTensor:
    def test_identity_case(self):
        out = tensor(H(np.eye(2)), H(np.eye(2)))
        np.testing.assert_allclose(out.mat, np.eye(4))

    def test_diagonal_arithmetic(self):
        out = tensor(H(np.diag([1.0, 0.0])), H(np.diag([0.0, 1.0])))
        np.testing.assert_allclose(out.mat, np.diag([0.0, 1.0, 0.0, 0.0]))

    def test_matches_index_formula_oracle(self, rng):
        for _ in range(50):
            da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            a, b = random_hermitian(rng, da), random_hermitian(rng, db)
            out = tensor(H(a), H(b)).mat
            expected = np.zeros((da * db, da * db), dtype=complex)
            for i in range(da):
                for j in range(db):
                    for k in range(da):
                        for ll in range(db):
                            expected[i * db + j, k * db + ll] = a[i, k] * b[j, ll]
            assert np.abs(out - expected).max() <= 1e-12


class TestPartialTrace:
    def test_product_state(self, rng):
        rho_a, rho_b = random_density(rng, 2), random_density(rng, 3)
        joint = H(np.kron(rho_a, rho_b))
        out = partial_trace(joint, [2, 3], keep=[0])
        np.testing.assert_allclose(out.mat, rho_a, atol=1e-12)

    def test_bell_state(self):
        ket = np.zeros(4, dtype=complex)
        ket[0] = ket[3] = 1 / np.sqrt(2)
        bell = H(np.outer(ket, ket.conj()))
        out = partial_trace(bell, [2, 2], keep=[1])
        np.testing.assert_allclose(out.mat, np.eye(2) / 2, atol=1e-12)

    def test_matches_double_index_oracle(self, rng):
        for _ in range(30):
            rho = random_density(rng, 4)
            out = partial_trace(H(rho), [2, 2], keep=[0]).mat
            expected = np.zeros((2, 2), dtype=complex)
            for i in range(2):
                for k in range(2):
                    for j in range(2):
                        expected[i, k] += rho[i * 2 + j, k * 2 + j]
            assert np.abs(out - expected).max() <= 1e-12

    def test_trace_preserved(self, rng):
        op = H(random_hermitian(rng, 12))
        out = partial_trace(op, [2, 3, 2], keep=[1])
        assert abs(np.trace(out.mat) - np.trace(op.mat)) < 1e-10

    def test_composition_any_order(self, rng):
        dims = [2, 3, 2]
        op = H(random_hermitian(rng, 12))
        joint = partial_trace(op, dims, keep=[1]).mat
        # trace factor 2 first, then factor 0
        step1 = partial_trace(op, dims, keep=[0, 1])
        step2 = partial_trace(step1, [2, 3], keep=[1]).mat
        # trace factor 0 first, then factor 2
        alt1 = partial_trace(op, dims, keep=[1, 2])
        alt2 = partial_trace(alt1, [3, 2], keep=[0]).mat
        assert np.abs(step2 - joint).max() <= 1e-9
        assert np.abs(alt2 - joint).max() <= 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            partial_trace(H(np.eye(4)), [2, 3], keep=[0])


class TestEigh:
    def test_identity(self):
        w, v = eigh(H(np.eye(3)))
        np.testing.assert_allclose(w, np.ones(3))
        np.testing.assert_allclose(v @ v.conj().T, np.eye(3), atol=1e-12)

    def test_pauli_x_closed_form(self):
        w, v = eigh(H(PAULI_X))
        np.testing.assert_allclose(w, [1.0, -1.0], atol=1e-12)
        plus = np.array([1, 1]) / np.sqrt(2)
        overlap = abs(np.vdot(plus, v[:, 0]))
        assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_descending_order_and_reconstruction(self, rng):
        for _ in range(25):
            dim = int(rng.integers(2, 10))
            a = random_hermitian(rng, dim)
            w, v = eigh(H(a))
            assert all(w[i] >= w[i + 1] for i in range(dim - 1))
            recon = (v * w) @ v.conj().T
            assert spectral_norm(recon - a) <= 1e-9 * max(spectral_norm(a), 1e-12)


class TestNonnegProjector:
    def test_diagonal_case(self):
        p = nonneg_eigenspace_projector(H(np.diag([0.25, -0.25])))
        np.testing.assert_allclose(p.mat, np.diag([1.0, 0.0]), atol=1e-12)

    def test_zero_matrix_maps_to_identity(self):
        p = nonneg_eigenspace_projector(H(np.zeros((3, 3))))
        np.testing.assert_allclose(p.mat, np.eye(3), atol=1e-12)

    def test_pauli_x(self):
        p = nonneg_eigenspace_projector(H(PAULI_X))
        plus = np.full((2, 2), 0.5)
        np.testing.assert_allclose(p.mat, plus, atol=1e-12)

    def test_sign_split_invariant_500_random(self, rng):
        for _ in range(500):
            dim = int(rng.integers(2, 17))
            a = random_hermitian(rng, dim)
            p = nonneg_eigenspace_projector(H(a)).mat
            pos_part = float(np.einsum("ij,ji->", p, a).real)
            neg_part = float(np.einsum("ij,ji->", np.eye(dim) - p, a).real)
            scale = spectral_norm(a)
            assert pos_part >= -1e-9 * scale
            assert neg_part <= 1e-9 * scale

    def test_positive_projector_excludes_kernel(self):
        p = positive_eigenspace_projector(H(np.diag([0.5, 0.0, -0.5])))
        np.testing.assert_allclose(p.mat, np.diag([1.0, 0.0, 0.0]), atol=1e-12)


class TestSpectralTest:
    def test_equal_states_threshold_one(self, rng):
        rho = DensityOperator(random_density(rng, 3))
        proj, value = spectral_test(rho, rho, 1.0)
        np.testing.assert_allclose(proj.mat, np.eye(3), atol=1e-9)
        assert value == pytest.approx(1.0, abs=1e-10)

    def test_equal_states_threshold_two(self, rng):
        rho = DensityOperator(random_density(rng, 3))
        _, value = spectral_test(rho, rho, 2.0)
        assert value == pytest.approx(0.0, abs=1e-10)

    def test_diagonal_arithmetic(self):
        rho = DensityOperator(np.diag([0.75, 0.25]).astype(complex))
        sigma = DensityOperator(np.eye(2, dtype=complex) / 2)
        proj, value = spectral_test(rho, sigma, 1.0)
        np.testing.assert_allclose(proj.mat, np.diag([1.0, 0.0]), atol=1e-12)
        assert value == pytest.approx(0.75, abs=1e-12)

    def test_monotone_in_threshold(self, rng):
        c_grid = np.exp2(np.linspace(-4, 4, 20))
        for _ in range(100):
            dim = int(rng.integers(2, 7))
            rho = DensityOperator(random_density(rng, dim))
            sigma = DensityOperator(random_density(rng, dim))
            values = [spectral_test(rho, sigma, float(c))[1] for c in c_grid]
            for v1, v2 in zip(values, values[1:]):
                assert v2 <= v1 + 1e-9

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValidationError):
            spectral_test(
                DensityOperator(random_density(rng, 2)),
                DensityOperator(random_density(rng, 3)),
                1.0,
            )


class TestInvSqrt:
    def test_identity(self):
        out = inv_sqrt_on_support(H(np.eye(3)))
        np.testing.assert_allclose(out.mat, np.eye(3), atol=1e-12)

    def test_pseudo_inverse_convention(self):
        out = inv_sqrt_on_support(H(np.diag([4.0, 0.0])))
        np.testing.assert_allclose(out.mat, np.diag([0.5, 0.0]), atol=1e-12)

    def test_sandwich_recovers_support_projector(self, rng):
        for _ in range(25):
            dim = int(rng.integers(2, 9))
            a = random_psd(rng, dim)
            # make some instances singular
            if rng.random() < 0.5:
                v = np.zeros(dim)
                v[0] = 1.0
                a = a - np.outer(a[:, 0], a[:, 0].conj()) / a[0, 0]
            root = inv_sqrt_on_support(H(a)).mat
            recon = root @ a @ root
            supp = support_projector(H(a)).mat
            assert spectral_norm(recon - supp) <= 1e-8

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            inv_sqrt_on_support(H(np.diag([1.0, -1.0])))


def _two_outcome_povm():
    e0 = np.diag([1.0, 0.0]).astype(complex)
    e1 = np.diag([0.0, 1.0]).astype(complex)
    return Povm([e0, e1], np.zeros((2, 2), dtype=complex))


class TestPovm:
    def test_valid_construction(self):
        povm = _two_outcome_povm()
        assert len(povm) == 2
        assert povm.failure_index == 2

    def test_rejects_non_psd_element(self):
        with pytest.raises(NumericalInvariantError):
            Povm([np.diag([1.5, -0.5]).astype(complex)], np.diag([-0.5, 1.5]).astype(complex))

    def test_rejects_bad_sum(self):
        half = np.eye(2, dtype=complex) / 2
        with pytest.raises(NumericalInvariantError):
            Povm([half], half / 2)


class TestSampleMeasurement:
    def test_deterministic_outcome(self, rng):
        povm = _two_outcome_povm()
        rho = DensityOperator(np.diag([1.0, 0.0]).astype(complex))
        assert all(sample_measurement(povm, rho, rng) == 0 for _ in range(50))

    def test_uniform_frequencies(self, rng):
        povm = _two_outcome_povm()
        rho = DensityOperator(np.eye(2, dtype=complex) / 2)
        draws = 10_000
        hits = sum(sample_measurement(povm, rho, rng) == 0 for _ in range(draws))
        sigma = np.sqrt(0.25 * draws)
        assert abs(hits - draws / 2) <= 3 * sigma

    def test_random_povm_frequencies_match_traces(self, rng):
        g = [random_psd(rng, 2) for _ in range(3)]
        total = sum(g)
        scale = np.linalg.eigvalsh(total)[-1] * 1.25
        elements = [m / scale for m in g]
        completion = np.eye(2) - sum(elements)
        povm = Povm(elements, completion)
        rho = DensityOperator(random_density(rng, 2))
        probs = measurement_probabilities(povm, rho)
        draws = 10_000
        counts = np.zeros(4)
        for _ in range(draws):
            counts[sample_measurement(povm, rho, rng)] += 1
        for k in range(4):
            sigma = np.sqrt(max(probs[k] * (1 - probs[k]), 1e-12) * draws)
            assert abs(counts[k] - probs[k] * draws) <= 4 * sigma + 1e-9

    def test_completion_maps_to_failure_index(self, rng):
        povm = Povm([np.diag([1.0, 0.0]).astype(complex)], np.diag([0.0, 1.0]).astype(complex))
        rho = DensityOperator(np.diag([0.0, 1.0]).astype(complex))
        assert sample_measurement(povm, rho, rng) == povm.failure_index

    def test_rejects_broken_total_probability(self, rng):
        povm = _two_outcome_povm()
        bad_rho = DensityOperator.trusted(np.diag([0.5, 0.49]).astype(complex))
        with pytest.raises(NumericalInvariantError):
            sample_measurement(povm, bad_rho, rng)


class TestJsonPairs:
    def test_roundtrip(self, rng):
        mat = random_hermitian(rng, 3)
        again = matrix_from_pairs(matrix_to_pairs(mat))
        np.testing.assert_allclose(again, mat, atol=0)

    def test_names_bad_entry(self):
        with pytest.raises(ValidationError, match=r"\(0,1\)"):
            matrix_from_pairs([[[1.0, 0.0], [1.0]], [[0.0, 0.0], [1.0, 0.0]]])


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=2, max_value=5),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_tensor_spectrum_is_product_hypothesis(da, db, seed):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(rng, da), random_hermitian(rng, db)
    out = tensor(H(a), H(b)).mat
    wa = np.linalg.eigvalsh(a)
    wb = np.linalg.eigvalsh(b)
    expected = np.sort(np.outer(wa, wb).ravel())
    np.testing.assert_allclose(np.linalg.eigvalsh(out), expected, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_projector_complements_split_trace_hypothesis(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 8))
    a = random_hermitian(rng, dim)
    p = nonneg_eigenspace_projector(H(a)).mat
    w = np.linalg.eigvalsh(a)
    expected = w[w >= -1e-10 * np.abs(w).max()].sum()
    assert np.einsum("ij,ji->", p, a).real == pytest.approx(expected, abs=1e-8)
