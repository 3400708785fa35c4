import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qworklab.qcore import (
    DensityState,
    Operator,
    QCoreError,
    dephase,
    evolve,
    expectation,
    random_hermitian,
    random_state,
    random_unitary,
    spectral,
)

PLUS = np.array([1, 1]) / np.sqrt(2)
MINUS = np.array([1, -1]) / np.sqrt(2)
KET0, KET1 = np.eye(2)


def counterexample_unitary():
    return Operator.unitary_op(np.outer(KET0, PLUS) + np.outer(KET1, MINUS))


seeds = st.integers(0, 2**31 - 1)
dims = st.integers(1, 8)


class TestExpectation:
    def test_maximally_mixed_traceless(self):
        assert expectation(DensityState.maximally_mixed(2), Operator.observable(np.diag([1, -1]))) == 0.0

    def test_eigenstate(self):
        assert expectation(DensityState.pure([0, 1]), Operator.observable(np.diag([0, 1.0]))) == pytest.approx(1.0)

    def test_plus_state_on_unitary_work_operator(self):
        w = Operator.observable([[1, -1], [-1, 0]])
        assert expectation(DensityState.pure(PLUS), w) == pytest.approx(-0.5, abs=1e-15)

    def test_rejects_non_hermitian(self):
        with pytest.raises(QCoreError):
            expectation(DensityState.maximally_mixed(2), Operator([[0, 1], [0, 0]]))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(QCoreError, match="dimension"):
            expectation(DensityState.maximally_mixed(2), Operator.identity(3))

    @given(dims, seeds)
    def test_identity_expectation_is_one(self, dim, seed):
        assert expectation(random_state(dim, seed), Operator.identity(dim)) == pytest.approx(1.0, abs=1e-12)


class TestDephase:
    def test_diagonal_state_is_fixed_point(self):
        rho = DensityState(np.diag([0.3, 0.7]))
        out = dephase(rho, spectral(Operator.observable(np.diag([0.0, 1.0]))))
        np.testing.assert_array_equal(out.matrix, rho.matrix)

    def test_plus_state_becomes_maximally_mixed(self):
        out = dephase(DensityState.pure(PLUS), spectral(Operator.observable(np.diag([0.0, 1.0]))))
        np.testing.assert_allclose(out.matrix, np.eye(2) / 2, atol=1e-15)

    def test_random_qubit_offdiagonals_zero(self):
        rho = random_state(2, 7)
        out = dephase(rho, spectral(Operator.observable(np.diag([0.0, 1.0]))))
        assert out.matrix[0, 1] == 0 and out.matrix[1, 0] == 0
        np.testing.assert_allclose(np.diag(out.matrix), np.diag(rho.matrix), atol=1e-15)

    @settings(max_examples=60)
    @given(dims, seeds, seeds)
    def test_idempotent(self, dim, s1, s2):
        basis = spectral(random_hermitian(dim, s2))
        once = dephase(random_state(dim, s1), basis)
        twice = dephase(once, basis)
        assert np.max(np.abs(twice.matrix - once.matrix)) < 1e-14


class TestEvolve:
    def test_identity(self):
        rho = random_state(3, 1)
        np.testing.assert_allclose(evolve(rho, Operator.identity(3)).matrix, rho.matrix, atol=1e-15)

    def test_counterexample_unitary_maps_one_to_minus(self):
        # U^dag |1> = |->
        u = counterexample_unitary()
        np.testing.assert_allclose(u.entries.conj().T @ KET1, MINUS, atol=1e-15)
        rho = evolve(DensityState.pure(KET1), u.dagger())
        np.testing.assert_allclose(rho.matrix, np.outer(MINUS, MINUS), atol=1e-15)

    def test_rejects_non_unitary(self):
        with pytest.raises(QCoreError):
            evolve(DensityState.maximally_mixed(2), Operator(np.diag([1.0, 2.0])))

    @settings(max_examples=60)
    @given(dims, seeds, seeds)
    def test_trace_and_spectrum_preserved(self, dim, s1, s2):
        rho = random_state(dim, s1)
        out = evolve(rho, random_unitary(dim, s2))
        assert abs(np.trace(out.matrix) - 1) < 1e-12
        ev = np.linalg.eigvalsh(out.matrix)
        assert ev[0] >= -1e-12
        np.testing.assert_allclose(ev, np.linalg.eigvalsh(rho.matrix), atol=1e-12)


class TestSpectral:
    def test_two_level(self):
        np.testing.assert_allclose(spectral(Operator.observable(np.diag([0.0, 1.0]))).eigenvalues, [0, 1])

    def test_sorted_with_permuted_basis(self):
        s = spectral(Operator.observable(np.diag([3.0, 1.0, 2.0])))
        np.testing.assert_allclose(s.eigenvalues, [1, 2, 3])
        np.testing.assert_allclose(np.abs(s.eigenvectors), np.eye(3)[:, [1, 2, 0]], atol=1e-15)

    def test_random_reconstruction(self):
        h = random_hermitian(4, 3)
        s = spectral(h)
        assert np.max(np.abs(s.reconstruct() - h.entries)) < 1e-10
        resid = h.entries @ s.eigenvectors - s.eigenvectors * s.eigenvalues
        assert np.max(np.abs(resid)) < 1e-10 * np.max(np.abs(s.eigenvalues))
        np.testing.assert_allclose(s.eigenvectors.conj().T @ s.eigenvectors, np.eye(4), atol=1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(QCoreError):
            spectral(Operator([[0, 1], [2, 0]]))

    @given(dims, seeds)
    def test_reconstruction_property(self, dim, seed):
        h = random_hermitian(dim, seed)
        assert np.max(np.abs(spectral(h).reconstruct() - h.entries)) < 1e-10


class TestGenerators:
    def test_dim_one_state(self):
        np.testing.assert_allclose(random_state(1, 5).matrix, [[1.0]])

    def test_deterministic(self):
        np.testing.assert_array_equal(random_state(4, 11).matrix, random_state(4, 11).matrix)
        np.testing.assert_array_equal(random_unitary(4, 11).entries, random_unitary(4, 11).entries)

    def test_thousand_qubit_states_valid(self):
        for seed in range(1000):
            m = random_state(2, seed).matrix
            assert abs(np.trace(m) - 1) < 1e-12
            assert np.max(np.abs(m - m.conj().T)) < 1e-12
            assert np.linalg.eigvalsh(m)[0] >= -1e-12

    def test_invalid_density_rejected(self):
        with pytest.raises(QCoreError, match="trace"):
            DensityState(np.eye(2))
        with pytest.raises(QCoreError, match="negative"):
            DensityState(np.diag([1.5, -0.5]))


class TestSerialization:
    def test_operator_json_round_trip(self):
        u = random_unitary(3, 2)
        d = json.loads(u.to_json())
        assert d["dim"] == 3 and set(d) == {"dim", "re", "im"}
        back = Operator.from_dict(d, unitary=True)
        np.testing.assert_array_equal(back.entries, u.entries)

    def test_state_round_trip(self):
        rho = random_state(4, 9)
        back = DensityState.from_dict(json.loads(json.dumps(rho.to_dict())))
        np.testing.assert_array_equal(back.matrix, rho.matrix)
