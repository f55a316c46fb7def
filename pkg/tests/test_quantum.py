import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvqhl import quantum as qm

OPS = qm.spin1_site_ops()


def basis_index(ms, M):
    """Joint index from per-site magnetic numbers (+1, 0, -1), site 1 first."""
    digit = {1: 0, 0: 1, -1: 2}
    idx = 0
    for m in ms:
        idx = 3 * idx + digit[m]
    return idx


def test_sz_eigenvalues_on_basis():
    for k, m in enumerate((1, 0, -1)):
        e = np.zeros(3)
        e[k] = 1
        assert np.allclose(OPS["Sz"] @ e, m * e)


def test_projectors_complete():
    assert np.allclose(OPS["P+1"] + OPS["P0"] + OPS["P-1"], np.eye(3))


def test_commutator_sx_sy():
    sx, sy, sz = OPS["Sx"], OPS["Sy"], OPS["Sz"]
    assert np.max(np.abs(sx @ sy - sy @ sx - 1j * sz)) < 1e-12


def test_site_ops_read_only():
    with pytest.raises(ValueError):
        OPS["Sx"][0, 0] = 1.0


def test_kron_embed_identity_and_single_site():
    assert np.allclose(qm.kron_embed(OPS["I"], 2, 2), np.eye(9))
    assert np.allclose(qm.kron_embed(OPS["Sz"], 1, 1), OPS["Sz"])


def test_kron_embed_index_arithmetic():
    P = qm.kron_embed(OPS["P+1"], 2, 2)
    assert P[0, 0] == 1  # |+1,+1>
    for m1, m2 in itertools.product((1, 0, -1), repeat=2):
        i = basis_index((m1, m2), 2)
        assert P[i, i] == (1 if m2 == 1 else 0)


def test_kron_embed_rejects_bad_site():
    with pytest.raises(ValueError):
        qm.kron_embed(OPS["Sz"], 3, 2)


def test_two_site_embed_szsz():
    A = qm.two_site_embed(OPS["Sz"], OPS["Sz"], 1, 2, 2)
    for m1, m2 in itertools.product((1, 0, -1), repeat=2):
        i = basis_index((m1, m2), 2)
        assert A[i, i] == m1 * m2
    assert np.allclose(A - np.diag(np.diag(A)), 0)
    assert np.allclose(qm.two_site_embed(OPS["I"], OPS["I"], 1, 2, 2), np.eye(9))


@given(st.integers(2, 4), st.data())
@settings(max_examples=20, deadline=None)
def test_two_site_embed_is_product_of_embeds(M, data):
    q = data.draw(st.integers(1, M - 1))
    r = data.draw(st.integers(q + 1, M))
    a, b = data.draw(st.sampled_from(list(OPS))), data.draw(st.sampled_from(list(OPS)))
    ref = qm.kron_embed(OPS[a], q, M) @ qm.kron_embed(OPS[b], r, M)
    assert np.allclose(qm.two_site_embed(OPS[a], OPS[b], q, r, M), ref)


def test_eigen_diagonal_and_sx():
    eig = qm.hermitian_eigen(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(eig.eigenvalues, [-1, 2, 3])
    assert np.allclose(np.abs(eig.eigenvectors), np.eye(3)[:, [1, 2, 0]])
    assert np.allclose(qm.hermitian_eigen(OPS["Sx"]).eigenvalues, [-1, 0, 1])


def test_eigen_rejects_non_hermitian():
    with pytest.raises(qm.ModelError):
        qm.hermitian_eigen(np.array([[0, 1], [0, 0]], dtype=complex))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_eigen_reconstruction(seed):
    H = qm.random_hermitian(27, np.random.default_rng(seed))
    e = qm.hermitian_eigen(H)
    V = e.eigenvectors
    rec = (V * e.eigenvalues) @ V.conj().T
    assert np.max(np.abs(rec - H)) <= 1e-10 * max(1.0, np.max(np.abs(H)))


def test_evolve_trivial_cases():
    H = qm.random_hermitian(9, np.random.default_rng(0))
    assert np.allclose(qm.evolve(qm.hermitian_eigen(H), 0.0), np.eye(9))
    assert np.allclose(qm.evolve(qm.hermitian_eigen(np.zeros((3, 3))), 5.0), np.eye(3))


def test_evolve_diagonal_closed_form():
    lam = np.array([0.3, -1.2, 2.5])
    T = 0.7
    U = qm.evolve(qm.hermitian_eigen(np.diag(lam)), T)
    assert np.allclose(U, np.diag(np.exp(-1j * lam * T)), atol=1e-14)
    with pytest.raises(ValueError):
        qm.evolve(qm.hermitian_eigen(np.diag(lam)), -1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0, 50))
@settings(max_examples=30, deadline=None)
def test_evolution_preserves_norm(seed, T):
    rng = np.random.default_rng(seed)
    eig = qm.hermitian_eigen(qm.random_hermitian(27, rng))
    psi = rng.normal(size=27) + 1j * rng.normal(size=27)
    psi /= np.linalg.norm(psi)
    U = qm.evolve(eig, T)
    assert abs(np.linalg.norm(qm.apply(U, psi)) - 1) < 1e-9
    assert np.allclose(qm.evolve_state(eig, psi, T), U @ psi, atol=1e-10)


def test_apply_trivial():
    psi = np.array([0.6, 0.8j, 0])
    assert np.allclose(qm.apply(np.eye(3), psi), psi)
    assert np.allclose(qm.apply(-np.eye(3), psi), -psi)
    with pytest.raises(ValueError):
        qm.apply(np.eye(2), psi)


def test_expectation_values():
    psi = np.array([1, 1, 0]) / np.sqrt(2)
    assert qm.expectation(psi, np.eye(3)) == pytest.approx(1)
    assert qm.expectation(np.array([1, 0, 0]), OPS["Sz"]) == pytest.approx(1)
    assert qm.expectation(psi, OPS["Xeff"]) == pytest.approx(1)


def test_expectation_rejects_complex():
    with pytest.raises(qm.NumericError):
        qm.expectation(np.array([1, 1j]) / np.sqrt(2), np.array([[0, 1], [0, 0]]))
