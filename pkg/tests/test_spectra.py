import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapless.ensembles import EnsembleParams, random_hermitian_with_norm, sample_gaussian, sample_haar_eigenvectors
from gapless.hamiltonian import PAULI, GaussianModel, HamiltonianSpec, IdentityModel, assemble_dense, random_spec
from gapless.spectra import (
    NoExcitedLevelError,
    Spectrum,
    cluster_distinct,
    default_tau,
    dense_spectrum,
    dos_histogram,
    gap,
    lanczos_lowest,
    lowest_eigenvalues,
    schmidt_spectrum,
    weyl_interval,
)
from gapless.topology import chain


class TestDense:
    def test_diagonal(self):
        assert np.allclose(dense_spectrum(np.diag([3.0, 1.0, 2.0])).eigenvalues, [1, 2, 3])

    def test_pauli_x(self):
        assert np.allclose(dense_spectrum(PAULI[1]).eigenvalues, [-1, 1])

    def test_trace_identities(self):
        h = sample_gaussian(EnsembleParams(50, 2, 4))
        lam = dense_spectrum(h).eigenvalues
        assert abs(lam.sum() - np.real(np.trace(h))) <= 1e-8 * max(1.0, abs(np.trace(h)))
        fro2 = np.sum(np.abs(h) ** 2)
        assert abs(np.sum(lam**2) - fro2) <= 1e-6 * fro2

    def test_reconstruction(self):
        h = sample_gaussian(EnsembleParams(30, 1, 5))
        sp = dense_spectrum(h, want_vectors=True)
        v = sp.eigenvectors
        assert np.linalg.norm(h - (v * sp.eigenvalues) @ v.conj().T) <= 1e-8 * np.linalg.norm(h)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            dense_spectrum(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_cap(self):
        with pytest.raises(ValueError):
            dense_spectrum(np.eye(8), cap=4)

    def test_spec_input(self):
        spec = random_spec(chain(4), GaussianModel(2), seed=1)
        assert np.allclose(dense_spectrum(spec).eigenvalues, np.linalg.eigvalsh(assemble_dense(spec)))

    def test_unsorted_spectrum_rejected(self):
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 0.0]))


class TestLanczos:
    def test_diagonal_spec_matches_scan(self):
        rng = np.random.default_rng(0)
        diag_terms = [np.diag(rng.standard_normal(4)) for _ in range(9)]
        spec = HamiltonianSpec(chain(10), diag_terms)
        # independent diagonal scan over all basis states
        digits = (np.arange(2**10)[:, None] >> (9 - np.arange(10))[None, :]) & 1
        energies = np.zeros(2**10)
        for i, t in enumerate(diag_terms):
            energies += np.real(np.diag(t))[2 * digits[:, i] + digits[:, i + 1]]
        sp = lanczos_lowest(spec, k=4, seed=1)
        assert sp.converged
        assert np.max(np.abs(sp.eigenvalues - np.sort(energies)[:4])) < 1e-8

    def test_random_chain_matches_dense(self):
        spec = random_spec(chain(8), GaussianModel(2), seed=3)
        sp = lanczos_lowest(spec, k=4, seed=2)
        dense = dense_spectrum(spec).eigenvalues[:4]
        assert sp.converged and np.max(np.abs(sp.eigenvalues - dense)) < 1e-8

    def test_multiple_of_identity(self):
        spec = random_spec(chain(6), IdentityModel(0.75), seed=0)
        sp = lanczos_lowest(spec, k=3, seed=5)
        assert sp.converged
        assert np.max(np.abs(sp.eigenvalues - 5 * 0.75)) < 1e-10

    def test_deterministic(self):
        spec = random_spec(chain(7), GaussianModel(1), seed=8)
        a = lanczos_lowest(spec, k=2, seed=9).eigenvalues
        b = lanczos_lowest(spec, k=2, seed=9).eigenvalues
        assert a.tobytes() == b.tobytes()

    def test_residual_contract(self):
        spec = random_spec(chain(7), GaussianModel(2), seed=10)
        sp = lanczos_lowest(spec, k=3, seed=1, want_vectors=True)
        h = assemble_dense(spec)
        scale = max(1.0, np.linalg.norm(h, 2))
        for j in range(3):
            v = sp.eigenvectors[:, j]
            assert np.linalg.norm(h @ v - sp.eigenvalues[j] * v) <= 1e-8 * scale

    def test_non_convergence_flagged(self):
        spec = random_spec(chain(8), GaussianModel(2), seed=11)
        sp = lanczos_lowest(spec, k=2, max_iter=4, seed=0)
        assert not sp.converged
        assert sp.eigenvalues.size == 2

    def test_degenerate_ground_space(self):
        # H = Z_0 Z_1 has two-fold degenerate ground space at -1 (twice with n=3 extra site)
        spec = HamiltonianSpec(chain(3), [np.kron(PAULI[3], PAULI[3]), np.zeros((4, 4))])
        sp = lanczos_lowest(spec, k=4, seed=3)
        assert np.allclose(sp.eigenvalues, [-1, -1, -1, -1], atol=1e-10)

    def test_callable_requires_dim(self):
        with pytest.raises(ValueError):
            lanczos_lowest(lambda x: x, k=1)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            lanczos_lowest(np.eye(3), k=0)
        with pytest.raises(ValueError):
            lanczos_lowest(np.eye(3), k=4)

    def test_lowest_eigenvalues_lanczos_path(self, monkeypatch):
        spec = random_spec(chain(7), GaussianModel(2), seed=12)
        dense = dense_spectrum(spec).eigenvalues[:3]
        monkeypatch.setenv("GAPLESS_DENSE_CAP", "64")
        assert np.max(np.abs(lowest_eigenvalues(spec, 3, seed=1) - dense)) < 1e-8


class TestClusteringAndGap:
    def test_cluster_examples(self):
        c = cluster_distinct([0.0, 1e-12, 1.0], 1e-9)
        assert len(c) == 2 and c[0][1] == 2 and abs(c[0][0]) < 1e-11 and c[1] == (1.0, 1)
        assert cluster_distinct([0.0, 1.0, 2.0], 1e-9) == [(0.0, 1), (1.0, 1), (2.0, 1)]

    def test_cluster_requires_sorted(self):
        with pytest.raises(ValueError):
            cluster_distinct([1.0, 0.0], 1e-9)

    def test_greedy_chaining(self):
        # steps of 0.5*tau chain into one cluster even though the span exceeds tau
        c = cluster_distinct([0.0, 0.5, 1.0, 1.5], 0.6)
        assert c == [(0.75, 4)]

    def test_gap_example(self):
        r = gap([0.0, 0.0, 1.0], tau=1e-9)
        assert r.gap == 1.0 and r.ground_degeneracy == 2 and r.tau == 1e-9

    def test_gap_single_cluster(self):
        with pytest.raises(NoExcitedLevelError, match="no distinct excited level"):
            gap([1.0, 1.0], tau=1e-9)

    def test_two_site_chain_is_term(self):
        spec = random_spec(chain(2), GaussianModel(2), seed=14)
        ev = np.linalg.eigvalsh(spec.terms[0].matrix)
        r = gap(dense_spectrum(spec))
        assert abs(r.gap - (ev[1] - ev[0])) < 1e-12 and r.ground_degeneracy == 1

    def test_default_tau(self):
        assert default_tau([0.0, 0.5]) == 1e-8
        assert default_tau([-10.0, 10.0]) == pytest.approx(2e-7)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(1e-6, 0.5))
    def test_cluster_multiplicities_partition(self, vals, tau):
        lam = sorted(vals)
        c = cluster_distinct(lam, tau)
        assert sum(m for _, m in c) == len(lam)
        means = [v for v, _ in c]
        assert all(b - a > tau for a, b in zip(means, means[1:]))


class TestWeyl:
    def test_zero_norm(self):
        assert weyl_interval([0.0, 1.0], 0.0, 1) == (1.0, 1.0)

    def test_diagonal_example(self):
        lo, hi = weyl_interval(np.array([0.0, 1.0]), 0.1, 0)
        assert lo <= np.linalg.eigvalsh(np.diag([0.1, 1.0]))[0] <= hi

    def test_errors(self):
        with pytest.raises(IndexError):
            weyl_interval([0.0], 0.1, 1)
        with pytest.raises(ValueError):
            weyl_interval([0.0], -0.1, 0)

    def test_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            h = sample_gaussian(EnsembleParams(40, 2, rng))
            v = random_hermitian_with_norm(40, float(rng.uniform(0, 2)), rng)
            base = dense_spectrum(h)
            pert = np.linalg.eigvalsh(h + v)
            nv = np.linalg.norm(v, 2)
            for j in range(40):
                lo, hi = weyl_interval(base, nv, j)
                assert lo - 1e-10 <= pert[j] <= hi + 1e-10


class TestDos:
    def test_single(self):
        w, edges = dos_histogram([0.3], bins=1)
        assert list(w) == [1.0] and edges.size == 2

    def test_two_bins(self):
        w, _ = dos_histogram([0, 1, 2, 3], bins=2, range=(0, 4))
        assert list(w) == [0.5, 0.5]

    def test_normalization(self):
        lam = dense_spectrum(random_spec(chain(10), GaussianModel(2), seed=1)).eigenvalues
        w, _ = dos_histogram(lam, bins=40)
        assert abs(w.sum() - 1.0) < 1e-12

    def test_errors(self):
        with pytest.raises(ValueError):
            dos_histogram([])
        with pytest.raises(ValueError):
            dos_histogram([1.0], bins=0)


class TestSchmidt:
    def test_product_state(self):
        psi = np.zeros(2**4)
        psi[0] = 1.0
        r = schmidt_spectrum(psi, [0, 1], 4, 2)
        assert np.allclose(r.singular_values, [1, 0, 0, 0]) and r.entropy == 0.0

    def test_bell_state(self):
        psi = np.array([1, 0, 0, 1]) / math.sqrt(2)
        r = schmidt_spectrum(psi, [0], 2, 2)
        assert np.allclose(r.singular_values, [1 / math.sqrt(2)] * 2)
        assert r.entropy == pytest.approx(math.log(2), abs=1e-14)

    def test_non_contiguous_cut(self):
        # Bell pair on sites (0, 2), site 1 in |0>: cutting {1} gives a product
        psi = np.zeros(8)
        psi[0b000] = psi[0b101] = 1 / math.sqrt(2)
        assert schmidt_spectrum(psi, [1], 3, 2).entropy < 1e-14
        assert schmidt_spectrum(psi, [0], 3, 2).entropy == pytest.approx(math.log(2))

    def test_trivial_cut_rejected(self):
        with pytest.raises(ValueError):
            schmidt_spectrum(np.ones(4), [], 2, 2)
        with pytest.raises(ValueError):
            schmidt_spectrum(np.ones(4), [0, 1], 2, 2)
        with pytest.raises(ValueError):
            schmidt_spectrum(np.ones(5), [0], 2, 2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_local_unitary_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n, d = 4, 2
        psi = rng.standard_normal(d**n) + 1j * rng.standard_normal(d**n)
        psi /= np.linalg.norm(psi)
        left = [0, 2]
        u = sample_haar_eigenvectors(d, 2, rng)
        # apply u on site 0 (left side) via Kronecker product
        op = np.kron(u, np.eye(d ** (n - 1)))
        before = schmidt_spectrum(psi, left, n, d).entropy
        after = schmidt_spectrum(op @ psi, left, n, d).entropy
        assert abs(before - after) < 1e-9

    def test_accepts_graph(self):
        psi = np.zeros(8)
        psi[0] = 1.0
        assert schmidt_spectrum(psi, [0], chain(3)).entropy == 0.0
