r"""Random matrix ensembles used for local terms.

Gaussian matrices follow the density ``~ exp(-(beta/4) tr M^2)``, which fixes

=========  ==================  =====================================
beta       diagonal variance   off-diagonal ``E|M_ij|^2``
=========  ==================  =====================================
1 (GOE)    2                   1 (real)
2 (GUE)    1                   1 (real and imaginary part 1/2 each)
=========  ==================  =====================================

``beta = 4`` is not supported.

All samplers accept ``seed`` as anything :func:`numpy.random.default_rng`
understands (an int, a :class:`~numpy.random.SeedSequence`, or a ready
:class:`~numpy.random.Generator`), and are pure functions of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SUPPORTED_BETAS",
    "EnsembleParams",
    "DiscreteSpectrumLaw",
    "check_beta",
    "is_hermitian",
    "sample_gaussian",
    "sample_gaussian_batch",
    "eigenvalue_log_density",
    "dist_to_identity_multiple",
    "dist_to_identity_multiple_batch",
    "min_spacing",
    "sample_haar_eigenvectors",
    "sample_projector",
    "sample_discrete_term",
    "random_hermitian_with_norm",
]

SUPPORTED_BETAS = (1, 2)

HERMITIAN_ATOL = 1e-12


def check_beta(beta) -> int:
    if beta not in SUPPORTED_BETAS:
        raise ValueError(f"beta must be 1 or 2, got {beta!r}")
    return int(beta)


@dataclass(frozen=True)
class EnsembleParams:
    """Dimension, Dyson index and seed of a Gaussian ensemble draw."""

    n: int
    beta: int = 2
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"matrix dimension must be a positive integer, got {self.n!r}")
        check_beta(self.beta)


@dataclass(frozen=True)
class DiscreteSpectrumLaw:
    """A finite distribution of local eigenvalues.

    ``atoms`` are sorted ascending and ``probs`` must sum to one.
    """

    atoms: tuple
    probs: tuple

    def __post_init__(self):
        atoms = tuple(float(a) for a in self.atoms)
        probs = tuple(float(p) for p in self.probs)
        if not atoms:
            raise ValueError("a discrete law needs at least one atom")
        if len(atoms) != len(probs):
            raise ValueError("atoms and probs must have equal length")
        if any(not math.isfinite(a) for a in atoms):
            raise ValueError("atoms must be finite")
        if any(b < a for a, b in zip(atoms, atoms[1:])):
            raise ValueError("atoms must be sorted ascending")
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "DiscreteSpectrumLaw":
        atoms = sorted(float(a) for a in atoms)
        return cls(tuple(atoms), tuple([1.0 / len(atoms)] * len(atoms)))

    def to_dict(self) -> dict:
        return {"atoms": list(self.atoms), "probs": list(self.probs)}


def is_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, m.conj().T, rtol=0, atol=atol)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_gaussian_batch(n: int, beta: int, size: int, seed=None) -> np.ndarray:
    """Draw ``size`` independent ``n x n`` Gaussian matrices, shape ``(size, n, n)``.

    Real symmetric for ``beta=1``, complex Hermitian for ``beta=2``.
    """
    beta = check_beta(beta)
    rng = _rng(seed)
    a = rng.standard_normal((size, n, n))
    if beta == 1:
        # diag: sqrt(2) * N(0,1) -> var 2; off-diag: (x + y)/sqrt(2) -> var 1
        return (a + np.swapaxes(a, -1, -2)) / math.sqrt(2.0)
    b = rng.standard_normal((size, n, n))
    # diag of (a + a^T)/2 has var 1; each off-diagonal part has var 1/2
    re = (a + np.swapaxes(a, -1, -2)) / 2.0
    im = (b - np.swapaxes(b, -1, -2)) / 2.0
    idx = np.arange(n)
    re[:, idx, idx] = a[:, idx, idx]
    return re + 1j * im


def sample_gaussian(params: EnsembleParams) -> np.ndarray:
    """One draw from the Gaussian ensemble described by ``params``."""
    return sample_gaussian_batch(params.n, params.beta, 1, params.seed)[0]


def _log_z(n: int, beta: int) -> float | None:
    # only the 2x2 unitary case has a closed-form constant here
    if n == 2 and beta == 2:
        return -math.log(2.0 * math.pi)
    return None


def eigenvalue_log_density(lambdas: Sequence[float], beta: int) -> float:
    """Log of the joint density of ordered eigenvalues.

    Returns ``-(beta/4) sum l^2 + beta sum_{j<k} log|l_j - l_k|``, plus the
    normalization ``log Z`` when it is known (``n=2, beta=2``). Coinciding
    eigenvalues give ``-inf``.
    """
    beta = check_beta(beta)
    lam = np.asarray(lambdas, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be finite")
    n = lam.size
    out = -(beta / 4.0) * float(np.sum(lam**2))
    for j in range(n):
        for k in range(j + 1, n):
            diff = abs(lam[j] - lam[k])
            if diff == 0.0:
                return -math.inf
            out += beta * math.log(diff)
    log_z = _log_z(n, beta)
    if log_z is not None:
        out += log_z
    return out


def dist_to_identity_multiple(m: np.ndarray) -> tuple[float, float]:
    """Closest multiple of the identity in Frobenius norm.

    Returns ``(a_star, dist)`` with ``a_star = tr(M)/dim`` and ``dist`` the
    minimum of ``||M - a I||_F`` over real ``a``.
    """
    m = np.asarray(m)
    dim = m.shape[0]
    a_star = float(np.real(np.trace(m))) / dim
    dist = float(np.linalg.norm(m - a_star * np.eye(dim)))
    return a_star, dist


def dist_to_identity_multiple_batch(ms: np.ndarray) -> np.ndarray:
    """Vectorized ``dist`` of :func:`dist_to_identity_multiple` over a stack."""
    ms = np.asarray(ms)
    dim = ms.shape[-1]
    a = np.real(np.trace(ms, axis1=-2, axis2=-1)) / dim
    centered = ms - a[..., None, None] * np.eye(dim)
    return np.sqrt(np.sum(np.abs(centered) ** 2, axis=(-2, -1)))


def min_spacing(lambdas: Sequence[float]) -> float:
    lam = np.asarray(lambdas, dtype=float)
    if lam.size < 2:
        raise ValueError("need at least two eigenvalues for a spacing")
    return float(np.min(np.diff(lam)))


def sample_haar_eigenvectors(dim: int, beta: int = 2, seed=None) -> np.ndarray:
    """Haar-random orthogonal (``beta=1``) or unitary (``beta=2``) matrix.

    QR of a Gaussian matrix with the phases of ``diag(R)`` folded back into
    ``Q`` so the result is exactly Haar distributed.
    """
    beta = check_beta(beta)
    if dim < 1:
        raise ValueError("dimension must be positive")
    rng = _rng(seed)
    if beta == 1:
        z = rng.standard_normal((dim, dim))
    else:
        z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _rotate(eigs: np.ndarray, u: np.ndarray) -> np.ndarray:
    m = (u * eigs) @ u.conj().T
    return (m + m.conj().T) / 2.0


def sample_projector(dim: int, rank: int, beta: int = 2, seed=None) -> np.ndarray:
    """Rank-``rank`` orthogonal projector with Haar-distributed range."""
    if not 0 <= rank <= dim:
        raise ValueError(f"rank {rank} outside [0, {dim}]")
    u = sample_haar_eigenvectors(dim, beta, seed)
    eigs = np.zeros(dim)
    eigs[dim - rank:] = 1.0
    return _rotate(eigs, u)


def sample_discrete_term(dim: int, law: DiscreteSpectrumLaw, beta: int = 2, seed=None) -> np.ndarray:
    """Hermitian matrix with i.i.d. eigenvalues from ``law`` and Haar eigenvectors."""
    if not isinstance(law, DiscreteSpectrumLaw):
        raise TypeError("law must be a DiscreteSpectrumLaw")
    rng = _rng(seed)
    eigs = np.sort(rng.choice(np.asarray(law.atoms), size=dim, p=np.asarray(law.probs)))
    u = sample_haar_eigenvectors(dim, beta, rng)
    return _rotate(eigs, u)


def random_hermitian_with_norm(dim: int, norm: float, seed=None, beta: int = 2) -> np.ndarray:
    """Gaussian Hermitian matrix rescaled to operator norm exactly ``norm``."""
    if norm < 0:
        raise ValueError("norm must be non-negative")
    if norm == 0:
        return np.zeros((dim, dim), dtype=complex)
    m = sample_gaussian_batch(dim, beta, 1, seed)[0].astype(complex)
    return m * (norm / np.linalg.norm(m, 2))
