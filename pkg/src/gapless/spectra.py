"""Eigensolvers and spectral diagnostics.

Two solvers share the :class:`Spectrum` contract: :func:`dense_spectrum`
(LAPACK ``eigh``, the oracle) and :func:`lanczos_lowest`, a matrix-free block
Lanczos with full reorthogonalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .ensembles import is_hermitian
from .hamiltonian import HamiltonianSpec, assemble_dense, dense_cap, matvec

__all__ = [
    "Spectrum",
    "GapReport",
    "NoExcitedLevelError",
    "SchmidtResult",
    "default_tau",
    "dense_spectrum",
    "lanczos_lowest",
    "lowest_eigenvalues",
    "cluster_distinct",
    "gap",
    "weyl_interval",
    "dos_histogram",
    "schmidt_spectrum",
    "operator_norm",
]


def default_tau(eigenvalues) -> float:
    """Degeneracy tolerance ``1e-8 * max(1, spectral width)``."""
    ev = np.asarray(eigenvalues, dtype=float)
    width = float(ev[-1] - ev[0]) if ev.size else 0.0
    return 1e-8 * max(1.0, width)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    method: str = "dense"
    degeneracy_tol: float | None = None
    converged: bool = True
    residuals: np.ndarray | None = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        if self.degeneracy_tol is None:
            self.degeneracy_tol = default_tau(self.eigenvalues)

    def __len__(self):
        return self.eigenvalues.size


class GapReport(NamedTuple):
    lambda0: float
    lambda1_distinct: float
    gap: float
    ground_degeneracy: int
    tau: float


class NoExcitedLevelError(ValueError):
    """Raised when a spectrum has a single cluster at the requested resolution."""


class SchmidtResult(NamedTuple):
    singular_values: np.ndarray
    entropy: float


def _as_dense(h) -> np.ndarray:
    if isinstance(h, HamiltonianSpec):
        return assemble_dense(h)
    return np.asarray(h)


def dense_spectrum(h, want_vectors: bool = False, cap: int | None = None) -> Spectrum:
    """Full spectrum of a Hermitian matrix or of an assembled spec."""
    cap = dense_cap() if cap is None else cap
    if isinstance(h, HamiltonianSpec) and h.dim > cap:
        raise ValueError(f"Hilbert dimension {h.dim} exceeds dense cap {cap}")
    m = _as_dense(h)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] > cap:
        raise ValueError(f"dimension {m.shape[0]} exceeds dense cap {cap}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if not is_hermitian(m, atol=1e-12 * scale):
        raise ValueError("matrix is not Hermitian")
    if want_vectors:
        w, v = np.linalg.eigh(m)
        return Spectrum(w, v, "dense")
    return Spectrum(np.linalg.eigvalsh(m), None, "dense")


def _operator(op, dim):
    if isinstance(op, HamiltonianSpec):
        spec = op
        return (lambda x: matvec(spec, x)), spec.dim
    if isinstance(op, np.ndarray):
        a = op
        return (lambda x: a @ x), a.shape[0]
    if dim is None:
        raise ValueError("dim is required when passing a bare matvec callable")
    return op, int(dim)


def _orthonormalize_against(basis: np.ndarray | None, block: np.ndarray, rng, scale: float) -> np.ndarray:
    """Orthonormalize ``block`` against ``basis`` and itself (two Gram-Schmidt passes).

    Columns that vanish are replaced by fresh random directions, which keeps
    the Krylov basis growing through invariant subspaces.
    """
    dim, p = block.shape
    out = np.empty((dim, p), dtype=complex)
    used = 0 if basis is None else basis.shape[1]
    for c in range(p):
        v = block[:, c].astype(complex)
        for attempt in range(4):
            ref = max(np.linalg.norm(v), 1e-300)
            for _ in range(2):
                if basis is not None and used:
                    v = v - basis @ (basis.conj().T @ v)
                if c:
                    v = v - out[:, :c] @ (out[:, :c].conj().T @ v)
            nv = np.linalg.norm(v)
            if nv > 1e-10 * ref and nv > 1e-14 * scale:
                break
            v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            scale = 1.0
        else:
            raise RuntimeError("could not extend the Krylov basis")
        out[:, c] = v / nv
    return out


def lanczos_lowest(
    op,
    k: int = 1,
    max_iter: int | None = None,
    tol: float = 1e-8,
    seed=0,
    *,
    dim: int | None = None,
    block_size: int | None = None,
    want_vectors: bool = False,
) -> Spectrum:
    """The ``k`` lowest eigenpairs of a Hermitian operator.

    ``op`` is a :class:`HamiltonianSpec`, a dense array, or a callable mapping
    ``(dim, p)`` blocks to ``(dim, p)`` blocks (then ``dim`` is required).
    Block Lanczos with full reorthogonalization; block size defaults to
    ``k`` so multiplicities up to ``k`` are resolved. ``max_iter`` caps the
    Krylov basis size. Convergence means every returned pair has residual
    ``||H v - theta v|| <= tol * max(1, ||T||)``; otherwise the result carries
    ``converged=False`` with the best estimates.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    apply, dim = _operator(op, dim)
    if k > dim:
        raise ValueError(f"k={k} exceeds dimension {dim}")
    p = min(block_size or k, dim)
    max_basis = dim if max_iter is None else min(dim, max(int(max_iter), k))
    rng = np.random.default_rng(seed)

    q = _orthonormalize_against(None, rng.standard_normal((dim, p)) + 1j * rng.standard_normal((dim, p)), rng, 1.0)
    basis = np.empty((dim, 0), dtype=complex)
    images = np.empty((dim, 0), dtype=complex)
    proj = np.empty((0, 0), dtype=complex)
    theta = y = res = None
    scale = 1.0
    while True:
        w = np.asarray(apply(q), dtype=complex).reshape(dim, -1)
        # grow the projected matrix T = V^H H V by one block row/column
        top = basis.conj().T @ w
        corner = q.conj().T @ w
        proj = np.block([[proj, top], [top.conj().T, (corner + corner.conj().T) / 2.0]])
        basis = np.hstack([basis, q])
        images = np.hstack([images, w])

        theta_all, y_all = np.linalg.eigh(proj)
        kk = min(k, theta_all.size)
        theta, y = theta_all[:kk], y_all[:, :kk]
        scale = max(1.0, float(np.max(np.abs(theta_all))))
        resid = images @ y - (basis @ y) * theta
        res = np.linalg.norm(resid, axis=0)
        m = basis.shape[1]
        if kk == k and np.all(res <= tol * scale):
            converged = True
            break
        if m >= max_basis:
            converged = kk == k and bool(np.all(res <= tol * scale))
            break
        nxt = w - basis @ (basis.conj().T @ w)
        p_next = min(p, max_basis - m)
        q = _orthonormalize_against(basis, nxt[:, :p_next], rng, scale)

    vecs = basis @ y if want_vectors else None
    return Spectrum(theta, vecs, "lanczos", None, converged, res)


def lowest_eigenvalues(spec: HamiltonianSpec, k: int, seed=0, tol: float = 1e-10) -> np.ndarray:
    """``k`` lowest eigenvalues, dense when within the cap, Lanczos otherwise."""
    if spec.dim <= dense_cap():
        return dense_spectrum(spec).eigenvalues[:k]
    sp = lanczos_lowest(spec, k=k, tol=tol, seed=seed)
    if not sp.converged:
        raise RuntimeError("Lanczos did not converge")
    return sp.eigenvalues


def cluster_distinct(lambdas: Sequence[float], tau: float) -> list[tuple[float, int]]:
    """Group sorted eigenvalues; a new cluster starts when a step exceeds ``tau``."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0:
        return []
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be sorted")
    cuts = np.flatnonzero(np.diff(lam) > tau) + 1
    return [(float(np.mean(c)), int(c.size)) for c in np.split(lam, cuts)]


def gap(spectrum, tau: float | None = None) -> GapReport:
    """Gap between the two lowest distinct levels and the ground multiplicity."""
    if isinstance(spectrum, Spectrum):
        lam = spectrum.eigenvalues
        tau = spectrum.degeneracy_tol if tau is None else tau
    else:
        lam = np.asarray(spectrum, dtype=float)
        tau = default_tau(lam) if tau is None else tau
    clusters = cluster_distinct(lam, tau)
    if len(clusters) < 2:
        raise NoExcitedLevelError("no distinct excited level at this resolution")
    (l0, mult), (l1, _) = clusters[0], clusters[1]
    return GapReport(l0, l1, l1 - l0, mult, float(tau))


def weyl_interval(base, perturbation_norm: float, j: int) -> tuple[float, float]:
    """Interval containing ``lambda_j(H + V)`` when ``||V|| <= perturbation_norm``."""
    lam = base.eigenvalues if isinstance(base, Spectrum) else np.asarray(base, dtype=float)
    if perturbation_norm < 0:
        raise ValueError("perturbation norm must be non-negative")
    if not 0 <= j < lam.size:
        raise IndexError(f"eigenvalue index {j} out of range")
    return float(lam[j] - perturbation_norm), float(lam[j] + perturbation_norm)


def dos_histogram(lambdas, bins: int = 50, range: tuple | None = None):
    """Fraction of eigenvalues per bin; returns ``(weights, edges)``."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0:
        raise ValueError("empty spectrum")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    counts, edges = np.histogram(lam, bins=bins, range=range)
    total = counts.sum()
    if total == 0:
        raise ValueError("no eigenvalues inside the histogram range")
    return counts / total, edges


def schmidt_spectrum(state, left_sites, graph, d: int | None = None) -> SchmidtResult:
    """Schmidt coefficients and entanglement entropy for a bipartition of sites.

    ``graph`` is an :class:`InteractionGraph` (or spec), or the number of
    sites together with ``d``.
    """
    if isinstance(graph, int):
        n, d = graph, d or 2
    else:
        n, d = graph.num_sites, graph.local_dim
    psi = np.asarray(state)
    if psi.size != d**n:
        raise ValueError(f"state length {psi.size} != {d}**{n}")
    left = sorted(set(int(s) for s in left_sites))
    if not left or len(left) >= n or left[0] < 0 or left[-1] >= n:
        raise ValueError("bipartition must leave both sides non-empty")
    right = [s for s in range(n) if s not in left]
    mat = psi.reshape((d,) * n).transpose(left + right).reshape(d ** len(left), -1)
    s = np.linalg.svd(mat, compute_uv=False)
    p = s**2 / np.sum(s**2)
    p = p[p > 1e-300]
    return SchmidtResult(s, float(-np.sum(p * np.log(p))) + 0.0)


def operator_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(m), 2))
