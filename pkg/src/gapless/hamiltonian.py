"""Two-local Hamiltonians ``H = sum_<ij> I (x) H_ij`` on an interaction graph.

Index convention: site 0 is the most significant base-``d`` digit of a
basis-state index, i.e. the full state is a C-ordered tensor of shape
``(d,) * n``. A term on edge ``(i, j)`` with ``i < j`` is a ``d^2 x d^2``
matrix whose row index is ``d * a_i + a_j``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import ensembles
from .ensembles import DiscreteSpectrumLaw
from .topology import InteractionGraph, chain

__all__ = [
    "DEFAULT_DENSE_CAP",
    "dense_cap",
    "LocalTerm",
    "HamiltonianSpec",
    "PauliChainParams",
    "PAULI",
    "GaussianModel",
    "ProjectorModel",
    "DiscreteModel",
    "IdentityModel",
    "edge_seed",
    "apply_term",
    "embed_term",
    "assemble_dense",
    "matvec",
    "pauli_chain",
    "random_pauli_params",
    "random_spec",
    "spec_to_dict",
    "spec_from_dict",
    "save_spec",
    "load_spec",
]

DEFAULT_DENSE_CAP = 2**13

PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def dense_cap() -> int:
    """Largest Hilbert-space dimension handled densely (``GAPLESS_DENSE_CAP`` overrides)."""
    return int(os.environ.get("GAPLESS_DENSE_CAP", DEFAULT_DENSE_CAP))


@dataclass(frozen=True)
class LocalTerm:
    edge: tuple
    matrix: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if not np.all(np.isfinite(m)):
            raise ValueError(f"term on {self.edge} has non-finite entries")
        if not ensembles.is_hermitian(m):
            raise ValueError(f"term on {self.edge} is not Hermitian")
        m = (m + m.conj().T) / 2.0
        m.setflags(write=False)
        object.__setattr__(self, "edge", tuple(int(x) for x in self.edge))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "norm", float(np.linalg.norm(m, 2)))


@dataclass(frozen=True)
class HamiltonianSpec:
    """A graph together with one local term per edge, in edge order."""

    graph: InteractionGraph
    terms: tuple

    def __post_init__(self):
        g = self.graph
        terms = tuple(t if isinstance(t, LocalTerm) else LocalTerm(e, t) for e, t in zip(g.edges, self.terms))
        if len(terms) != g.num_edges or len(self.terms) != g.num_edges:
            raise ValueError(f"{len(self.terms)} terms for {g.num_edges} edges")
        d2 = g.local_dim**2
        for e, t in zip(g.edges, terms):
            if t.edge != e:
                raise ValueError(f"term for {t.edge} placed at edge {e}")
            if t.matrix.shape != (d2, d2):
                raise ValueError(f"term on {e} has shape {t.matrix.shape}, expected {(d2, d2)}")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.graph.hilbert_dim

    @property
    def num_sites(self) -> int:
        return self.graph.num_sites

    @property
    def local_dim(self) -> int:
        return self.graph.local_dim

    def term(self, e) -> np.ndarray:
        return self.terms[self.graph.edge_index(e)].matrix

    def term_norm_sum(self) -> float:
        return math.fsum(t.norm for t in self.terms)

    def replace_terms(self, updates: Mapping) -> "HamiltonianSpec":
        """New spec with the terms on the given edges swapped out."""
        new = [t.matrix for t in self.terms]
        for e, m in updates.items():
            new[self.graph.edge_index(e)] = m
        return HamiltonianSpec(self.graph, tuple(new))

    def restricted(self, edges) -> "HamiltonianSpec":
        """Same graph, with every term outside ``edges`` set to zero."""
        keep = {tuple(sorted(e)) for e in edges}
        d2 = self.local_dim**2
        zero = np.zeros((d2, d2), dtype=complex)
        return HamiltonianSpec(self.graph, tuple(t.matrix if t.edge in keep else zero for t in self.terms))


def apply_term(matrix: np.ndarray, sites, x: np.ndarray, n: int, d: int) -> np.ndarray:
    """``(I (x) matrix (x) I) x`` without forming the full operator.

    ``x`` has shape ``(d**n,)`` or ``(d**n, k)``; the result has the same shape.
    """
    i, j = sites
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ValueError(f"sites {sites} invalid for {n} sites")
    x = np.asarray(x)
    extra = x.shape[1:]
    psi = np.moveaxis(x.reshape((d,) * n + extra), (i, j), (0, 1))
    shape = psi.shape
    out = (np.asarray(matrix) @ psi.reshape(d * d, -1)).reshape(shape)
    return np.moveaxis(out, (0, 1), (i, j)).reshape(x.shape)


def embed_term(term: LocalTerm, n: int, d: int):
    """Return a callable applying ``term`` embedded in the ``d**n`` space."""
    i, j = term.edge
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"term sites {term.edge} out of range for {n} sites")
    matrix = term.matrix
    return lambda x: apply_term(matrix, (i, j), x, n, d)


def matvec(spec: HamiltonianSpec, x: np.ndarray) -> np.ndarray:
    """``H x`` summed term by term in edge order."""
    x = np.asarray(x)
    if x.shape[0] != spec.dim:
        raise ValueError(f"vector length {x.shape[0]} != Hilbert dimension {spec.dim}")
    n, d = spec.num_sites, spec.local_dim
    y = np.zeros(x.shape, dtype=np.result_type(x, complex))
    for t in spec.terms:
        y += apply_term(t.matrix, t.edge, x, n, d)
    return y


def assemble_dense(spec: HamiltonianSpec, cap: int | None = None) -> np.ndarray:
    cap = dense_cap() if cap is None else cap
    if spec.dim > cap:
        raise ValueError(f"Hilbert dimension {spec.dim} exceeds dense cap {cap}")
    h = matvec(spec, np.eye(spec.dim, dtype=complex))
    return (h + h.conj().T) / 2.0


@dataclass(frozen=True)
class PauliChainParams:
    """Couplings ``J[alpha, beta, bond]`` of a spin-1/2 chain in the Pauli basis."""

    num_sites: int
    couplings: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        j = np.asarray(self.couplings, dtype=float)
        nb = self.num_bonds
        if j.shape != (4, 4, nb):
            raise ValueError(f"couplings must have shape (4, 4, {nb}), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "couplings", j)

    @property
    def num_bonds(self) -> int:
        return self.num_sites if (self.periodic and self.num_sites > 2) else self.num_sites - 1


def pauli_chain(params: PauliChainParams) -> HamiltonianSpec:
    g = chain(params.num_sites, params.periodic, d=2)
    terms = []
    for b, _ in enumerate(g.edges):
        m = np.zeros((4, 4), dtype=complex)
        for a in range(4):
            for c in range(4):
                coeff = params.couplings[a, c, b]
                if coeff:
                    m += coeff * np.kron(PAULI[a], PAULI[c])
        terms.append(m)
    return HamiltonianSpec(g, tuple(terms))


def random_pauli_params(num_sites: int, seed, periodic: bool = False, scale: float = 1.0) -> PauliChainParams:
    nb = num_sites if (periodic and num_sites > 2) else num_sites - 1
    rng = np.random.default_rng(seed)
    return PauliChainParams(num_sites, scale * rng.standard_normal((4, 4, nb)), periodic)


# -- random models ---------------------------------------------------------


@dataclass(frozen=True)
class GaussianModel:
    beta: int = 2

    def sample(self, dim, seed):
        return ensembles.sample_gaussian(ensembles.EnsembleParams(dim, self.beta, seed))


@dataclass(frozen=True)
class ProjectorModel:
    """Random projectors; ``ranks``/``probs`` describe the (possibly variable) rank law."""

    ranks: tuple = (2,)
    probs: tuple | None = None
    beta: int = 2

    def sample(self, dim, seed):
        rng = np.random.default_rng(seed)
        if len(self.ranks) == 1:
            rank = self.ranks[0]
        else:
            rank = int(rng.choice(np.asarray(self.ranks), p=self.probs))
        return ensembles.sample_projector(dim, int(rank), self.beta, rng)


@dataclass(frozen=True)
class DiscreteModel:
    law: DiscreteSpectrumLaw
    beta: int = 2

    def sample(self, dim, seed):
        return ensembles.sample_discrete_term(dim, self.law, self.beta, seed)


@dataclass(frozen=True)
class IdentityModel:
    value: float = 1.0

    def sample(self, dim, seed):
        return self.value * np.eye(dim, dtype=complex)


def edge_seed(seed: int, edge) -> np.random.SeedSequence:
    """Per-edge seed: ``SeedSequence([seed, i, j])`` with ``i < j``."""
    i, j = sorted(int(x) for x in edge)
    return np.random.SeedSequence([int(seed), i, j])


def random_spec(graph: InteractionGraph, model, seed: int) -> HamiltonianSpec:
    """Independent local terms drawn from ``model``, one per edge.

    Each edge's term depends only on ``(seed, edge)``, not on edge order.
    """
    dim = graph.local_dim**2
    terms = tuple(model.sample(dim, edge_seed(seed, e)) for e in graph.edges)
    return HamiltonianSpec(graph, terms)


# -- JSON interchange ------------------------------------------------------


def _matrix_to_pairs(m: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(m, dtype=complex).ravel()]


def _pairs_to_matrix(pairs: Sequence, dim: int) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape != (dim * dim, 2):
        raise ValueError(f"term has {arr.shape[0]} entries, expected {dim * dim} [re, im] pairs")
    out = np.empty(dim * dim, dtype=complex)
    # assign parts directly so signed zeros survive the round trip
    out.real, out.imag = arr[:, 0], arr[:, 1]
    return out.reshape(dim, dim)


def spec_to_dict(spec: HamiltonianSpec) -> dict:
    return {
        "d": spec.local_dim,
        "sites": spec.num_sites,
        "edges": [list(e) for e in spec.graph.edges],
        "terms": [_matrix_to_pairs(t.matrix) for t in spec.terms],
    }


def spec_from_dict(data: Mapping, degree_cap: int | None = None) -> HamiltonianSpec:
    try:
        d, sites, edges, terms = int(data["d"]), int(data["sites"]), data["edges"], data["terms"]
    except KeyError as exc:
        raise ValueError(f"spec is missing key {exc}") from None
    kwargs = {} if degree_cap is None else {"degree_cap": degree_cap}
    g = InteractionGraph(sites, d, tuple(tuple(e) for e in edges), **kwargs)
    if len(terms) != len(edges):
        raise ValueError(f"{len(terms)} terms for {len(edges)} edges")
    # input edges may be listed as (j, i); the term matrix is then given in (j, i) order
    mats = []
    for e, t in zip(edges, terms):
        m = _pairs_to_matrix(t, d * d)
        if int(e[0]) > int(e[1]):
            m = m.reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d)
        mats.append(m)
    return HamiltonianSpec(g, tuple(mats))


def save_spec(spec: HamiltonianSpec, path, extra: Mapping | None = None) -> None:
    data = spec_to_dict(spec)
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def load_spec(path) -> HamiltonianSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))
