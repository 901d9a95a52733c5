"""Interaction graphs and the edge-distance classification around a term."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

__all__ = [
    "DEFAULT_DEGREE_CAP",
    "InteractionGraph",
    "chain",
    "square_lattice",
    "edge_neighborhood",
    "vertex_star",
    "closed_neighborhood",
]

DEFAULT_DEGREE_CAP = 12


def _norm_edge(e) -> tuple[int, int]:
    i, j = (int(x) for x in e)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class InteractionGraph:
    """Sites of uniform local dimension ``local_dim`` joined by two-site edges.

    Edges are stored as sorted ``(i, j)`` pairs in the order given; the term
    list of a Hamiltonian is aligned with this order.
    """

    num_sites: int
    local_dim: int
    edges: tuple
    degree_cap: int = DEFAULT_DEGREE_CAP
    max_degree: int = field(init=False)

    def __post_init__(self):
        if self.num_sites < 1:
            raise ValueError("graph needs at least one site")
        if self.local_dim < 2:
            raise ValueError("local dimension must be at least 2")
        edges = tuple(_norm_edge(e) for e in self.edges)
        seen = set()
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at site {i}")
            if i < 0 or j >= self.num_sites:
                raise ValueError(f"edge {(i, j)} out of range for {self.num_sites} sites")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge {(i, j)}")
            seen.add((i, j))
        object.__setattr__(self, "edges", edges)
        deg = self.degrees()
        max_degree = max(deg) if deg else 0
        if max_degree > self.degree_cap:
            raise ValueError(f"max degree {max_degree} exceeds cap {self.degree_cap}")
        object.__setattr__(self, "max_degree", max_degree)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def hilbert_dim(self) -> int:
        return self.local_dim**self.num_sites

    def degrees(self) -> list[int]:
        deg = [0] * self.num_sites
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def degree(self, v: int) -> int:
        return self.degrees()[v]

    def edge_index(self, e) -> int:
        e = _norm_edge(e)
        try:
            return self.edges.index(e)
        except ValueError:
            raise KeyError(f"edge {e} not in graph") from None

    def has_edge(self, e) -> bool:
        return _norm_edge(e) in self.edges

    def to_dict(self) -> dict:
        return {"sites": self.num_sites, "d": self.local_dim, "edges": [list(e) for e in self.edges]}


def chain(num_sites: int, periodic: bool = False, d: int = 2) -> InteractionGraph:
    """Open chain with ``num_sites - 1`` bonds, or a ring with ``num_sites``."""
    if num_sites < 2:
        raise ValueError("a chain needs at least two sites")
    edges = [(i, i + 1) for i in range(num_sites - 1)]
    if periodic and num_sites > 2:
        edges.append((0, num_sites - 1))
    return InteractionGraph(num_sites, d, tuple(edges))


def square_lattice(dim: int, side, periodic: bool = False, d: int = 2) -> InteractionGraph:
    """Nearest-neighbour hypercubic lattice; sites numbered in row-major order.

    ``side`` is either one length for all axes or a tuple of per-axis lengths.
    Periodic axes of length 2 contribute a single bond per pair.
    """
    if dim < 1:
        raise ValueError("spatial dimension must be at least 1")
    sides = (side,) * dim if isinstance(side, int) else tuple(side)
    if len(sides) != dim or any(s < 2 for s in sides):
        raise ValueError(f"need {dim} side lengths each >= 2, got {sides}")
    strides = [1] * dim
    for ax in range(dim - 2, -1, -1):
        strides[ax] = strides[ax + 1] * sides[ax + 1]
    num_sites = strides[0] * sides[0]
    edges = []
    seen = set()
    for coord in itertools.product(*(range(s) for s in sides)):
        site = sum(c * st for c, st in zip(coord, strides))
        for ax in range(dim):
            c = coord[ax] + 1
            if c == sides[ax]:
                if not periodic:
                    continue
                c = 0
            nb = site + (c - coord[ax]) * strides[ax]
            e = _norm_edge((site, nb))
            if e[0] != e[1] and e not in seen:
                seen.add(e)
                edges.append(e)
    return InteractionGraph(num_sites, d, tuple(edges))


def edge_neighborhood(g: InteractionGraph, e) -> tuple[list, list]:
    """Split the other edges into those sharing a site with ``e`` and the rest."""
    e = _norm_edge(e)
    if not g.has_edge(e):
        raise KeyError(f"edge {e} not in graph")
    near, far = [], []
    for f in g.edges:
        if f == e:
            continue
        (near if (f[0] in e or f[1] in e) else far).append(f)
    return near, far


def closed_neighborhood(g: InteractionGraph, e) -> set:
    near, _ = edge_neighborhood(g, e)
    return {_norm_edge(e), *near}


def vertex_star(g: InteractionGraph, v: int) -> list:
    """All edges incident on site ``v``."""
    if not 0 <= v < g.num_sites:
        raise KeyError(f"site {v} not in graph")
    return [f for f in g.edges if v in f]
