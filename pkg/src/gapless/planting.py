"""Planted rare regions and the Weyl certificates that go with them.

Every planter returns a modified spec together with a :class:`PlantRecord`
holding the unperturbed reference term for each edge it touched. The
certificates re-derive the perturbation from those references, so a
region that violates its declared ``eps`` fails even when its spectrum
happens to land inside the bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .ensembles import DiscreteSpectrumLaw, random_hermitian_with_norm, sample_haar_eigenvectors
from .hamiltonian import HamiltonianSpec, _matrix_to_pairs, _pairs_to_matrix, dense_cap
from .spectra import dense_spectrum, lowest_eigenvalues, operator_norm
from .topology import closed_neighborhood, edge_neighborhood, vertex_star

__all__ = [
    "PlantRecord",
    "CertificateReport",
    "CERTIFICATE_COLUMNS",
    "plant_continuous_region",
    "certificate_continuous",
    "plant_projector_region",
    "certificate_projector",
    "certificate_discrete",
    "plant_discrete_region",
    "plant_dos_ladder",
    "ladder_targets",
    "certify",
    "environment_ground_energy",
]

KINDS = ("continuous_edge", "projector_vertex", "discrete_edge", "dos_ladder")

# relative slack for floating-point comparisons in certificates
_REL_SLACK = 1e-10


def _edge_key(e) -> str:
    return f"{e[0]},{e[1]}"


def _parse_edge_key(s: str) -> tuple:
    a, b = s.split(",")
    return int(a), int(b)


@dataclass
class PlantRecord:
    kind: str
    location: tuple
    s: float = 0.0
    eps: float = 0.0
    z: int = 0
    beta_shifts: dict = field(default_factory=dict)
    k_or_h: int | None = None
    lambda_atoms: tuple | None = None
    local_lowest: float | None = None
    reference_terms: dict = field(default_factory=dict)
    perturbation_norms: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plant kind {self.kind!r}")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["location"] = list(self.location)
        d["beta_shifts"] = {_edge_key(e): v for e, v in self.beta_shifts.items()}
        d["perturbation_norms"] = {_edge_key(e): v for e, v in self.perturbation_norms.items()}
        d["reference_terms"] = {_edge_key(e): _matrix_to_pairs(m) for e, m in self.reference_terms.items()}
        if self.lambda_atoms is not None:
            d["lambda_atoms"] = list(self.lambda_atoms)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlantRecord":
        refs = {}
        for key, pairs in d.get("reference_terms", {}).items():
            dim = int(round(math.sqrt(len(pairs))))
            refs[_parse_edge_key(key)] = _pairs_to_matrix(pairs, dim)
        atoms = d.get("lambda_atoms")
        return cls(
            kind=d["kind"],
            location=tuple(d["location"]),
            s=float(d.get("s", 0.0)),
            eps=float(d.get("eps", 0.0)),
            z=int(d.get("z", 0)),
            beta_shifts={_parse_edge_key(k): float(v) for k, v in d.get("beta_shifts", {}).items()},
            k_or_h=d.get("k_or_h"),
            lambda_atoms=tuple(atoms) if atoms is not None else None,
            local_lowest=d.get("local_lowest"),
            reference_terms=refs,
            perturbation_norms={_parse_edge_key(k): float(v) for k, v in d.get("perturbation_norms", {}).items()},
        )


CERTIFICATE_COLUMNS = ("kind", "location", "eps", "z", "bound", "observed", "pass")


@dataclass
class CertificateReport:
    """Outcome of a certificate check.

    ``observed`` is the largest distance of a certified eigenvalue from its
    unperturbed target window; the check passes when it does not exceed
    ``bound`` and every touched term is within ``eps`` of its reference.
    """

    kind: str
    location: tuple
    eps: float
    z: int
    bound: float
    observed: float
    passed: bool
    hypothesis_ok: bool = True
    max_term_deviation: float = 0.0
    eigenvalues: tuple = ()
    target: float = 0.0

    def row(self) -> list:
        loc = "-".join(str(x) for x in self.location)
        return [self.kind, loc, self.eps, self.z, self.bound, self.observed, int(self.passed)]


def _rng(seed):
    return np.random.default_rng(seed)


def _term_deviations(spec: HamiltonianSpec, record: PlantRecord) -> dict:
    return {e: operator_norm(spec.term(e) - ref) for e, ref in record.reference_terms.items()}


def _hypothesis(spec, record):
    devs = _term_deviations(spec, record)
    worst = max(devs.values(), default=0.0)
    return worst <= record.eps * (1 + 1e-9) + 1e-12, worst


def environment_ground_energy(spec: HamiltonianSpec, edges) -> float:
    """Ground energy of the sum of terms on ``edges`` (zero when there are none)."""
    edges = list(edges)
    if not edges:
        return 0.0
    if spec.dim > dense_cap():
        raise ValueError(f"environment spectrum needs dimension {spec.dim} > dense cap {dense_cap()}")
    return float(dense_spectrum(spec.restricted(edges)).eigenvalues[0])


def plant_continuous_region(
    spec: HamiltonianSpec,
    edge,
    s: float,
    eps: float,
    env_gap_floor: float = 0.5,
    seed=0,
    beta_range: tuple = (-1.0, 1.0),
) -> tuple[HamiltonianSpec, PlantRecord]:
    """Decouple ``edge`` behind identity-like neighbours with a local splitting ``s``.

    The planted term ``H0`` keeps the lowest eigenvalue of the original term,
    puts the second one exactly ``s`` above it and the rest at least
    ``env_gap_floor`` above it, with Haar eigenvectors. Each neighbouring term
    becomes ``beta_ij * I``. With ``eps > 0`` every touched term receives a
    Hermitian perturbation of operator norm exactly ``eps``.
    """
    edge = tuple(sorted(int(x) for x in edge))
    if not spec.graph.has_edge(edge):
        raise KeyError(f"edge {edge} not in graph")
    if eps < 0 or s < 0:
        raise ValueError("s and eps must be non-negative")
    if s >= env_gap_floor:
        raise ValueError("env_gap_floor must exceed the planted splitting s")
    rng = _rng(seed)
    d2 = spec.local_dim**2
    near, _ = edge_neighborhood(spec.graph, edge)

    lowest = float(np.linalg.eigvalsh(spec.term(edge))[0])
    levels = np.empty(d2)
    levels[0] = lowest
    if d2 > 1:
        levels[1] = lowest + s
    levels[2:] = lowest + env_gap_floor + np.sort(rng.uniform(0.0, 1.0, d2 - 2))
    u = sample_haar_eigenvectors(d2, 2, rng)
    h0 = (u * levels) @ u.conj().T
    h0 = (h0 + h0.conj().T) / 2.0

    refs, updates, norms, shifts = {edge: h0}, {}, {}, {}
    for e in near:
        shifts[e] = float(rng.uniform(*beta_range))
        refs[e] = shifts[e] * np.eye(d2, dtype=complex)
    for e, ref in refs.items():
        dh = random_hermitian_with_norm(d2, eps, rng)
        updates[e] = ref + dh
        norms[e] = operator_norm(dh)
    record = PlantRecord(
        kind="continuous_edge",
        location=edge,
        s=float(s),
        eps=float(eps),
        z=len(near),
        beta_shifts=shifts,
        local_lowest=lowest,
        reference_terms=refs,
        perturbation_norms=norms,
    )
    return spec.replace_terms(updates), record


def _window_excess(values, lo, hi) -> float:
    return max(max(lo - v, v - hi) for v in values)


def certificate_continuous(spec: HamiltonianSpec, record: PlantRecord, spectrum=None) -> CertificateReport:
    """Both lowest eigenvalues must lie in ``[c - B, c + s + B]``.

    ``c = lambda_E + sum(beta_ij) + lambda_0`` with ``lambda_E`` the exact ground
    energy of the terms at distance >= 2 and ``B = eps * (z + 1)``.
    """
    if record.kind not in ("continuous_edge", "dos_ladder"):
        raise ValueError(f"record kind {record.kind} is not a continuous plant")
    edge = tuple(record.location)
    _, far = edge_neighborhood(spec.graph, edge)
    lam_e = environment_ground_energy(spec, far)
    center = lam_e + math.fsum(record.beta_shifts.values()) + record.local_lowest
    bound = record.eps * (record.z + 1)
    if spectrum is None:
        low = lowest_eigenvalues(spec, 2)
    else:
        low = np.asarray(getattr(spectrum, "eigenvalues", spectrum))[:2]
    ok_h, worst = _hypothesis(spec, record)
    observed = _window_excess(low, center, center + record.s)
    slack = _REL_SLACK * max(1.0, abs(center), spec.term_norm_sum())
    passed = ok_h and observed <= bound + slack
    return CertificateReport(
        record.kind, edge, record.eps, record.z, bound, observed, passed, ok_h, worst, tuple(map(float, low)), center
    )


def plant_projector_region(spec: HamiltonianSpec, vertex: int, h: int = 1, eps: float = 0.0, seed=0):
    """Make every term touching ``vertex`` act trivially on it.

    Each edge in the star of ``vertex`` gets ``pi (x) I_vertex`` (site order
    respected), where ``pi = diag(0,...,0,1,...,1)`` has an ``h``-dimensional
    kernel, plus a perturbation of norm ``eps``.
    """
    d = spec.local_dim
    if not 1 <= h <= d - 1:
        raise ValueError(f"h must lie in [1, {d - 1}], got {h}")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    star = vertex_star(spec.graph, vertex)
    rng = _rng(seed)
    pi = np.diag([0.0] * h + [1.0] * (d - h)).astype(complex)
    ident = np.eye(d, dtype=complex)
    refs, updates, norms = {}, {}, {}
    for e in star:
        ref = np.kron(pi, ident) if e[1] == vertex else np.kron(ident, pi)
        dh = random_hermitian_with_norm(d * d, eps, rng)
        refs[e] = ref
        updates[e] = ref + dh
        norms[e] = operator_norm(dh)
    record = PlantRecord(
        kind="projector_vertex",
        location=(int(vertex),),
        eps=float(eps),
        z=len(star),
        k_or_h=int(h),
        reference_terms=refs,
        perturbation_norms=norms,
    )
    return spec.replace_terms(updates), record


def certificate_projector(spec: HamiltonianSpec, record: PlantRecord, spectrum=None) -> CertificateReport:
    """The ``d`` lowest eigenvalues must sit within ``z * eps`` of the unperturbed ground energy."""
    if record.kind != "projector_vertex":
        raise ValueError(f"record kind {record.kind} is not a projector plant")
    if not record.reference_terms:
        raise ValueError("record carries no unperturbed reference terms")
    d = spec.local_dim
    companion = spec.replace_terms(record.reference_terms)
    lam_e0 = float(lowest_eigenvalues(companion, 1)[0])
    if spectrum is None:
        low = lowest_eigenvalues(spec, d)
    else:
        low = np.asarray(getattr(spectrum, "eigenvalues", spectrum))[:d]
    ok_h, worst = _hypothesis(spec, record)
    bound = record.z * record.eps
    observed = float(np.max(np.abs(low - lam_e0)))
    slack = _REL_SLACK * max(1.0, abs(lam_e0), spec.term_norm_sum())
    passed = ok_h and observed <= bound + slack
    return CertificateReport(
        record.kind, record.location, record.eps, record.z, bound, observed, passed, ok_h, worst,
        tuple(map(float, low)), lam_e0,
    )


def plant_discrete_region(spec: HamiltonianSpec, edge, k: int, law: DiscreteSpectrumLaw, seed=0):
    """Exactly ``k``-fold degenerate lowest level on ``edge``, identity-multiple neighbours.

    The planted term's lowest eigenvalue is the smallest atom of ``law``; its
    other ``d^2 - k`` eigenvalues are drawn from the remaining atoms. Each
    neighbour becomes ``atom * I`` with the atom drawn from ``law``.
    """
    edge = tuple(sorted(int(x) for x in edge))
    if not spec.graph.has_edge(edge):
        raise KeyError(f"edge {edge} not in graph")
    d2 = spec.local_dim**2
    if not 1 <= k <= d2:
        raise ValueError(f"k must lie in [1, {d2}], got {k}")
    atoms, probs = np.asarray(law.atoms), np.asarray(law.probs)
    if np.any(np.diff(atoms) <= 0):
        raise ValueError("law atoms must be distinct")
    if k < d2 and atoms.size < 2:
        raise ValueError("need at least two atoms to plant a degeneracy below d^2")
    rng = _rng(seed)
    upper = probs[1:] / probs[1:].sum() if k < d2 else None
    levels = np.full(d2, atoms[0])
    if k < d2:
        levels[k:] = np.sort(rng.choice(atoms[1:], size=d2 - k, p=upper))
    u = sample_haar_eigenvectors(d2, 2, rng)
    h0 = (u * levels) @ u.conj().T
    refs = {edge: (h0 + h0.conj().T) / 2.0}
    near, _ = edge_neighborhood(spec.graph, edge)
    shifts = {}
    for e in near:
        shifts[e] = float(rng.choice(atoms, p=probs))
        refs[e] = shifts[e] * np.eye(d2, dtype=complex)
    record = PlantRecord(
        kind="discrete_edge",
        location=edge,
        z=len(near),
        beta_shifts=shifts,
        k_or_h=int(k),
        lambda_atoms=tuple(float(a) for a in atoms),
        local_lowest=float(atoms[0]),
        reference_terms=refs,
        perturbation_norms={e: 0.0 for e in refs},
    )
    return spec.replace_terms(refs), record


def certificate_discrete(spec: HamiltonianSpec, record: PlantRecord, spectrum=None) -> CertificateReport:
    """The ``k`` lowest eigenvalues must coincide with ``lambda_E + sum(atoms_ij) + lowest atom``."""
    if record.kind != "discrete_edge":
        raise ValueError(f"record kind {record.kind} is not a discrete plant")
    edge = tuple(record.location)
    _, far = edge_neighborhood(spec.graph, edge)
    center = environment_ground_energy(spec, far) + math.fsum(record.beta_shifts.values()) + record.local_lowest
    k = int(record.k_or_h)
    if spectrum is None:
        low = lowest_eigenvalues(spec, k)
    else:
        low = np.asarray(getattr(spectrum, "eigenvalues", spectrum))[:k]
    ok_h, worst = _hypothesis(spec, record)
    observed = float(np.max(np.abs(low - center)))
    slack = _REL_SLACK * max(1.0, abs(center), spec.term_norm_sum())
    return CertificateReport(
        record.kind, edge, record.eps, record.z, 0.0, observed, ok_h and observed <= slack, ok_h, worst,
        tuple(map(float, low)), center,
    )


def plant_dos_ladder(
    spec: HamiltonianSpec,
    edges: Sequence,
    s_values: Sequence[float],
    eps: float = 0.0,
    seed=0,
    env_gap_floor: float = 0.5,
    c: float = 0.1,
):
    """Several continuous plants with splittings ``s_values`` on non-overlapping edges."""
    edges = [tuple(sorted(int(x) for x in e)) for e in edges]
    if len(edges) != len(s_values):
        raise ValueError("need one splitting per planted edge")
    for s in s_values:
        if not 0 <= s <= c:
            raise ValueError(f"splitting {s} outside [0, {c}]")
    hoods = [closed_neighborhood(spec.graph, e) for e in edges]
    for a in range(len(edges)):
        for b in range(a + 1, len(edges)):
            if hoods[a] & hoods[b]:
                raise ValueError(f"planted edges {edges[a]} and {edges[b]} have overlapping neighbourhoods")
    records = []
    for idx, (e, s) in enumerate(zip(edges, s_values)):
        sub = np.random.SeedSequence([int(seed), idx]) if isinstance(seed, int) else seed
        spec, rec = plant_continuous_region(spec, e, s, eps, env_gap_floor, sub)
        rec.kind = "dos_ladder"
        records.append(rec)
    return spec, records


def ladder_targets(spec: HamiltonianSpec, records: Sequence[PlantRecord]) -> list[tuple[float, float]]:
    """``(target, bound)`` per rung: an eigenvalue must lie within ``bound`` of ``target``."""
    out = []
    for rec in records:
        _, far = edge_neighborhood(spec.graph, rec.location)
        lam_e = environment_ground_energy(spec, far)
        center = lam_e + math.fsum(rec.beta_shifts.values()) + rec.local_lowest
        out.append((center + rec.s, rec.eps * (rec.z + 1)))
    return out


def certify(spec: HamiltonianSpec, record: PlantRecord, spectrum=None) -> CertificateReport:
    """Dispatch to the certificate matching ``record.kind``."""
    if record.kind in ("continuous_edge", "dos_ladder"):
        return certificate_continuous(spec, record, spectrum)
    if record.kind == "projector_vertex":
        return certificate_projector(spec, record, spectrum)
    if record.kind == "discrete_edge":
        return certificate_discrete(spec, record, spectrum)
    raise ValueError(f"no certificate for kind {record.kind}")
