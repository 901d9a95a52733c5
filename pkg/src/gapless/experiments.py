"""Monte Carlo drivers, rare-region scans and gap sweeps.

Randomness is split into fixed-size chunks of trials. Chunk ``c`` of a run
with master seed ``s`` draws from ``SeedSequence([s, c])`` (sweeps use
``[s, size_index, trial]``), and chunk results are combined by integer
counts in chunk order, so output does not depend on the number of workers.
All points of an ``eps`` grid are evaluated on the same samples.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .ensembles import (
    DiscreteSpectrumLaw,
    check_beta,
    dist_to_identity_multiple,
    dist_to_identity_multiple_batch,
    sample_gaussian_batch,
)
from .hamiltonian import (
    DiscreteModel,
    GaussianModel,
    HamiltonianSpec,
    IdentityModel,
    ProjectorModel,
    dense_cap,
    random_spec,
)
from .spectra import NoExcitedLevelError, dense_spectrum, gap, lanczos_lowest
from .topology import chain, edge_neighborhood

__all__ = [
    "McResult",
    "DEFAULT_CHUNK",
    "MC_COLUMNS",
    "SLOPE_COLUMNS",
    "SWEEP_COLUMNS",
    "mc_near_identity_exponent",
    "mc_spacing_exponent",
    "predicted_exponents",
    "loglog_slope",
    "rare_region_scan",
    "RareRegionRow",
    "gap_scaling_exponent",
    "expected_system_size",
    "ChainModel",
    "LadderModel",
    "SweepRow",
    "gap_vs_size_sweep",
    "sweep_summary",
]

DEFAULT_CHUNK = 1 << 15
MIN_EXPECTED_COUNT = 50

MC_COLUMNS = ("eps", "estimate", "stderr", "trials")
SLOPE_COLUMNS = ("slope", "ci_lo", "ci_hi", "paper_exponent", "dimension_count_exponent")
SWEEP_COLUMNS = ("N", "trial", "gap", "degeneracy", "converged")


@dataclass
class McResult:
    x_values: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    trials: int
    counts: np.ndarray
    seed: int
    slope: float | None = None
    slope_ci: tuple | None = None
    used_points: np.ndarray | None = None
    paper_exponent: int | None = None
    dimension_count_exponent: int | None = None

    def mc_rows(self) -> list:
        return [[float(e), float(p), float(s), int(self.trials)] for e, p, s in zip(self.x_values, self.estimates, self.stderr)]

    def slope_rows(self) -> list:
        if self.slope is None:
            return []
        return [[self.slope, self.slope_ci[0], self.slope_ci[1], self.paper_exponent, self.dimension_count_exponent]]


def _pmap(fn: Callable, tasks: Sequence, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _chunks(trials: int, chunk: int) -> list[tuple[int, int]]:
    return [(c, min(chunk, trials - c * chunk)) for c in range(math.ceil(trials / chunk))]


def _validate_grid(eps_grid) -> np.ndarray:
    grid = np.asarray(eps_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 4:
        raise ValueError("eps grid needs at least 4 points")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("eps grid must be strictly decreasing")
    if np.any(grid <= 0):
        raise ValueError("eps values must be positive")
    return grid


def _near_identity_chunk(task) -> np.ndarray:
    n, beta, grid, seed, c, size = task
    m = sample_gaussian_batch(n, beta, size, np.random.SeedSequence([seed, c]))
    dist = dist_to_identity_multiple_batch(m)
    return np.array([np.count_nonzero(dist <= e) for e in grid], dtype=np.int64)


def _spacing_chunk(task) -> np.ndarray:
    n, beta, grid, seed, c, size = task
    m = sample_gaussian_batch(n, beta, size, np.random.SeedSequence([seed, c]))
    ev = np.linalg.eigvalsh(m)
    spacing = ev[:, 1] - ev[:, 0]
    return np.array([np.count_nonzero(spacing <= e) for e in grid], dtype=np.int64)


def predicted_exponents(n: int, beta: int) -> tuple[int, int]:
    """``(n**2, real dimension of the traceless part of the matrix space)``."""
    beta = check_beta(beta)
    if n < 1:
        raise ValueError("n must be positive")
    traceless = n * n - 1 if beta == 2 else n * (n + 1) // 2 - 1
    return n * n, traceless


def loglog_slope(x, p, trials: int, n_sigma: float = 3.0):
    """Weighted least-squares slope of ``log p`` against ``log x``.

    Weights are inverse binomial variances of ``log p``,
    ``p * trials / (1 - p)``. Returns ``(slope, (lo, hi), intercept)`` with an
    ``n_sigma`` confidence interval.
    """
    x, p = np.asarray(x, float), np.asarray(p, float)
    if x.size < 4:
        raise ValueError("need at least 4 points for a slope")
    var = np.maximum((1.0 - p) / (p * trials), 1.0 / float(trials) ** 2)
    w = 1.0 / var
    lx, ly = np.log(x), np.log(p)
    xm = np.sum(w * lx) / np.sum(w)
    ym = np.sum(w * ly) / np.sum(w)
    sxx = np.sum(w * (lx - xm) ** 2)
    slope = float(np.sum(w * (lx - xm) * (ly - ym)) / sxx)
    se = math.sqrt(1.0 / sxx)
    return slope, (slope - n_sigma * se, slope + n_sigma * se), float(ym - slope * xm)


def _run_mc(kernel, n, beta, eps_grid, trials, seed, workers, chunk) -> McResult:
    beta = check_beta(beta)
    grid = _validate_grid(eps_grid)
    if trials < 1:
        raise ValueError("trials must be positive")
    tasks = [(n, beta, grid, int(seed), c, size) for c, size in _chunks(trials, chunk)]
    counts = np.zeros(grid.size, dtype=np.int64)
    for part in _pmap(kernel, tasks, workers):
        counts += part
    p = counts / trials
    stderr = np.sqrt(p * (1.0 - p) / trials)
    res = McResult(grid, p, stderr, trials, counts, int(seed))
    low = counts < MIN_EXPECTED_COUNT
    if np.any(low & (counts > 0)):
        warnings.warn(f"fewer than {MIN_EXPECTED_COUNT} successes at eps={grid[low & (counts > 0)].tolist()}", stacklevel=3)
    keep = counts > 0
    if np.any(~keep):
        warnings.warn(f"no successes at eps={grid[~keep].tolist()}; points dropped from the fit", stacklevel=3)
    res.used_points = keep
    if np.count_nonzero(keep) >= 4:
        res.slope, res.slope_ci, _ = loglog_slope(grid[keep], p[keep], trials)
    res.paper_exponent, res.dimension_count_exponent = predicted_exponents(n, beta)
    return res


def mc_near_identity_exponent(n, beta, eps_grid, trials, seed, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> McResult:
    """Empirical ``P[min_a ||M - a I||_F <= eps]`` over a decreasing ``eps`` grid.

    The event is tested exactly through :func:`dist_to_identity_multiple`.
    """
    return _run_mc(_near_identity_chunk, n, beta, eps_grid, trials, seed, workers, chunk)


def mc_spacing_exponent(n, beta, eps_grid, trials, seed, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> McResult:
    """Empirical ``P[lambda_1 - lambda_0 <= eps]`` for the two smallest eigenvalues."""
    if n < 2:
        raise ValueError("spacing needs n >= 2")
    res = _run_mc(_spacing_chunk, n, beta, eps_grid, trials, seed, workers, chunk)
    res.paper_exponent = 4
    return res


# -- rare regions ------------------------------------------------------------


@dataclass(frozen=True)
class RareRegionRow:
    edge: tuple
    local_spacing: float
    max_neighbor_identity_distance: float
    flagged: bool


def rare_region_scan(spec: HamiltonianSpec, eps: float, tau: float = 1e-12) -> list[RareRegionRow]:
    """Per edge: spacing of the term's two lowest levels and the worst neighbour's
    distance from an identity multiple. Both within ``eps`` (plus ``tau``) flags the edge.
    """
    dist = {t.edge: dist_to_identity_multiple(t.matrix)[1] for t in spec.terms}
    rows = []
    for t in spec.terms:
        ev = np.linalg.eigvalsh(t.matrix)
        spacing = float(ev[1] - ev[0]) if ev.size > 1 else 0.0
        near, _ = edge_neighborhood(spec.graph, t.edge)
        worst = max((dist[e] for e in near), default=0.0)
        rows.append(RareRegionRow(t.edge, spacing, worst, spacing <= eps + tau and worst <= eps + tau))
    return rows


# -- scaling arithmetic ------------------------------------------------------


def gap_scaling_exponent(z: int, d: int) -> Fraction:
    """Exponent ``1 / (z d^4 + 4)`` in ``eps(N) ~ N^(-1/(z d^4 + 4))``."""
    if z < 1 or d < 2:
        raise ValueError("need z >= 1 and d >= 2")
    return Fraction(1, z * d**4 + 4)


def expected_system_size(eps: float, z: int, d: int) -> float:
    """``N ~ eps^-(z d^4 + 4)``, the number of terms at which a gap of order ``eps`` is expected."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if z < 1 or d < 2:
        raise ValueError("need z >= 1 and d >= 2")
    return float(eps ** -(z * d**4 + 4))


# -- gap versus size ---------------------------------------------------------


@dataclass(frozen=True)
class ChainModel:
    """Open chains of random terms: ``family`` is gaussian, projector, discrete or identity."""

    family: str = "gaussian"
    d: int = 2
    beta: int = 2
    rank: int = 2
    atoms: tuple = (0.0, 1.0)

    def term_model(self):
        if self.family == "gaussian":
            return GaussianModel(self.beta)
        if self.family == "projector":
            return ProjectorModel((self.rank,), None, self.beta)
        if self.family == "discrete":
            return DiscreteModel(DiscreteSpectrumLaw.uniform(self.atoms), self.beta)
        if self.family == "identity":
            return IdentityModel(1.0)
        raise ValueError(f"unknown model family {self.family!r}")

    def build(self, num_sites: int, seed):
        return random_spec(chain(num_sites, False, self.d), self.term_model(), seed), None


@dataclass(frozen=True)
class LadderModel:
    """Gaussian chains carrying continuous plants every third bond.

    ``build`` also returns the upper bound ``min(s) + 2 eps (z + 1)`` on the gap.
    """

    s_values: tuple = (0.01, 0.02, 0.03)
    eps: float = 0.0
    d: int = 2
    beta: int = 2
    env_gap_floor: float = 0.5

    def build(self, num_sites: int, seed):
        from .planting import plant_dos_ladder

        base_seed, plant_seed = np.random.SeedSequence(seed).spawn(2)
        g = chain(num_sites, False, self.d)
        spec = random_spec(g, GaussianModel(self.beta), int(base_seed.generate_state(1)[0]))
        edges = [g.edges[i] for i in range(1, g.num_edges, 3)][: len(self.s_values)]
        if not edges:
            edges = [g.edges[0]]
        s_vals = list(self.s_values)[: len(edges)]
        spec, recs = plant_dos_ladder(spec, edges, s_vals, self.eps, plant_seed, self.env_gap_floor, c=max(s_vals))
        bound = min(s_vals) + max(2 * r.eps * (r.z + 1) for r in recs)
        return spec, bound


@dataclass
class SweepRow:
    N: int
    trial: int
    gap: float
    degeneracy: int
    converged: bool
    sites: int = 0
    bound: float | None = None
    error: str | None = None

    def row(self) -> list:
        return [self.N, self.trial, self.gap, self.degeneracy, self.converged]


def _sweep_task(task) -> SweepRow:
    model, idx, n, trial, seed, tau = task
    inst_seed = int(np.random.SeedSequence([int(seed), idx, trial]).generate_state(1, np.uint64)[0])
    try:
        spec, bound = model.build(n, inst_seed)
        if spec.dim <= dense_cap():
            sp = dense_spectrum(spec)
            converged = True
        else:
            sp = lanczos_lowest(spec, k=8, seed=inst_seed)
            converged = sp.converged
        try:
            rep = gap(sp.eigenvalues, tau)
            return SweepRow(spec.graph.num_edges, trial, rep.gap, rep.ground_degeneracy, converged, n, bound)
        except NoExcitedLevelError:
            return SweepRow(spec.graph.num_edges, trial, float("nan"), len(sp), converged, n, bound, "no excited level")
    except Exception as exc:  # recorded per row, the sweep continues
        return SweepRow(max(n - 1, 0), trial, float("nan"), 0, False, n, None, repr(exc))


def gap_vs_size_sweep(model, size_grid, trials: int, tau: float | None, seed: int, workers: int = 1) -> list[SweepRow]:
    """Gap and ground degeneracy for ``trials`` chains at each size in ``size_grid``.

    ``N`` in each row is the number of local terms.
    """
    tasks = [(model, i, int(n), t, int(seed), tau) for i, n in enumerate(size_grid) for t in range(trials)]
    return _pmap(_sweep_task, tasks, workers)


def sweep_summary(rows: Sequence[SweepRow]) -> list[dict]:
    """Median and 10/90 % quantiles of the finite gaps at each ``N``."""
    out = []
    for n in sorted({r.N for r in rows}):
        gaps = np.array([r.gap for r in rows if r.N == n and math.isfinite(r.gap)])
        total = sum(1 for r in rows if r.N == n)
        if gaps.size:
            q10, med, q90 = np.quantile(gaps, [0.1, 0.5, 0.9])
        else:
            q10 = med = q90 = float("nan")
        out.append({"N": n, "count": total, "with_gap": int(gaps.size), "q10": float(q10), "median": float(med), "q90": float(q90)})
    return out
