"""Command-line entry point.

Every subcommand reads and writes files in the formats of the library
modules: HamiltonianSpec JSON for specs (plant records ride along under
``plant_records``), CSV for spectra, gaps, certificates, scans, Monte Carlo
estimates and sweeps. CSV files start with ``#`` header lines echoing the
tool version, subcommand, effective configuration and seed; JSON files carry
the same information under ``meta``.

Configuration precedence: command-line flags, then the ``--config`` TOML
file, then built-in defaults. In the TOML file top-level keys apply to every
command and tables such as ``[plant.continuous]`` to one subcommand; keys
are flag names with dashes replaced by underscores.

Exit codes: 0 success, 1 invalid input, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from . import ensembles, experiments, hamiltonian, planting, spectra, topology
from .io import csv_text, header_lines, read_csv_rows

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

# settings that change how a run executes but not what it computes; kept out
# of output headers so files are identical across worker counts and paths
_EXECUTION_KEYS = {"workers", "out", "slope_out", "summary_out", "config", "cmd", "sub", "func", "dense_cap"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- argument helpers --------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _edge(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        vals = [int(x) for x in text]
    else:
        vals = _int_list(text)
    if len(vals) != 2:
        raise UsageError(f"edge must be two site indices 'i,j', got {text!r}")
    return vals[0], vals[1]


def _edges(text) -> list[tuple[int, int]]:
    if isinstance(text, (list, tuple)):
        return [_edge(e) for e in text]
    return [_edge(part) for part in str(text).split(";") if part.strip()]


def _resolve_seed(args, required: bool = True):
    raw = getattr(args, "seed", None)
    if raw is None:
        if required:
            raise UsageError("--seed is required (an integer, or 'random')")
        return None
    if str(raw) == "random":
        seed = secrets.randbits(63)
        print(f"seed: {seed}", file=sys.stderr)
    else:
        try:
            seed = int(raw)
        except ValueError:
            raise UsageError(f"--seed must be an integer or 'random', got {raw!r}") from None
        if seed < 0:
            raise UsageError("--seed must be non-negative")
    args.seed = seed
    return seed


def _config_echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in _EXECUTION_KEYS or callable(v):
            continue
        out[k] = v
    return out


def _subcommand(args) -> str:
    return " ".join(x for x in (args.cmd, getattr(args, "sub", None)) if x)


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _write_csv(args, columns, rows, path=None, extra_header=()):
    head = header_lines(_subcommand(args), _config_echo(args), getattr(args, "seed", None))
    text = csv_text(columns, rows, list(head) + list(extra_header))
    with _output(path if path is not None else args.out) as fh:
        fh.write(text)


def _meta(args) -> dict:
    return {
        "tool": f"gapless {__version__}",
        "subcommand": _subcommand(args),
        "config": _config_echo(args),
        "seed": getattr(args, "seed", None),
    }


def _write_spec(args, spec, records=()):
    extra = {"meta": _meta(args)}
    if records:
        extra["plant_records"] = [r.to_dict() for r in records]
    data = hamiltonian.spec_to_dict(spec)
    data.update(extra)
    with _output(args.out) as fh:
        json.dump(data, fh)
        fh.write("\n")


def _read_spec(path):
    if path in (None, ""):
        raise UsageError("--spec is required")
    if path == "-":
        data = json.load(sys.stdin)
    else:
        with open(path) as fh:
            data = json.load(fh)
    spec = hamiltonian.spec_from_dict(data)
    records = [planting.PlantRecord.from_dict(r) for r in data.get("plant_records", [])]
    return spec, records


def _graph(args) -> topology.InteractionGraph:
    kind = args.graph
    if kind in ("chain", "ring"):
        if args.sites is None:
            raise UsageError("--sites is required for chain graphs")
        return topology.chain(args.sites, kind == "ring", args.d)
    if kind == "lattice":
        side = _int_list(args.side)
        side = side[0] if len(side) == 1 else tuple(side)
        return topology.square_lattice(args.dim, side, args.periodic, args.d)
    raise UsageError(f"unknown graph kind {kind!r}")


def _law(args) -> ensembles.DiscreteSpectrumLaw:
    atoms = _float_list(args.atoms)
    if args.probs is None:
        return ensembles.DiscreteSpectrumLaw.uniform(atoms)
    return ensembles.DiscreteSpectrumLaw(tuple(atoms), tuple(_float_list(args.probs)))


def _term_model(args, default: str):
    name = args.model or default
    if name == "gaussian":
        return hamiltonian.GaussianModel(args.beta)
    if name == "projector":
        h = getattr(args, "h", None) or 1
        rank = args.rank if args.rank is not None else args.d * (args.d - h)
        return hamiltonian.ProjectorModel((rank,), None, args.beta)
    if name == "discrete":
        return hamiltonian.DiscreteModel(_law(args), args.beta)
    if name == "identity":
        return hamiltonian.IdentityModel(1.0)
    raise UsageError(f"unknown model {name!r}")


def _base_spec(args, default_model: str):
    if args.spec:
        return _read_spec(args.spec)
    seed = int(np.random.SeedSequence([args.seed, 0]).generate_state(1, np.uint64)[0])
    return hamiltonian.random_spec(_graph(args), _term_model(args, default_model), seed), []


def _plant_seed(args) -> np.random.SeedSequence:
    return np.random.SeedSequence([args.seed, 1])


# -- subcommand handlers -----------------------------------------------------


def cmd_ensemble_sample(args):
    seed = _resolve_seed(args)
    ss = np.random.SeedSequence(seed).spawn(args.count)
    mats = [ensembles.sample_gaussian(ensembles.EnsembleParams(args.n, args.beta, s)) for s in ss]
    data = {
        "n": args.n,
        "beta": args.beta,
        "matrices": [hamiltonian._matrix_to_pairs(m) for m in mats],
        "eigenvalues": [np.linalg.eigvalsh(m).tolist() for m in mats],
        "meta": _meta(args),
    }
    with _output(args.out) as fh:
        json.dump(data, fh)
        fh.write("\n")


def _mc(args, fn):
    seed = _resolve_seed(args)
    grid = _float_list(args.eps)
    res = fn(args.n, args.beta, grid, args.trials, seed, workers=args.workers, chunk=args.chunk)
    _write_csv(args, experiments.MC_COLUMNS, res.mc_rows())
    slope_path = args.slope_out
    if slope_path is None and args.out not in (None, "-"):
        slope_path = os.path.splitext(args.out)[0] + ".slope.csv"
    if slope_path is None:
        sys.stdout.write("\n")
        slope_path = "-"
    _write_csv(args, experiments.SLOPE_COLUMNS, res.slope_rows(), path=slope_path)


def cmd_ensemble_mc_exponent(args):
    _mc(args, experiments.mc_near_identity_exponent)


def cmd_ensemble_mc_spacing(args):
    _mc(args, experiments.mc_spacing_exponent)


def cmd_ham_random(args):
    seed = _resolve_seed(args)
    spec = hamiltonian.random_spec(_graph(args), _term_model(args, "gaussian"), seed)
    _write_spec(args, spec)


def cmd_ham_pauli_chain(args):
    nb = args.sites if (args.periodic and args.sites > 2) else args.sites - 1
    if args.only:
        j = np.zeros((4, 4, nb))
        for item in args.only:
            key, _, val = item.partition("=")
            if len(key) != 3 or key[0] != "J" or not key[1:].isdigit() or not val:
                raise UsageError(f"--only expects entries like J33=1, got {item!r}")
            a, b = int(key[1]), int(key[2])
            if a > 3 or b > 3:
                raise UsageError(f"Pauli indices must be 0..3, got {key}")
            j[a, b, :] = float(val)
        params = hamiltonian.PauliChainParams(args.sites, j, args.periodic)
    else:
        seed = _resolve_seed(args)
        params = hamiltonian.random_pauli_params(args.sites, seed, args.periodic, args.scale)
    _write_spec(args, hamiltonian.pauli_chain(params))


def _compute_spectrum(args, spec):
    if args.method == "dense":
        return spectra.dense_spectrum(spec)
    seed = _resolve_seed(args)
    sp = spectra.lanczos_lowest(spec, k=args.k, max_iter=args.max_iter, tol=args.tol, seed=seed)
    if not sp.converged:
        raise RuntimeError(f"Lanczos did not converge (residuals {sp.residuals.tolist()})")
    return sp


def cmd_spectrum(args):
    spec, _ = _read_spec(args.spec)
    sp = _compute_spectrum(args, spec)
    _write_csv(args, ("index", "eigenvalue"), [[i, float(v)] for i, v in enumerate(sp.eigenvalues)])


def cmd_gap(args):
    if args.spectrum:
        with open(args.spectrum) as fh:
            _, rows = read_csv_rows(fh)
        lam = np.array([float(r[1]) for r in rows])
    else:
        spec, _ = _read_spec(args.spec)
        lam = _compute_spectrum(args, spec).eigenvalues
    rep = spectra.gap(np.sort(lam), args.tau)
    _write_csv(args, ("lambda0", "lambda1", "gap", "degeneracy", "tau"), [list(rep)])


def cmd_plant(args):
    _resolve_seed(args)
    kind = args.sub
    if kind in ("continuous", "discrete") and args.edge is None:
        raise UsageError("--edge is required, e.g. --edge 3,4")
    if kind == "dos-ladder" and args.edges is None:
        raise UsageError("--edges is required, e.g. --edges '1,2;4,5'")
    if kind == "continuous":
        spec, recs = _base_spec(args, "gaussian")
        spec, rec = planting.plant_continuous_region(spec, _edge(args.edge), args.s, args.eps, args.env_gap_floor, _plant_seed(args))
        new = [rec]
    elif kind == "projector":
        spec, recs = _base_spec(args, "projector")
        spec, rec = planting.plant_projector_region(spec, args.vertex, args.h, args.eps, _plant_seed(args))
        new = [rec]
    elif kind == "discrete":
        spec, recs = _base_spec(args, "discrete")
        spec, rec = planting.plant_discrete_region(spec, _edge(args.edge), args.k, _law(args), _plant_seed(args))
        new = [rec]
    else:
        spec, recs = _base_spec(args, "gaussian")
        spec, new = planting.plant_dos_ladder(
            spec, _edges(args.edges), _float_list(args.s_values), args.eps, _plant_seed(args), args.env_gap_floor, args.c
        )
    _write_spec(args, spec, list(recs) + list(new))


def cmd_certify(args):
    spec, records = _read_spec(args.spec)
    if not records:
        raise UsageError("spec carries no plant_records to certify")
    sp = spectra.dense_spectrum(spec) if spec.dim <= hamiltonian.dense_cap() else None
    rows = [planting.certify(spec, r, sp).row() for r in records]
    _write_csv(args, planting.CERTIFICATE_COLUMNS, rows)


def cmd_scan_rare(args):
    spec, _ = _read_spec(args.spec)
    rows = experiments.rare_region_scan(spec, args.eps, args.tau)
    _write_csv(
        args,
        ("edge", "local_spacing", "max_neighbor_identity_distance", "flagged"),
        [[f"{r.edge[0]}-{r.edge[1]}", r.local_spacing, r.max_neighbor_identity_distance, r.flagged] for r in rows],
    )


def cmd_sweep_gap_vs_size(args):
    seed = _resolve_seed(args)
    if args.model == "ladder":
        model = experiments.LadderModel(tuple(_float_list(args.s_values)), args.eps, args.d, args.beta)
    else:
        atoms = tuple(_float_list(args.atoms))
        model = experiments.ChainModel(args.model, args.d, args.beta, args.rank or 2, atoms)
    rows = experiments.gap_vs_size_sweep(model, _int_list(args.sizes), args.trials, args.tau, seed, args.workers)
    _write_csv(args, experiments.SWEEP_COLUMNS, [r.row() for r in rows])
    summary = experiments.sweep_summary(rows)
    if args.summary_out:
        cols = ("N", "count", "with_gap", "q10", "median", "q90")
        _write_csv(args, cols, [[s[c] for c in cols] for s in summary], path=args.summary_out)
    failed = [r for r in rows if r.error and r.error != "no excited level"]
    for r in failed:
        print(f"warning: N={r.N} trial={r.trial}: {r.error}", file=sys.stderr)


def cmd_scaling_exponent(args):
    expo = experiments.gap_scaling_exponent(args.z, args.d)
    cols = ["z", "d", "exponent", "exponent_float"]
    row = [args.z, args.d, f"{expo.numerator}/{expo.denominator}", float(expo)]
    if args.eps is not None:
        cols.append("expected_terms")
        row.append(experiments.expected_system_size(args.eps, args.z, args.d))
    _write_csv(args, cols, [row])


# -- parser --------------------------------------------------------------------


def _add_graph_args(p):
    p.add_argument("--graph", choices=["chain", "ring", "lattice"], default="chain")
    p.add_argument("--sites", type=int)
    p.add_argument("--dim", type=int, default=2, help="lattice spatial dimension")
    p.add_argument("--side", default="2", help="lattice side length(s), e.g. 3 or 2,3")
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--d", type=int, default=2, help="local dimension")


def _add_model_args(p):
    p.add_argument("--model", choices=["gaussian", "projector", "discrete", "identity"])
    p.add_argument("--beta", type=int, default=2, choices=[1, 2])
    p.add_argument("--rank", type=int)
    p.add_argument("--atoms", default="0,1")
    p.add_argument("--probs")


def _add_common(p, seed=True):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    if seed:
        p.add_argument("--seed", help="integer master seed, or 'random'")


def build_parser():
    parser = _Parser(prog="gapless", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"gapless {__version__}")
    parser.add_argument("--dense-cap", type=int, help="override the dense solver dimension cap")
    top = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    leaves = {}

    ens = top.add_parser("ensemble").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    p = ens.add_parser("sample")
    _add_common(p)
    p.add_argument("--n", type=int, required=False, default=4)
    p.add_argument("--beta", type=int, default=2, choices=[1, 2])
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_ensemble_sample)
    leaves["ensemble sample"] = p
    for name, fn in (("mc-exponent", cmd_ensemble_mc_exponent), ("mc-spacing", cmd_ensemble_mc_spacing)):
        p = ens.add_parser(name)
        _add_common(p)
        p.add_argument("--n", type=int, default=2)
        p.add_argument("--beta", type=int, default=2, choices=[1, 2])
        p.add_argument("--eps", default="0.5,0.35,0.25,0.18", help="strictly decreasing comma-separated grid")
        p.add_argument("--trials", type=int, default=100000)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--chunk", type=int, default=experiments.DEFAULT_CHUNK)
        p.add_argument("--slope-out", help="path of the slope summary CSV")
        p.set_defaults(func=fn)
        leaves[f"ensemble {name}"] = p

    ham = top.add_parser("ham").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    p = ham.add_parser("random")
    _add_common(p)
    _add_graph_args(p)
    _add_model_args(p)
    p.set_defaults(func=cmd_ham_random)
    leaves["ham random"] = p
    p = ham.add_parser("pauli-chain")
    _add_common(p)
    p.add_argument("--sites", type=int, required=False, default=2)
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--only", action="append", help="set one coupling on every bond, e.g. J33=1 (repeatable)")
    p.add_argument("--scale", type=float, default=1.0, help="std. dev. of random couplings")
    p.set_defaults(func=cmd_ham_pauli_chain)
    leaves["ham pauli-chain"] = p

    for name, fn in (("spectrum", cmd_spectrum), ("gap", cmd_gap)):
        p = top.add_parser(name)
        _add_common(p)
        p.add_argument("--spec", help="HamiltonianSpec JSON ('-' for stdin)")
        p.add_argument("--method", choices=["dense", "lanczos"], default="dense")
        p.add_argument("--k", type=int, default=4)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--tol", type=float, default=1e-8)
        if name == "gap":
            p.add_argument("--spectrum", help="spectrum CSV instead of a spec")
            p.add_argument("--tau", type=float)
        p.set_defaults(func=fn)
        leaves[name] = p

    plant = top.add_parser("plant").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    for name in ("continuous", "projector", "discrete", "dos-ladder"):
        p = plant.add_parser(name)
        _add_common(p)
        p.add_argument("--spec", help="base spec; otherwise a random one is built from the graph options")
        _add_graph_args(p)
        _add_model_args(p)
        if name in ("continuous", "dos-ladder"):
            p.add_argument("--eps", type=float, default=0.0)
            p.add_argument("--env-gap-floor", type=float, default=0.5)
        if name == "continuous":
            p.add_argument("--edge", required=False)
            p.add_argument("--s", type=float, default=0.0)
        elif name == "projector":
            p.add_argument("--vertex", type=int, default=0)
            p.add_argument("--h", type=int, default=1)
            p.add_argument("--eps", type=float, default=0.0)
        elif name == "discrete":
            p.add_argument("--edge", required=False)
            p.add_argument("--k", type=int, default=2)
        else:
            p.add_argument("--edges", help="semicolon-separated edges, e.g. '1,2;4,5;7,8'")
            p.add_argument("--s-values", default="0.01,0.02,0.03")
            p.add_argument("--c", type=float, default=0.1)
        p.set_defaults(func=cmd_plant)
        leaves[f"plant {name}"] = p

    p = top.add_parser("certify")
    _add_common(p, seed=False)
    p.add_argument("--spec", help="planted spec JSON")
    p.set_defaults(func=cmd_certify)
    leaves["certify"] = p

    scan = top.add_parser("scan").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    p = scan.add_parser("rare")
    _add_common(p, seed=False)
    p.add_argument("--spec")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=1e-12)
    p.set_defaults(func=cmd_scan_rare)
    leaves["scan rare"] = p

    sweep = top.add_parser("sweep").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    p = sweep.add_parser("gap-vs-size")
    _add_common(p)
    p.add_argument("--model", choices=["gaussian", "projector", "discrete", "identity", "ladder"], default="gaussian")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--beta", type=int, default=2, choices=[1, 2])
    p.add_argument("--rank", type=int)
    p.add_argument("--atoms", default="0,1")
    p.add_argument("--s-values", default="0.01,0.02,0.03")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--sizes", default="4,6,8")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tau", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_sweep_gap_vs_size)
    leaves["sweep gap-vs-size"] = p

    scaling = top.add_parser("scaling").add_subparsers(dest="sub", required=True, parser_class=_Parser)
    p = scaling.add_parser("exponent")
    _add_common(p, seed=False)
    p.add_argument("--z", type=int, required=False, default=2)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--eps", type=float)
    p.set_defaults(func=cmd_scaling_exponent)
    leaves["scaling exponent"] = p
    return parser, leaves


def _apply_config(argv, parser, leaves):
    """Re-parse with config-file values installed as parser defaults."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    key = _subcommand(args)
    section = cfg
    for part in key.split():
        section = section.get(part, {}) if isinstance(section, dict) else {}
    leaf = leaves[key]
    known = {a.dest for a in leaf._actions}
    # top-level keys are shared defaults: apply those this subcommand accepts;
    # keys in the subcommand's own table must all be valid
    values = {k: v for k, v in cfg.items() if not isinstance(v, dict) and k.replace("-", "_") in known}
    own = {k: v for k, v in section.items() if not isinstance(v, dict)}
    values.update(own)
    unknown = sorted(k.replace("-", "_") for k in own if k.replace("-", "_") not in known)
    if unknown:
        raise UsageError(f"unknown config keys for '{key}': {', '.join(unknown)}")
    leaf.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
    return parser.parse_args(argv)


def run(argv=None) -> int:
    parser, leaves = build_parser()
    saved_cap = os.environ.get("GAPLESS_DENSE_CAP")
    try:
        args = _apply_config(argv, parser, leaves)
        if getattr(args, "dense_cap", None):
            os.environ["GAPLESS_DENSE_CAP"] = str(args.dense_cap)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        print(f"gapless: error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"gapless: solver failure: {exc}", file=sys.stderr)
        return 2
    finally:
        # the cap override is scoped to this invocation
        if saved_cap is None:
            os.environ.pop("GAPLESS_DENSE_CAP", None)
        else:
            os.environ["GAPLESS_DENSE_CAP"] = saved_cap
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
