"""Batch command-line front end.

Every subcommand validates its parameters, computes all outputs in memory and
only then writes them (see :func:`fileio.commit`), so a failure never leaves
partial files behind. Numbers are written with 17 significant digits.

Options may also come from an INI-style file given with ``--config``: keys of
a ``[common]`` section apply to every subcommand, keys of a section named
after the subcommand apply to it only. Command-line flags win. Unknown keys
are rejected.

Exit codes: 0 success, 2 usage, 3 input validation, 4 numerical failure,
5 I/O.
"""

import argparse
import configparser
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, fileio
from .errors import InvalidInput, RiccatiError, StorageError
from .ingest import DataMatrix, load_matrix, mad_clamp, normalize, parcel_average, trim_samples
from .randproj import ProjectionConfig, random_project, retained_energy
from .riccati import DENSIFY_CAP, PenaltyShape, densify, estimate, estimate_tikhonov
from .shared import fit_shared, subject_precision
from .validation import SplitPlan, SweepGrid, icc_c1, reliability_sweep, split_sample_sweep

EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _g(x):
    return format(float(x), ".17g")


def _float_list(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _dims(text):
    out = []
    for t in str(text).split(","):
        t = t.strip()
        if not t:
            continue
        out.append(None if t.lower() == "full" else int(t))
    return tuple(out)


def _str_list(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _add_preprocessing(p):
    g = p.add_argument_group("preprocessing")
    g.add_argument("--format", choices=("csv", "raw64"), help="input matrix format (default: by suffix)")
    g.add_argument("--trim", type=int, default=0, help="drop this many leading samples")
    g.add_argument("--mad-clamp", type=float, help="clamp each column at median +/- K MAD (e.g. 4.4478)")
    g.add_argument("--parcellation", help="label file; average rows per parcel")
    g.add_argument("--no-normalize", action="store_true", help="input rows are already normalized")


def _add_penalty(p):
    g = p.add_argument_group("penalty")
    g.add_argument("--rho", type=float, help="penalty strength")
    g.add_argument("--penalty", choices=("identity", "diagonal", "roi", "tikhonov"), default="identity")
    g.add_argument("--v-file", help="diagonal penalty weights, one per node")
    g.add_argument("--network", help="one-based node indices of the network of interest")
    g.add_argument("--alpha", type=float, default=1.0, help="ROI suppression weight outside the network")


def build_parser():
    parser = argparse.ArgumentParser(prog="ricprec", description="Riccati-regularized precision matrices")
    parser.add_argument("--config", help="INI file with default option values")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for independent items")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("project", help="randomly project the sample axis")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--t", type=int, help="target dimension")
    p.add_argument("--q", type=int, default=0, help="power iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shared-basis", action="store_true", help="concatenate inputs along samples and project once")
    p.add_argument("--output", help="output matrix (a directory for several inputs)")
    _add_preprocessing(p)

    p = sub.add_parser("estimate", help="estimate a factored precision matrix")
    p.add_argument("input", nargs="?")
    _add_penalty(p)
    p.add_argument("--rank", type=int, help="keep only this many singular values (truncated SVD)")
    p.add_argument("--t", type=int, help="randomly project to this many samples first")
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-count", type=int, help="input is already projected from this many samples")
    p.add_argument("--output", help="precision file")
    _add_preprocessing(p)

    p = sub.add_parser("tsee", help="network entropy of a precision")
    p.add_argument("precision", nargs="?")
    p.add_argument("--network")
    p.add_argument("--alpha", type=float, help="expected penalty weight on the network (consistency check)")
    p.add_argument("--direct", action="store_true", help="dense eigendecomposition instead of the fast path")
    p.add_argument("--output")

    p = sub.add_parser("partials", help="partial correlations of a precision")
    p.add_argument("precision", nargs="?")
    p.add_argument("--network")
    p.add_argument("--output")

    p = sub.add_parser("jsvd", help="shared-basis precisions for several scans")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--m", type=int, help="number of shared components")
    p.add_argument("--rho", type=float)
    p.add_argument("--weighting", choices=("subject", "sample"), default="subject")
    p.add_argument("--output", help="model file")
    p.add_argument("--precision-dir", help="also write one precision file per input here")
    _add_preprocessing(p)

    p = sub.add_parser("validate", help="split-sample negative log-likelihood sweep")
    p.add_argument("manifest", nargs="?")
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--group-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=_dims, default=(None,), help="comma list, 'full' for no truncation")
    p.add_argument("--rho", type=_float_list, default=(1.0,), help="comma list")
    p.add_argument("--alpha", type=_float_list, default=(1.0,), help="comma list")
    p.add_argument("--methods", type=_str_list, default=("rp",), help="tsvd, rp, tikhonov")
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--network")
    p.add_argument("--output", help="prefix for PREFIX.csv and PREFIX.json")
    _add_preprocessing(p)

    p = sub.add_parser("icc", help="ICC(C,1) of a ratings table or a reliability sweep")
    p.add_argument("--table", help="CSV of subjects x repetitions")
    p.add_argument("--manifest", help="cohort manifest with repeated scans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=_dims, default=(None,))
    p.add_argument("--rho", type=_float_list, default=(1.0,))
    p.add_argument("--alpha", type=_float_list, default=(1.0,))
    p.add_argument("--methods", type=_str_list, default=("jsvd", "tsvd", "rp"))
    p.add_argument("--metrics", type=_str_list, default=("edge_icc",))
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--network")
    p.add_argument("--output", help="value file (table) or report prefix (manifest)")
    _add_preprocessing(p)

    p = sub.add_parser("distance", help="Mahalanobis distances between paired maps")
    p.add_argument("precision", nargs="?")
    p.add_argument("--maps-a")
    p.add_argument("--maps-b")
    p.add_argument("--output")

    p = sub.add_parser("densify", help="dense precision matrix (small N only)")
    p.add_argument("precision", nargs="?")
    p.add_argument("--cap", type=int, default=DENSIFY_CAP)
    p.add_argument("--output")
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = configparser.ConfigParser(interpolation=None)
    try:
        with open(known.config) as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise StorageError(f"cannot read config {known.config}: {exc}") from exc
    except configparser.Error as exc:
        raise UsageError(f"malformed config file: {exc}") from exc
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    dests = {name: {a.dest: a for a in sp._actions if a.dest != "help"} for name, sp in subparsers.items()}
    for section in cfg.sections():
        if section != "common" and section not in subparsers:
            raise UsageError(f"unknown config section [{section}]")
    if "common" in cfg:
        for key, raw in cfg["common"].items():
            dest = key.replace("-", "_")
            if dest == "jobs":
                parser.set_defaults(jobs=_convert(next(a for a in parser._actions if a.dest == "jobs"), raw))
            elif not any(dest in d for d in dests.values()):
                raise UsageError(f"unknown config key {key!r} in [common]")
    for name, sp in subparsers.items():
        values = {}
        for section in ("common", name):
            if section not in cfg:
                continue
            for key, raw in cfg[section].items():
                dest = key.replace("-", "_")
                if dest in dests[name]:
                    values[dest] = _convert(dests[name][dest], raw)
                elif section == name:
                    raise UsageError(f"unknown config key {key!r} in [{section}]")
        sp.set_defaults(**values)


def _convert(action, raw):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if action.nargs in ("*", "+"):
        return raw.split()
    if action.type is not None:
        try:
            value = action.type(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value {raw!r} for {action.dest}") from exc
    else:
        value = raw
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"{action.dest} must be one of {list(action.choices)}")
    return value


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, [], ())]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _prepare(path, args, normalize_rows=True):
    X = load_matrix(path, args.format).values
    if args.trim:
        X = trim_samples(X, args.trim).values
    if args.mad_clamp is not None:
        X = np.column_stack([mad_clamp(X[:, j], args.mad_clamp) for j in range(X.shape[1])])
    if args.parcellation:
        X = parcel_average(X, fileio.load_parcellation(args.parcellation)).values
    if not normalize_rows:
        return DataMatrix(X)
    if args.no_normalize:
        return DataMatrix(X, normalized=True)
    return normalize(X)


def _penalty(args, n_nodes):
    if args.penalty == "diagonal":
        _require(args, "v_file")
        v = fileio.load_vector(args.v_file)
        if v.size != n_nodes:
            raise InvalidInput(f"{args.v_file}: {v.size} weights for {n_nodes} nodes")
        return PenaltyShape.diagonal(v, args.rho)
    if args.penalty == "roi":
        _require(args, "network")
        net = fileio.load_network(args.network)
        return PenaltyShape.roi(n_nodes, net.check(n_nodes), args.alpha, args.rho)
    return PenaltyShape.identity(args.rho)


def cmd_project(args):
    _require(args, "inputs", "t", "output")
    data = [_prepare(p, args) for p in args.inputs]
    if args.shared_basis:
        joint = normalize(np.hstack([d.values for d in data])) if not args.no_normalize else DataMatrix(
            np.hstack([d.values for d in data]), normalized=True
        )
        jobs = [(joint, Path(args.output))]
    elif len(data) == 1:
        jobs = [(data[0], Path(args.output))]
    else:
        outdir = Path(args.output)
        if not outdir.is_dir():
            raise InvalidInput(f"{outdir} must be an existing directory for several inputs")
        jobs = [(d, outdir / f"{Path(p).stem}.proj{Path(p).suffix or '.csv'}") for d, p in zip(data, args.inputs)]
    outputs = {}
    energies = []
    for X, out in jobs:
        Y, _ = random_project(X, ProjectionConfig(args.t, args.q, args.seed))
        energies.append(retained_energy(X.values, Y))
        outputs[out] = fileio.matrix_bytes(Y.values, out)
        outputs[Path(str(out) + ".stats")] = (
            f"retained_energy={_g(energies[-1])}\n"
            f"source_samples={X.n_samples}\n"
            f"target_dim={args.t}\n"
            f"power_iterations={args.q}\n"
            f"seed={args.seed}\n"
        )
    fileio.commit(outputs)
    for (_, out), energy in zip(jobs, energies):
        print(f"{out}: retained_energy={_g(energy)}")
    return 0


def cmd_estimate(args):
    _require(args, "input", "rho", "output")
    start = time.perf_counter()
    X = _prepare(args.input, args)
    if args.sample_count is not None:
        X = DataMatrix(X.values, normalized=True, sample_count=args.sample_count, projected=True)
    if args.t is not None:
        X, _ = random_project(X, ProjectionConfig(args.t, args.q, args.seed))
    if args.penalty == "tikhonov":
        Q = estimate_tikhonov(X, args.rho, rank=args.rank)
    else:
        Q = estimate(X, _penalty(args, X.n_signals), rank=args.rank)
    fileio.commit({args.output: fileio.precision_bytes(Q)})
    elapsed = time.perf_counter() - start
    print(f"N={Q.n_nodes} m={Q.rank} rho={_g(Q.rho)} seconds={elapsed:.3f}")
    return 0


def cmd_tsee(args):
    _require(args, "precision", "network")
    Q = fileio.load_precision(args.precision)
    net = fileio.load_network(args.network)
    idx = net.check(Q.n_nodes)
    if args.alpha is not None:
        expected = Q.c / args.alpha**2
        got = Q.baseline_diagonal()[idx]
        if np.abs(got - expected).max() > 1e-10 * expected:
            raise InvalidInput(f"precision baseline on the network does not match alpha={args.alpha}")
    value = analysis.tsee(Q, net, direct=args.direct)
    text = _g(value) + "\n"
    if args.output:
        fileio.commit({args.output: text})
    sys.stdout.write(text)
    return 0


def cmd_partials(args):
    _require(args, "precision", "output")
    Q = fileio.load_precision(args.precision)
    if args.network:
        block = analysis.restricted_dense(Q, fileio.load_network(args.network))
    else:
        block = densify(Q)
    fileio.commit({args.output: fileio.matrix_bytes(analysis.partial_correlations(block), args.output)})
    return 0


def cmd_jsvd(args):
    _require(args, "inputs", "m", "rho", "output")
    data = [_prepare(p, args) for p in args.inputs]
    if len({d.n_signals for d in data}) > 1:
        raise InvalidInput("inputs have different numbers of signals")
    model = fit_shared(data, args.m, PenaltyShape.identity(args.rho), weighting=args.weighting)
    outputs = {args.output: fileio.model_bytes(model)}
    if args.precision_dir:
        outdir = Path(args.precision_dir)
        if not outdir.is_dir():
            raise InvalidInput(f"{outdir} is not a directory")
        for k, path in enumerate(args.inputs):
            outputs[outdir / f"{k:03d}_{Path(path).stem}.prec"] = fileio.precision_bytes(subject_precision(model, k))
    fileio.commit(outputs)
    print(f"N={model.basis.shape[0]} m={model.n_components} K={model.n_subjects}")
    return 0


def _grid(args):
    network = fileio.load_network(args.network) if args.network else None
    return SweepGrid(
        dimensions=args.dims,
        rhos=args.rho,
        alphas=args.alpha,
        methods=args.methods,
        power_iterations=args.q,
        network=network,
    )


def _report_outputs(report, prefix):
    return {f"{prefix}.csv": report.to_csv(), f"{prefix}.json": report.to_json()}


def cmd_validate(args):
    _require(args, "manifest", "group_size", "output")
    manifest = fileio.load_manifest(args.manifest)
    cohort = [np.hstack([_prepare(p, args, normalize_rows=False).values for p in paths]) for paths in manifest.values()]
    report = split_sample_sweep(cohort, SplitPlan(args.repetitions, args.group_size, args.seed), _grid(args), jobs=args.jobs)
    fileio.commit(_report_outputs(report, args.output))
    print(f"{len(report.records)} records, {len(report.failures())} failed")
    return 0


def cmd_icc(args):
    if bool(args.table) == bool(args.manifest):
        raise UsageError("give exactly one of --table or --manifest")
    if args.table:
        value = icc_c1(load_matrix(args.table, args.format).values)
        text = _g(value) + "\n"
        if args.output:
            fileio.commit({args.output: text})
        sys.stdout.write(text)
        return 0
    _require(args, "output")
    manifest = fileio.load_manifest(args.manifest)
    scans = [[_prepare(p, args, normalize_rows=False).values for p in paths] for paths in manifest.values()]
    report = reliability_sweep(scans, _grid(args), seed=args.seed, metrics=args.metrics, jobs=args.jobs)
    fileio.commit(_report_outputs(report, args.output))
    print(f"{len(report.records)} records, {len(report.failures())} failed")
    return 0


def cmd_distance(args):
    _require(args, "precision", "maps_a", "maps_b", "output")
    Q = fileio.load_precision(args.precision)
    A = load_matrix(args.maps_a).values
    B = load_matrix(args.maps_b).values
    d = analysis.mahalanobis_columns(A, B, Q)
    fileio.commit({args.output: "".join(_g(x) + "\n" for x in d)})
    return 0


def cmd_densify(args):
    _require(args, "precision", "output")
    Q = fileio.load_precision(args.precision)
    fileio.commit({args.output: fileio.matrix_bytes(densify(Q, cap=args.cap), args.output)})
    return 0


COMMANDS = {
    "project": cmd_project,
    "estimate": cmd_estimate,
    "tsee": cmd_tsee,
    "partials": cmd_partials,
    "jsvd": cmd_jsvd,
    "validate": cmd_validate,
    "icc": cmd_icc,
    "distance": cmd_distance,
    "densify": cmd_densify,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RiccatiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return StorageError.exit_code
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
