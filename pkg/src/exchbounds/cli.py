"""Command-line front end: ``bound``, ``compare``, ``verify`` and ``simulate``.

Every command writes CSV (stdout or ``--out``) preceded by ``#`` manifest
lines. Exit codes: 0 success, 1 internal error, 2 usage or validation
error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, montecarlo, oracle
from ._parallel import THREADS_ENV, resolve_workers
from .core import Population, WeightVector
from .errors import BudgetError, DomainError, PreconditionError, ValidationError

log = logging.getLogger("exchbounds")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3

SCAN_FAMILIES = bounds.CERTIFICATE_KINDS
MARTINGALE_FAMILIES = {"martingale-hoeffding": oracle.HOEFFDING, "martingale-bernstein": oracle.BERNSTEIN}
VERIFY_FAMILIES = SCAN_FAMILIES + tuple(MARTINGALE_FAMILIES) + ("suffix-variance",)
NEEDS_N = {bounds.SERFLING, bounds.HOEFFDING_EXCH, bounds.BERNSTEIN_EXCH}
NEEDS_SIGMA2 = {bounds.BERNSTEIN_IID, bounds.BERNSTEIN_EXCH}
DEFAULT_DELTAS = (0.5, 0.1, 0.05, 0.01)


class UsageError(Exception):
    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


# --- input parsing ------------------------------------------------------------

def read_values(source: str, flag: str) -> np.ndarray:
    """A CSV file (one real per line, ``#`` comments) or an inline comma list."""
    path = Path(source)
    if path.is_file():
        tokens = []
        for line in path.read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.append(line)
    else:
        tokens = [t.strip() for t in source.split(",") if t.strip()]
    if not tokens:
        raise UsageError(flag, "no values given")
    try:
        return np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise UsageError(flag, f"cannot parse values ({exc})") from None


def _weights(args) -> WeightVector:
    if args.weights is None:
        raise UsageError("--weights", "required")
    try:
        return WeightVector(read_values(args.weights, "--weights"))
    except (DomainError, ValidationError) as exc:
        raise UsageError("--weights", str(exc)) from None


def _population(args, required=False):
    if getattr(args, "population", None) is None:
        if required:
            raise UsageError("--population", "required")
        return None
    try:
        return Population(read_values(args.population, "--population"))
    except (DomainError, ValidationError) as exc:
        raise UsageError("--population", str(exc)) from None


def _deltas(args):
    deltas = args.delta or [0.05]
    for d in deltas:
        if not 0.0 < d < 1.0:
            raise UsageError("--delta", f"must lie strictly inside (0, 1), got {d}")
    return deltas


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value <= montecarlo.MAX_SEED:
        raise argparse.ArgumentTypeError("must be a 64-bit unsigned integer")
    return value


# --- output ------------------------------------------------------------------

def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "PASS" if value else "FAIL"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return "" if value is None else str(value)


def _digest(values) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()


def manifest_lines(command, args, seed=None, digests=None):
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    lines = [
        f"# exchbounds {command}",
        f"# version: {__version__}",
        f"# seed: {'' if seed is None else seed}",
        f"# params: {json.dumps(params, sort_keys=True, default=str)}",
    ]
    for name, value in sorted((digests or {}).items()):
        lines.append(f"# digest {name}: {value}")
    lines.append(f"# timestamp: {datetime.datetime.now(datetime.timezone.utc).isoformat()}")
    return lines


def write_csv(args, command, header, rows, seed=None, digests=None, path=None):
    path = path or args.out
    stream = open(path, "w", newline="") if path else sys.stdout
    try:
        for line in manifest_lines(command, args, seed, digests):
            stream.write(line + "\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    finally:
        if path:
            stream.close()


# --- commands ----------------------------------------------------------------

def _resolve_N_sigma2(args, kind, w, pop):
    N = args.bigN if args.bigN is not None else (pop.size if pop is not None else None)
    sigma2 = args.sigma2 if args.sigma2 is not None else (pop.variance if pop is not None else None)
    if kind in NEEDS_N and N is None:
        raise UsageError("--bigN", f"required for --kind {kind}")
    if kind in NEEDS_SIGMA2 and sigma2 is None:
        raise UsageError("--sigma2", f"required for --kind {kind}")
    if kind == bounds.POLACZYK and pop is None:
        raise UsageError("--population", "required for --kind polaczyk")
    if N is not None and N < w.n:
        raise UsageError("--bigN", f"must be >= the number of weights ({w.n}), got {N}")
    if sigma2 is not None and sigma2 < 0:
        raise UsageError("--sigma2", f"must be nonnegative, got {sigma2}")
    return N, sigma2


def _radius(kind, w, delta, N, sigma2, pop):
    try:
        return bounds.radius(kind, w, delta, N=N, sigma2=sigma2, population=pop)
    except (DomainError, PreconditionError, ValidationError) as exc:
        raise UsageError("--kind", f"{kind}: {exc}") from None


def cmd_bound(args) -> int:
    w = _weights(args)
    pop = _population(args)
    deltas = _deltas(args)
    N, sigma2 = _resolve_N_sigma2(args, args.kind, w, pop)
    rows = []
    for delta in deltas:
        tr = _radius(args.kind, w, delta, N, sigma2, pop)
        rows.append((args.kind, w.n, N, tr.delta, tr.sided, tr.radius))
    digests = {"weights": _digest(w.entries)}
    if pop is not None:
        digests["population"] = _digest(pop.values)
    write_csv(args, "bound", ("kind", "n", "N", "delta", "sided", "radius"), rows, digests=digests)
    return EXIT_OK


def applicable_kinds(w, N, sigma2, pop):
    kinds = [bounds.HOEFFDING_IID, bounds.HOEFFDING_EXCH, bounds.GAN]
    if sigma2 is not None:
        kinds += [bounds.BERNSTEIN_IID, bounds.BERNSTEIN_EXCH]
    if np.all(w.entries == w.entries[0]):
        kinds.append(bounds.SERFLING)
    if w.all_nonnegative:
        kinds.append(bounds.HOEFFDING_EXCH_NONNEG)
    if pop is not None and abs(pop.mean) <= bounds.MEAN_ZERO_TOL and w.norm_inf <= 1.0:
        kinds.append(bounds.POLACZYK)
    return kinds


def cmd_compare(args) -> int:
    w = _weights(args)
    pop = _population(args)
    deltas = _deltas(args)
    N, sigma2 = _resolve_N_sigma2(args, bounds.HOEFFDING_EXCH, w, pop)
    kinds = applicable_kinds(w, N, sigma2, pop)
    rows = []
    for delta in deltas:
        ref = _radius(bounds.HOEFFDING_EXCH, w, delta, N, sigma2, pop).radius
        block = []
        for kind in kinds:
            tr = _radius(kind, w, delta, N, sigma2, pop)
            sided = bounds.ONE_SIDED if args.normalize_sided else tr.sided
            ratio = tr.radius / ref if ref > 0 else math.nan
            block.append((kind, tr.delta, sided, tr.radius, ratio))
        rows.extend(sorted(block, key=lambda r: (r[3], r[0])))
    digests = {"weights": _digest(w.entries)}
    if pop is not None:
        digests["population"] = _digest(pop.values)
    write_csv(args, "compare", ("kind", "delta", "sided", "radius", "ratio_to_hoeffding_exch"),
              rows, digests=digests)
    return EXIT_OK


def _scan_certificate(family, w, pop):
    return bounds.certificate(family, w, N=pop.size, sigma2=pop.variance)


def _verify_instance(i, family, x, w, args, rng, plot_rows, workers):
    pop = Population(x)
    wv = WeightVector(w)
    if family in SCAN_FAMILIES:
        cert = _scan_certificate(family, wv, pop)
        rep = oracle.mgf_dominance_scan(pop, wv, wv.n, cert, grid_size=args.lambda_grid,
                                        lambda_max=args.lambda_max, workers=workers)
        for lam, lm, ex in zip(rep.lambdas, rep.log_mgf, rep.exponents):
            plot_rows.append((i, family, lam, lm, ex))
        return (i, family, wv.n, pop.size, rep.min_margin, rep.argmin_lambda, rep.passed), rep.passed
    if family in MARTINGALE_FAMILIES:
        fam = MARTINGALE_FAMILIES[family]
        lam = args.lam
        if lam is None:
            limit = (bernstein_limit(wv) if fam == oracle.BERNSTEIN else 3.0 / max(wv.norm_inf, 1e-300))
            lam = rng.uniform(-limit, limit)
        rep = oracle.martingale_check(pop, wv, lam, fam)
        margin = 0.0 - math.log(rep.worst_ratio)
        ok = rep.passed or not rep.asserted
        return (i, family, wv.n, pop.size, margin, rep.lam, ok), ok
    rep = oracle.suffix_variance_domination_check(pop.values)
    return (i, family, pop.size, pop.size, rep.worst_gap, None, rep.passed), rep.passed


def bernstein_limit(v) -> float:
    # stay strictly inside the conservative range
    return 0.999 * oracle.bernstein_conservative_limit(v)


def cmd_verify(args) -> int:
    family = args.family
    workers = resolve_workers(args.threads)
    rng = np.random.default_rng(args.seed)
    plot_rows, rows = [], []
    all_ok = True
    digests = {}
    if args.population is not None or args.weights is not None:
        pop = _population(args, required=True)
        w = _weights(args)
        if family in SCAN_FAMILIES and w.n > pop.size:
            raise UsageError("--weights", f"more weights ({w.n}) than population values ({pop.size})")
        if (family in MARTINGALE_FAMILIES) and w.n != pop.size:
            raise UsageError("--weights", "martingale checks need one weight per population value")
        instances = [(pop.values, w.entries)]
        digests = {"weights": _digest(w.entries), "population": _digest(pop.values)}
    else:
        n = args.n
        N = args.bigN if args.bigN is not None else n
        if N < n:
            raise UsageError("--bigN", f"must be >= --n ({n})")
        if family in MARTINGALE_FAMILIES and N != n:
            raise UsageError("--bigN", "martingale checks need N = n")
        nonneg = family == bounds.HOEFFDING_EXCH_NONNEG
        instances = [oracle.random_instance(rng, N, n, nonnegative=nonneg) for _ in range(args.instances)]
    for i, (x, w) in enumerate(instances):
        try:
            row, ok = _verify_instance(i, family, x, w, args, rng, plot_rows, workers)
        except (DomainError, PreconditionError, BudgetError, ValidationError) as exc:
            raise UsageError("--family", f"{family}: {exc}") from None
        rows.append(row)
        all_ok &= bool(ok)
    write_csv(args, "verify", ("instance", "family", "n", "N", "min_margin", "at_lambda", "pass"),
              rows, seed=args.seed, digests=digests)
    if args.plot_data:
        write_csv(args, "verify --plot-data",
                  ("instance", "family", "lambda", "exact_log_mgf", "bound_exponent"),
                  plot_rows, seed=args.seed, digests=digests, path=args.plot_data)
    return EXIT_OK if all_ok else EXIT_VERIFY


def cmd_simulate(args) -> int:
    workers = resolve_workers(args.threads)
    if args.population is not None:
        pop = _population(args, required=True)
    elif args.population_size is not None:
        gen = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1,)))
        pop = Population(gen.uniform(-1.0, 1.0, size=args.population_size))
    else:
        raise UsageError("--population", "give --population or --population-size")
    if args.weights is not None:
        w = _weights(args)
    elif args.random_weights:
        if args.n is None:
            raise UsageError("--n", "required with --random-weights")
        gen = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(2,)))
        w = WeightVector(gen.standard_normal(args.n))
    else:
        raise UsageError("--weights", "give --weights or --random-weights")
    n = args.n if args.n is not None else w.n
    if n > pop.size:
        raise UsageError("--n", f"n={n} exceeds the population size N={pop.size}")
    if w.n != n:
        raise UsageError("--weights", f"expected {n} weights, got {w.n}")
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    for k in kinds:
        if k not in bounds.KINDS:
            raise UsageError("--kinds", f"unknown kind {k!r}")
    deltas = args.delta or list(DEFAULT_DELTAS)
    _deltas(argparse.Namespace(delta=deltas))
    config = montecarlo.SimConfig(pop, w, n, args.replicates, args.seed)
    try:
        table = montecarlo.coverage_experiment(config, kinds, deltas, workers=workers)
    except (DomainError, PreconditionError) as exc:
        raise UsageError("--kinds", str(exc)) from None
    rows = [(r.kind, r.delta, r.radius, r.estimate.frequency, r.estimate.ci_low,
             r.estimate.ci_high, r.passed) for r in table]
    write_csv(args, "simulate", ("kind", "delta", "radius", "empirical_freq", "ci_lo", "ci_hi", "pass"),
              rows, seed=args.seed,
              digests={"weights": _digest(w.entries), "population": _digest(pop.values)})
    return EXIT_OK if all(r.passed for r in table) else EXIT_VERIFY


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exchbounds",
        description="Concentration bounds for weighted sums of exchangeable variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--weights", help="CSV file (one value per line) or inline list, e.g. --weights=1,-1")
        p.add_argument("--out", help="write CSV here instead of stdout")

    def bound_inputs(p):
        p.add_argument("--bigN", type=int, help="population size N")
        p.add_argument("--delta", type=float, action="append", help="tail level (repeatable)")
        p.add_argument("--sigma2", type=float, help="population variance")
        p.add_argument("--population", help="population CSV file or inline list")

    p = sub.add_parser("bound", help="tail radius of one bound family")
    common(p)
    bound_inputs(p)
    p.add_argument("--kind", required=True, choices=bounds.KINDS)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("compare", help="radii of every applicable bound family")
    common(p)
    bound_inputs(p)
    p.add_argument("--normalize-sided", action="store_true",
                   help="report two-sided radii as one-sided at the same delta")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="exact verification against enumeration")
    common(p)
    p.add_argument("--population", help="population CSV file or inline list")
    p.add_argument("--family", default=bounds.HOEFFDING_EXCH, choices=VERIFY_FAMILIES)
    p.add_argument("--lambda-grid", type=_positive_int, default=101, help="grid points per scan")
    p.add_argument("--lambda-max", type=float, help="grid half-width for unbounded domains")
    p.add_argument("--lambda", dest="lam", type=float, help="lambda for martingale checks")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--instances", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=5, help="terms per randomized instance")
    p.add_argument("--bigN", type=_positive_int, help="population size of randomized instances")
    p.add_argument("--plot-data", help="also write long-format (lambda, exact_log_mgf, bound_exponent) CSV")
    p.add_argument("--threads", type=int, default=None, help=f"0 = auto; default from ${THREADS_ENV}")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo coverage of tail radii")
    common(p)
    p.add_argument("--population", help="population CSV file or inline list")
    p.add_argument("--population-size", type=_positive_int, help="draw a seeded uniform population instead")
    p.add_argument("--random-weights", action="store_true", help="draw seeded standard-normal weights")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--replicates", type=_positive_int, default=100000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--delta", type=float, action="append")
    p.add_argument("--kinds", default="hoeffding-exch,bernstein-exch")
    p.add_argument("--threads", type=int, default=None, help=f"0 = auto; default from ${THREADS_ENV}")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"exchbounds {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ValidationError, PreconditionError, BudgetError) as exc:
        print(f"exchbounds {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
