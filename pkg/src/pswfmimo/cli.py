"""Command-line front end.

Exit status: 0 on success, 1 on numerical failure, 2 on usage or config errors.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

from .capacity import pswf_capacity_bound, wavelength
from .dpss import compute_dpss
from .errors import NumericalFailure
from .estimators import ESTIMATOR_NAMES
from .experiments import (THREADS_ENV, ConfigError, atomic_write_text, load_config,
                          resolve_threads, run_experiment, write_svg, write_table)
from .pswf import rescale_to_interval, write_basis_csv

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2
SATURATION_KINDS = ("hmimo-saturation", "xlmimo-saturation")
ESTIMATION_KINDS = ("ce-snr-sweep", "ce-pilot-sweep")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p):
    p.add_argument("config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--out-dir", type=Path, default=None,
                   help="directory for outputs (default: next to the config output path)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pswfmimo", description="PSWF tools for wavenumber-bandlimited MIMO channels")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pswf", help="PSWF eigen-system on [a, b] for bandwidth omega")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--a", type=float, default=-1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--functions", type=int, default=8, help="eigenfunctions to sample")
    p.add_argument("--out", type=Path, default=Path("pswf_eigen.csv"))
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("dpss", help="Slepian sequences of length n and discrete bandwidth w")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--w", type=float, required=True)
    p.add_argument("--out", type=Path, default=Path("dpss.csv"))
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("bound", help="PSWF ergodic capacity bound")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--aperture", type=float, required=True, help="aperture in meters")
    p.add_argument("--freq", type=float, default=3.5e9, help="carrier frequency in Hz")
    p.add_argument("--snr-db", type=float, default=10.0)

    p = sub.add_parser("simulate", help="capacity saturation sweep from a config")
    _add_run_flags(p)

    p = sub.add_parser("estimate", help="channel estimation sweep from a config")
    _add_run_flags(p)
    p.add_argument("--estimators", default=None,
                   help=f"comma-separated subset of: {', '.join(ESTIMATOR_NAMES)}")
    return ap


def _target(path: Path, out_dir: Path | None) -> Path:
    return path if out_dir is None else out_dir / path.name


def cmd_pswf(args) -> int:
    out = _target(args.out, args.out_dir)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        basis = rescale_to_interval(args.omega, args.a, args.b, n_max=args.nmax)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    samples = out.with_name(out.stem + "_samples" + out.suffix)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name("." + out.name + ".tmp")
    tmp_s = samples.with_name("." + samples.name + ".tmp")
    write_basis_csv(basis, tmp, tmp_s, n_samples=args.samples, n_functions=args.functions)
    tmp.replace(out)
    tmp_s.replace(samples)
    print(f"c = {basis.c:.6g}, gamma_0 = {basis.gamma[0]:.12g}; wrote {out} and {samples}")
    return EXIT_OK


def cmd_dpss(args) -> int:
    basis = compute_dpss(args.n, args.w)
    lines = ["k,eigenvalue," + ",".join(f"v_{m}" for m in range(args.n))]
    for k in range(args.n):
        lines.append(",".join([str(k), repr(float(basis.eigenvalues[k]))]
                              + [repr(float(v)) for v in basis.vectors[:, k]]))
    out = _target(args.out, args.out_dir)
    atomic_write_text(out, "\n".join(lines) + "\n")
    print(f"sum of eigenvalues {basis.eigenvalues.sum():.12g} (n w = {args.n * args.w:.12g}); wrote {out}")
    return EXIT_OK


def cmd_bound(args) -> int:
    lam = wavelength(args.freq)
    snr = 10 ** (args.snr_db / 10)
    lbar = args.aperture / lam
    value = pswf_capacity_bound((args.a, args.b), args.gamma, lbar, snr)
    print(f"L/lambda = {lbar:.6g}, omega = {min(lbar, 1 / args.gamma):.6g}")
    print(f"bound = {value:.10g} nats ({value / math.log1p(snr):.10g} normalized by log(1+snr))")
    return EXIT_OK


def _run(args, kinds, **overrides) -> int:
    cfg = load_config(args.config, seed=args.seed, trials=args.trials, **overrides)
    if cfg.kind not in kinds:
        raise ConfigError(f"config kind {cfg.kind!r} is not valid here; expected one of {kinds}")
    threads = resolve_threads(args.threads)
    table = run_experiment(cfg, threads)
    out = _target(Path(cfg.output), args.out_dir)
    write_table(table, out)
    if args.svg or cfg.svg:
        write_svg(table, cfg, out.with_suffix(".svg"))
    for row in table.rows:
        print("  ".join(f"{c}={v:.6g}" if isinstance(v, float) else f"{c}={v}"
                        for c, v in zip(table.columns, row)))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run(args, SATURATION_KINDS)


def cmd_estimate(args) -> int:
    est = None
    if args.estimators:
        est = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    return _run(args, ESTIMATION_KINDS, estimators=est)


COMMANDS = {"pswf": cmd_pswf, "dpss": cmd_dpss, "bound": cmd_bound,
            "simulate": cmd_simulate, "estimate": cmd_estimate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        # ConfigError is a ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
