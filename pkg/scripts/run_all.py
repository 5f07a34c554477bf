"""Run every shipped experiment config and write the CSV (and optional SVG) results.

    python3 scripts/run_all.py                 # all configs, full trial counts
    python3 scripts/run_all.py --trials 20     # quick pass
    python3 scripts/run_all.py hmimo xlmimo    # a subset by config stem
"""
import argparse
import sys
import time
from pathlib import Path

from pswfmimo.experiments import load_config, resolve_threads, run_experiment, write_svg, write_table

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="config stems under configs/ (default: all)")
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out-dir", type=Path, default=ROOT / "results")
    ap.add_argument("--svg", action="store_true", help="also plot each table (needs matplotlib)")
    args = ap.parse_args(argv)

    paths = sorted((ROOT / "configs").glob("*.yaml"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
        missing = set(args.names) - {p.stem for p in paths}
        if missing:
            ap.error(f"no such config(s): {sorted(missing)}")
    threads = resolve_threads(args.threads)
    for path in paths:
        cfg = load_config(path, trials=args.trials)
        t0 = time.perf_counter()
        table = run_experiment(cfg, threads)
        out = args.out_dir / Path(cfg.output).name
        write_table(table, out)
        if args.svg:
            write_svg(table, cfg, out.with_suffix(".svg"))
        print(f"{path.stem}: {cfg.trials} trials in {time.perf_counter() - t0:.1f}s -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
