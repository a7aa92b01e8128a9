"""Run the standard suite and print one line per check kind.

Equivalent to ``maxreg verify --config configs/standard_suite.json`` plus a
per-check tally; pass ``--compare`` with a second thread count to confirm the
reports are byte-identical.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from collections import defaultdict
from pathlib import Path

from maxreg.cli import resolve_threads, run_config
from maxreg.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def tally(entries):
    groups = defaultdict(list)
    for e in entries:
        groups[e["check_id"]].append(e)
    for cid in sorted(groups):
        es = groups[cid]
        ok = sum(e["pass"] for e in es)
        worst = min(e["pass_fraction"] for e in es)
        print(f"{cid:22s} {ok:3d}/{len(es):<3d} passed   min pass_fraction {worst:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "standard_suite.json"))
    ap.add_argument("--out", default=str(ROOT / "out" / "standard_suite"))
    ap.add_argument("--threads", default=None)
    ap.add_argument("--compare", default=None, metavar="THREADS", help="rerun at this thread count and diff reports.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    runs = load_config(args.config)
    threads = resolve_threads(args.threads, runs[0].threads)
    t0 = time.perf_counter()
    status, entries = run_config(runs, args.out, "verify", threads)
    print(f"{len(entries)} checks over {len(runs)} runs in {time.perf_counter() - t0:.0f}s at {threads} thread(s); exit {status}")
    tally(entries)

    if args.compare:
        other = Path(args.out).with_name(Path(args.out).name + f"_t{args.compare}")
        run_config(runs, other, "verify", resolve_threads(args.compare))
        same = (Path(args.out) / "reports.json").read_bytes() == (other / "reports.json").read_bytes()
        print(f"reports.json at {threads} vs {args.compare} threads: {'identical' if same else 'DIFFERENT'}")
        status = status or (0 if same else 1)
    return status


if __name__ == "__main__":
    sys.exit(main())
