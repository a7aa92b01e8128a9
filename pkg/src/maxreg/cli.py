"""Command-line front end: ``maxreg {gen,compute,verify,report}``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ConfigHypothesisError, RunConfig, load_config
from .generators import build_generator
from .io import read_reports, write_field, write_reports
from .lattice import build_domain
from .sobolev import HypothesisError
from .verify import Problem, VerificationError, VerificationReport, run_check

log = logging.getLogger("maxreg")

EXIT_OK, EXIT_FAIL, EXIT_HYPOTHESIS = 0, 1, 2
COLUMNS = ("check_id", "q", "pass_fraction", "empirical_constant", "pass", "run")


class ReportError(ValueError):
    pass


def resolve_threads(flag: str | None, config_value=1) -> int:
    raw = flag if flag is not None else os.environ.get("MAXREG_THREADS")
    raw = config_value if raw is None else raw
    if raw == "auto":
        return max(1, os.cpu_count() or 1)
    try:
        k = int(raw)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"threads must be a positive integer or 'auto', got {raw!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError(f"threads must be a positive integer or 'auto', got {raw!r}")
    return k


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    return f"{x:.6g}"


def _row(r) -> dict:
    d = r.to_dict() if isinstance(r, VerificationReport) else dict(r)
    return {
        "check_id": d["check_id"],
        "q": d["exponents"]["q"],
        "pass_fraction": d["pass_fraction"],
        "empirical_constant": d["empirical_constant"],
        "pass": d["pass"],
        "run": d.get("run", ""),
    }


def emit_report(reports: Sequence) -> str:
    """Fixed-width summary table, rows sorted by check_id (ties keep input order)."""
    if not reports:
        raise ReportError("nothing to report")
    rows = sorted((_row(r) for r in reports), key=lambda d: d["check_id"])
    cells = [list(COLUMNS)] + [[_fmt(d[c]) for c in COLUMNS] for d in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


def _digest(obj) -> str:
    return hashlib.sha1(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:10]


class Runner:
    """Builds problems for runs, sharing them across runs with the same fields.

    A problem at h is linked to the one at h/2 so refinement checks reuse cached
    maximal functions. The cache holds one field family at a time.
    """

    def __init__(self, threads: int, runs: Sequence[RunConfig] = ()):
        self.threads = threads
        self._family = None
        self._cache: dict[float, Problem] = {}
        self._alphas: dict[str, set[float]] = {}
        for r in runs:
            self._alphas.setdefault(self._family_key(r), set()).add(r.alpha)

    def _family_key(self, run: RunConfig) -> str:
        return json.dumps([run.domain, list(run.fields), list(run.p), run.seed], sort_keys=True)

    def _get(self, run: RunConfig, h: float) -> Problem:
        if h not in self._cache:
            P = Problem.from_specs(build_domain(run.domain), h, run.fields, run.p, seed=run.seed, threads=self.threads)
            P.alpha_hint = tuple(sorted(self._alphas.get(self._family, ())))
            self._cache[h] = P
        return self._cache[h]

    def problem(self, run: RunConfig) -> Problem:
        key = self._family_key(run)
        if key != self._family:
            self._family, self._cache = key, {}
        P = self._get(run, run.h)
        if P._fine is None:
            P._fine = self._get(run, run.h / 2)
        return P

    def options(self, run: RunConfig, problem: Problem) -> dict:
        opts = {k: v for k, v in run.options.items() if k != "perturbation"}
        if "perturbation" in run.options:
            rng = np.random.default_rng(run.seed + 1)
            opts["perturbation"] = tuple(
                build_generator(s, problem.raster, rng) for s in run.options["perturbation"]
            )
        opts["seed"] = run.seed
        return opts


def field_name(run: RunConfig, j: int) -> str:
    spec = run.fields[j]
    return f"{run.domain['kind']}-h{1 / run.h:g}-{spec.get('kind', 'field')}-{_digest([run.domain, run.h, spec, run.seed])}"


def run_config(
    runs: Sequence[RunConfig], out: str | Path, command: str = "verify", threads: int = 1
) -> tuple[int, list[dict]]:
    """Execute runs; returns (exit status, report entries)."""
    out = Path(out)
    runner = Runner(threads, runs)
    entries: list[dict] = []
    written: set[str] = set()
    for run in runs:
        t0 = time.perf_counter()
        P = runner.problem(run)
        for j in range(run.m):
            name = field_name(run, j)
            if name not in written:
                write_field(out / "fields" / f"{name}.csv", P.fields.slots[j], run.domain)
                written.add(name)
        if command == "gen":
            continue
        if command == "compute" or run.checks:
            write_field(out / "maximal" / f"{run.name}.csv", P.maximal(run.alpha).value, run.domain)
        if command == "compute":
            continue
        opts = runner.options(run, P)
        for check in run.checks:
            rep = run_check(check, P, run.alpha, **opts)
            entries.append({"run": run.name, **rep.to_dict()})
        log.info("%s: %d checks in %.1fs", run.name, len(run.checks), time.perf_counter() - t0)
    status = EXIT_OK
    if command == "verify" and entries:
        write_reports(out / "reports.json", entries)
        summary = emit_report(entries)
        with open(out / "summary.txt", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(summary)
        if not all(e["pass"] for e in entries):
            status = EXIT_FAIL
    return status, entries


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxreg", description="Local multilinear fractional maximal operators on lattices.")
    ap.add_argument("--version", action="version", version=f"maxreg {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("gen", "sample the configured fields and write fields/*.csv"),
        ("compute", "also write the maximal functions to maximal/*.csv"),
        ("verify", "run the configured checks; write reports.json and summary.txt"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run or suite config")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
        p.add_argument("--threads", default=None, help="worker count or 'auto' (env MAXREG_THREADS)")
        p.add_argument("--quiet", action="store_true")
    p = sub.add_parser("report", help="print the summary table of an existing reports.json")
    p.add_argument("path", nargs="?", default=None, help="reports.json or a directory holding it")
    p.add_argument("--out", default=None, help="directory holding reports.json")
    p.add_argument("--quiet", action="store_true")
    return ap


def _cmd_report(args) -> int:
    target = Path(args.path or args.out or ".")
    if target.is_dir():
        target = target / "reports.json"
    try:
        entries = read_reports(target)
        text = emit_report(entries)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK if all(e["pass"] for e in entries) else EXIT_FAIL


def main(argv: Iterable[str] | None = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    if args.command == "report":
        return _cmd_report(args)
    try:
        runs = load_config(args.config)
    except ConfigHypothesisError as e:
        print(f"hypothesis error: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    try:
        threads = resolve_threads(args.threads, runs[0].threads if runs else 1)
    except argparse.ArgumentTypeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    out = args.out or (runs[0].output_dir if runs else "out")
    try:
        status, entries = run_config(runs, out, args.command, threads)
    except (VerificationError, HypothesisError) as e:
        print(f"hypothesis error: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    if args.command == "verify" and entries and not args.quiet:
        sys.stdout.write(emit_report(entries))
    return status


if __name__ == "__main__":
    sys.exit(main())
