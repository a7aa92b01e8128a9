"""Export radial profiles and argmax radii for one run of a config.

Writes profiles/<i>_<j>.csv (columns r,u) for the requested grid points, the
maximal function as a CSV field, and argmax.json mapping each flat grid index
to its near-maximizing radii.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from maxreg.averaging import radial_profile
from maxreg.config import load_config
from maxreg.io import write_field
from maxreg.verify import Problem


def parse_point(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--run", default=None, help="run name (default: first run)")
    ap.add_argument("--point", action="append", type=parse_point, default=[], help="grid index such as 32,32; repeatable")
    ap.add_argument("--out", default="out/profiles")
    args = ap.parse_args()

    runs = load_config(args.config)
    run = next((r for r in runs if r.name == args.run), None) if args.run else runs[0]
    if run is None:
        ap.error(f"no run named {args.run!r}")
    P = Problem.from_specs(run.build_domain(), run.h, run.fields, run.p, seed=run.seed)
    out = Path(args.out) / run.name
    (out / "profiles").mkdir(parents=True, exist_ok=True)

    res = P.maximal(run.alpha)
    write_field(out / "maximal.csv", res.value, run.domain)
    with open(out / "argmax.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(res.argmax_json(), fh, indent=1)
        fh.write("\n")

    points = args.point or [tuple(int(v) for v in P.raster.indices()[len(P.raster.indices()) // 2])]
    for x in points:
        prof = radial_profile(P.fields, x, run.alpha)
        path = out / "profiles" / f"{'_'.join(map(str, x))}.csv"
        path.write_text(prof.to_csv(), encoding="utf-8")
        print(f"{path}: {len(prof.radii)} radii, max {prof.maximum:.6g}, argmax {res.argmax_radii(x)}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
