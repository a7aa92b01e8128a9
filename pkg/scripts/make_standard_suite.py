"""Regenerate configs/standard_suite.json.

Unit square and unit disk, h in {1/64, 1/128}, the field corpus
{constant, two Gaussians, trig, compact bump}, m in {1, 2}, alpha in {0, 1, 1.5}.
Checks that compare h against h/2 run from the coarse grid; the pointwise
gradient check runs at both spacings.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from maxreg.sobolev import exponent_table

DOMAINS = {
    "sq": {"kind": "rectangle", "params": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]}},
    "dk": {"kind": "disk", "params": {"center": [0.0, 0.0], "radius": 1.0}},
}
CORPUS = {
    "sq": {
        "const": {"kind": "constant", "c": 1.0},
        "g1": {"kind": "gaussian", "center": [0.4, 0.55], "width": 0.15, "amplitude": 1.0},
        "g2": {"kind": "gaussian", "center": [0.65, 0.35], "width": 0.3, "amplitude": 2.0},
        "trig": {"kind": "trig", "frequencies": [1, 2], "offset": 1.5, "amplitude": 1.0},
        "bump": {"kind": "bump", "center": [0.5, 0.5], "radius": 0.3, "amplitude": 1.0},
    },
    "dk": {
        "const": {"kind": "constant", "c": 1.0},
        "g1": {"kind": "gaussian", "center": [-0.2, 0.1], "width": 0.3, "amplitude": 1.0},
        "g2": {"kind": "gaussian", "center": [0.3, -0.3], "width": 0.6, "amplitude": 2.0},
        "trig": {"kind": "trig", "frequencies": [0.5, 1], "offset": 1.5, "amplitude": 1.0},
        "bump": {"kind": "bump", "center": [0.0, 0.0], "radius": 0.6, "amplitude": 1.0},
    },
}
COMBOS = [("const",), ("g1",), ("g2",), ("trig",), ("bump",), ("g1", "g2"), ("g1", "trig"), ("const", "const"), ("g2", "bump")]
GAUSSIAN = {("g1",), ("g2",), ("g1", "g2")}
ALPHAS = (0.0, 1.0, 1.5)
P = 3.0
COARSE, FINE = 1 / 64, 1 / 128


def _alpha_tag(a: float) -> str:
    return f"{a:g}".replace(".", "p")


def suite() -> dict:
    runs = []
    for dk, dom in DOMAINS.items():
        for combo in COMBOS:
            fields = [CORPUS[dk][c] for c in combo]
            p = [P] * len(combo)
            for a in ALPHAS:
                flags = exponent_table(len(combo), 2, p, a).flags
                pointwise = "gradient_alpha0" if a == 0 else "gradient_fractional"
                coarse = [pointwise, "norm_bounds", "zero_boundary", "continuity", "argmax_stability"]
                if flags["thm23"]:
                    coarse.append("gradient_spherical")
                fine = [pointwise]
                if combo in GAUSSIAN:
                    fine.append("derivative_formula")
                if a == 0 and len(combo) == 1:
                    fine.append("calculus_identities")
                base = f"{dk}-{'+'.join(combo)}-a{_alpha_tag(a)}"
                for h, checks, tag in ((COARSE, coarse, "h64"), (FINE, fine, "h128")):
                    runs.append({"name": f"{base}-{tag}", "domain": dom, "h": h, "fields": fields,
                                 "alpha": a, "p": p, "checks": checks})
    return {"seed": 0, "threads": 1, "output_dir": "out/standard_suite", "runs": runs}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs" / "standard_suite.json"))
    args = ap.parse_args()
    data = suite()
    Path(args.out).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    n_checks = sum(len(r["checks"]) for r in data["runs"])
    print(f"wrote {args.out}: {len(data['runs'])} runs, {n_checks} checks")


if __name__ == "__main__":
    main()
