import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maxreg.lattice import MultiField, ScalarField, build_domain, rasterize

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
SUITE_CONFIG = ROOT / "configs" / "standard_suite.json"

SQUARE = {"kind": "rectangle", "params": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]}}
DISK = {"kind": "disk", "params": {"center": [0.0, 0.0], "radius": 1.0}}


@pytest.fixture(scope="session")
def square():
    return build_domain(SQUARE)


@pytest.fixture(scope="session")
def disk():
    return build_domain(DISK)


@pytest.fixture(scope="session")
def sq32(square):
    return rasterize(square, 1 / 32)


@pytest.fixture(scope="session")
def sq16(square):
    return rasterize(square, 1 / 16)


def random_multifield(raster, m, seed):
    rng = np.random.default_rng(seed)
    return MultiField(tuple(ScalarField(raster, rng.random(raster.grid.shape)) for _ in range(m)))


def coord_field(raster, fn):
    coords = raster.grid.coords()
    return ScalarField(raster, np.where(raster.inside, fn(*coords), 0.0))


@pytest.fixture(scope="session")
def standard_suite(tmp_path_factory):
    """The shipped suite run once through the CLI at one thread; shared across modules."""
    from maxreg.cli import main

    out = tmp_path_factory.mktemp("suite_t1")
    code = main(["verify", "--config", str(SUITE_CONFIG), "--out", str(out), "--threads", "1", "--quiet"])
    with open(out / "reports.json", encoding="utf-8") as fh:
        reports = json.load(fh)
    return {"exit": code, "out": out, "reports": reports}


def exact_maximal(F, x, alpha):
    """sup of the lattice profile at x in rational arithmetic (radius weights taken as stored floats)."""
    from fractions import Fraction

    from maxreg.averaging import ball_offsets_sq, radius_ladder, rim_limit, rim_radius

    raster = F.raster
    h, n = raster.h, raster.n
    x = np.asarray(x)
    delta = float(raster.delta[tuple(x)])
    stencils = [(r, ball_offsets_sq(k * k, n)) for k, r in enumerate(radius_ladder(delta, h), start=1)]
    stencils.append((rim_radius(delta), ball_offsets_sq(rim_limit(delta, h), n)))
    best = Fraction(0)
    if alpha == 0:
        best = Fraction(1)
        for f in F.slots:
            best *= Fraction(float(f.values[tuple(x)]))
    for r, off in stencils:
        u = Fraction(float(r) ** alpha) if alpha else Fraction(1)
        t = tuple((x + off).T)
        for f in F.slots:
            u *= sum(Fraction(float(v)) for v in f.values[t]) / len(off)
        best = max(best, u)
    return best


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
