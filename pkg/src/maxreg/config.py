"""Run configuration: JSON in, validated dataclasses out.

A file holds either one run or ``{"runs": [...]}``; top-level keys other than
``runs`` act as defaults for every run. Errors carry the JSON pointer of the
offending value.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .generators import GeneratorError, build_generator
from .lattice import Domain, GeometryError, RasterError, build_domain, rasterize
from .sobolev import ExponentSet, HypothesisError, exponent_table
from .verify import CHECK_IDS

GENERATOR_KINDS = ("constant", "gaussian", "trig", "bump", "indicator", "sum")
RUN_KEYS = ("name", "domain", "h", "fields", "m", "alpha", "p", "checks", "options", "output_dir", "seed", "threads")
OPTION_KEYS = ("levels", "lambda", "samples", "t", "perturbation")

# a check runs only if one of these flags holds; alpha == 0 picks the first tuple for norm_bounds
CHECK_FLAGS = {
    "gradient_alpha0": ("thm21",),
    "gradient_fractional": ("thm22i",),
    "gradient_spherical": ("thm23",),
    "zero_boundary": ("sobolev0",),
    "continuity": ("continuity",),
}


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


class ConfigHypothesisError(ConfigError):
    """Exponent inputs or check hypotheses rejected before any compute."""


@dataclass(frozen=True)
class RunConfig:
    name: str
    domain: Mapping[str, Any]
    h: float
    fields: tuple
    alpha: float
    p: tuple[float, ...]
    checks: tuple[str, ...] = ()
    options: Mapping[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0
    threads: int | str = 1

    @property
    def m(self) -> int:
        return len(self.fields)

    def build_domain(self) -> Domain:
        return build_domain(self.domain)

    def exponents(self) -> ExponentSet:
        return exponent_table(self.m, self.build_domain().n, self.p, self.alpha)


def _ptr(*parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _number(v, where, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(where, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(where, f"expected a positive number, got {v!r}")
    return float(v)


def _check_generator(spec, where):
    if not isinstance(spec, Mapping):
        raise ConfigError(where, "generator spec must be an object")
    kind = spec.get("kind")
    if kind not in GENERATOR_KINDS:
        raise ConfigError(_ptr_join(where, "kind"), f"unknown generator kind {kind!r}")
    if kind == "sum":
        terms = spec.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigError(_ptr_join(where, "terms"), "sum needs a nonempty list of terms")
        for i, t in enumerate(terms):
            _check_generator(t, _ptr_join(where, "terms", i))


def _ptr_join(base: str, *parts) -> str:
    return base + _ptr(*parts)


def _parse_run(raw: Mapping[str, Any], where: str, index: int) -> RunConfig:
    for k in raw:
        if k not in RUN_KEYS:
            raise ConfigError(_ptr_join(where, k), "unknown key")
    for k in ("domain", "h", "fields", "p"):
        if k not in raw:
            raise ConfigError(_ptr_join(where, k), "missing required key")
    dom_spec = raw["domain"]
    try:
        dom = build_domain(dom_spec)
    except (GeometryError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(_ptr_join(where, "domain"), str(e)) from None
    h = _number(raw["h"], _ptr_join(where, "h"), positive=True)
    try:
        raster = rasterize(dom, h)
    except RasterError as e:
        raise ConfigError(_ptr_join(where, "h"), str(e)) from None

    fields = raw["fields"]
    if not isinstance(fields, list) or not fields:
        raise ConfigError(_ptr_join(where, "fields"), "expected a nonempty list of generator specs")
    for i, g in enumerate(fields):
        _check_generator(g, _ptr_join(where, "fields", i))
        try:
            build_generator(g, raster, None) if "random" not in json.dumps(g) else None
        except (GeneratorError, GeometryError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(_ptr_join(where, "fields", i), str(e)) from None
    m = raw.get("m", len(fields))
    if m != len(fields):
        raise ConfigError(_ptr_join(where, "m"), f"m = {m!r} but {len(fields)} fields given")

    p = raw["p"]
    if not isinstance(p, list) or len(p) != len(fields):
        raise ConfigError(_ptr_join(where, "p"), f"expected a list of {len(fields)} exponents")
    p = tuple(_number(x, _ptr_join(where, "p", i)) for i, x in enumerate(p))
    alpha = _number(raw.get("alpha", 0.0), _ptr_join(where, "alpha"))

    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        raise ConfigError(_ptr_join(where, "checks"), "expected a list of check ids")
    for i, c in enumerate(checks):
        if c not in CHECK_IDS:
            raise ConfigError(_ptr_join(where, "checks", i), f"unknown check id {c!r}")

    options = raw.get("options", {})
    if not isinstance(options, Mapping):
        raise ConfigError(_ptr_join(where, "options"), "expected an object")
    for k in options:
        if k not in OPTION_KEYS:
            raise ConfigError(_ptr_join(where, "options", k), "unknown option")
    if "perturbation" in options:
        pert = options["perturbation"]
        if not isinstance(pert, list) or len(pert) != len(fields):
            raise ConfigError(_ptr_join(where, "options", "perturbation"), "expected one generator spec per field")
        for i, g in enumerate(pert):
            _check_generator(g, _ptr_join(where, "options", "perturbation", i))

    threads = raw.get("threads", 1)
    if not (threads == "auto" or (isinstance(threads, int) and not isinstance(threads, bool) and threads >= 1)):
        raise ConfigError(_ptr_join(where, "threads"), "expected a positive integer or \"auto\"")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(_ptr_join(where, "seed"), "expected an integer")

    cfg = RunConfig(
        name=str(raw.get("name", f"run{index:03d}")),
        domain=dom_spec,
        h=h,
        fields=tuple(fields),
        alpha=alpha,
        p=p,
        checks=tuple(checks),
        options=dict(options),
        output_dir=str(raw.get("output_dir", "out")),
        seed=seed,
        threads=threads,
    )
    _validate_hypotheses(cfg, dom.n, where)
    return cfg


def _validate_hypotheses(cfg: RunConfig, n: int, where: str):
    try:
        exps = exponent_table(cfg.m, n, cfg.p, cfg.alpha)
    except HypothesisError as e:
        bad = [i for i, x in enumerate(cfg.p) if not 1 < x < math.inf]
        target = _ptr_join(where, "p", bad[0]) if bad else _ptr_join(where, "alpha")
        raise ConfigHypothesisError(target, str(e)) from None
    for i, c in enumerate(cfg.checks):
        flags = CHECK_FLAGS.get(c)
        if c == "norm_bounds":
            flags = ("bd1",) if cfg.alpha == 0 else ("tb_i", "tb_ii")
        if c == "gradient_fractional" and cfg.alpha < 1:
            raise ConfigHypothesisError(_ptr_join(where, "checks", i), "hypotheses unmet: needs alpha >= 1")
        if flags and not any(exps.flags[f] for f in flags):
            raise ConfigHypothesisError(
                _ptr_join(where, "checks", i), f"hypotheses unmet: {' or '.join(flags)} is false"
            )


def parse_config(data: Mapping[str, Any]) -> list[RunConfig]:
    if not isinstance(data, Mapping):
        raise ConfigError("", "config must be a JSON object")
    if "runs" in data:
        runs = data["runs"]
        if not isinstance(runs, list):
            raise ConfigError("/runs", "expected a list")
        defaults = {k: v for k, v in data.items() if k != "runs"}
        for k in defaults:
            if k not in RUN_KEYS:
                raise ConfigError(_ptr(k), "unknown key")
        out = []
        for i, r in enumerate(runs):
            if not isinstance(r, Mapping):
                raise ConfigError(_ptr("runs", i), "run must be an object")
            out.append(_parse_run({**defaults, **r}, _ptr("runs", i), i))
        names = [r.name for r in out]
        if len(set(names)) != len(names):
            dup = next(x for x in names if names.count(x) > 1)
            raise ConfigError("/runs", f"duplicate run name {dup!r}")
        return out
    return [_parse_run(data, "", 0)]


def load_config(path: str | Path) -> list[RunConfig]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError("", f"invalid JSON: {e}") from None
    return parse_config(data)
