"""Test-field generators with closed-form gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .lattice import Raster, ScalarField, VectorField, build_domain


class GeneratorError(ValueError):
    pass


def _diff(coords, center):
    return [x - c for x, c in zip(coords, center)]


@dataclass(frozen=True)
class Constant:
    c: float
    smooth = True

    def value(self, coords):
        return np.full(np.shape(coords[0]), float(self.c))

    def gradient(self, coords):
        return [np.zeros(np.shape(coords[0])) for _ in coords]


@dataclass(frozen=True)
class Gaussian:
    """amplitude * exp(-|y - center|^2 / (2 width^2))"""

    center: tuple[float, ...]
    width: float
    amplitude: float = 1.0
    smooth = True

    def value(self, coords):
        r2 = sum(d * d for d in _diff(coords, self.center))
        return self.amplitude * np.exp(-r2 / (2 * self.width ** 2))

    def gradient(self, coords):
        v = self.value(coords)
        return [-v * d / self.width ** 2 for d in _diff(coords, self.center)]


@dataclass(frozen=True)
class Trig:
    """offset + amplitude * prod_l cos(pi k_l y_l)"""

    frequencies: tuple[float, ...]
    amplitude: float = 1.0
    offset: float = 0.0
    smooth = True

    def value(self, coords):
        prod = 1.0
        for x, k in zip(coords, self.frequencies):
            prod = prod * np.cos(math.pi * k * x)
        return self.offset + self.amplitude * prod

    def gradient(self, coords):
        out = []
        for l, (xl, kl) in enumerate(zip(coords, self.frequencies)):
            g = -self.amplitude * math.pi * kl * np.sin(math.pi * kl * xl)
            for j, (x, k) in enumerate(zip(coords, self.frequencies)):
                if j != l:
                    g = g * np.cos(math.pi * k * x)
            out.append(g)
        return out


@dataclass(frozen=True)
class Bump:
    """amplitude * exp(1 - 1/(1 - s^2)) for s = |y - center| / radius < 1, else 0."""

    center: tuple[float, ...]
    radius: float
    amplitude: float = 1.0
    smooth = True

    def _s2(self, coords):
        return sum(d * d for d in _diff(coords, self.center)) / self.radius ** 2

    def value(self, coords):
        s2 = self._s2(coords)
        inside = s2 < 1
        safe = np.where(inside, 1 - s2, 1.0)
        return np.where(inside, self.amplitude * np.exp(1 - 1 / safe), 0.0)

    def gradient(self, coords):
        s2 = self._s2(coords)
        inside = s2 < 1
        safe = np.where(inside, 1 - s2, 1.0)
        v = self.value(coords)
        fac = np.where(inside, -2 * v / safe ** 2 / self.radius ** 2, 0.0)
        return [fac * d for d in _diff(coords, self.center)]


@dataclass(frozen=True)
class Indicator:
    region: Mapping[str, Any]
    smooth = False

    def value(self, coords):
        dom = build_domain(self.region)
        return dom.contains(coords).astype(float)

    def gradient(self, coords):
        return [np.zeros(np.shape(coords[0])) for _ in coords]


@dataclass(frozen=True)
class Sum:
    terms: tuple

    @property
    def smooth(self):
        return all(t.smooth for t in self.terms)

    def value(self, coords):
        return sum(t.value(coords) for t in self.terms)

    def gradient(self, coords):
        gs = [t.gradient(coords) for t in self.terms]
        return [sum(g[i] for g in gs) for i in range(len(coords))]


def _vec(x, n=None) -> tuple[float, ...]:
    v = (float(x),) if np.isscalar(x) else tuple(float(c) for c in x)
    if n is not None and len(v) != n:
        raise GeneratorError(f"expected a {n}-vector, got {x!r}")
    return v


def _random_center(rng: np.random.Generator, raster: Raster, margin: float):
    lo, hi = raster.domain.bounds
    for _ in range(10_000):
        c = rng.uniform(lo, hi)
        d = raster.domain.distance_to_complement([np.array([ci]) for ci in c])
        if raster.domain.contains([np.array([ci]) for ci in c])[0] and d[0] > margin:
            return tuple(float(x) for x in c)
    raise GeneratorError("could not place a random center")


def build_generator(spec: Mapping[str, Any], raster: Raster | None = None, rng: np.random.Generator | None = None):
    kind = spec.get("kind")
    n = raster.n if raster is not None else None

    def center(key="center", margin=0.0):
        c = spec.get(key)
        if c == "random":
            if raster is None or rng is None:
                raise GeneratorError("random placement needs a raster and a seed")
            return _random_center(rng, raster, margin)
        return _vec(c, n)

    if kind == "constant":
        return Constant(float(spec.get("c", spec.get("value", 1.0))))
    if kind == "gaussian":
        w = float(spec["width"])
        if not w > 0:
            raise GeneratorError("gaussian width must be positive")
        return Gaussian(center(margin=w), w, float(spec.get("amplitude", 1.0)))
    if kind == "trig":
        return Trig(_vec(spec["frequencies"], n), float(spec.get("amplitude", 1.0)), float(spec.get("offset", 0.0)))
    if kind == "bump":
        rad = float(spec["radius"])
        if not rad > 0:
            raise GeneratorError("bump radius must be positive")
        return Bump(center(margin=rad), rad, float(spec.get("amplitude", 1.0)))
    if kind == "indicator":
        region = spec["region"]
        build_domain(region)
        return Indicator(region)
    if kind == "sum":
        return Sum(tuple(build_generator(t, raster, rng) for t in spec["terms"]))
    raise GeneratorError(f"unknown generator kind {kind!r}")


def _on_inside(raster: Raster, fn) -> list[np.ndarray]:
    coords = [c[raster.inside] for c in raster.grid.coords()]
    vals = fn(coords)
    single = isinstance(vals, np.ndarray)
    out = []
    for v in ([vals] if single else vals):
        full = np.zeros(raster.grid.shape)
        full[raster.inside] = v
        out.append(full)
    return out


def sample(gen, raster: Raster) -> ScalarField:
    """Nonnegative slot values |g| on the inside points."""
    (v,) = _on_inside(raster, gen.value)
    return ScalarField(raster, np.abs(v))


def sample_gradient(gen, raster: Raster) -> VectorField:
    """Gradient of |g| (sign(g) times the analytic gradient)."""
    (v,) = _on_inside(raster, gen.value)
    sign = np.sign(v)
    comps = _on_inside(raster, gen.gradient)
    return VectorField(tuple(ScalarField(raster, sign * c) for c in comps))


def generate_field(spec: Mapping[str, Any], raster: Raster, seed: int = 0) -> ScalarField:
    rng = np.random.default_rng(seed)
    return sample(build_generator(spec, raster, rng), raster)


@dataclass(frozen=True)
class Linear:
    """y -> y_axis; averages of it are exact on symmetric stencils."""

    axis: int
    smooth = True

    def value(self, coords):
        return np.array(coords[self.axis], dtype=float)

    def gradient(self, coords):
        return [np.full(np.shape(coords[0]), 1.0 if i == self.axis else 0.0) for i in range(len(coords))]
