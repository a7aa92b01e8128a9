"""Bounded domains, their uniform rasterization and the distance-to-complement field."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

DOMAIN_KINDS = ("interval", "rectangle", "disk", "annulus", "rect_union")


class GeometryError(ValueError):
    """Degenerate or unsupported domain geometry."""


class RasterError(ValueError):
    """Grid spacing incompatible with the domain."""


def _as_vec(x: Any, name: str) -> tuple[float, ...]:
    if np.isscalar(x):
        x = [x]
    v = tuple(float(c) for c in x)
    if not v or not all(math.isfinite(c) for c in v):
        raise GeometryError(f"{name} must be a nonempty finite vector")
    return v


@dataclass(frozen=True)
class Domain:
    """A bounded open subset of R^n from a small catalog with closed-form geometry.

    ``params`` holds normalized parameters:
      interval / rectangle: ``lo``, ``hi``
      disk: ``center``, ``radius``
      annulus: ``center``, ``r_in``, ``r_out``
      rect_union: ``rects`` as a tuple of (lo, hi) pairs (2-D only)
    """

    kind: str
    params: Mapping[str, Any]
    n: int

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        if self.kind in ("interval", "rectangle"):
            return np.array(p["lo"]), np.array(p["hi"])
        if self.kind in ("disk", "annulus"):
            c = np.array(p["center"])
            r = p["radius"] if self.kind == "disk" else p["r_out"]
            return c - r, c + r
        lo = np.min([r[0] for r in p["rects"]], axis=0)
        hi = np.max([r[1] for r in p["rects"]], axis=0)
        return lo, hi

    @property
    def measure(self) -> float:
        """Lebesgue measure |Omega|."""
        p = self.params
        if self.kind in ("interval", "rectangle"):
            return float(np.prod(np.subtract(p["hi"], p["lo"])))
        if self.kind == "disk":
            return unit_ball_volume(self.n) * p["radius"] ** self.n
        if self.kind == "annulus":
            return unit_ball_volume(self.n) * (p["r_out"] ** self.n - p["r_in"] ** self.n)
        return float(self._polygon.area)

    @cached_property
    def _polygon(self):
        import shapely
        from shapely.geometry import Polygon, box

        shape = shapely.union_all([box(*lo, *hi) for lo, hi in self.params["rects"]])
        if not isinstance(shape, Polygon):
            raise GeometryError("rect_union components must overlap or share an edge")
        return shape

    def contains(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """Strict interior test; boundary points are outside."""
        p = self.params
        if self.kind in ("interval", "rectangle"):
            inside = np.ones(np.shape(coords[0]), dtype=bool)
            for x, lo, hi in zip(coords, p["lo"], p["hi"]):
                inside &= (x > lo) & (x < hi)
            return inside
        if self.kind in ("disk", "annulus"):
            rho = _radius_from(coords, p["center"])
            if self.kind == "disk":
                return rho < p["radius"]
            return (rho > p["r_in"]) & (rho < p["r_out"])
        import shapely

        return shapely.contains_xy(self._polygon, coords[0], coords[1])

    def distance_to_complement(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """Euclidean distance to R^n minus Omega for points of Omega."""
        p = self.params
        if self.kind in ("interval", "rectangle"):
            d = None
            for x, lo, hi in zip(coords, p["lo"], p["hi"]):
                dx = np.minimum(x - lo, hi - x)
                d = dx if d is None else np.minimum(d, dx)
            return d
        if self.kind in ("disk", "annulus"):
            rho = _radius_from(coords, p["center"])
            if self.kind == "disk":
                return p["radius"] - rho
            return np.minimum(rho - p["r_in"], p["r_out"] - rho)
        import shapely

        pts = shapely.points(np.ravel(coords[0]), np.ravel(coords[1]))
        d = shapely.distance(self._polygon.boundary, pts)
        return np.asarray(d, dtype=float).reshape(np.shape(coords[0]))


def _radius_from(coords: Sequence[np.ndarray], center: Sequence[float]) -> np.ndarray:
    s = None
    for x, c in zip(coords, center):
        t = (x - c) ** 2
        s = t if s is None else s + t
    return np.sqrt(s)


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def build_domain(spec: Mapping[str, Any]) -> Domain:
    """Validate a ``{"kind": ..., "params": {...}}`` description and build the Domain."""
    kind = spec.get("kind")
    params = dict(spec.get("params", {}))
    if kind not in DOMAIN_KINDS:
        raise GeometryError(f"unknown domain kind {kind!r}")

    if kind in ("interval", "rectangle"):
        lo, hi = _as_vec(params["lo"], "lo"), _as_vec(params["hi"], "hi")
        if len(lo) != len(hi):
            raise GeometryError("lo/hi dimension mismatch")
        if any(b <= a for a, b in zip(lo, hi)):
            raise GeometryError("degenerate geometry: empty side")
        if kind == "interval" and len(lo) != 1:
            raise GeometryError("interval must be one-dimensional")
        norm = {"lo": lo, "hi": hi}
        n = len(lo)
    elif kind in ("disk", "annulus"):
        c = _as_vec(params["center"], "center")
        n = len(c)
        if kind == "disk":
            r = float(params["radius"])
            if not r > 0:
                raise GeometryError("degenerate geometry: radius must be positive")
            norm = {"center": c, "radius": r}
        else:
            r_in, r_out = float(params["r_in"]), float(params["r_out"])
            if not (r_in > 0 and r_out > r_in):
                raise GeometryError("degenerate geometry: need 0 < r_in < r_out")
            norm = {"center": c, "r_in": r_in, "r_out": r_out}
    else:
        rects = []
        for lo, hi in params["rects"]:
            lo, hi = _as_vec(lo, "lo"), _as_vec(hi, "hi")
            if len(lo) != 2 or len(hi) != 2:
                raise GeometryError("rect_union supports 2-D rectangles only")
            if any(b <= a for a, b in zip(lo, hi)):
                raise GeometryError("degenerate geometry: empty rectangle")
            rects.append((lo, hi))
        if not rects:
            raise GeometryError("rect_union needs at least one rectangle")
        norm = {"rects": tuple(rects)}
        n = 2
    if n not in (1, 2, 3):
        raise GeometryError("dimension must be 1, 2 or 3")
    dom = Domain(kind, norm, n)
    if kind == "rect_union":
        dom._polygon  # connectivity check
    return dom


@dataclass(frozen=True)
class Grid:
    h: float
    origin: tuple[float, ...]
    shape: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.shape)

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.h * np.arange(self.shape[i])

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.axis(i) for i in range(self.n)), indexing="ij")

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.array([self.origin[i] + self.h * index[i] for i in range(self.n)])

    def to_dict(self) -> dict:
        return {"h": self.h, "origin": list(self.origin), "shape": list(self.shape)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Grid":
        return cls(float(d["h"]), tuple(float(v) for v in d["origin"]), tuple(int(v) for v in d["shape"]))


@dataclass(frozen=True, eq=False)
class Raster:
    """Grid plus strict-interior mask of a domain; owns the distance field."""

    domain: Domain
    grid: Grid
    inside: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def count(self) -> int:
        return int(self.inside.sum())

    @cached_property
    def delta(self) -> np.ndarray:
        d = np.zeros(self.grid.shape)
        coords = [c[self.inside] for c in self.grid.coords()]
        d[self.inside] = self.domain.distance_to_complement(coords)
        d.setflags(write=False)
        return d

    def indices(self) -> np.ndarray:
        """Row-major array of inside multi-indices, shape (count, n)."""
        return np.argwhere(self.inside)


def rasterize(domain: Domain, h: float) -> Raster:
    if not (h > 0 and math.isfinite(h)):
        raise RasterError("h must be positive")
    lo, hi = domain.bounds
    shape = tuple(int(math.ceil((b - a) / h - 1e-9)) + 1 for a, b in zip(lo, hi))
    grid = Grid(float(h), tuple(float(a) for a in lo), shape)
    if min(shape) < 3:
        raise RasterError("h too coarse: fewer than 3 grid points per axis")
    inside = np.asarray(domain.contains(grid.coords()), dtype=bool)
    if not inside.any():
        raise RasterError("h too coarse: no interior points")
    for ax in range(grid.n):
        other = tuple(i for i in range(grid.n) if i != ax)
        if np.count_nonzero(inside.any(axis=other) if other else inside) < 3:
            raise RasterError("h too coarse: fewer than 3 interior points on an axis")
    inside.setflags(write=False)
    return Raster(domain, grid, inside)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values on the inside points of a raster; stored full-grid with zeros outside."""

    raster: Raster
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.raster.grid.shape:
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(v[self.raster.inside])):
            raise ValueError("field has non-finite values inside the domain")
        v[~self.raster.inside] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def at(self, index: Sequence[int]) -> float:
        index = tuple(int(i) for i in index)
        if not self.raster.inside[index]:
            raise IndexError(f"grid point {index} is outside the domain")
        return float(self.values[index])

    def inside_values(self) -> np.ndarray:
        return self.values[self.raster.inside]

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.raster, fn(self.values))

    def __abs__(self) -> "ScalarField":
        return ScalarField(self.raster, np.abs(self.values))


@dataclass(frozen=True, eq=False)
class VectorField:
    components: tuple[ScalarField, ...]
    flagged: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        r = self.components[0].raster
        if any(c.raster is not r for c in self.components):
            raise ValueError("vector components must share one raster")

    @property
    def raster(self) -> Raster:
        return self.components[0].raster

    def magnitude(self) -> ScalarField:
        sq = sum(c.values ** 2 for c in self.components)
        return ScalarField(self.raster, np.sqrt(sq))


def distance_field(raster: Raster) -> ScalarField:
    return ScalarField(raster, raster.delta)


@dataclass(frozen=True, eq=False)
class MultiField:
    """An ordered tuple (f_1, ..., f_m) on one raster, stored as |f_j|.

    ``gradients`` optionally carries the gradient of each |f_j| (analytic when the
    generator knows it); slot-replacement helpers use it.
    """

    slots: tuple[ScalarField, ...]
    gradients: tuple[VectorField, ...] | None = None

    def __post_init__(self):
        if not self.slots:
            raise ValueError("MultiField needs at least one slot")
        r = self.slots[0].raster
        if any(s.raster is not r for s in self.slots):
            raise ValueError("all slots must share one raster")
        object.__setattr__(self, "slots", tuple(abs(s) for s in self.slots))
        if self.gradients is not None and len(self.gradients) != len(self.slots):
            raise ValueError("one gradient per slot")

    @property
    def m(self) -> int:
        return len(self.slots)

    @property
    def raster(self) -> Raster:
        return self.slots[0].raster

    def replace(self, i: int, f: ScalarField) -> "MultiField":
        slots = list(self.slots)
        slots[i] = f
        return MultiField(tuple(slots))

    def with_gradient_slot(self, l: int) -> "MultiField":
        """The vector with slot l replaced by |grad f_l|."""
        if self.gradients is None:
            raise ValueError("no gradients attached")
        return self.replace(l, self.gradients[l].magnitude())
