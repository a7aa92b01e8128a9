"""Ball and sphere stencils on the lattice, averages, radial profiles.

Summation order is canonical everywhere: a ball is the union of rings
``(k-1)^2 < |o|^2 <= k^2`` (ring 1 also holds the origin) taken in increasing k,
each ring in lexicographic offset order. Sums are strictly sequential in that
order, so any route that visits the same offsets reproduces the same bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .lattice import Raster, ScalarField, unit_ball_volume

# The supremum runs over the open interval (0, delta); the top-end radius is
# evaluated at delta*(1 - RIM_GAP) so it stays strictly inside with a margin
# far above rounding error.
RIM_GAP = 1e-12


class StencilError(ValueError):
    pass


@lru_cache(maxsize=None)
def _box_offsets(k: int, n: int) -> np.ndarray:
    g = np.arange(-k, k + 1)
    grids = np.meshgrid(*([g] * n), indexing="ij")
    return np.stack([x.ravel() for x in grids], axis=1)  # lexicographic


@lru_cache(maxsize=None)
def ring_offsets(k: int, n: int) -> np.ndarray:
    """Offsets with (k-1)^2 < |o|^2 <= k^2, lexicographic; ring 1 includes the origin."""
    if k < 1:
        raise StencilError("ring index must be >= 1")
    box = _box_offsets(k, n)
    s = (box ** 2).sum(axis=1)
    lo = -1 if k == 1 else (k - 1) ** 2
    out = box[(s > lo) & (s <= k * k)]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def shell_offsets(k: int, n: int) -> np.ndarray:
    """Offsets with k - 1/2 < |o| <= k + 1/2, lexicographic."""
    box = _box_offsets(k + 1, n)
    s4 = 4 * (box ** 2).sum(axis=1)
    out = box[(s4 > (2 * k - 1) ** 2) & (s4 <= (2 * k + 1) ** 2)]
    out.setflags(write=False)
    return out


def ball_offsets_sq(limit: float, n: int) -> np.ndarray:
    """Canonically ordered offsets with |o|^2 <= limit (limit in grid units squared)."""
    kmax = max(1, math.isqrt(int(math.floor(limit))) + 1) if limit >= 0 else 0
    parts = []
    for k in range(1, kmax + 1):
        ring = ring_offsets(k, n)
        keep = ring[(ring ** 2).sum(axis=1) <= limit]
        if len(keep):
            parts.append(keep)
    if not parts:
        return np.zeros((0, n), dtype=int)
    return np.concatenate(parts)


@dataclass(frozen=True)
class BallStencil:
    radius: float
    h: float
    offsets: np.ndarray = field(repr=False)
    shell: bool = False

    @property
    def n(self) -> int:
        return self.offsets.shape[1]

    @property
    def discrete_measure(self) -> int:
        return len(self.offsets)

    @property
    def continuum_measure(self) -> float:
        w = unit_ball_volume(self.n)
        if self.shell:
            return self.n * w * self.radius ** (self.n - 1)
        return w * self.radius ** self.n


@lru_cache(maxsize=4096)
def _ball_cached(key: int, n: int) -> np.ndarray:
    off = ball_offsets_sq(float(key), n)
    off.setflags(write=False)
    return off


def ball_stencil(r: float, h: float, n: int) -> BallStencil:
    """Lattice ball {o : |o| h <= r}; cached by the integer bound on |o|^2."""
    s = r / h
    key = int(math.floor(s * s + 1e-9))
    return BallStencil(r, h, _ball_cached(key, n))


def sphere_stencil(r: float, h: float, n: int) -> BallStencil:
    k = int(round(r / h))
    return BallStencil(r, h, shell_offsets(k, n), shell=True)


def radius_ladder(delta: float, h: float) -> list[float]:
    """Admissible radii {k h : k >= 1, k h < delta}, compared against the rim radius.

    The rim gap keeps a rounded-up delta from admitting a ball that reaches the boundary.
    """
    lim = rim_radius(delta)
    out = []
    k = 1
    while k * h < lim:
        out.append(k * h)
        k += 1
    return out


def ladder_counts(delta: np.ndarray, h: float) -> np.ndarray:
    """Vectorized len(radius_ladder(delta, h)); same float comparisons."""
    lim = rim_radius(np.asarray(delta, dtype=float))
    k = np.floor(lim / h).astype(np.int64)
    k = np.maximum(k, 0)
    for _ in range(3):
        k = np.where((k > 0) & (k * h >= lim), k - 1, k)
        k = np.where((k + 1) * h < lim, k + 1, k)
    return k


def rim_radius(delta):
    return delta * (1.0 - RIM_GAP)


def rim_limit(delta, h):
    """Squared grid-unit bound of the rim ball."""
    s = rim_radius(delta) / h
    return s * s


def _seq_sum(values: np.ndarray) -> float:
    if len(values) == 0:
        return 0.0
    return float(np.add.accumulate(values)[-1])


def _gather(f: ScalarField, index: Sequence[int], offsets: np.ndarray, require_inside=True) -> np.ndarray:
    idx = np.asarray(index)[None, :] + offsets
    shape = np.array(f.raster.grid.shape)
    if np.any(idx < 0) or np.any(idx >= shape):
        raise StencilError("stencil leaves the grid")
    t = tuple(idx.T)
    if require_inside and not np.all(f.raster.inside[t]):
        raise StencilError("stencil touches points outside the domain")
    return f.values[t]


def _check_point(f: ScalarField, x: Sequence[int]) -> tuple[int, ...]:
    x = tuple(int(i) for i in x)
    if not f.raster.inside[x]:
        raise IndexError(f"grid point {x} is outside the domain")
    return x


def ball_average(f: ScalarField, x: Sequence[int], r: float) -> float:
    x = _check_point(f, x)
    h = f.raster.h
    if r < h:
        raise StencilError("empty stencil: radius below grid spacing")
    if r >= f.raster.delta[x]:
        raise StencilError("radius must be below delta(x)")
    st = ball_stencil(r, h, f.raster.n)
    return _seq_sum(_gather(f, x, st.offsets)) / st.discrete_measure


def sphere_average(f: ScalarField, x: Sequence[int], r: float) -> float:
    """Mean of f over the lattice shell (r - h/2, r + h/2]; shell points outside the domain are dropped."""
    x = _check_point(f, x)
    h = f.raster.h
    if r < 2 * h:
        raise StencilError("shell radius must be at least 2h")
    if r >= f.raster.delta[x]:
        raise StencilError("radius must be below delta(x)")
    st = sphere_stencil(r, h, f.raster.n)
    idx = np.asarray(x)[None, :] + st.offsets
    t = tuple(idx.T)
    keep = f.raster.inside[t]
    if not keep.any():
        raise StencilError("empty shell")
    return _seq_sum(f.values[t][keep]) / int(keep.sum())


@dataclass(frozen=True)
class RadialProfile:
    """u(r) = r^alpha prod A_{x,r}(|f_i|) over the ladder plus the top-end radius."""

    point: tuple[int, ...]
    radii: tuple[float, ...]
    values: tuple[float, ...]
    value_at_zero: float
    has_rim: bool

    @property
    def ladder_radii(self) -> tuple[float, ...]:
        return self.radii[:-1] if self.has_rim else self.radii

    def entries(self) -> list[tuple[float, float]]:
        return [(0.0, self.value_at_zero)] + list(zip(self.radii, self.values))

    @property
    def maximum(self) -> float:
        return max(v for _, v in self.entries())

    def to_csv(self) -> str:
        return "r,u\n" + "".join(f"{r!r},{u!r}\n" for r, u in self.entries())


def _profile_product(w: float, sums: Sequence[float], count: int) -> float:
    u = w
    for s in sums:
        u = u * (s / count)
    return u


def radial_profile(fields, x: Sequence[int], alpha: float) -> RadialProfile:
    """Profile at one point; every radius recomputed from its own stencil."""
    slots = fields.slots
    x = _check_point(slots[0], x)
    raster = slots[0].raster
    h, n = raster.h, raster.n
    delta = float(raster.delta[x])
    radii, values = [], []
    for k, r in enumerate(radius_ladder(delta, h), start=1):
        off = _ball_cached(k * k, n)
        sums = [_seq_sum(_gather(f, x, off)) for f in slots]
        radii.append(r)
        values.append(_profile_product(r ** alpha, sums, len(off)))
    rim_r = rim_radius(delta)
    has_rim = rim_r > (radii[-1] if radii else 0.0)
    if has_rim:
        off = ball_offsets_sq(rim_limit(delta, h), n)
        sums = [_seq_sum(_gather(f, x, off)) for f in slots]
        radii.append(rim_r)
        values.append(_profile_product(rim_r ** alpha, sums, len(off)))
    if alpha == 0:
        v0 = 1.0
        for f in slots:
            v0 = v0 * f.values[x]
    else:
        v0 = 0.0
    return RadialProfile(x, tuple(radii), tuple(values), float(v0), has_rim)


def padded(arr: np.ndarray, pad: int) -> np.ndarray:
    return np.pad(arr, pad) if pad > 0 else arr


def _shift(P: np.ndarray, o: np.ndarray, lo: Sequence[int], hi: Sequence[int], pad: int):
    return P[tuple(slice(a + pad + d, b + pad + d) for a, b, d in zip(lo, hi, o))]


def _bbox(mask: np.ndarray):
    if not mask.any():
        return None
    lo, hi = [], []
    for ax in range(mask.ndim):
        other = tuple(i for i in range(mask.ndim) if i != ax)
        proj = mask.any(axis=other) if other else mask
        nz = np.flatnonzero(proj)
        lo.append(int(nz[0]))
        hi.append(int(nz[-1]) + 1)
    return lo, hi


def ball_averages_at(arrays: Sequence[np.ndarray], raster: Raster, rung: np.ndarray) -> list[np.ndarray]:
    """Per-point ball averages at radius rung[x]*h (rung 0 gives the point value).

    Accumulates ring by ring over the whole grid; ``rung`` must keep every ball
    inside the domain (rung[x]*h < delta(x)).
    """
    inside = raster.inside
    rung = np.where(inside, rung, 0).astype(np.int64)
    n = raster.n
    K = int(rung.max(initial=0))
    out = [np.where(inside & (rung == 0), a, 0.0) for a in arrays]
    if K == 0:
        return out
    pad = K
    P = [padded(a, pad) for a in arrays]
    S = [np.zeros(inside.shape) for _ in arrays]
    count = 0
    for k in range(1, K + 1):
        need = rung >= k
        box = _bbox(need)
        if box is None:
            break
        lo, hi = box
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        ring = ring_offsets(k, n)
        for s, p in zip(S, P):
            acc = s[sl]
            for o in ring:
                acc += _shift(p, o, lo, hi, pad)
        count += len(ring)
        sel = rung == k
        for o_arr, s in zip(out, S):
            o_arr[sel] = s[sel] / count
    return out


def fractional_average_field(fields, t: float, alpha: float) -> ScalarField:
    """(t delta)^alpha prod A_{x, r}(|f_i|) with r = t delta snapped down to the ladder."""
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    raster = fields.raster
    delta = raster.delta
    h = raster.h
    inside = raster.inside
    rad = t * delta
    rung = np.where(inside, np.floor(rad / h).astype(np.int64), 0)
    rung = np.where(rung * h > rad, rung - 1, rung)
    rung = np.where((rung + 1) * h <= rad, rung + 1, rung)
    avgs = ball_averages_at([f.values for f in fields.slots], raster, rung)
    val = np.where(inside, rad, 0.0) ** alpha if alpha != 0 else np.ones(inside.shape)
    for a in avgs:
        val = val * a
    if alpha > 0:
        val = np.where(rung == 0, 0.0, val)
    return ScalarField(raster, np.where(inside, val, 0.0))


@lru_cache(maxsize=1024)
def _smooth_weights(R: float, n: int, shell: bool) -> tuple[np.ndarray, np.ndarray]:
    off = ball_offsets_sq((R + 1.0) ** 2, n)
    d = np.sqrt((off ** 2).sum(axis=1))
    if shell:
        w = np.maximum(0.0, 1.0 - np.abs(d - R))
    else:
        w = np.clip(R - d + 0.5, 0.0, 1.0)
    keep = w > 0
    off, w = off[keep], w[keep]
    off.setflags(write=False)
    w.setflags(write=False)
    return off, w


def _smooth_mean(f: ScalarField, x, r: float, shell: bool, values: np.ndarray | None = None) -> float:
    x = _check_point(f, x)
    h = f.raster.h
    if r < 2 * h:
        raise StencilError("quadrature radius must be at least 2h")
    off, w = _smooth_weights(round(r / h, 12), f.raster.n, shell)
    vals = _gather(f, x, off) if values is None else values
    return _seq_sum(w * vals) / _seq_sum(w)


def smooth_ball_average(f: ScalarField, x: Sequence[int], r: float) -> float:
    """Ball mean with partial-volume boundary weights clip(r/h - |o| + 1/2, 0, 1).

    Second-order quadrature of the continuum mean; used where lattice-boundary
    noise of the plain stencil would swamp a difference of averages.
    """
    return _smooth_mean(f, x, r, shell=False)


def smooth_sphere_average(f: ScalarField, x: Sequence[int], r: float) -> float:
    """Sphere mean with hat weights max(0, 1 - ||o| - r/h|)."""
    return _smooth_mean(f, x, r, shell=True)


def smooth_ball_weights(r: float, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    return _smooth_weights(round(r / h, 12), n, False)
