"""Local multilinear fractional maximal operators and their argmax radius sets."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .averaging import (
    _bbox,
    _shift,
    ladder_counts,
    padded,
    radial_profile,
    rim_limit,
    rim_radius,
    ring_offsets,
    shell_offsets,
)
from .lattice import MultiField, Raster, ScalarField

EXACT_TOL = 1e-9
STABILITY_TOL = 1e-3
CHUNK_ROWS = 64


def resolve_threads(threads: int | str | None = None) -> int:
    if threads is None:
        threads = os.environ.get("MAXREG_THREADS", 1)
    if threads == "auto":
        return os.cpu_count() or 1
    t = int(threads)
    if t < 1:
        raise ValueError("threads must be >= 1")
    return t


@dataclass(frozen=True, eq=False)
class MaxResult:
    """Maximal function plus its near-maximizing radii.

    Profile index i means radius i*h for 1 <= i <= ladder[x], the top-end radius
    for i = ladder[x] + 1 (when present) and r = 0 for i = 0.
    """

    value: ScalarField
    argmax_mask: np.ndarray = field(repr=False)  # (K+2, *shape) bool
    best: np.ndarray = field(repr=False)  # first exact maximizer index
    ladder: np.ndarray = field(repr=False)
    rim: np.ndarray = field(repr=False)  # top-end radius, nan where absent
    rel_tol: float
    alpha: float
    loose_mask: np.ndarray | None = field(default=None, repr=False)  # at STABILITY_TOL

    def at_tol(self, rel_tol: float) -> "MaxResult":
        """Same result with the argmax set taken at another stored tolerance."""
        if rel_tol == self.rel_tol:
            return self
        if rel_tol == STABILITY_TOL and self.loose_mask is not None:
            return replace(self, argmax_mask=self.loose_mask, rel_tol=rel_tol)
        raise ValueError(f"argmax set at rel_tol={rel_tol} was not stored")

    @property
    def raster(self) -> Raster:
        return self.value.raster

    def radius_of(self, index: Sequence[int], i: int) -> float:
        index = tuple(index)
        if i <= self.ladder[index]:
            return i * self.raster.h
        return float(self.rim[index])

    def argmax_radii(self, index: Sequence[int]) -> tuple[float, ...]:
        index = tuple(int(i) for i in index)
        if not self.raster.inside[index]:
            raise IndexError(f"grid point {index} is outside the domain")
        col = self.argmax_mask[(slice(None),) + index]
        return tuple(self.radius_of(index, int(i)) for i in np.flatnonzero(col))

    def best_radius(self) -> np.ndarray:
        """Radius of the first exact maximizer, per grid point."""
        h = self.raster.h
        r = np.where(self.best <= self.ladder, self.best * h, self.rim)
        return np.where(self.raster.inside, r, 0.0)

    def radius_table(self) -> np.ndarray:
        return self._radius_table

    @cached_property
    def _radius_table(self) -> np.ndarray:
        K2 = self.argmax_mask.shape[0]
        i = np.arange(K2).reshape((K2,) + (1,) * self.raster.n)
        t = np.where(i <= self.ladder, i * self.raster.h, self.rim)
        t.setflags(write=False)
        return t

    def argmax_json(self) -> dict:
        flat = np.ravel_multi_index
        shape = self.raster.grid.shape
        out = {}
        for idx in self.raster.indices():
            out[str(int(flat(tuple(idx), shape)))] = list(self.argmax_radii(idx))
        return out


def _check_alpha(alpha: float, upper: float, what: str):
    if not (0 <= alpha < upper):
        raise ValueError(f"alpha out of range: need 0 <= alpha < {what}")


def _rim_weights(delta: np.ndarray, present: np.ndarray, alpha: float) -> np.ndarray:
    # scalar pow per point so the fast route matches the per-point route bitwise
    w = np.zeros(delta.shape)
    for idx in zip(*np.nonzero(present)):
        w[idx] = float(rim_radius(float(delta[idx]))) ** alpha
    return w


def _profiles_fast(arrays, raster: Raster, alphas: Sequence[float], threads: int):
    inside = raster.inside
    h, n = raster.h, raster.n
    delta = raster.delta
    kc = np.where(inside, ladder_counts(delta, h), 0)
    rim_r = np.where(inside, rim_radius(delta), np.nan)
    has_rim = inside & (rim_r > kc * h)
    rim_r = np.where(has_rim, rim_r, np.nan)
    lim = np.where(has_rim, rim_limit(delta, h), -1.0)
    w_rim = [_rim_weights(delta, has_rim, a) for a in alphas]
    K = int(kc.max(initial=0))
    pad = K + 1
    P = [padded(a, pad) for a in arrays]
    Us = [np.full((K + 2,) + inside.shape, np.nan) for _ in alphas]
    for U, alpha in zip(Us, alphas):
        if alpha == 0:
            v0 = np.ones(inside.shape)
            for a in arrays:
                v0 = v0 * a
        else:
            v0 = np.zeros(inside.shape)
        U[0] = np.where(inside, v0, np.nan)
    weights = [[None] + [(k * h) ** a for k in range(1, K + 2)] for a in alphas]
    rings = [None] + [ring_offsets(k, n) for k in range(1, K + 2)]
    Pshape = P[0].shape
    Pflat = [p.ravel() for p in P]
    strides = np.array([int(np.prod(Pshape[i + 1:])) for i in range(n)])
    ring_flat = [None] + [rings[k] @ strides for k in range(1, K + 2)]

    def run(rows: tuple[int, int]):
        r0, r1 = rows
        csl = (slice(r0, r1),)
        kc_c = kc[csl]
        S = [np.zeros(kc_c.shape) for _ in arrays]
        count = 0
        for k in range(1, K + 2):
            ring = rings[k]
            rim_pts = has_rim[csl] & (kc_c == k - 1)
            if rim_pts.any():
                loc = np.nonzero(rim_pts)
                glob = (loc[0] + r0,) + loc[1:]
                flat = np.ravel_multi_index(tuple(g + pad for g in glob), Pshape)
                lim_p = lim[glob]
                R = [s[loc].copy() for s in S]
                rcount = np.full(lim_p.shape, count, dtype=np.int64)
                for o, do in zip(ring, ring_flat[k]):
                    take = int((o * o).sum()) <= lim_p
                    rcount += take
                    for acc, pf in zip(R, Pflat):
                        acc += np.where(take, pf[flat + do], 0.0)
                for U, wr in zip(Us, w_rim):
                    u = wr[glob]
                    for acc in R:
                        u = u * (acc / rcount)
                    U[(k,) + glob] = u
            need = kc_c >= k
            box = _bbox(need)
            if box is None:
                break
            lo, hi = box
            sl = tuple(slice(a, b) for a, b in zip(lo, hi))
            glo = [lo[0] + r0] + lo[1:]
            ghi = [hi[0] + r0] + hi[1:]
            for s, p in zip(S, P):
                acc = s[sl]
                for o in ring:
                    acc += _shift(p, o, glo, ghi, pad)
            count += len(ring)
            sel = need[sl]
            for U, w in zip(Us, weights):
                u = w[k]
                for s in S:
                    u = u * (s[sl] / count)
                tgt = U[(k,) + csl][sl]
                tgt[sel] = np.broadcast_to(u, sel.shape)[sel]

    bb = _bbox(inside)
    r_lo, r_hi = bb[0][0], bb[1][0]
    step = max(CHUNK_ROWS, -(-(r_hi - r_lo) // threads))
    chunks = [(a, min(a + step, r_hi)) for a in range(r_lo, r_hi, step)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run, chunks))
    else:
        for c in chunks:
            run(c)
    return Us, kc, rim_r


def _profiles_oracle(fields: MultiField, alpha: float):
    raster = fields.raster
    inside = raster.inside
    h = raster.h
    kc = np.where(inside, ladder_counts(raster.delta, h), 0)
    K = int(kc.max(initial=0))
    U = np.full((K + 2,) + inside.shape, np.nan)
    rim_r = np.full(inside.shape, np.nan)
    for idx in raster.indices():
        idx = tuple(int(i) for i in idx)
        prof = radial_profile(fields, idx, alpha)
        nl = len(prof.ladder_radii)
        if nl != kc[idx]:
            raise AssertionError("ladder length mismatch")
        U[(0,) + idx] = prof.value_at_zero
        for i, v in enumerate(prof.values, start=1):
            U[(i,) + idx] = v
        if prof.has_rim:
            rim_r[idx] = prof.radii[-1]
    return U, kc, rim_r


def _finish(U, kc, rim_r, raster, alpha, rel_tol) -> MaxResult:
    inside = raster.inside
    filled = np.where(np.isnan(U), -np.inf, U)
    value = filled.max(axis=0)
    best = filled.argmax(axis=0)
    value = np.where(inside, value, 0.0)
    valid = inside & ~np.isnan(U)
    mask = (filled >= (1.0 - rel_tol) * value) & valid
    loose = (filled >= (1.0 - STABILITY_TOL) * value) & valid
    return MaxResult(
        ScalarField(raster, value), mask, np.where(inside, best, 0), kc, rim_r, rel_tol, alpha, loose
    )


def local_maximal_fields(
    fields: MultiField,
    alphas: Sequence[float],
    rel_tol: float = EXACT_TOL,
    threads: int | str | None = 1,
) -> list[MaxResult]:
    """Fast engine for several alphas sharing one pass of ball sums."""
    raster = fields.raster
    for a in alphas:
        _check_alpha(a, fields.m * raster.n, "m*n")
    if not 0 <= rel_tol <= 0.1:
        raise ValueError("rel_tol must lie in [0, 0.1]")
    Us, kc, rim_r = _profiles_fast([f.values for f in fields.slots], raster, list(alphas), resolve_threads(threads))
    return [_finish(U, kc, rim_r, raster, a, rel_tol) for U, a in zip(Us, alphas)]


def local_maximal_field(
    fields: MultiField,
    alpha: float = 0.0,
    engine: str = "fast",
    rel_tol: float = EXACT_TOL,
    threads: int | str | None = 1,
) -> MaxResult:
    """sup over 0 < r < delta(x) of r^alpha prod_j A_{x,r}(|f_j|), on the lattice."""
    raster = fields.raster
    _check_alpha(alpha, fields.m * raster.n, "m*n")
    if not 0 <= rel_tol <= 0.1:
        raise ValueError("rel_tol must lie in [0, 0.1]")
    if engine == "oracle":
        U, kc, rim_r = _profiles_oracle(fields, alpha)
        return _finish(U, kc, rim_r, raster, alpha, rel_tol)
    if engine == "fast":
        return local_maximal_fields(fields, [alpha], rel_tol, threads)[0]
    raise ValueError(f"unknown engine {engine!r}")


def spherical_maximal_field(f: ScalarField, alpha: float = 0.0) -> ScalarField:
    """max over ladder radii r >= 2h of r^alpha times the lattice-shell mean of |f|."""
    raster = f.raster
    _check_alpha(alpha, raster.n, "n")
    inside = raster.inside
    h, n = raster.h, raster.n
    kc = np.where(inside, ladder_counts(raster.delta, h), 0)
    K = int(kc.max(initial=0))
    out = np.zeros(inside.shape)
    if K < 2:
        return ScalarField(raster, out)
    pad = K + 1
    P = padded(np.abs(f.values), pad)
    I = padded(inside.astype(np.int64), pad)
    for k in range(2, K + 1):
        need = kc >= k
        box = _bbox(need)
        if box is None:
            break
        lo, hi = box
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        S = np.zeros(need[sl].shape)
        C = np.zeros(need[sl].shape, dtype=np.int64)
        for o in shell_offsets(k, n):
            S += _shift(P, o, lo, hi, pad)
            C += _shift(I, o, lo, hi, pad)
        ok = need[sl] & (C > 0)
        v = (k * h) ** alpha * np.where(ok, S / np.maximum(C, 1), 0.0)
        cur = out[sl]
        np.maximum(cur, np.where(ok, v, 0.0), out=cur)
    return ScalarField(raster, out)


def argmax_radii(profile, rel_tol: float = EXACT_TOL) -> tuple[float, ...]:
    """All radii (0 included) whose profile value is within rel_tol of the maximum."""
    entries = profile.entries()
    top = max(v for _, v in entries)
    return tuple(r for r, v in entries if v >= (1.0 - rel_tol) * top)


def hausdorff_distance(A: Iterable[float], B: Iterable[float]) -> float:
    A, B = np.asarray(sorted(A), float), np.asarray(sorted(B), float)
    if A.size == 0 or B.size == 0:
        raise ValueError("Hausdorff distance needs nonempty sets")
    d_ab = np.abs(A[:, None] - B[None, :]).min(axis=1).max()
    d_ba = np.abs(B[:, None] - A[None, :]).min(axis=1).max()
    return float(max(d_ab, d_ba))


def _nearest_in(rad_a, mask_a, rad_b, mask_b):
    """For each profile index i, distance from rad_a[i] to the nearest radius of set B."""
    K2 = mask_b.shape[0]
    shape = (K2,) + (1,) * (mask_b.ndim - 1)
    idx = np.arange(K2).reshape(shape)
    big = np.iinfo(np.int64).max // 4
    left = np.maximum.accumulate(np.where(mask_b, idx, -1), axis=0)
    right = np.flip(np.minimum.accumulate(np.flip(np.where(mask_b, idx, big), axis=0), axis=0), axis=0)
    left_s = np.concatenate([np.full((1,) + left.shape[1:], -1), left[:-1]], axis=0)
    right_s = np.concatenate([right[1:], np.full((1,) + right.shape[1:], big)], axis=0)
    best = np.full(mask_a.shape, np.inf)
    for cand, valid in ((left_s, left_s >= 0), (right_s, right_s < big), (np.broadcast_to(idx, mask_b.shape), mask_b)):
        c = np.clip(cand, 0, K2 - 1)
        rb = np.take_along_axis(rad_b, c, axis=0)
        d = np.where(valid, np.abs(rad_a - rb), np.inf)
        best = np.minimum(best, d)
    return np.where(mask_a, best, -np.inf)


def _run_bounds(mask):
    """First index, last index and count of each column's set."""
    K2 = mask.shape[0]
    first = np.argmax(mask, axis=0)
    last = K2 - 1 - np.argmax(mask[::-1], axis=0)
    return first, last, mask.sum(axis=0)


def _dist_to_run(v, rad, b0, b1, h):
    """Distance from v to {rad[k] : b0 <= k <= b1}, radii increasing in k.

    Radii below the top index are k*h, so the nearest one sits next to round(v/h)
    or at either end of the run.
    """
    k0 = np.rint(np.clip(np.nan_to_num(v / h, nan=-1.0), -1, rad.shape[0] + 1)).astype(np.int64)
    best = np.full(v.shape, np.inf)
    for c in (k0 - 1, k0, k0 + 1, b0, b1):
        c = np.clip(c, b0, b1)
        best = np.minimum(best, np.abs(v - np.take_along_axis(rad, c[None], 0)[0]))
    return best


def directed_excess(res_a: MaxResult, res_b: MaxResult, shift: Sequence[int] | None = None) -> np.ndarray:
    """Per point x: max over r in R_a(x) of dist(r, R_b(x + shift)).

    Points whose shifted partner is outside the domain get nan.
    """
    raster = res_a.raster
    K2 = max(res_a.argmax_mask.shape[0], res_b.argmax_mask.shape[0])
    ma, ra = _pad_k(res_a.argmax_mask, K2), _pad_k(res_a.radius_table(), K2)
    mb, rb = _pad_k(res_b.argmax_mask, K2), _pad_k(res_b.radius_table(), K2)
    valid = raster.inside.copy()
    if shift is not None and any(shift):
        mb, rb, ok = _shifted(mb, rb, raster.inside, shift)
        valid &= ok
    rb = np.where(np.isnan(rb), np.inf, rb)
    h = raster.h
    a0, a1, ca = _run_bounds(ma)
    b0, b1, cb = _run_bounds(mb)
    runs = (ca == a1 - a0 + 1) & (cb == b1 - b0 + 1)
    va0 = np.take_along_axis(ra, a0[None], 0)[0]
    va1 = np.take_along_axis(ra, a1[None], 0)[0]
    d = np.maximum(_dist_to_run(va0, rb, b0, b1, h), _dist_to_run(va1, rb, b0, b1, h))
    other = ~runs & (ca > 0) & (cb > 0)
    if other.any():
        sel = np.nonzero(other)
        cols = (slice(None),) + sel
        d[sel] = _nearest_in(ra[cols], ma[cols], rb[cols], mb[cols]).max(axis=0)
    d = np.where(cb == 0, np.inf, d)
    d = np.where(ca == 0, -np.inf, d)
    return np.where(valid, d, np.nan)


def hausdorff_field(res_a: MaxResult, res_b: MaxResult, shift: Sequence[int] | None = None) -> np.ndarray:
    """Pointwise Hausdorff distance between R_a(x) and R_b(x + shift)."""
    d1 = directed_excess(res_a, res_b, shift)
    if shift is not None and any(shift):
        neg = tuple(-s for s in shift)
        d2 = directed_excess(res_b, res_a, neg)
        d2 = _shift_values(d2, shift)
    else:
        d2 = directed_excess(res_b, res_a)
    return np.maximum(d1, d2)


def _pad_k(a: np.ndarray, K2: int) -> np.ndarray:
    if a.shape[0] == K2:
        return a
    fill = False if a.dtype == bool else np.nan
    extra = np.full((K2 - a.shape[0],) + a.shape[1:], fill, dtype=a.dtype)
    return np.concatenate([a, extra], axis=0)


def _shift_values(a: np.ndarray, shift: Sequence[int]) -> np.ndarray:
    """b[x] = a[x + shift], nan where x + shift leaves the grid."""
    out = np.full(a.shape, np.nan)
    src, dst = [], []
    for s, N in zip(shift, a.shape):
        if s >= 0:
            src.append(slice(s, N))
            dst.append(slice(0, N - s))
        else:
            src.append(slice(0, N + s))
            dst.append(slice(-s, N))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _shifted(mask, rad, inside, shift):
    K2 = mask.shape[0]
    m2 = np.zeros_like(mask)
    r2 = np.full(rad.shape, np.nan)
    ok = np.zeros(inside.shape, dtype=bool)
    src, dst = [], []
    for s, N in zip(shift, inside.shape):
        if s >= 0:
            src.append(slice(s, N))
            dst.append(slice(0, N - s))
        else:
            src.append(slice(0, N + s))
            dst.append(slice(-s, N))
    src, dst = tuple(src), tuple(dst)
    m2[(slice(None),) + dst] = mask[(slice(None),) + src]
    r2[(slice(None),) + dst] = rad[(slice(None),) + src]
    ok[dst] = inside[src]
    return m2, r2, ok
