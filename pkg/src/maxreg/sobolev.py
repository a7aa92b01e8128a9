"""Discrete gradients, L^p / W^{1,p} norms and exponent bookkeeping."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .lattice import ScalarField, VectorField


class HypothesisError(ValueError):
    """Exponent inputs outside every implemented theorem's window."""


def gradient_field(f: ScalarField) -> VectorField:
    """Centered differences where both axis neighbours are inside, one-sided otherwise.

    Points with no inside neighbour on some axis get 0 there and are marked in
    ``VectorField.flagged``.
    """
    raster = f.raster
    inside = raster.inside
    h = raster.h
    v = f.values
    comps = []
    flagged = np.zeros(inside.shape, dtype=bool)
    for ax in range(raster.n):
        fwd_in = _neighbour(inside, ax, +1)
        bwd_in = _neighbour(inside, ax, -1)
        fwd = _neighbour(v, ax, +1)
        bwd = _neighbour(v, ax, -1)
        both = fwd_in & bwd_in
        d = np.zeros(inside.shape)
        d = np.where(both, (fwd - bwd) / (2 * h), d)
        d = np.where(fwd_in & ~bwd_in, (fwd - v) / h, d)
        d = np.where(bwd_in & ~fwd_in, (v - bwd) / h, d)
        flagged |= inside & ~fwd_in & ~bwd_in
        comps.append(ScalarField(raster, np.where(inside, d, 0.0)))
    return VectorField(tuple(comps), flagged=flagged)


def centered_mask(raster) -> np.ndarray:
    """Inside points whose every axis neighbour is inside."""
    ok = raster.inside.copy()
    for ax in range(raster.n):
        ok &= _neighbour(raster.inside, ax, +1) & _neighbour(raster.inside, ax, -1)
    return ok


def _neighbour(a: np.ndarray, ax: int, step: int) -> np.ndarray:
    """b[x] = a[x + step e_ax], False/0 beyond the grid."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[ax], dst[ax] = slice(step, None), slice(0, -step)
    else:
        src[ax], dst[ax] = slice(0, step), slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def lp_norm(f: ScalarField | np.ndarray, p: float, raster=None) -> float:
    """(sum |f|^p h^n)^(1/p) over inside points; p = inf gives the max."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if isinstance(f, ScalarField):
        raster, vals = f.raster, f.inside_values()
    else:
        vals = np.asarray(f)[raster.inside]
    a = np.abs(vals)
    if a.size == 0:
        return 0.0
    if math.isinf(p):
        return float(a.max())
    top = a.max()
    if top == 0:
        return 0.0
    # scaled to avoid overflow for large p; np.sum is a fixed-order pairwise sum
    s = float(np.sum((a / top) ** p)) * raster.h ** raster.n
    return float(top * s ** (1.0 / p))


def sobolev_norm(f: ScalarField, p: float, grad: VectorField | None = None) -> float:
    if not p > 1:
        raise ValueError("p must exceed 1")
    g = grad if grad is not None else gradient_field(f)
    return lp_norm(f, p) + lp_norm(g.magnitude(), p)


def delta_weighted_norm(f: ScalarField, delta: ScalarField, p: float) -> float:
    inside = f.raster.inside
    if np.any(delta.values[inside] <= 0):
        raise ValueError("delta must be positive inside the domain")
    ratio = np.where(inside, f.values / np.where(inside, delta.values, 1.0), 0.0)
    return lp_norm(ScalarField(f.raster, ratio), p)


def _fmt(x: float):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


@dataclass(frozen=True)
class ExponentSet:
    m: int
    n: int
    p: tuple[float, ...]
    alpha: float
    q: float
    q_star: float
    q_embedding: float
    alpha_bar: float
    beta: float
    p_tilde: tuple[float, ...]
    flags: dict = field(default_factory=dict)

    def sum_inv_p_from_q(self) -> float:
        """Recover sum 1/p_j from (q, alpha, n)."""
        inv_q = 0.0 if math.isinf(self.q) else 1.0 / self.q
        if self.alpha == 0:
            return inv_q
        return inv_q + (self.alpha - 1) / self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        out = {}
        for k in ("m", "n", "p", "alpha", "q", "q_star", "q_embedding", "alpha_bar", "beta", "p_tilde"):
            v = d[k]
            out[k] = [_fmt(x) for x in v] if isinstance(v, (list, tuple)) else _fmt(v)
        out["flags"] = {k: bool(self.flags[k]) for k in FLAG_NAMES}
        return out


FLAG_NAMES = (
    "thm21", "thm22i", "thm22ii", "thm23", "bd1", "tb_i", "tb_iprime", "tb_ii", "sobolev0", "continuity",
)


def _q_from(inv_q: float) -> float:
    if inv_q > 0:
        return 1.0 / inv_q
    if inv_q == 0:
        return math.inf
    return math.nan


def exponent_table(m: int, n: int, p: Sequence[float], alpha: float) -> ExponentSet:
    """Derived exponents and per-theorem hypothesis flags.

    Raises HypothesisError when some p_j is not in (1, inf) or alpha is outside
    [0, m n); an exponent relation yielding q <= 0 is flagged, not raised.
    """
    p = tuple(float(x) for x in p)
    if m < 1 or n < 1:
        raise HypothesisError("need m >= 1 and n >= 1")
    if len(p) != m:
        raise HypothesisError(f"expected {m} exponents p_j, got {len(p)}")
    bad = [x for x in p if not (1 < x < math.inf)]
    if bad:
        raise HypothesisError(f"hypothesis 1 < p_j < inf violated by p_j = {bad[0]}")
    if not 0 <= alpha < m * n:
        raise HypothesisError(f"hypothesis 0 <= alpha < m n = {m * n} violated by alpha = {alpha}")

    s = sum(1.0 / x for x in p)
    inv_q = s if alpha == 0 else s - (alpha - 1) / n
    q = _q_from(inv_q)
    q_star = _q_from(s - alpha / n)
    q_emb = _q_from(s - (alpha + m - 1) / n)
    alpha_bar = (alpha - 1) / m
    if n >= 2:
        beta = min(min((n - 1) / x, n - 2 * n / ((n - 1) * x)) for x in p)
    else:
        beta = math.nan
    p_tilde = tuple(_q_from(1 / x - 1 / n) if x < n else math.inf for x in p)

    q_ok = 1 < q < math.inf
    frac = 1 <= alpha < m * n
    crit = alpha == 0 and q_ok
    thm22i = frac and q_ok
    thm22ii = frac and all(x < n for x in p) and (1 / m < q_emb < math.inf)
    thm23 = n >= 2 and all(x > n / (n - 1) for x in p) and (1 <= alpha < m * beta + 1) and q_ok
    flags = {
        "thm21": crit,
        "thm22i": thm22i,
        "thm22ii": thm22ii,
        "thm23": thm23,
        "bd1": crit,
        "tb_i": thm22i,
        "tb_iprime": thm22ii,
        "tb_ii": thm23,
        "sobolev0": crit or thm22i or thm23,
        "continuity": crit or thm22i,
    }
    return ExponentSet(m, n, p, float(alpha), q, q_star, q_emb, alpha_bar, beta, p_tilde, flags)
