"""Dimension and energy estimators on weighted point clouds in any metric.

All estimators only need pairwise distances, so they run unchanged in the
codomain metric of a radial projection.  Pair sums are accumulated over a
fixed block partition and merged in block order, so results do not depend on
the number of worker threads.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.spatial.distance

from .fractal import EmpiricalMeasure
from .projective import DEFAULT_EXCLUSION, ExclusionError, FoliationCenter, radial_project_many, sine_distance, tau_point_many

MIN_HITS = 50
MAX_RESIDUAL = 0.05
BLOCK = 1024
SUBSAMPLE_ABOVE = 20_000
SUBSAMPLE_PAIRS = 10_000_000


@dataclass(frozen=True)
class Metric:
    """A metric given by a matrix form and a row-paired form."""

    name: str
    pairwise: Callable[[np.ndarray, np.ndarray], np.ndarray]
    paired: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _euclid_pairwise(x, y):
    return scipy.spatial.distance.cdist(x, y)


def _euclid_paired(x, y):
    return np.linalg.norm(x - y, axis=-1)


def _sine_pairwise(x, y):
    """|x v y| for unit representatives, as the root sum of squared 2x2 minors.

    Unlike sqrt(1 - |<x, y>|^2) this keeps full absolute accuracy for nearly
    parallel lines, where the Gram form bottoms out near 1e-8.
    """
    acc = np.zeros((len(x), len(y)))
    dim = x.shape[1]
    outer = np.multiply.outer
    if not (np.iscomplexobj(x) or np.iscomplexobj(y)):
        for i in range(dim):
            for j in range(i + 1, dim):
                m = outer(x[:, i], y[:, j]) - outer(x[:, j], y[:, i])
                acc += m * m
        return np.sqrt(np.minimum(acc, 1.0))
    # Real arithmetic keeps every product commutative bitwise, so equal lines
    # give exactly zero (vectorized complex multiplication does not).
    xr, xi = np.real(x), np.imag(x)
    yr, yi = np.real(y), np.imag(y)
    for i in range(dim):
        for j in range(i + 1, dim):
            re = (outer(xr[:, i], yr[:, j]) - outer(xi[:, i], yi[:, j])) - (
                outer(xr[:, j], yr[:, i]) - outer(xi[:, j], yi[:, i])
            )
            im = (outer(xr[:, i], yi[:, j]) + outer(xi[:, i], yr[:, j])) - (
                outer(xr[:, j], yi[:, i]) + outer(xi[:, j], yr[:, i])
            )
            acc += re * re + im * im
    return np.sqrt(np.minimum(acc, 1.0))


EUCLIDEAN = Metric("euclidean", _euclid_pairwise, _euclid_paired)
ANGULAR = Metric("angular", _sine_pairwise, sine_distance)


def as_metric(metric) -> Metric:
    if isinstance(metric, Metric):
        return metric
    if callable(metric):
        return Metric(getattr(metric, "__name__", "custom"), metric, lambda x, y: np.diagonal(metric(x, y)).copy())
    raise TypeError("metric must be a Metric or a pairwise-distance callable")


def metric_for(measure: EmpiricalMeasure) -> Metric:
    return EUCLIDEAN if measure.space == "chart" else ANGULAR


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    r_min: float
    r_max: float
    fit_residual: float
    pair_count: int
    valid: bool
    scales: tuple[float, ...] = field(default=(), repr=False)
    log_values: tuple[float, ...] = field(default=(), repr=False)
    excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "residual": self.fit_residual,
            "pairs": self.pair_count,
            "valid": self.valid,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DimensionEstimate":
        return cls(float(d["value"]), float(d["r_min"]), float(d["r_max"]), float(d["residual"]), int(d["pairs"]), bool(d["valid"]))


def dyadic_radii(window: tuple[float, float]) -> np.ndarray:
    r_min, r_max = window
    if not 0 < r_min < r_max:
        raise ValueError(f"invalid scale window {window}")
    lo = int(np.ceil(np.log2(r_min) - 1e-9))
    hi = int(np.floor(np.log2(r_max) + 1e-9))
    return 2.0 ** np.arange(lo, hi + 1)


def parse_window(text: str) -> tuple[float, float]:
    """'RMIN:RMAX' with plain floats or powers such as 2^-9."""

    def one(tok):
        tok = tok.strip()
        if "^" in tok:
            base, exp = tok.split("^")
            return float(base) ** float(exp)
        return float(tok)

    lo, hi = text.split(":")
    return one(lo), one(hi)


def fit_loglog(scales, values, counts, window, min_hits=MIN_HITS, max_residual=MAX_RESIDUAL, pairs=0, sign=1.0) -> DimensionEstimate:
    """OLS slope of log(values) against log(scales) over bins with enough hits."""
    scales, values, counts = map(np.asarray, (scales, values, counts))
    keep = (counts >= min_hits) & (values > 0)
    r_min, r_max = float(window[0]), float(window[1])
    if keep.sum() < 2:
        return DimensionEstimate(0.0, r_min, r_max, float("inf"), int(pairs), False)
    x, y = np.log(scales[keep]), np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    value = float(sign * slope)
    valid = resid <= max_residual and value >= 0
    return DimensionEstimate(
        max(value, 0.0),
        float(scales[keep].min()),
        float(scales[keep].max()),
        resid,
        int(pairs),
        bool(valid),
        tuple(scales[keep].tolist()),
        tuple(y.tolist()),
    )


# ---------------------------------------------------------------------------
# Pair accumulation


def _blocks(n: int, block: int) -> list[tuple[int, int]]:
    return [(i, min(i + block, n)) for i in range(0, n, block)]


def _upper_block(points, metric: Metric, i0: int, i1: int) -> np.ndarray:
    """Distances for rows [i0, i1) against columns [i0, n); lower part set to inf."""
    d = metric.pairwise(points[i0:i1], points[i0:])
    rows = i1 - i0
    tri = np.tril_indices(rows)
    d[tri] = np.inf
    return d


def _map_blocks(fn, blocks, threads: int):
    if threads <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def correlation_sum(
    points: np.ndarray,
    weights: np.ndarray | None,
    metric: Metric,
    radii: np.ndarray,
    rng: np.random.Generator | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Weighted fraction of distinct pairs within distance < r, for each radius.

    Returns (fractions, hit counts, pairs examined).  Above SUBSAMPLE_ABOVE
    points, SUBSAMPLE_PAIRS uniformly drawn pairs are used instead.
    """
    metric = as_metric(metric)
    n = len(points)
    radii = np.asarray(radii, dtype=float)
    nb = len(radii) + 1
    uniform = weights is None or np.all(weights == weights[0])
    if n > SUBSAMPLE_ABOVE:
        rng = rng if rng is not None else np.random.default_rng(0)
        i = rng.integers(0, n, SUBSAMPLE_PAIRS)
        j = rng.integers(0, n - 1, SUBSAMPLE_PAIRS)
        j = j + (j >= i)
        d = metric.paired(points[i], points[j])
        idx = np.searchsorted(radii, d, side="right")
        hits = np.cumsum(np.bincount(idx, minlength=nb))[:-1]
        if uniform:
            return hits / SUBSAMPLE_PAIRS, hits, SUBSAMPLE_PAIRS
        w = weights[i] * weights[j]
        wsum = np.cumsum(np.bincount(idx, weights=w, minlength=nb))[:-1]
        return wsum / w.sum(), hits, SUBSAMPLE_PAIRS

    def one(block):
        i0, i1 = block
        d = _upper_block(points, metric, i0, i1)
        idx = np.searchsorted(radii, d.ravel(), side="right")
        counts = np.bincount(idx, minlength=nb)
        if uniform:
            return counts, None
        w = (weights[i0:i1, None] * weights[None, i0:]).ravel()
        return counts, np.bincount(idx, weights=w, minlength=nb)

    parts = _map_blocks(one, _blocks(n, BLOCK), threads)
    counts = np.sum([p[0] for p in parts], axis=0)
    total_pairs = n * (n - 1) // 2
    hits = np.cumsum(counts)[:-1]
    if total_pairs == 0:
        return np.zeros(len(radii)), hits, 0
    if uniform:
        return hits / total_pairs, hits, total_pairs
    wbins = np.zeros(nb)
    for p in parts:
        wbins += p[1]
    wtot = (weights.sum() ** 2 - np.sum(weights**2)) / 2
    return np.cumsum(wbins)[:-1] / wtot, hits, total_pairs


def correlation_dimension(
    m: EmpiricalMeasure,
    metric: Metric | None = None,
    window: tuple[float, float] = (2.0**-12, 2.0**-3),
    min_hits: int = MIN_HITS,
    max_residual: float = MAX_RESIDUAL,
    rng=None,
    threads: int = 1,
) -> DimensionEstimate:
    """Slope of log C(r) against log r over the dyadic radii of the window."""
    metric = metric_for(m) if metric is None else as_metric(metric)
    radii = dyadic_radii(window)
    if len(m) < 2:
        return DimensionEstimate(0.0, window[0], window[1], 0.0, 0, True)
    frac, hits, pairs = correlation_sum(m.points, m.weights, metric, radii, rng, threads)
    return fit_loglog(radii, frac, hits, window, min_hits, max_residual, pairs)


def box_counting_dimension(
    m: EmpiricalMeasure,
    metric: Metric | None = None,
    window: tuple[float, float] = (2.0**-12, 2.0**-3),
    max_residual: float = MAX_RESIDUAL,
) -> DimensionEstimate:
    """Greedy epsilon-net covering numbers N(r); slope of log N against -log r.

    Scales where the net uses more than a quarter of the sample are treated
    as saturated and dropped.
    """
    metric = metric_for(m) if metric is None else as_metric(metric)
    pts = m.points
    n = len(pts)
    radii = dyadic_radii(window)
    cover = np.zeros(len(radii))
    ok = np.zeros(len(radii), dtype=int)
    for a, r in enumerate(radii):
        remaining = np.arange(n)
        centers = 0
        while len(remaining) and centers <= n // 4:
            d = metric.pairwise(pts[remaining[:1]], pts[remaining])[0]
            remaining = remaining[d >= r]
            centers += 1
        if centers <= n // 4:
            cover[a] = centers
            ok[a] = MIN_HITS
    return fit_loglog(radii, cover, ok, window, MIN_HITS, max_residual, n, sign=-1.0)


def energy_integral(m: EmpiricalMeasure, sigma: float, metric: Metric | None = None, threads: int = 1) -> float:
    """sum over i != j of w_i w_j / d(x_i, x_j)^sigma; +inf if distinct atoms coincide."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    metric = metric_for(m) if metric is None else as_metric(metric)
    w, pts = m.weights, m.points

    def one(block):
        i0, i1 = block
        d = _upper_block(pts, metric, i0, i1)
        ww = w[i0:i1, None] * w[None, i0:]
        finite = np.isfinite(d)
        if np.any(finite & (d == 0) & (ww > 0)):
            return np.inf
        with np.errstate(divide="ignore"):
            return float(np.sum(np.where(finite, ww * d ** (-sigma), 0.0)))

    parts = _map_blocks(one, _blocks(len(pts), BLOCK), threads)
    return 2.0 * float(np.sum(parts))


def energy_by_prefix(points: np.ndarray, sigmas: Iterable[float], sizes: Iterable[int], metric: Metric) -> np.ndarray:
    """Empirical sigma-energies of the uniform measures on nested prefixes.

    Returns an array (len(sigmas), len(sizes)) with entries
    sum_{i != j < N} d_ij^-sigma / N^2, from a single pass over pairs.
    """
    sigmas = np.asarray(list(sigmas), dtype=float)
    sizes = np.asarray(list(sizes), dtype=int)
    nmax = int(sizes.max())
    pts = points[:nmax]
    row_sums = np.zeros((len(sigmas), nmax))
    for i0, i1 in _blocks(nmax, BLOCK):
        d = metric.pairwise(pts[i0:i1], pts[:i1])
        mask = np.arange(i1)[None, :] < np.arange(i0, i1)[:, None]
        coincident = np.any(mask & (d == 0), axis=1)
        with np.errstate(divide="ignore"):
            logd = np.log(np.where(mask, d, 1.0))
        for a, s in enumerate(sigmas):
            if s == 0:
                row_sums[a, i0:i1] = mask.sum(axis=1)
            else:
                sums = np.sum(np.where(mask, np.exp(-s * np.where(coincident[:, None], 0.0, logd)), 0.0), axis=1)
                row_sums[a, i0:i1] = np.where(coincident, np.inf, sums)
    cum = np.cumsum(row_sums, axis=1)
    return 2.0 * cum[:, sizes - 1] / sizes.astype(float) ** 2


def tail_exponent(
    samples,
    window: tuple[float, float] = (2.0**-9, 2.0**-3),
    min_hits: int = MIN_HITS,
    max_residual: float = MAX_RESIDUAL,
) -> DimensionEstimate:
    """Slope of log P{X <= r} against log r over the dyadic radii of the window."""
    x = np.sort(np.asarray(samples, dtype=float))
    radii = dyadic_radii(window)
    counts = np.searchsorted(x, radii, side="right")
    return fit_loglog(radii, counts / len(x), counts, window, min_hits, max_residual, len(x))


def transverse_dimension_estimate(
    m: EmpiricalMeasure,
    center: FoliationCenter,
    window: tuple[float, float] = (2.0**-12, 2.0**-3),
    eps_excl: float = DEFAULT_EXCLUSION,
    max_excluded: float = 0.10,
    threads: int = 1,
    **kwargs,
) -> DimensionEstimate:
    """Correlation dimension of the radially projected measure in the codomain metric.

    Support points within ``eps_excl`` of L_U are dropped and counted; more
    than ``max_excluded`` of them raises ExclusionError.
    """
    if m.space == "chart":
        raise ValueError("push the measure into P^n_K first")
    pts = m.points
    t = tau_point_many(center.frame, pts)
    keep = t > eps_excl
    excluded = int(len(pts) - keep.sum())
    if excluded > max_excluded * len(pts):
        raise ExclusionError(f"{excluded} of {len(pts)} support points lie near the center")
    proj = radial_project_many(center.blade.coeffs, center.k + 1, pts[keep])
    w = m.weights[keep]
    projected = EmpiricalMeasure(proj, w / w.sum(), "codomain")
    est = correlation_dimension(projected, ANGULAR, window, threads=threads, **kwargs)
    return DimensionEstimate(**{**asdict(est), "excluded": excluded})
