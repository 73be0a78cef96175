"""Seeded samplers for the measures the projection theorems quantify over.

Every sampler takes an explicit ``numpy.random.Generator``.  Streams come from
:func:`make_rng`, which keys a counter-based Philox generator with
``(seed, stream_id)`` so parallel tasks get disjoint reproducible streams that
do not depend on scheduling.  Batched samplers return plain arrays (unit
representatives in the last axis, factors as columns); the singular forms wrap
one draw in the object types.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exterior import Decomposable, DegenerateError, Field, orthonormal_basis
from .projective import FoliationCenter, ProjectivePoint, unit

DEGENERATE_WEDGE = 1e-8
MAX_RESAMPLES = 100


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def gaussian(rng: np.random.Generator, field: Field, shape) -> np.ndarray:
    """Standard Gaussian in K^..., rotation (resp. unitarily) invariant."""
    if field is Field.REAL:
        return rng.standard_normal(shape)
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def uniform_projective_points(rng, field: Field, n: int, size: int) -> np.ndarray:
    return unit(gaussian(rng, field, (size, n + 1)))


def uniform_projective_point(rng, field: Field, n: int) -> ProjectivePoint:
    return ProjectivePoint(uniform_projective_points(rng, field, n, 1)[0])


def _wedge_norms(factors: np.ndarray) -> np.ndarray:
    """|u_0 v ... v u_k| / prod |u_i| through the Gram determinant."""
    f = factors / np.linalg.norm(factors, axis=-2, keepdims=True)
    gram = np.einsum("...ia,...ib->...ab", np.conj(f), f)
    return np.sqrt(np.clip(np.linalg.det(gram).real, 0.0, None))


def _resample_degenerate(draw, size: int) -> np.ndarray:
    factors = draw(size)
    for _ in range(MAX_RESAMPLES):
        bad = np.flatnonzero(_wedge_norms(factors) < DEGENERATE_WEDGE)
        if len(bad) == 0:
            return factors
        factors[bad] = draw(len(bad))
    raise DegenerateError(f"degenerate wedge after {MAX_RESAMPLES} resamples")


def uniform_center_factors(rng, field: Field, n: int, k: int, size: int) -> np.ndarray:
    """Factors (size, n+1, k+1) of centers distributed by the pushforward of
    the product of k+1 uniform measures on P^n_K."""
    if not 0 <= k <= n - 2:
        raise ValueError(f"k={k} outside [0, {n - 2}]")

    def draw(m):
        return np.swapaxes(uniform_projective_points(rng, field, n, m * (k + 1)).reshape(m, k + 1, n + 1), 1, 2)

    return _resample_degenerate(draw, size)


def uniform_center(rng, field: Field, n: int, k: int) -> FoliationCenter:
    return FoliationCenter(Decomposable(uniform_center_factors(rng, field, n, k, 1)[0]))


def hyperplane_points(rng, basis: np.ndarray, size: int) -> np.ndarray:
    """Uniform points of P(Span(V)) given an orthonormal basis (N, m) of Span(V)."""
    field = Field.of(basis)
    g = gaussian(rng, field, (size, basis.shape[1]))
    return unit(g @ basis.T)


def pointed_center_factors(rng, v: Decomposable, k: int, size: int) -> np.ndarray:
    n = v.ambient_dim - 1
    if v.grade != n:
        raise ValueError("pointed centers live in a hyperplane: V must have grade n")
    if not 0 <= k <= n - 2:
        raise ValueError(f"k={k} outside [0, {n - 2}]")
    basis = orthonormal_basis(v.factors)

    def draw(m):
        pts = hyperplane_points(rng, basis, m * (k + 1)).reshape(m, k + 1, n + 1)
        return np.swapaxes(pts, 1, 2)

    return _resample_degenerate(draw, size)


def pointed_center(rng, v: Decomposable, k: int) -> FoliationCenter:
    return FoliationCenter(Decomposable(pointed_center_factors(rng, v, k, 1)[0]))


@dataclass(frozen=True)
class SphereModel:
    """The sphere S = {[1 : x] : |x| = 1} and open ball B inside P^n_K.

    S is S^{n-1} for K = R and S^{2n-1} for K = C.
    """

    field: Field
    n: int

    @property
    def sphere_dim(self) -> int:
        return self.field.delta * self.n - 1

    def chart(self, p) -> np.ndarray:
        r = np.asarray(getattr(p, "rep", p))
        return r[..., 1:] / r[..., :1]

    def residual(self, p) -> np.ndarray:
        """|x|^2 - 1 for [1 : x]; zero on S."""
        x = self.chart(p)
        return np.sum(np.abs(x) ** 2, axis=-1) - 1.0

    def contains(self, p, tol: float = 1e-10) -> bool:
        return bool(np.all(np.abs(self.residual(p)) <= tol))

    def in_ball(self, p) -> bool:
        return bool(np.all(self.residual(p) < 0))


def uniform_sphere_points(rng, model: SphereModel, size: int) -> np.ndarray:
    x = unit(gaussian(rng, model.field, (size, model.n)))
    ones = np.ones((size, 1), dtype=x.dtype)
    return np.concatenate([ones, x], axis=1) / np.sqrt(2.0)


def uniform_sphere_point(rng, model: SphereModel) -> ProjectivePoint:
    return ProjectivePoint(uniform_sphere_points(rng, model, 1)[0])


def chain_span(points: Sequence) -> Decomposable:
    """The projective subspace spanned by k+1 points, for any k.

    For points on S with K = C its trace on the sphere is a k-chain; for K = R
    a small k-sphere.
    """
    reps = np.stack([np.asarray(getattr(p, "rep", p)) for p in points], axis=1)
    if _wedge_norms(reps) < DEGENERATE_WEDGE:
        raise DegenerateError("points do not span a subspace of the expected dimension")
    return Decomposable(reps)


def chain_through_points(points: Sequence) -> FoliationCenter:
    """:func:`chain_span` as a foliation center (needs k <= n - 2)."""
    return FoliationCenter(chain_span(points))


def write_sample_log(path, seed: int, stream: int, samples: np.ndarray) -> None:
    """One CSV row per sample: seed, stream, index, sha256 of the payload bytes."""
    samples = np.ascontiguousarray(samples)
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "stream", "index", "payload_sha256"])
        for i, row in enumerate(samples):
            digest = hashlib.sha256(np.ascontiguousarray(row).tobytes()).hexdigest()
            writer.writerow([seed, stream, i, digest])
