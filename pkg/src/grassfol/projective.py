"""Metric geometry of P^n_K: angular metric, tau, radial projections and charts.

Points are unit representatives; two points are equal when their angular
distance vanishes, no phase is ever canonicalized.  Batched ``*_many``
helpers take stacked arrays and back the Monte Carlo experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exterior import (
    DegenerateError,
    Decomposable,
    Field,
    KVector,
    as_kvector,
    compound,
    norm,
    orthonormal_basis,
    annihilator_basis,
    wedge_arrays,
    wedge_progressive,
    wedge_regressive,
)

DEFAULT_EXCLUSION = 1e-3


class ExclusionError(ValueError):
    """A point lies within the exclusion radius of the foliation center L_U."""


# ---------------------------------------------------------------------------
# Batched kernels


def unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sine_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Angular (sine) distance between the lines spanned by x and y, batched.

    Evaluated as the norm of the residual of y after removing its component
    along x, which equals sqrt(1 - |<x,y>|^2) for unit vectors but does not
    cancel catastrophically at small distances.
    """
    xu, yu = unit(np.asarray(x)), unit(np.asarray(y))
    g = np.sum(np.conj(xu) * yu, axis=-1, keepdims=True)
    return np.minimum(np.linalg.norm(yu - g * xu, axis=-1), 1.0)


def orthonormal_frames(factors: np.ndarray) -> np.ndarray:
    """Batched orthonormal bases of the column spans of ``factors`` (..., N, m)."""
    q, _ = np.linalg.qr(factors)
    return q


def residual(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """w minus its orthogonal projection on the span of the orthonormal columns of q."""
    coef = np.einsum("...ij,...i->...j", np.conj(q), w)
    return w - np.einsum("...ij,...j->...i", q, coef)


def tau_point_many(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    """tau(U, w) for frames q of Span(U) and vectors w, batched."""
    return np.linalg.norm(residual(q, w), axis=-1) / np.linalg.norm(w, axis=-1)


def lipschitz_modulus_many(q: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """phi_U(w1, w2) = tau(U, w1 v w2) / (tau(U, w1) tau(U, w2)), batched.

    Uses |U v x| = |Pi_U^perp(x)| |U| so that every tau is the norm of a
    projected residual; ``q`` must be orthonormal frames of Span(U).
    """
    p1, p2 = residual(q, w1), residual(q, w2)
    n1, n2 = np.linalg.norm(p1, axis=-1), np.linalg.norm(p2, axis=-1)
    m1, m2 = np.linalg.norm(w1, axis=-1), np.linalg.norm(w2, axis=-1)
    # |p1 v p2| = |p1| |p2| sin(angle(p1, p2))
    wedge_p = n1 * n2 * sine_distance(p1, p2)
    wedge_w = m1 * m2 * sine_distance(w1, w2)
    tau12 = wedge_p / wedge_w
    return tau12 / ((n1 / m1) * (n2 / m2))


def radial_project_many(center_blade: np.ndarray, k_center: int, w: np.ndarray) -> np.ndarray:
    """Unit blade coefficients of U v w for a fixed center and many points w."""
    dim = w.shape[-1]
    out = wedge_arrays(center_blade, w, dim, k_center, 1)
    return unit(out)


# ---------------------------------------------------------------------------
# Points and centers


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """A K-line of K^{n+1}, stored as a unit representative."""

    rep: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rep)
        if not np.iscomplexobj(r):
            r = r.astype(np.float64)
        nrm = np.linalg.norm(r)
        if r.ndim != 1 or nrm == 0:
            raise DegenerateError("a projective point needs a nonzero vector")
        r = r / nrm
        r.setflags(write=False)
        object.__setattr__(self, "rep", r)

    @property
    def field(self) -> Field:
        return Field.of(self.rep)

    @property
    def n(self) -> int:
        return len(self.rep) - 1

    def same_as(self, other: "ProjectivePoint", tol: float = 1e-10) -> bool:
        return angular_distance(self, other) <= tol


@dataclass(frozen=True, eq=False)
class FoliationCenter:
    """A k-dimensional projective subspace L_U, 0 <= k <= n-2.

    Parametrizes the foliation of P^n minus L_U by the (k+1)-dimensional
    projective subspaces containing L_U.
    """

    center: Decomposable
    frame: np.ndarray = field(init=False, repr=False)
    blade: KVector = field(init=False, repr=False)

    def __post_init__(self):
        c = self.center
        if not isinstance(c, Decomposable):
            c = Decomposable(np.asarray(c))
            object.__setattr__(self, "center", c)
        n = c.ambient_dim - 1
        if not 0 <= self.k <= n - 2:
            raise ValueError(f"center dimension k={self.k} outside [0, {n - 2}]")
        if c.is_zero(1e-8):
            raise DegenerateError("foliation center is degenerate")
        object.__setattr__(self, "frame", orthonormal_basis(c.factors))
        object.__setattr__(self, "blade", c.blade_form.normalized())

    @property
    def k(self) -> int:
        return self.center.grade - 1

    @property
    def n(self) -> int:
        return self.center.ambient_dim - 1


@dataclass(frozen=True, eq=False)
class ProjectedPoint:
    """Image [U v w] of a point under a generalized radial projection."""

    rep: KVector


def _vec(w) -> np.ndarray:
    return np.asarray(getattr(w, "rep", w))


# ---------------------------------------------------------------------------
# Metric operations


def angular_distance(a, b) -> float:
    """d(a, b) = |a v b| / (|a| |b|), the sine of the angle between the lines."""
    x, y = _vec(a), _vec(b)
    if x.shape != y.shape:
        raise ValueError("points live in different ambient spaces")
    return float(sine_distance(x, y))


def tau(u, v) -> float:
    """Normalized wedge norm |U v V| / (|U| |V|)."""
    u, v = as_kvector(u), as_kvector(v)
    nu, nv = norm(u), norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateError("tau of a zero k-vector")
    if u.grade + v.grade > u.ambient_dim:
        raise ValueError("grades exceed the ambient dimension")
    return norm(wedge_progressive(u, v)) / (nu * nv)


def distance_to_subspace(w, u: Decomposable) -> float:
    """Angular distance from w to P(Span(U)), which equals tau(U, w)."""
    return tau(u, w)


def proj_radial(center: FoliationCenter, w, eps_excl: float = DEFAULT_EXCLUSION) -> ProjectedPoint:
    x = _vec(w)
    t = float(tau_point_many(center.frame, x))
    if t <= eps_excl:
        raise ExclusionError(f"point at distance {t:.3g} from the center (limit {eps_excl})")
    return ProjectedPoint(wedge_progressive(center.blade, x).normalized())


def codomain_distance(a: ProjectedPoint, b: ProjectedPoint) -> float:
    """Angular metric on P G^{k+2}: |A v B| in G^2(G^{k+2}) over |A| |B|.

    Only the Gram data |A|, |B|, <A, B> enter, through the residual form of
    sqrt(|A|^2 |B|^2 - |<A, B>|^2) / (|A| |B|).
    """
    x, y = as_kvector(getattr(a, "rep", a)), as_kvector(getattr(b, "rep", b))
    if x.ambient_dim != y.ambient_dim or x.grade != y.grade:
        raise ValueError("projected points of different codomains")
    return float(sine_distance(x.coeffs, y.coeffs))


def lipschitz_modulus(
    center: FoliationCenter, w1, w2, eps_excl: float = DEFAULT_EXCLUSION
) -> float:
    """phi_U(w1, w2) from the tau formula."""
    x1, x2 = _vec(w1), _vec(w2)
    if sine_distance(x1, x2) <= 1e-12:
        raise ValueError("lipschitz modulus needs distinct points")
    for x in (x1, x2):
        t = float(tau_point_many(center.frame, x))
        if t <= eps_excl:
            raise ExclusionError(f"point at distance {t:.3g} from the center")
    u = center.blade
    return tau(u, wedge_progressive(KVector.from_vector(x1), KVector.from_vector(x2))) / (
        tau(u, x1) * tau(u, x2)
    )


def lipschitz_modulus_by_distances(center: FoliationCenter, w1, w2) -> float:
    """phi_U(w1, w2) as the ratio of codomain to domain distance."""
    p1, p2 = proj_radial(center, w1, 0.0), proj_radial(center, w2, 0.0)
    return codomain_distance(p1, p2) / angular_distance(w1, w2)


def generalized_distance_check(u, v: Decomposable) -> tuple[float, float]:
    """(tau(U, V), distance in P G^k from U to P(annihilator of V))."""
    uk = as_kvector(u)
    lhs = tau(uk, v)
    basis = annihilator_basis(v, uk.grade)
    a = np.stack([b.coeffs for b in basis], axis=1)
    c = uk.coeffs
    res = c - a @ (np.conj(a).T @ c)
    rhs = float(np.linalg.norm(res) / np.linalg.norm(c))
    return lhs, rhs


def intersection_lower_bound(u, w: Decomposable, v: Decomposable) -> tuple[float, float]:
    """(tau(U, W), |U v (W ^ V)| / (|U| |W ^ V|)) for Span(U) in a hyperplane Span(V)."""
    uk = as_kvector(u)
    dim = uk.ambient_dim
    if v.grade != dim - 1 or w.grade != 2:
        raise ValueError("need a hyperplane V and a 2-vector W")
    if norm(project_kvector_complement_inside(uk, v)) > 1e-9 * norm(uk):
        raise ValueError("Span(U) is not contained in Span(V)")
    meet = wedge_regressive(w, v)
    if norm(meet) <= 1e-12 * norm(w) * norm(v):
        raise ValueError("Span(W) is contained in Span(V)")
    lhs = tau(uk, w)
    rhs = norm(wedge_progressive(uk, meet)) / (norm(uk) * norm(meet))
    return lhs, rhs


def project_kvector_complement_inside(u: KVector, v: Decomposable) -> KVector:
    """Component of U orthogonal to G^k(Span(V)); zero iff U lies in G^k(Span(V))."""
    q = v.span_basis()
    c = compound(q, u.grade)
    return KVector(u.ambient_dim, u.grade, u.coeffs - c @ (np.conj(c).T @ u.coeffs))


# ---------------------------------------------------------------------------
# Charts


def real_to_field(y: np.ndarray, field: Field, n: int) -> np.ndarray:
    """Identify R^{delta n} with K^n; for C, the first n reals are the real parts.

    Shorter inputs are zero-padded.
    """
    y = np.asarray(y, dtype=np.float64)
    m = field.delta * n
    if y.shape[-1] > m:
        raise ValueError(f"chart dimension {y.shape[-1]} exceeds {m}")
    pad = np.zeros(y.shape[:-1] + (m,))
    pad[..., : y.shape[-1]] = y
    if field is Field.REAL:
        return pad
    return pad[..., :n] + 1j * pad[..., n:]


def field_to_real(z: np.ndarray, field: Field) -> np.ndarray:
    z = np.asarray(z)
    if field is Field.REAL:
        return np.real(z).astype(np.float64)
    return np.concatenate([z.real, z.imag], axis=-1)


def affine_chart_many(x: np.ndarray, field: Field = Field.REAL) -> np.ndarray:
    """[1 : x] as unit representatives, x in K^n (or real chart coordinates)."""
    x = np.asarray(x)
    if field is Field.COMPLEX and not np.iscomplexobj(x):
        x = x.astype(np.complex128)
    ones = np.ones(x.shape[:-1] + (1,), dtype=x.dtype)
    return unit(np.concatenate([ones, x], axis=-1))


def affine_chart(x) -> ProjectivePoint:
    x = np.asarray(x)
    if not np.iscomplexobj(x):
        x = x.astype(np.float64)
    return ProjectivePoint(affine_chart_many(x))


def affine_chart_inverse(p) -> np.ndarray:
    r = _vec(p)
    if abs(r[0]) <= 1e-12:
        raise ValueError("point lies on the hyperplane at infinity")
    return r[1:] / r[0]


def stereographic_many(x: np.ndarray, field: Field, n: int) -> np.ndarray:
    """Inverse stereographic projection R^{m-1} -> S^{m-1}, m = delta n, pole at the
    last real coordinate, returned as unit representatives [1 : z] of the sphere S."""
    x = np.asarray(x, dtype=np.float64)
    m = field.delta * n
    if x.shape[-1] != m - 1:
        raise ValueError(f"stereographic chart needs {m - 1} coordinates, got {x.shape[-1]}")
    sq = np.sum(x * x, axis=-1, keepdims=True)
    y = np.concatenate([2 * x, sq - 1], axis=-1) / (sq + 1)
    return affine_chart_many(real_to_field(y, field, n), field)


def stereographic_to_sphere(x, field: Field, n: int) -> ProjectivePoint:
    return ProjectivePoint(stereographic_many(np.asarray(x, dtype=np.float64), field, n))


def sphere_coordinates(p, field: Field) -> np.ndarray:
    """Real coordinates in R^{delta n} of a point [1 : x] of the sphere model."""
    return field_to_real(affine_chart_inverse(p), field)
