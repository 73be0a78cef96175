"""Dense Grassmann bialgebra over R or C.

Coefficients of a grade-k element of G(K^N) are stored in a flat array of
length C(N, k), indexed by the lexicographic rank of the sorted index set of
each basis blade.  Every operation works on the last axis, so the ``*_arrays``
helpers accept stacks of coefficient vectors (leading batch axes) and are the
building blocks of the vectorized Monte Carlo code.  The object layer
(:class:`KVector`, :class:`Decomposable`) is a thin immutable wrapper.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Sequence

import numpy as np
import scipy.linalg

MAX_AMBIENT_DIM = 13


class DimensionMismatch(ValueError):
    pass


class DegenerateError(ValueError):
    """Raised when a factor list is linearly dependent or a k-vector is zero."""


class Field(enum.Enum):
    REAL = "R"
    COMPLEX = "C"

    @property
    def delta(self) -> int:
        """Real dimension of the scalar field."""
        return 1 if self is Field.REAL else 2

    @property
    def dtype(self):
        return np.float64 if self is Field.REAL else np.complex128

    @classmethod
    def parse(cls, value: "Field | str") -> "Field":
        if isinstance(value, Field):
            return value
        key = str(value).strip().upper()
        if key in ("R", "REAL"):
            return cls.REAL
        if key in ("C", "COMPLEX"):
            return cls.COMPLEX
        raise ValueError(f"unknown field {value!r}")

    @classmethod
    def of(cls, array) -> "Field":
        return cls.COMPLEX if np.iscomplexobj(array) else cls.REAL


# ---------------------------------------------------------------------------
# Blade combinatorics


def _check_dim(dim: int) -> None:
    if not 1 <= dim <= MAX_AMBIENT_DIM:
        raise ValueError(f"ambient dimension must lie in [1, {MAX_AMBIENT_DIM}], got {dim}")


@lru_cache(maxsize=None)
def blades(dim: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Sorted index sets of grade ``k`` in lexicographic (rank) order."""
    _check_dim(dim)
    if not 0 <= k <= dim:
        return ()
    return tuple(itertools.combinations(range(dim), k))


@lru_cache(maxsize=None)
def blade_rank(dim: int, k: int) -> dict[tuple[int, ...], int]:
    return {b: i for i, b in enumerate(blades(dim, k))}


def permutation_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq`` (distinct entries), by inversion count."""
    inversions = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inversions += 1
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def _wedge_table(dim: int, k: int, l: int):
    """Nonzero structure constants of e_S v e_T for |S| = k, |T| = l.

    Returns (ia, ib, starts, signs) sorted by output rank, where ``starts``
    are the reduceat offsets, one per output blade.
    """
    out_rank = blade_rank(dim, k + l)
    rows = []
    for ia, s in enumerate(blades(dim, k)):
        ss = set(s)
        for ib, t in enumerate(blades(dim, l)):
            if ss.isdisjoint(t):
                joined = s + t
                rows.append((out_rank[tuple(sorted(joined))], ia, ib, permutation_sign(joined)))
    rows.sort()
    io = np.array([r[0] for r in rows], dtype=np.intp)
    ia = np.array([r[1] for r in rows], dtype=np.intp)
    ib = np.array([r[2] for r in rows], dtype=np.intp)
    sg = np.array([r[3] for r in rows], dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, io[1:] != io[:-1]])
    return ia, ib, starts, sg


@lru_cache(maxsize=None)
def _hodge_table(dim: int, k: int):
    """Gather indices and signs so that star(a)[j] = signs[j] * a[src[j]]."""
    rank_k = blade_rank(dim, k)
    comp = blades(dim, dim - k)
    src = np.empty(len(comp), dtype=np.intp)
    signs = np.empty(len(comp), dtype=np.float64)
    full = set(range(dim))
    for j, c in enumerate(comp):
        s = tuple(sorted(full.difference(c)))
        src[j] = rank_k[s]
        signs[j] = permutation_sign(s + c)
    return src, signs


# ---------------------------------------------------------------------------
# Array-level kernels (batched over leading axes)


def wedge_arrays(a: np.ndarray, b: np.ndarray, dim: int, k: int, l: int) -> np.ndarray:
    """Progressive product of coefficient arrays of grades ``k`` and ``l``."""
    if k + l > dim:
        shape = np.broadcast_shapes(np.shape(a)[:-1], np.shape(b)[:-1])
        return np.zeros(shape + (1,), dtype=np.result_type(a, b))
    ia, ib, starts, sg = _wedge_table(dim, k, l)
    terms = a[..., ia] * b[..., ib] * sg
    return np.add.reduceat(terms, starts, axis=-1)


def hodge_arrays(a: np.ndarray, dim: int, k: int) -> np.ndarray:
    src, signs = _hodge_table(dim, k)
    return a[..., src] * signs


def inner_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Grassmann-extended Hermitian product, conjugate-linear in ``a``."""
    return np.sum(np.conj(a) * b, axis=-1)


def compound(matrix: np.ndarray, k: int) -> np.ndarray:
    """k-th compound matrix: entry (S, T) is the minor det(M[S, T]).

    ``matrix`` has shape (..., rows, cols); the result has shape
    (..., C(rows, k), C(cols, k)).  This is G^k(f) for the linear map f
    with matrix M in canonical bases.
    """
    rows, cols = matrix.shape[-2:]
    batch = matrix.shape[:-2]
    if k == 0:
        return np.ones(batch + (1, 1), dtype=matrix.dtype)
    rs = np.array(blades(rows, k), dtype=np.intp).reshape(-1, k)
    cs = np.array(blades(cols, k), dtype=np.intp).reshape(-1, k)
    if len(rs) == 0 or len(cs) == 0:
        return np.zeros(batch + (len(rs), len(cs)), dtype=matrix.dtype)
    sub = matrix[..., rs[:, None, :, None], cs[None, :, None, :]]
    return np.linalg.det(sub)


def blade_coefficients(factors: np.ndarray) -> np.ndarray:
    """Blade expansion of u_1 v ... v u_k from the columns of ``factors``.

    Coefficient on e_S is the maximal minor on rows S (Laplace/Cauchy-Binet).
    """
    k = factors.shape[-1]
    return compound(factors, k)[..., 0]


# ---------------------------------------------------------------------------
# Object layer


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KVector:
    """Homogeneous element of grade ``grade`` of G(K^ambient_dim)."""

    ambient_dim: int
    grade: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.ambient_dim)
        if not 0 <= self.grade <= self.ambient_dim:
            raise ValueError(f"grade {self.grade} outside [0, {self.ambient_dim}]")
        c = np.asarray(self.coeffs)
        if not np.iscomplexobj(c):
            c = c.astype(np.float64)
        if c.shape != (comb(self.ambient_dim, self.grade),):
            raise ValueError(
                f"expected {comb(self.ambient_dim, self.grade)} coefficients, got shape {c.shape}"
            )
        object.__setattr__(self, "coeffs", _freeze(c))

    @classmethod
    def zero(cls, dim: int, grade: int, field: Field = Field.REAL) -> "KVector":
        return cls(dim, grade, np.zeros(comb(dim, grade), dtype=field.dtype))

    @classmethod
    def scalar(cls, dim: int, value: complex | float) -> "KVector":
        return cls(dim, 0, np.array([value]))

    @classmethod
    def from_vector(cls, v) -> "KVector":
        v = np.asarray(v)
        return cls(len(v), 1, v)

    @classmethod
    def blade(cls, dim: int, indices: Sequence[int], field: Field = Field.REAL) -> "KVector":
        """Unit basis blade e_S; unsorted indices pick up the permutation sign."""
        if len(set(indices)) != len(indices):
            return cls.zero(dim, min(len(indices), dim), field)
        s = tuple(sorted(indices))
        c = np.zeros(comb(dim, len(s)), dtype=field.dtype)
        c[blade_rank(dim, len(s))[s]] = permutation_sign(tuple(indices))
        return cls(dim, len(s), c)

    @property
    def field(self) -> Field:
        return Field.of(self.coeffs)

    def __getitem__(self, indices: Sequence[int]):
        return self.coeffs[blade_rank(self.ambient_dim, self.grade)[tuple(indices)]]

    def _same_space(self, other: "KVector") -> None:
        if self.ambient_dim != other.ambient_dim or self.grade != other.grade:
            raise DimensionMismatch(
                f"G^{self.grade}(K^{self.ambient_dim}) vs G^{other.grade}(K^{other.ambient_dim})"
            )

    def __add__(self, other: "KVector") -> "KVector":
        self._same_space(other)
        return KVector(self.ambient_dim, self.grade, self.coeffs + other.coeffs)

    def __sub__(self, other: "KVector") -> "KVector":
        self._same_space(other)
        return KVector(self.ambient_dim, self.grade, self.coeffs - other.coeffs)

    def __neg__(self) -> "KVector":
        return KVector(self.ambient_dim, self.grade, -self.coeffs)

    def __mul__(self, scalar) -> "KVector":
        return KVector(self.ambient_dim, self.grade, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "KVector":
        return KVector(self.ambient_dim, self.grade, self.coeffs / scalar)

    def normalized(self) -> "KVector":
        nrm = norm(self)
        if nrm == 0:
            raise DegenerateError("cannot normalize the zero k-vector")
        return self / nrm

    def allclose(self, other: "KVector", atol: float = 1e-12) -> bool:
        return (
            self.ambient_dim == other.ambient_dim
            and self.grade == other.grade
            and bool(np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol))
        )

    def __repr__(self) -> str:
        terms = []
        for b, c in zip(blades(self.ambient_dim, self.grade), self.coeffs):
            if c != 0:
                name = "v".join(f"e{i}" for i in b) or "1"
                terms.append(f"{c:+.6g}*{name}")
        return f"KVector(dim={self.ambient_dim}, grade={self.grade}, {' '.join(terms) or '0'})"


def as_kvector(x) -> KVector:
    """Coerce vectors, decomposables and projective points to a KVector."""
    if isinstance(x, KVector):
        return x
    blade_form = getattr(x, "blade_form", None)
    if blade_form is not None:
        return blade_form
    rep = getattr(x, "rep", None)
    if rep is not None:
        return as_kvector(rep)
    return KVector.from_vector(x)


def _check_pair(a: KVector, b: KVector) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatch(f"ambient dimensions {a.ambient_dim} and {b.ambient_dim}")


def wedge_progressive(a, b) -> KVector:
    """a v b; grades adding past the ambient dimension give the top-grade zero."""
    a, b = as_kvector(a), as_kvector(b)
    _check_pair(a, b)
    dim = a.ambient_dim
    out = wedge_arrays(a.coeffs, b.coeffs, dim, a.grade, b.grade)
    return KVector(dim, min(a.grade + b.grade, dim), out)


def wedge_all(*items) -> KVector:
    out = as_kvector(items[0])
    for x in items[1:]:
        out = wedge_progressive(out, x)
    return out


def hodge_star(a) -> KVector:
    a = as_kvector(a)
    dim = a.ambient_dim
    return KVector(dim, dim - a.grade, hodge_arrays(a.coeffs, dim, a.grade))


def wedge_regressive(a, b) -> KVector:
    """a ^ b = star(star(a) v star(b)) with the determinant volume form."""
    a, b = as_kvector(a), as_kvector(b)
    _check_pair(a, b)
    return hodge_star(wedge_progressive(hodge_star(a), hodge_star(b)))


def gram_inner(a, b) -> complex | float:
    a, b = as_kvector(a), as_kvector(b)
    _check_pair(a, b)
    if a.grade != b.grade:
        raise DimensionMismatch(f"grades {a.grade} and {b.grade}")
    value = inner_arrays(a.coeffs, b.coeffs)
    return complex(value) if np.iscomplexobj(value) else float(value)


def norm(a) -> float:
    return float(np.linalg.norm(as_kvector(a).coeffs))


# ---------------------------------------------------------------------------
# Decomposables


@dataclass(frozen=True, eq=False)
class Decomposable:
    """Pure k-vector u_1 v ... v u_k, carried together with its factors.

    ``factors`` holds the vectors as columns, shape (ambient_dim, k).
    """

    factors: np.ndarray
    blade_form: KVector = field(init=False)

    def __post_init__(self):
        f = np.asarray(self.factors)
        if not np.iscomplexobj(f):
            f = f.astype(np.float64)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2:
            raise ValueError("factors must be a (dim, k) array")
        object.__setattr__(self, "factors", _freeze(f))
        dim, k = f.shape
        form = KVector.scalar(dim, np.ones((), dtype=f.dtype)[()])
        for j in range(k):
            form = wedge_progressive(form, KVector.from_vector(f[:, j]))
        object.__setattr__(self, "blade_form", form)

    @classmethod
    def of(cls, *vectors) -> "Decomposable":
        return cls(np.stack([np.asarray(v) for v in vectors], axis=1))

    @property
    def ambient_dim(self) -> int:
        return self.factors.shape[0]

    @property
    def grade(self) -> int:
        return self.factors.shape[1]

    @property
    def field(self) -> Field:
        return Field.of(self.factors)

    def is_zero(self, tol: float = 1e-12) -> bool:
        scale = np.prod(np.linalg.norm(self.factors, axis=0)) if self.grade else 1.0
        return norm(self.blade_form) <= tol * scale

    def span_basis(self) -> np.ndarray:
        """Orthonormal basis of Span(U) as columns; raises if factors are dependent."""
        return orthonormal_basis(self.factors)


def orthonormal_basis(factors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if factors.shape[1] == 0:
        return factors
    q, r = np.linalg.qr(factors)
    d = np.abs(np.diag(r))
    if d.min() <= tol * max(d.max(), np.finfo(float).tiny):
        raise DegenerateError("factors are linearly dependent")
    return q


def complement_basis(factors: np.ndarray) -> np.ndarray:
    """Orthonormal basis of Span(factors)^perp."""
    return scipy.linalg.null_space(np.conj(factors).T)


def project_orthogonal_complement(u, v_span: Decomposable) -> np.ndarray:
    """pi_V^perp(u): orthogonal projection of u onto Span(V)^perp."""
    u = np.asarray(getattr(u, "rep", u))
    q = v_span.span_basis()
    return u - q @ (np.conj(q).T @ u)


def project_kvector_complement(u, v_span: Decomposable) -> KVector:
    """Pi_V^perp(U) = G^k(pi_V^perp)(U) applied to the blade expansion."""
    u = as_kvector(u)
    q = v_span.span_basis()
    proj = np.eye(u.ambient_dim) - q @ np.conj(q).T
    return KVector(u.ambient_dim, u.grade, compound(proj, u.grade) @ u.coeffs)


def annihilator_basis(v: Decomposable, k: int) -> list[KVector]:
    """Orthonormal basis of {U in G^k : U v V = 0}.

    Computed as the orthogonal complement of G^k(Span(V)^perp), whose
    orthonormal basis is the k-th compound of an orthonormal basis of
    Span(V)^perp.
    """
    if v.is_zero():
        raise DegenerateError("annihilator of the zero k-vector")
    dim = v.ambient_dim
    if not 0 <= k <= dim:
        raise ValueError(f"grade {k} outside [0, {dim}]")
    perp = complement_basis(v.factors)
    inside = compound(perp, k)
    if inside.shape[1] == 0:
        basis = np.eye(comb(dim, k), dtype=v.factors.dtype)
    else:
        basis = scipy.linalg.null_space(np.conj(inside).T)
    return [KVector(dim, k, basis[:, j]) for j in range(basis.shape[1])]
