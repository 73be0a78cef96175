import csv

import numpy as np
import pytest

from grassfol.dimension import tail_exponent
from grassfol.exterior import Decomposable, Field, norm, wedge_progressive, KVector
from grassfol.projective import FoliationCenter, sine_distance, tau, tau_point_many
from grassfol.sampling import (
    SphereModel,
    chain_span,
    chain_through_points,
    make_rng,
    pointed_center,
    pointed_center_factors,
    uniform_center,
    uniform_center_factors,
    uniform_projective_point,
    uniform_projective_points,
    uniform_sphere_point,
    uniform_sphere_points,
    write_sample_log,
)


@pytest.mark.parametrize("field", list(Field))
def test_moment_identity(field):
    n, size = 3, 100_000
    rng = make_rng(1, 0)
    x = uniform_projective_points(rng, field, n, size)
    a = np.array([1.0, 0.5, 0.0, -0.2], dtype=field.dtype)
    b = np.array([0.3, 1.0, 0.4, 0.0], dtype=field.dtype)
    vals = (np.conj(x) @ a) * (np.conj(b) @ x.T)  # <x, a><b, x>
    mean = vals.mean()
    want = np.vdot(b, a) / (n + 1)
    sem = vals.std() / np.sqrt(size)
    assert abs(mean - want) <= 3 * sem


@pytest.mark.parametrize("field, slope", [(Field.REAL, 2.0), (Field.COMPLEX, 4.0)])
def test_distance_to_point_tail(field, slope):
    rng = make_rng(2, 0)
    x = uniform_projective_points(rng, field, 2, 1_000_000)
    est = tail_exponent(sine_distance(x, np.eye(3)[0]), window=(2**-6, 2**-2))
    assert est.valid and est.value == pytest.approx(slope, abs=0.1)


def test_unitary_invariance_of_statistics():
    rng = make_rng(3, 0)
    x = uniform_projective_points(rng, Field.COMPLEX, 2, 200_000)
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)) + 1j)
    p = np.eye(3)[0]
    d1 = sine_distance(x, p)
    d2 = sine_distance(x @ q.T, p)
    for r in (0.3, 0.6, 0.9):
        f1, f2 = np.mean(d1 < r), np.mean(d2 < r)
        assert abs(f1 - f2) <= 5 * np.sqrt(f1 * (1 - f1) / len(x))


def test_uniform_center_k0_is_a_projective_point():
    a = uniform_center(make_rng(4, 7), Field.REAL, 3, 0)
    b = uniform_projective_point(make_rng(4, 7), Field.REAL, 3)
    assert sine_distance(a.blade.coeffs, b.rep) < 1e-12


def test_uniform_center_bounds():
    with pytest.raises(ValueError):
        uniform_center_factors(make_rng(0), Field.REAL, 3, 2, 1)


@pytest.mark.parametrize("field, slope", [(Field.REAL, 1.0), (Field.COMPLEX, 2.0)])
def test_center_transversality_tail(field, slope):
    rng = make_rng(5, 0)
    u = uniform_center_factors(rng, field, 2, 0, 1_000_000)[..., 0]
    w = Decomposable(np.eye(3)[:, [0, 1]] + 0.3 * np.eye(3)[:, [2, 0]])
    t = tau_point_many(w.span_basis(), u)
    est = tail_exponent(t, window=(2**-9, 2**-3))
    assert est.valid and est.value == pytest.approx(slope, abs=0.1)


def test_pointed_centers_lie_in_the_hyperplane():
    rng = make_rng(6, 0)
    v = Decomposable(np.random.default_rng(1).standard_normal((4, 3)))
    f = pointed_center_factors(rng, v, 1, 500)
    vb = v.blade_form
    for u in f[:50].transpose(0, 2, 1).reshape(-1, 4):
        assert norm(wedge_progressive(KVector.from_vector(u), vb)) <= 1e-10 * np.linalg.norm(u) * norm(vb)
    with pytest.raises(ValueError):
        pointed_center_factors(rng, Decomposable(np.eye(4)[:, :2]), 0, 1)
    c = pointed_center(rng, v, 0)
    assert isinstance(c, FoliationCenter)


def test_sphere_points_are_on_the_sphere():
    for field in Field:
        model = SphereModel(field, 3)
        pts = uniform_sphere_points(make_rng(7, 0), model, 1000)
        assert np.max(np.abs(model.residual(pts))) <= 1e-12
        assert model.contains(uniform_sphere_point(make_rng(7, 1), model))
        assert not model.in_ball(pts[:1])
    assert SphereModel(Field.COMPLEX, 2).sphere_dim == 3


def test_sphere_statistics_invariant_under_chart_unitary():
    model = SphereModel(Field.COMPLEX, 2)
    x = uniform_sphere_points(make_rng(8, 0), model, 100_000)
    q = np.eye(3, dtype=complex)
    q[1:, 1:] = np.linalg.qr(np.random.default_rng(2).standard_normal((2, 2)) + 1j)[0]
    y = x @ q.T
    d1, d2 = sine_distance(x, x[0]), sine_distance(y, y[0])
    assert np.allclose(np.sort(d1), np.sort(d2), atol=1e-12)


def test_sphere_chain_tail():
    model = SphereModel(Field.COMPLEX, 2)
    u = uniform_sphere_points(make_rng(9, 0), model, 1_000_000)
    w0 = np.eye(3)[:, :2]
    est = tail_exponent(tau_point_many(w0, u), window=(2**-7, 2**-2))
    assert est.valid and est.value == pytest.approx(2.0, abs=0.1)


def test_chain_through_points():
    s = 1 / np.sqrt(2)
    p = np.array([1.0, 1.0, 0.0]) * s
    q = np.array([1.0, -1.0, 0.0]) * s
    line = chain_span([p.astype(complex), q.astype(complex)])
    e01 = Decomposable(np.eye(3)[:, :2]).blade_form
    assert sine_distance(line.blade_form.coeffs, e01.coeffs) < 1e-12
    with pytest.raises(ValueError):
        chain_through_points([p, q])  # a line in P^2 is a leaf, not a center
    model = SphereModel(Field.COMPLEX, 3)
    pts = uniform_sphere_points(make_rng(10, 0), model, 2)
    c = chain_through_points(list(pts))
    assert c.k == 1
    for x in pts:
        assert tau(c.blade, x) <= 1e-9
    single = chain_through_points([pts[0]])
    assert single.k == 0
    with pytest.raises(ValueError):
        chain_through_points([pts[0], 2 * pts[0]])


def test_streams_are_reproducible_and_distinct(tmp_path):
    a = uniform_projective_points(make_rng(11, 3), Field.COMPLEX, 2, 100)
    b = uniform_projective_points(make_rng(11, 3), Field.COMPLEX, 2, 100)
    c = uniform_projective_points(make_rng(11, 4), Field.COMPLEX, 2, 100)
    assert np.array_equal(a, b) and not np.allclose(a, c)
    write_sample_log(tmp_path / "a.csv", 11, 3, a)
    write_sample_log(tmp_path / "b.csv", 11, 3, b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["seed", "stream", "index", "payload_sha256"] and len(rows) == 101
