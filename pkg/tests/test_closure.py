import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from b2closure.beta import Branch, beta_moment, spherical_moments
from b2closure.closure import (
    closure_params,
    fluxes,
    g_func,
    h_func,
    nonneg_diagnostics,
    q_func,
    r_func,
    sigma_positive,
    sigma_weights,
    slab_e3,
    slab_e3_surface,
    third_moments,
    third_moments_axis,
)
from b2closure.errors import DomainError, NotRealizable, Unrealizable1D, ZeroWeightInconsistency
from b2closure.moments import ClosureFrame, Rotation, build_moments, eigenframe, moment_transform, rotate_moments

from conftest import random_box_state, random_rotation, random_unit, state_from_frame

seeds = st.integers(0, 2**32 - 1)


def dirac_mixture(points):
    """Brute-force moments of ``sum_j a_j delta(Omega - u_j)``."""
    e0 = sum(a for a, _ in points)
    e1 = sum(a * np.asarray(u) for a, u in points)
    e2 = sum(a * np.outer(u, u) for a, u in points)
    e3 = sum(a * np.einsum("i,j,k->ijk", u, u, u) for a, u in points)
    return e0, e1, e2, e3


# ---------------------------------------------------------------------------
# interpolation functions


def test_h_at_half_half():
    assert h_func(0.5, 0.5, 0.0, 0.0) == pytest.approx(-1.0 / 3.0, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 1.0), st.sampled_from([-1, 1]), st.sampled_from([-1, 1]))
def test_h_vanishes_on_box_corners(x, t, sx, sy):
    y = t * (1.0 - x)
    assert h_func(x, y, sx * x, sy * y) == pytest.approx(0.0, abs=1e-15)
    assert g_func(x, y, sx * x, 0.3 * y) == pytest.approx(0.0, abs=1e-15)


def test_q_example():
    assert q_func(0.4, 0.3, 0.2, 0.1) == pytest.approx(0.08, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_interpolant_signs_and_symmetry(seed):
    r = np.random.default_rng(seed)
    lam = r.dirichlet([1.0, 1.0, 1.0])
    x, y = lam[0], lam[1]
    u = r.uniform(-1.0, 1.0, 2)
    fx, fy = u[0] * x, u[1] * y
    assert q_func(x, y, fx, fy) >= 0.0
    if fx * fx / x + fy * fy / y <= 1.0:
        assert r_func(x, y, fx, fy) <= 0.0
        assert h_func(x, y, fx, fy) <= 0.0
    assert g_func(x, y, fx, fy) == pytest.approx(g_func(y, x, fy, fx), abs=1e-16)
    assert g_func(x, y, 0.0, 0.0) == pytest.approx(2 * x * y / (3 * (x + y)), rel=1e-13)


def test_g_examples():
    assert g_func(1 / 3, 1 / 3, 0.0, 0.0) == pytest.approx(1 / 9, abs=1e-16)
    assert g_func(0.0, 0.0, 0.0, 0.0) == 0.0
    assert q_func(0.0, 0.3, 0.0, 0.1) == 0.0
    assert h_func(0.0, 0.3, 0.0, 0.1) == 0.0


def test_interpolants_vectorize():
    x = np.array([0.2, 0.3])
    out = g_func(x, x, 0.0 * x, 0.0 * x)
    np.testing.assert_allclose(out, 2 * x * x / (3 * 2 * x))


def test_interpolant_domain():
    with pytest.raises(DomainError):
        q_func(0.2, 0.3, 0.3, 0.0)
    with pytest.raises(DomainError):
        g_func(0.2, 0.3, 0.0, -0.31)
    # within the 1e-12 slack it is accepted
    q_func(0.2, 0.3, 0.2 + 5e-13, 0.0)


# ---------------------------------------------------------------------------
# sigma and w


def test_sigma_weights_examples():
    s, w = sigma_weights([1 / 3] * 3, [0.0] * 3)
    np.testing.assert_allclose(s, 1 / 9, atol=1e-16)
    np.testing.assert_allclose(w, 1 / 3, atol=1e-16)
    s, w = sigma_weights([1.0, 0.0, 0.0], [0.0] * 3)
    np.testing.assert_array_equal(s, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(w, [1.0, 0.0, 0.0])
    s, w = sigma_weights([0.0, 0.5, 0.5], [0.0] * 3)
    np.testing.assert_allclose(s, [0.0, 1 / 3, 1 / 3], atol=1e-16)
    # sigma_j = lam_j + h/2 on the lam_1 = 0 edge
    assert s[1] == pytest.approx(0.5 + 0.5 * h_func(0.5, 0.5, 0, 0), abs=1e-16)


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_weight_identities(seed):
    r = np.random.default_rng(seed)
    lam = r.dirichlet([1.0, 1.0, 1.0])
    f = lam * r.uniform(-1.0, 1.0, 3)
    s, w = sigma_weights(lam, f)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    for i in range(3):
        j, k = [a for a in range(3) if a != i]
        # lambda_i = sigma_i + (w_j - sigma_j)/2 + (w_k - sigma_k)/2
        assert lam[i] == pytest.approx(s[i] + 0.5 * (w[j] - s[j]) + 0.5 * (w[k] - s[k]), abs=1e-14)
        # w_i = 2 sigma_i - (sigma_j + sigma_k) - lam_i + lam_j + lam_k
        assert w[i] == pytest.approx(2 * s[i] - s[j] - s[k] - lam[i] + lam[j] + lam[k], abs=1e-14)
    assert np.all(s <= w + 1e-12)


def test_sigma_weights_broadcast(rng):
    lam = rng.dirichlet([1.0, 1.0, 1.0], size=(4, 5))
    f = lam * rng.uniform(-1, 1, size=(4, 5, 3))
    s, w = sigma_weights(lam, f)
    assert s.shape == (4, 5, 3)
    s0, w0 = sigma_weights(lam[2, 3], f[2, 3])
    np.testing.assert_allclose(s[2, 3], s0, atol=0)
    np.testing.assert_allclose(w[2, 3], w0, atol=0)


def test_sigma_positive():
    assert sigma_positive([1 / 3] * 3)
    assert not sigma_positive([0.02, 0.49, 0.49])
    assert 3 * 0.02**2 + 0.02 * 0.98 - 0.49**2 < 0
    np.testing.assert_array_equal(sigma_positive([[1 / 3] * 3, [0.02, 0.49, 0.49]]), [True, False])


# ---------------------------------------------------------------------------
# single-axis third moment


def test_third_moment_axis_value():
    w, sigma, f = 1 / 3, 1 / 9, 0.1
    expected = 0.1 * (1 / 81 + 0.02 - 1 / 9) / (0.02 - 1 / 27 - 1 / 9)
    assert expected == pytest.approx(0.0614644, abs=1e-7)
    assert third_moments_axis(w, sigma, f) == pytest.approx(expected, rel=1e-14)
    # cross-check: w * m3 of the beta shape that reproduces (F/w, sigma/w)
    from b2closure.beta import shape_from_moments

    shape = shape_from_moments(f / w, sigma / w)
    assert shape.gamma == pytest.approx(0.65) and shape.delta == pytest.approx(0.365, rel=1e-12)
    assert third_moments_axis(w, sigma, f) == pytest.approx(w * beta_moment(3, shape), rel=1e-13)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.floats(-1.0, 1.0))
def test_third_moment_axis_matches_beta(w, s_frac, u):
    """T = w m3(shape) whenever a smooth shape exists."""
    sigma = w * s_frac
    f = u * math.sqrt(w * sigma)
    from b2closure.beta import shape_from_moments

    shape = shape_from_moments(f / w, sigma / w)
    assert third_moments_axis(w, sigma, f) == pytest.approx(w * beta_moment(3, shape), abs=1e-9)


def test_third_moment_axis_singular_limit():
    # sigma = w, |F| = w: Dirac at mu = +-1, value F
    assert third_moments_axis(0.5, 0.5, 0.5) == 0.5
    assert third_moments_axis(0.5, 0.5, -0.5) == -0.5
    # near it the formula is continuous
    assert third_moments_axis(0.5, 0.5, 0.5 - 1e-7) == pytest.approx(0.5, abs=1e-6)


# ---------------------------------------------------------------------------
# full pipeline


def test_equilibrium_params(equilibrium):
    p = closure_params(equilibrium)
    np.testing.assert_allclose(p.w, 1 / 3, atol=1e-16)
    np.testing.assert_allclose(p.sigma, 1 / 9, atol=1e-16)
    for s in p.shapes:
        assert s.branch is Branch.SMOOTH
        assert s.gamma == pytest.approx(0.5) and s.delta == pytest.approx(0.5)
    assert not p.unsafe and p.notes == ()
    np.testing.assert_array_equal(third_moments(p).tensor, 0.0)


def test_equilibrium_scales_with_e0():
    p = closure_params(build_moments(3.0, (0, 0, 0), np.eye(3)))
    np.testing.assert_allclose(p.w, 1.0, atol=1e-15)
    assert p.delta == pytest.approx(9.0 / 27.0)


def test_crossing_beam_params(crossing_beam):
    p = closure_params(crossing_beam)
    np.testing.assert_array_equal(p.w, [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(p.sigma, [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(p.f, [1.0, 1.0, 0.0])
    for s in p.shapes[:2]:
        assert s.branch is Branch.DIRAC_SINGLE and s.mu == 1.0
    assert not p.unsafe
    t = third_moments(p)
    _, _, _, e3 = dirac_mixture([(1.0, [1, 0, 0]), (1.0, [0, 1, 0])])
    np.testing.assert_array_equal(t.tensor, e3)
    state, e3a = spherical_moments(p.terms())
    np.testing.assert_array_equal(state.as_vector(), crossing_beam.as_vector())


def test_x_beam_flux(x_beam):
    f = fluxes(x_beam)
    np.testing.assert_array_equal(f[0], [1, 1, 0, 0, 1, 0, 0, 0, 0])
    np.testing.assert_array_equal(f[1], 0.0)
    np.testing.assert_array_equal(f[2], 0.0)


def test_equilibrium_flux(equilibrium):
    f = fluxes(equilibrium)
    np.testing.assert_allclose(f[0], [0, 1 / 3, 0, 0, 0, 0, 0, 0, 0], atol=1e-16)


def test_dirac_mixtures_of_orthogonal_beams(rng):
    """Beams along an orthonormal triad with arbitrary weights are reproduced exactly."""
    for _ in range(30):
        q = random_rotation(rng)
        a = rng.uniform(0.1, 1.0, 3)
        sign = rng.choice([-1.0, 1.0], 3)
        pts = [(a[i], sign[i] * q[:, i]) for i in range(3)]
        e0, e1, e2, e3 = dirac_mixture(pts)
        m = build_moments(e0, e1, e2)
        p = closure_params(m)
        assert not p.unsafe
        np.testing.assert_allclose(third_moments(p).tensor, e3, atol=1e-12)


def test_not_realizable_and_negative_discriminant():
    with pytest.raises(NotRealizable):
        closure_params(build_moments(1.0, (0.9, 0.0, 0.0), np.eye(3) / 3.0))
    m = build_moments(1.0, (0.0, 0.0, 0.0), np.diag([0.02, 0.49, 0.49]))
    assert nonneg_diagnostics(m).delta < 0
    with pytest.raises(Unrealizable1D):
        closure_params(m)
    p = closure_params(m, strict=False)
    # eigenvalues are sorted, so lam_hat = 0.02 is the third axis
    assert p.unsafe and p.shapes[2] is None and p.sigma[2] < 0.0
    # the algebraic third moments are still available (zero here: F = 0)
    np.testing.assert_array_equal(third_moments(p).tensor, 0.0)


def test_outside_box():
    m = build_moments(1.0, (0.5, 0.0, 0.0), np.diag([0.4, 0.3, 0.3]))
    with pytest.raises(DomainError):
        closure_params(m)
    p = closure_params(m, strict=False)
    assert p.unsafe and "outside box" in p.notes


def test_single_beam_axis_weights():
    m = build_moments(1.0, (0.0, 0.0, 0.0), np.diag([1.0, 0.0, 0.0]))
    p = closure_params(m)
    np.testing.assert_array_equal(p.w, [1.0, 0.0, 0.0])
    # E1 = 0 with all mass on the axis: equal Diracs at mu = +-1
    assert p.shapes[0].branch is Branch.DIRAC_PAIR and p.shapes[0].gamma == 0.5


def test_zero_weight_inconsistency(monkeypatch):
    """A zero-weight axis carrying flux is rejected (strict) or flagged (non-strict).

    Off the triangle edges w_i grows like lam_i, so no realizable state inside
    the box slack reaches this branch; a normalized frame with F_2 = 1e-12 on
    lam_2 = 0 (exactly the box slack) is injected instead.
    """
    from b2closure import closure as cl

    m = build_moments(1.0, (0.0, 0.0, 0.0), np.diag([1.0, 0.0, 0.0]))
    fake = (eigenframe(m), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1e-12, 0.0]))
    monkeypatch.setattr(cl, "_normalized_frame", lambda *a, **k: fake)
    with pytest.raises(ZeroWeightInconsistency):
        closure_params(m)
    p = closure_params(m, strict=False)
    assert p.unsafe and any("zero weight" in n for n in p.notes)


def test_zero_eigenvalue_forces_sigma_and_f_zero(rng):
    """On lam_i = 0 the closure has sigma_i = 0 and F_i = 0."""
    for _ in range(50):
        q = random_rotation(rng)
        lam = np.append(rng.dirichlet([1.0, 1.0]), 0.0)
        f = lam * rng.uniform(-1, 1, 3)
        m = state_from_frame(1.0, q, lam, f)
        p = closure_params(m)
        k = int(np.argmin(p.frame.lam))
        assert p.sigma[k] == 0.0 and p.f[k] == 0.0
        assert p.w[k] >= 0.0


def test_vertex_state_has_zero_discriminant():
    # |F_j| = lam_j on every axis: three orthogonal beams, w_j = sigma_j = lam_j
    m = build_moments(1.0, (0.5, -0.25, 0.25), np.diag([0.5, 0.25, 0.25]))
    d = nonneg_diagnostics(m)
    assert d.delta == pytest.approx(0.0, abs=1e-15)
    assert d.box_ok and d.margin == pytest.approx(0.0, abs=1e-15)
    p = closure_params(m)
    np.testing.assert_allclose(p.w, [0.5, 0.25, 0.25], atol=1e-15)
    _, _, _, e3 = dirac_mixture([(0.5, [1, 0, 0]), (0.25, [0, -1, 0]), (0.25, [0, 0, 1])])
    np.testing.assert_allclose(third_moments(p).tensor, e3, atol=1e-15)


def test_single_axis_on_box_face_keeps_positive_discriminant():
    # only |F_1| = lam_1: w_1 sigma_1 - F_1^2 = 2 g(lam_2, lam_3) lam_1 > 0
    m = build_moments(1.0, (0.5, 0.0, 0.0), np.diag([0.5, 0.25, 0.25]))
    p = closure_params(m)
    g23 = g_func(0.25, 0.25, 0.0, 0.0)
    assert p.w[0] * p.sigma[0] - 0.25 == pytest.approx(2 * g23 * 0.5, abs=1e-15)


def test_nonneg_diagnostics_equilibrium(equilibrium):
    d = nonneg_diagnostics(equilibrium)
    assert d.delta == pytest.approx(1 / 27, abs=1e-16)
    assert d.box_ok and d.sigma_pos_ok and d.guaranteed
    assert d.margin == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# third moments against the reconstructed ansatz


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_third_moments_match_ansatz(seed):
    """E3 of the closure equals E3 integrated from the reconstructed ansatz."""
    r = np.random.default_rng(seed)
    m = random_box_state(r)[0]
    p = closure_params(m)
    state, e3 = spherical_moments(p.terms())
    np.testing.assert_allclose(state.as_vector(), m.as_vector(), atol=1e-12 * m.e0)
    np.testing.assert_allclose(third_moments(p).tensor, e3.tensor, atol=1e-12 * m.e0)


def test_third_moments_match_quadrature(rng):
    for _ in range(10):
        m = random_box_state(rng)[0]
        p = closure_params(m)
        _, e3 = spherical_moments(p.terms(), method="quadrature", order=32)
        np.testing.assert_allclose(third_moments(p).tensor, e3.tensor, atol=1e-10 * m.e0)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_third_moment_trace_and_oddness(seed):
    r = np.random.default_rng(seed)
    # algebraic identities: they hold wherever the formulas evaluate, so the
    # non-strict path is used below the guaranteed region as well
    m = random_box_state(r, min_lam=0.05)[0]
    t = third_moments(closure_params(m, strict=False)).tensor
    np.testing.assert_allclose(np.einsum("ikk->i", t), m.e1, atol=1e-13 * m.e0)
    neg = build_moments(m.e0, -m.e1, m.e2)
    np.testing.assert_allclose(third_moments(closure_params(neg, strict=False)).tensor, -t, atol=1e-13 * m.e0)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_rotational_invariance(seed):
    """n . f(E) = T^-1 f_x(T E), T the moment transform of a rotation taking n to x."""
    r = np.random.default_rng(seed)
    m = random_box_state(r, min_lam=0.05)[0]
    n = random_unit(r)
    rot = Rotation.to_x_axis(n)
    t = moment_transform(rot.matrix)
    lhs = n @ fluxes(m, strict=False)
    rhs = np.linalg.solve(t, fluxes(rotate_moments(m, rot), strict=False)[0])
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * np.abs(lhs).max())


def test_axisymmetric_structure(rng):
    for _ in range(100):
        lam1 = rng.uniform(0.05, 0.95)
        f1 = rng.uniform(-1, 1) * lam1
        q = random_rotation(rng)
        m = state_from_frame(rng.uniform(0.5, 2), q, [lam1, (1 - lam1) / 2, (1 - lam1) / 2], [f1, 0, 0])
        p = closure_params(m, strict=False)
        ft = np.einsum("il,jm,kn,ijk->lmn", p.frame.rot, p.frame.rot, p.frame.rot, third_moments(p).tensor)
        # the symmetry axis is wherever lam_1 sits in the sorted frame
        a = int(np.argmin(np.abs(p.frame.lam - lam1 * m.e0)))
        b, c = [i for i in range(3) if i != a]
        assert ft[a, a, b] == pytest.approx(0.0, abs=1e-12)
        assert ft[a, a, c] == pytest.approx(0.0, abs=1e-12)
        assert ft[a, b, b] == pytest.approx(0.5 * (p.f[a] - ft[a, a, a]), abs=1e-12)
        assert ft[a, c, c] == pytest.approx(ft[a, b, b], abs=1e-12)


def test_closure_depends_on_in_plane_basis():
    """Inside a degenerate eigenspace the basis choice changes the closed E3."""
    m = build_moments(1.0, (0.3, 0.1, 0.0), np.diag([0.4, 0.4, 0.2]))
    default = closure_params(m)
    c, s = math.cos(0.3), math.sin(0.3)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    alt = ClosureFrame(default.frame.lam, rot, rot.T @ m.e1)
    other = closure_params(m, frame=alt)
    # both reproduce the input moments ...
    for p in (default, other):
        state, _ = spherical_moments(p.terms())
        np.testing.assert_allclose(state.as_vector(), m.as_vector(), atol=1e-12)
    # ... but not the same third moments
    assert np.abs(third_moments(default).tensor - third_moments(other).tensor).max() > 1e-3
    # the default is the balanced choice |F_1| = |F_2|
    assert abs(default.f[0]) == pytest.approx(abs(default.f[1]), abs=1e-14)


def test_h_value_bound_measurement():
    """-h/2 <= min(lam_2 - |F_2|, lam_3 - |F_3|) on the lam_1 = 0 edge: holds at F = 0,
    fails on a small part of the F-box (recorded, not assumed)."""
    lam2 = np.linspace(0.0, 1.0, 201)[:, None, None]
    lam3 = 1.0 - lam2
    u = np.linspace(-1.0, 1.0, 41)
    f2 = u[None, :, None] * lam2
    f3 = u[None, None, :] * lam3
    h = h_func(lam2 + 0 * f2 + 0 * f3, lam3 + 0 * f2 + 0 * f3, f2 + 0 * f3, f3 + 0 * f2)
    slack = np.minimum(lam2 - np.abs(f2), lam3 - np.abs(f3)) + 0.5 * h
    frac = np.mean(slack < -1e-14)
    assert 0.005 < frac < 0.03
    assert slack.min() == pytest.approx(-1.04e-3, abs=5e-5)
    at_zero = slack[:, 20, 20]
    assert at_zero.min() >= -1e-15


# ---------------------------------------------------------------------------
# slab


def test_slab_values():
    assert slab_e3(1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert slab_e3(-1.0, 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert slab_e3(0.0, 1 / 3) == 0.0
    for e1, e2 in [(0.2, 0.5), (0.4, 0.6), (0.1, 0.3)]:
        assert slab_e3(-e1, e2) == -slab_e3(e1, e2)
        assert abs(slab_e3(e1, e2)) <= 1.0


def test_slab_surface_small():
    rows = slab_e3_surface(21)
    assert all(r[0] ** 2 <= r[1] for r in rows)
    valid = [r for r in rows if r[3]]
    assert len(valid) > len(rows) // 2
    assert all(abs(r[2]) <= 1.0 + 1e-12 for r in valid)
    assert all(math.isnan(r[2]) for r in rows if not r[3])
    lookup = {(round(r[0], 12), round(r[1], 12)): r for r in rows}
    for (e1, e2), r in lookup.items():
        mirror = lookup[(round(-e1, 12) + 0.0, e2)]
        assert mirror[3] == r[3]
        if r[3]:
            assert mirror[2] == pytest.approx(-r[2], abs=1e-14)
    with pytest.raises(ValueError):
        slab_e3_surface(1)
