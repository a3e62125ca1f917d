import numpy as np
import pytest

from smcf import geometry as geo
from smcf import shapes
from smcf.errors import ConfigurationError, DegenerateImmersion, FrameGaugeFailure


def discrete_symbols(h):
    s1 = (8 * np.sin(h) - np.sin(2 * h)) / (6 * h)
    s2 = (30 - 32 * np.cos(h) + 2 * np.cos(2 * h)) / (12 * h * h)
    return s1, s2


def orders(errs):
    e = np.asarray(errs)
    return np.log2(e[:-1] / e[1:])


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        geo.PeriodicGrid((15,))
    with pytest.raises(ConfigurationError):
        geo.PeriodicGrid((8,))
    with pytest.raises(ConfigurationError):
        geo.PeriodicGrid((16, 16, 16))
    g = geo.PeriodicGrid((32, 64))
    assert g.n == 2 and g.ambient_dim == 4
    assert np.allclose(g.spacings, (2 * np.pi / 32, 2 * np.pi / 64))


def test_difference_stencils_fourth_order():
    errs1, errs2 = [], []
    for N in (16, 32, 64):
        g = geo.PeriodicGrid((N,))
        (t,) = g.coordinates()
        f = np.exp(np.sin(t))
        errs1.append(np.max(np.abs(g.d1(f, 0) - np.cos(t) * f)))
        errs2.append(np.max(np.abs(g.d2(f, 0) - (np.cos(t) ** 2 - np.sin(t)) * f)))
    assert np.all(orders(errs1) > 3.7)
    assert np.all(orders(errs2) > 3.7)


def test_circle_metric_r2():
    s = shapes.circle(2.0, 64)
    c = geo.induced_metric(s)
    h = s.grid.spacings[0]
    s1, _ = discrete_symbols(h)
    assert np.allclose(c.g[..., 0, 0], 4 * s1**2, rtol=1e-13)
    assert np.allclose(c.area_weight, 2 * s1 * h, rtol=1e-13)
    # s1 -> 1 at fourth order, so g ~ 4 and dmu ~ 2h
    assert abs(c.g[0, 0, 0] - 4) < 1e-4


def test_torus_metric_flat():
    s = shapes.clifford_torus(1.5, 0.7, (32, 32))
    c = geo.induced_metric(s)
    s1, _ = discrete_symbols(s.grid.spacings[0])
    assert np.allclose(c.g[..., 0, 0], (1.5 * s1) ** 2, rtol=1e-13)
    assert np.allclose(c.g[..., 1, 1], (0.7 * s1) ** 2, rtol=1e-13)
    assert np.max(np.abs(c.g[..., 0, 1])) < 1e-14
    assert np.max(np.abs(c.christoffel)) < 1e-12


def test_constant_map_is_degenerate():
    s = shapes.circle(1.0, 32)
    s = s.replace(positions=np.ones_like(s.positions))
    with pytest.raises(DegenerateImmersion) as info:
        geo.induced_metric(s)
    assert info.value.node is not None


def test_circle_mean_curvature_and_binormal():
    s = shapes.circle(1.0, 128)
    c = geo.geometry(s)
    F = s.positions
    inward = -F / np.linalg.norm(F, axis=-1, keepdims=True)
    Hn = np.linalg.norm(c.H, axis=-1)
    assert np.max(np.abs(Hn - 1)) < 1e-6
    assert np.max(np.abs(c.H / Hn[:, None] - inward)) < 1e-12
    JH = np.einsum("...ab,...b->...a", c.J_matrix, c.H)
    assert np.max(np.abs(JH / Hn[:, None] - [0, 0, 1])) < 1e-12


def test_torus_mean_curvature_converges():
    errs = []
    for N in (16, 32, 64):
        s = shapes.clifford_torus(1.0, 0.5, (N, N))
        c = geo.geometry(s)
        errs.append(np.max(np.abs(np.linalg.norm(c.H, axis=-1) - np.sqrt(1 + 4))))
        nu1, nu2 = s.frame_ref[..., 0], s.frame_ref[..., 1]
        expected = -(1 / 1.0) * nu1 - (1 / 0.5) * nu2
        assert np.max(np.abs(c.H - expected)) < 5 * errs[-1] + 1e-12
    assert np.all(orders(errs) > 3.7)


def test_complex_structure_properties():
    s = shapes.perturbed_torus(1.0, 0.8, 0.1, 2, (32, 32))
    c = geo.geometry(s)
    J = c.J_matrix
    nu1, nu2 = c.nu1, c.nu2
    Jn1 = np.einsum("...ab,...b->...a", J, nu1)
    JJ = np.einsum("...ab,...bc->...ac", J, J)
    P = c.normal_projector
    assert np.max(np.abs(Jn1 - nu2)) < 1e-12
    assert np.max(np.abs(JJ + P)) < 1e-12
    assert np.max(np.abs(np.sum(Jn1 * nu1, axis=-1))) < 1e-12
    assert np.max(np.abs(np.linalg.norm(Jn1, axis=-1) - 1)) < 1e-12
    JH = np.einsum("...ab,...b->...a", J, c.H)
    assert np.max(np.abs(np.sum(JH * c.H, axis=-1))) < 1e-12
    # (F_1, F_2, nu, J nu) positively oriented
    M = np.stack([c.dF[..., 0, :], c.dF[..., 1, :], nu1, Jn1], axis=-1)
    assert np.all(np.linalg.det(M) > 0)


def test_second_fundamental_form_normal_and_symmetric():
    errs = []
    for N in (32, 64, 128):
        s = shapes.perturbed_circle(1.0, 3, 0.1, N, lift=0.2)
        c = geo.geometry(s)
        errs.append(np.max(np.abs(np.einsum("...ija,...ka->...ijk", c.A, c.dF))))
    # A is projected, so normality holds to rounding at every resolution
    assert max(errs) < 1e-12
    t = geo.geometry(shapes.perturbed_torus(1.0, 0.8, 0.1, 2, (32, 32)))
    assert np.max(np.abs(t.A - np.swapaxes(t.A, -2, -3))) < 1e-12
    assert np.max(np.abs(np.einsum("...ij,...ija->...a", t.g_inv, t.A) - t.H)) < 1e-12


def test_frame_gauge_failure():
    s = shapes.circle(1.0, 32)
    ref = s.frame_ref.copy()
    ref[3] = 0.0
    with pytest.raises(FrameGaugeFailure) as info:
        geo.geometry(s.replace(frame_ref=ref))
    assert info.value.node is not None


def test_parallel_second_fundamental_form():
    c = geo.geometry(shapes.circle(1.0, 64))
    nA = geo.covariant_derivative(c.A, c)
    assert np.max(np.abs(nA)) < 1e-12
    t = geo.geometry(shapes.clifford_torus(1.0, 0.6, (32, 32)))
    assert np.max(np.abs(geo.covariant_derivative(t.A, t))) < 1e-11


def test_metric_compatibility_converges():
    errs = []
    for N in (32, 64, 128):
        s = shapes.perturbed_circle(1.0, 2, 0.1, N, lift=0.2)
        c = geo.geometry(s)
        T = c.A
        S = geo.covariant_derivative(c.A, c)[..., 0, :, :, :]  # an unrelated tensor of the same type
        lhs = s.grid.d1(geo.tensor_norm_sq(T, c.g_inv, 1, S), 0)
        nT = geo.covariant_derivative(T, c)
        nS = geo.covariant_derivative(S, c)
        rhs = geo.tensor_norm_sq(nT[..., 0, :, :, :], c.g_inv, 1, S) + geo.tensor_norm_sq(T, c.g_inv, 1, nS[..., 0, :, :, :])
        errs.append(np.max(np.abs(lhs - rhs)))
    assert np.all(orders(errs) > 3.5)


def test_circle_energy_matches_discrete_closed_form():
    N = 256
    s = shapes.circle(1.0, N)
    rep = geo.energy(s, k=1, delta=0.5)
    h = 2 * np.pi / N
    s1, s2 = discrete_symbols(h)
    p = 1.5
    vol = 2 * np.pi * s1
    kappa = s2 / s1**2
    assert abs(rep.vol - vol) < 1e-12 * vol
    assert abs(rep.H_Lp**2 - (kappa**p * vol) ** (2 / p)) < 1e-12 * rep.H_Lp**2
    assert abs(rep.A_levels_sq[0] - kappa**2 * vol) < 1e-12 * rep.A_levels_sq[0]
    assert rep.A_levels_sq[1] < 1e-20
    # continuum values within the fourth-order truncation error
    cont = [2 * np.pi, (2 * np.pi) ** (4 / 3), 2 * np.pi]
    got = [rep.vol, rep.H_Lp**2, rep.A_levels_sq[0]]
    for a, b in zip(got, cont):
        assert abs(a - b) / b < 5e-8
    assert rep.E_k == rep.vol + rep.H_Lp**2 + sum(rep.A_levels_sq)


def test_energy_scaling():
    s = shapes.perturbed_circle(1.0, 3, 0.05, 128, lift=0.1)
    lam = 1.7
    a = geo.energy(s, k=0)
    b = geo.energy(s.replace(positions=lam * s.positions, frame_ref=s.frame_ref), k=0)
    assert abs(b.vol - lam * a.vol) < 1e-12 * b.vol
    assert abs(b.A_levels_sq[0] - a.A_levels_sq[0] / lam) < 1e-10 * a.A_levels_sq[0]


def test_energy_deterministic_and_shift_invariant():
    s = shapes.perturbed_torus(1.0, 0.8, 0.05, 2, (32, 32))
    a, b = geo.energy(s), geo.energy(s)
    assert a == b
    shifted = s.replace(positions=np.roll(s.positions, (5, 3), axis=(0, 1)), frame_ref=np.roll(s.frame_ref, (5, 3), axis=(0, 1)))
    c = geo.energy(shifted)
    assert abs(c.E_k - a.E_k) < 1e-11 * a.E_k
    assert a.k == 2 and all(x >= 0 for x in a.A_levels_sq)


def test_energy_validation():
    s = shapes.circle(1.0, 32)
    with pytest.raises(ConfigurationError):
        geo.energy(s, k=-1)
    with pytest.raises(ConfigurationError):
        geo.energy(s, delta=1.0)


def test_critical_order():
    assert geo.critical_order(1) == 1
    assert geo.critical_order(2) == 2


def test_propagated_frame_without_reference():
    s = shapes.perturbed_circle(1.0, 3, 0.05, 64, lift=0.1)
    a = geo.geometry(s)
    b = geo.geometry(s.replace(frame_ref=None))
    # H and J do not depend on the choice of frame
    assert np.max(np.abs(a.H - b.H)) < 1e-12
    assert np.max(np.abs(a.J_matrix - b.J_matrix)) < 1e-12
