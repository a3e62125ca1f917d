import numpy as np
import pytest
from planes import metrics, normal_tensor, random_pairs

from smcf import geometry as geo
from smcf import grassmann as gr
from smcf import shapes
from smcf.errors import CutLocus


def test_plucker_unit_and_orientation():
    s = shapes.perturbed_torus(1.0, 0.8, 0.1, 2, (32, 32))
    G = gr.gauss_map(s)
    assert np.max(np.abs(np.linalg.norm(G.plucker, axis=-1) - 1)) < 1e-12
    EtE = np.swapaxes(G.frames, -1, -2) @ G.frames
    assert np.max(np.abs(EtE - np.eye(2))) < 1e-12
    flipped = s.replace(positions=s.positions[::-1, :], frame_ref=None)
    Gf = gr.gauss_map(flipped)
    assert np.max(np.abs(Gf.plucker[::-1, :] + G.plucker)) < 1e-12


def test_circle_gauss_map_is_tangent():
    s = shapes.circle(1.0, 64)
    G = gr.gauss_map(s)
    (t,) = s.grid.coordinates()
    expected = np.stack([-np.sin(t), np.cos(t), 0 * t], -1)
    assert np.max(np.abs(G.plucker - expected)) < 1e-14


def test_torus_plucker_components():
    s = shapes.clifford_torus(1.0, 0.5, (16, 16))
    G = gr.gauss_map(s)
    t1, t2 = s.grid.coordinates()
    u = np.stack([-np.sin(t1), np.cos(t1), 0 * t1, 0 * t1], -1)
    v = np.stack([0 * t2, 0 * t2, -np.sin(t2), np.cos(t2)], -1)
    expected = np.stack([u[..., i] * v[..., j] - u[..., j] * v[..., i] for i, j in gr.subsets(4, 2)], -1)
    assert np.max(np.abs(G.plucker - expected)) < 1e-14


def test_plucker_from_tangents_matches_frames():
    s = shapes.perturbed_torus(1.0, 0.8, 0.1, 2, (16, 16))
    c = geo.induced_metric(s)
    assert np.max(np.abs(gr.plucker_from_tangents(c.dF, c.sqrt_det_g) - gr.gauss_map(s, c).plucker)) < 1e-13


def test_derivation_extension():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4))
    u, v = rng.standard_normal(4), rng.standard_normal(4)
    D = gr.derivation(M, 2)
    wedge = lambda a, b: gr.plucker(np.stack([a, b], -1))  # noqa: E731
    assert np.allclose(D @ wedge(u, v), wedge(M @ u, v) + wedge(u, M @ v), atol=1e-13)


def test_grassmann_tangent_projector():
    rng = np.random.default_rng(4)
    E = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    P = np.eye(4) - E @ E.T
    PT = gr.grassmann_tangent_projector(P, 2)
    assert np.allclose(PT @ PT, PT, atol=1e-13) and np.allclose(PT, PT.T, atol=1e-13)
    assert np.trace(PT) == pytest.approx(4.0)  # dim G(2, 4) = 2 * 2
    assert np.allclose(PT @ gr.plucker(E), 0, atol=1e-13)


def test_identical_planes_give_identities():
    rng = np.random.default_rng(5)
    dF, _ = random_pairs(rng, 2, 50)
    E = gr.orthonormal_frame(dF)
    pack = gr.geodesic_and_transport(E, E)
    g, g_inv = metrics(dF)
    assert np.all(pack.distance == 0)
    assert np.array_equal(pack.rotation, np.broadcast_to(np.eye(4), pack.rotation.shape))
    Q = gr.tangent_map_transport(pack, dF, dF, g_inv)
    assert np.array_equal(Q, np.broadcast_to(np.eye(2), Q.shape))
    T = normal_tensor(rng, E, 2)
    R2 = gr.build_Rs(pack, dF, dF, g_inv, 2)
    assert np.array_equal(R2(T), T)


def test_lines_in_a_plane_rotate_by_the_angle():
    alpha = 0.4
    E = np.array([[1.0], [0.0], [0.0]])
    Et = np.array([[np.cos(alpha)], [np.sin(alpha)], [0.0]])
    pack = gr.geodesic_and_transport(E, Et)
    R = np.array([[np.cos(alpha), np.sin(alpha), 0], [-np.sin(alpha), np.cos(alpha), 0], [0, 0, 1]])
    assert pack.distance == pytest.approx(alpha, abs=1e-15)
    assert np.allclose(pack.rotation, R, atol=1e-15)
    assert np.allclose(pack.geodesic(0.5)[:, 0], [np.cos(alpha / 2), np.sin(alpha / 2), 0], atol=1e-15)


def test_orthogonal_planes_are_cut_locus():
    E = np.eye(4)[:, :2]
    Et = np.eye(4)[:, 2:]
    with pytest.raises(CutLocus) as info:
        gr.geodesic_and_transport(E, Et)
    assert info.value.max_angle == pytest.approx(np.pi / 2)


def test_opposite_orientation_is_cut_locus():
    E = np.eye(3)[:, :1]
    with pytest.raises(CutLocus):
        gr.geodesic_and_transport(E, -E)


@pytest.mark.parametrize("n", [1, 2])
def test_transports_are_isometries(n):
    rng = np.random.default_rng(10 + n)
    dF, dFt = random_pairs(rng, n, 200)
    E, Et = gr.orthonormal_frame(dF), gr.orthonormal_frame(dFt)
    pack = gr.geodesic_and_transport(E, Et)
    R = pack.rotation
    m = n + 2
    assert np.max(np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(m))) < 1e-13
    # P_top carries the plane onto the plane
    PE = E @ np.swapaxes(E, -1, -2)
    assert np.max(np.abs(pack.P_top @ Et - PE @ pack.P_top @ Et)) < 1e-13
    g, g_inv = metrics(dF)
    gt, gt_inv = metrics(dFt)
    Q = gr.tangent_map_transport(pack, dF, dFt, g_inv)
    assert np.max(np.abs(np.swapaxes(Q, -1, -2) @ g @ Q - gt)) < 1e-10 * np.max(np.abs(gt))
    for s in (2, 3):
        T = normal_tensor(rng, Et, s)
        RT = gr.build_Rs(pack, dF, dFt, gt_inv, s)(T)
        a = geo.tensor_norm_sq(RT, g_inv, 1)
        b = geo.tensor_norm_sq(T, gt_inv, 1)
        assert np.max(np.abs(a - b) / b) < 1e-10


def test_transport_commutes_with_J():
    rng = np.random.default_rng(21)
    dF, dFt = random_pairs(rng, 2, 200)
    E, Et = gr.orthonormal_frame(dF), gr.orthonormal_frame(dFt)
    pack = gr.geodesic_and_transport(E, Et)
    v = normal_tensor(rng, Et, 0)
    lhs = np.einsum("kab,kb->ka", pack.rotation, gr.frame_J(Et, v))
    rhs = gr.frame_J(E, np.einsum("kab,kb->ka", pack.rotation, v))
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_distance_symmetric_and_zero_iff_equal():
    rng = np.random.default_rng(8)
    dF, dFt = random_pairs(rng, 2, 100)
    E, Et = gr.orthonormal_frame(dF), gr.orthonormal_frame(dFt)
    d1 = gr.geodesic_and_transport(E, Et).distance
    d2 = gr.geodesic_and_transport(Et, E).distance
    assert np.max(np.abs(d1 - d2)) < 1e-12
    assert np.all(d1 > 1e-3)
    # a different basis of the same plane is the same point
    assert np.max(gr.grassmann_distance(E, gr.orthonormal_frame(2.0 * dF))) < 1e-7


def test_circle_pair_intrinsic_distance_closed_form():
    # concentric circles of radii 1 and 1.1: A = -kappa (radial) with |A|_g = 1/r
    a, b = shapes.circle(1.0, 128), shapes.circle(1.1, 128)
    ca, cb = geo.geometry(a), geo.geometry(b)
    pack = gr.geodesic_and_transport(gr.orthonormal_frame(ca.dF), gr.orthonormal_frame(cb.dF))
    R2 = gr.build_Rs(pack, ca.dF, cb.dF, cb.g_inv, 2)
    d = np.sqrt(geo.tensor_norm_sq(ca.A - R2(cb.A), ca.g_inv, 1))
    assert np.max(np.abs(d - (1.0 - 1 / 1.1))) < 1e-6


def test_identification_of_dp_with_A_converges():
    errs = [gr.gauss_identification_error(shapes.perturbed_circle(1.0, 3, 0.1, N, lift=0.2)) for N in (64, 128, 256)]
    e = np.asarray(errs)
    assert np.all(np.log2(e[:-1] / e[1:]) > 3.5)


def test_circle_tension_vanishes():
    s = shapes.circle(1.0, 128)
    c = geo.geometry(s)
    tau = gr.tension_field(gr.plucker_field(s, c), c)
    assert np.max(np.abs(tau)) < 1e-10


def test_gauss_flow_residual_converges():
    for eps in (0.0, 0.05):
        errs = [gr.gauss_flow_residual(shapes.perturbed_circle(1.0, 3, 0.1, N, lift=0.2), eps, 1e-3) for N in (64, 128, 256)]
        e = np.asarray(errs)
        assert np.all(np.log2(e[:-1] / e[1:]) > 3.5)


def test_gauss_energy_volume_term_and_circle_gap():
    s = shapes.circle(1.0, 256)
    rep = gr.gauss_energy(s, 0)
    assert rep.vol == pytest.approx(geo.energy(s, 0).vol, rel=1e-15)
    rep = gr.gauss_energy(s, 1)
    assert rep.gap <= 1e-6
    with pytest.raises(ValueError):
        gr.gauss_energy(s, 4)


def test_gauss_energy_gap_converges_on_torus():
    gaps = [gr.gauss_energy(shapes.perturbed_torus(1.0, 1.0, 0.05, 2, (N, N)), 1).gap for N in (16, 32, 64)]
    g = np.asarray(gaps)
    assert np.all(np.log2(g[:-1] / g[1:]) > 3.5)
