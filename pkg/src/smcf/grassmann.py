"""Gauss maps into the oriented Grassmannian of ``n``-planes in ``R^(n+2)``.

Planes are represented by orthonormal ``(m, n)`` frames and, for embedding
purposes, by unit Plücker vectors in ``Lambda^n R^m`` (coordinates indexed by
sorted ``n``-subsets of ``range(m)`` in lexicographic order).

Transport between two planes uses the principal-angle decomposition: the
unique minimizing geodesic rotates each principal vector of one plane toward
its partner, and parallel transport of both the plane and its orthogonal
complement along it is the restriction of the "direct rotation" ``R`` that
performs those planar rotations and fixes everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import pi

import numpy as np

from . import geometry as geo
from .errors import CutLocus

CUT_MARGIN = 1e-3


# ---------------------------------------------------------------------------
# exterior algebra


@lru_cache(maxsize=None)
def subsets(m, n):
    return tuple(combinations(range(m), n))


def plucker(frame):
    """Plücker coordinates of the column span of ``frame`` (``(..., m, n)``)."""
    m, n = frame.shape[-2:]
    if n == 1:
        return frame[..., 0].copy()
    return np.stack([np.linalg.det(frame[..., list(I), :]) for I in subsets(m, n)], axis=-1)


@lru_cache(maxsize=None)
def _derivation_table(m, n):
    """Entries ``(J, I, a, b, sign)``: replacing ``e_b`` (in ``e_I``) by ``e_a`` gives ``sign * e_J``."""
    index = {I: k for k, I in enumerate(subsets(m, n))}
    table = []
    for I in subsets(m, n):
        for slot, b in enumerate(I):
            for a in range(m):
                if a != b and a in I:
                    continue
                new = list(I)
                new[slot] = a
                order = sorted(range(n), key=lambda t: new[t])
                sign = geo._levi_civita_sign(order)
                table.append((index[tuple(sorted(new))], index[I], a, b, sign))
    return tuple(table)


def derivation(M, n):
    """Matrix of the derivation extension of ``M`` (``(..., m, m)``) to ``Lambda^n R^m``.

    ``D_M (v_1 ^ ... ^ v_n) = sum_i v_1 ^ ... ^ M v_i ^ ... ^ v_n``.
    """
    m = M.shape[-1]
    if n == 1:
        return M
    C = len(subsets(m, n))
    D = np.zeros(M.shape[:-2] + (C, C))
    for J, I, a, b, sign in _derivation_table(m, n):
        D[..., J, I] += sign * M[..., a, b]
    return D


def grassmann_tangent_projector(P_normal, n):
    """Orthogonal projector of ``Lambda^n`` onto the tangent space of the Grassmannian.

    With ``D`` the derivation extension of the normal projector, ``D`` acts on
    a decomposable basis adapted to the plane as the number of normal slots
    (0, 1 or 2 in codimension two), so ``D (2 - D)`` keeps exactly the
    one-slot part, which is the tangent space at the plane.
    """
    D = derivation(P_normal, n)
    C = D.shape[-1]
    return D @ (2.0 * np.eye(C) - D)


def apply_matrix(M, v):
    return np.einsum("...ab,...b->...a", M, v)


# ---------------------------------------------------------------------------
# Gauss map


@dataclass
class GrassPoint:
    """Oriented ``n``-plane given by an orthonormal frame."""

    frame: np.ndarray

    @property
    def projector(self):
        return self.frame @ np.swapaxes(self.frame, -1, -2)

    @property
    def plucker(self):
        return plucker(self.frame)


@dataclass
class GrassField:
    """Gauss map of an immersion: orthonormal tangent frames and Plücker vectors per node."""

    frames: np.ndarray
    plucker: np.ndarray

    def point(self, node):
        return GrassPoint(self.frames[node])


def orthonormal_frame(dF):
    """Gram-Schmidt of ``F_1, ..., F_n`` (orientation preserving), as ``(..., m, n)`` columns."""
    X = geo.frame_matrix(dF)
    q, r = np.linalg.qr(X)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    return q * d[..., None, :]


def plucker_from_tangents(dF, sqrt_det_g):
    return plucker(geo.frame_matrix(dF)) / sqrt_det_g[..., None]


def gauss_map(state, cache=None):
    if cache is None:
        cache = geo.induced_metric(state)
    frames = orthonormal_frame(cache.dF)
    return GrassField(frames, plucker(frames))


# ---------------------------------------------------------------------------
# geodesics and transport


@dataclass
class TransportPack:
    """Geodesic data and parallel transports from ``rho_tilde`` to ``rho``.

    ``rotation`` is the ambient rotation whose restrictions are the tangent
    transport (on ``rho_tilde``) and the normal transport (on its complement).
    """

    angles: np.ndarray
    principal: np.ndarray
    principal_tilde: np.ndarray
    rotation: np.ndarray
    frame: np.ndarray
    frame_tilde: np.ndarray
    same: np.ndarray | None = None

    @property
    def distance(self):
        return np.sqrt(np.sum(self.angles**2, axis=-1))

    @property
    def P_top(self):
        Et = self.frame_tilde
        return self.rotation @ (Et @ np.swapaxes(Et, -1, -2))

    @property
    def P_bot(self):
        Et = self.frame_tilde
        m = Et.shape[-2]
        return self.rotation @ (np.eye(m) - Et @ np.swapaxes(Et, -1, -2))

    def geodesic(self, s):
        """Frame of the geodesic point at parameter ``s`` in ``[0, 1]`` (``s = 0`` is ``rho``)."""
        c = np.cos(s * self.angles)[..., None, :]
        sn = np.sin(s * self.angles)[..., None, :]
        y = self.principal
        w = self.principal_tilde
        sin_full = np.sin(self.angles)[..., None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.where(sin_full > 0, w / np.where(sin_full > 0, sin_full, 1.0), 0.0)
        return c * y + sn * x


def geodesic_and_transport(frame, frame_tilde, margin=CUT_MARGIN):
    """Principal angles and direct rotation between oriented planes (batched over leading axes).

    Raises :class:`CutLocus` when some principal angle reaches
    ``pi/2 - margin`` or the orientations disagree.
    """
    E = np.asarray(frame, dtype=float)
    Et = np.asarray(frame_tilde, dtype=float)
    m = E.shape[-2]
    M = np.swapaxes(E, -1, -2) @ Et
    U, S, Vt = np.linalg.svd(M)
    V = np.swapaxes(Vt, -1, -2)
    y = E @ U
    yt = Et @ V
    W = yt - E @ (np.swapaxes(E, -1, -2) @ yt)
    sines = np.linalg.norm(W, axis=-2)
    angles = np.arctan2(sines, S)
    orient = np.linalg.det(M)
    bad = (np.max(angles, axis=-1) >= pi / 2 - margin) | (orient <= 0)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
        worst = float(np.max(angles))
        raise CutLocus(f"planes too far apart at node {node} (max angle {worst:.4f})", node=node, max_angle=worst)
    c = S
    R = np.broadcast_to(np.eye(m), E.shape[:-2] + (m, m)).copy()
    R += np.einsum("...i,...ai,...bi->...ab", c - 1.0, y, y)
    R -= np.einsum("...i,...ai,...bi->...ab", 1.0 / (1.0 + c), W, W)
    R += np.einsum("...ai,...bi->...ab", y, W) - np.einsum("...ai,...bi->...ab", W, y)
    # bitwise-equal planes get exact identities rather than SVD round-off
    same = np.all(E == Et, axis=(-2, -1))
    if np.any(same):
        R[same] = np.eye(m)
        angles = np.where(same[..., None], 0.0, angles)
    return TransportPack(angles=angles, principal=y, principal_tilde=W, rotation=R, frame=E, frame_tilde=Et, same=same)


def _exact_identity(pack, dF, dF_tilde, M):
    if pack.same is None or not np.any(pack.same):
        return M
    keep = pack.same & np.all(dF == dF_tilde, axis=(-2, -1))
    M[keep] = np.eye(M.shape[-1])
    return M


def grassmann_distance(frame, frame_tilde):
    """Geodesic distance ``sqrt(sum theta_i^2)`` from principal angles (no cut-locus check)."""
    M = np.swapaxes(frame, -1, -2) @ frame_tilde
    S = np.linalg.svd(M, compute_uv=False)
    return np.sqrt(np.sum(np.arccos(np.clip(S, -1.0, 1.0)) ** 2, axis=-1))


def tangent_map_transport(pack, dF, dF_tilde, g_inv):
    """``Q = dF^-1 o P_top o dF_tilde`` in coordinates (``Q[..., i, j]`` maps ``e_j`` to ``e_i``)."""
    B = np.einsum("...ia,...ab,...jb->...ij", dF, pack.rotation, dF_tilde)
    return _exact_identity(pack, dF, dF_tilde, g_inv @ B)


def cotangent_transport(pack, dF, dF_tilde, g_tilde_inv):
    """Dual isometry ``Q* = g Q g_tilde^-1`` acting on covector components."""
    B = np.einsum("...ia,...ab,...jb->...ij", dF, pack.rotation, dF_tilde)
    return _exact_identity(pack, dF, dF_tilde, B @ g_tilde_inv)


class TensorTransport:
    """The bundle isometry ``R_s``: normal transport on the value, ``Q*`` on each covariant slot."""

    def __init__(self, pack, dF, dF_tilde, g_tilde_inv, s, nodes=None):
        self.rotation = pack.rotation
        self.q_star = cotangent_transport(pack, dF, dF_tilde, g_tilde_inv)
        self.s = s
        self.nodes = self.rotation.ndim - 2 if nodes is None else nodes

    def __call__(self, T):
        nodes = self.nodes
        s = T.ndim - nodes - 1
        if s != self.s:
            raise ValueError(f"expected a tensor with {self.s} covariant slots, got {s}")
        R = self.rotation.reshape(self.rotation.shape[:-2] + (1,) * s + self.rotation.shape[-2:])
        out = np.einsum("...ab,...b->...a", R, T)
        for r in range(s):
            out = geo.contract_index(out, self.q_star, r, nodes)
        return out


def build_Rs(pack, dF, dF_tilde, g_tilde_inv, s):
    return TensorTransport(pack, dF, dF_tilde, g_tilde_inv, s)


def frame_J(frame, v):
    """Oriented normal rotation for the plane spanned by ``frame`` applied to normal ``v``."""
    dF = np.swapaxes(frame, -1, -2)
    return geo.apply_J(dF, np.ones(frame.shape[:-2]), v)


# ---------------------------------------------------------------------------
# tension field and Gauss-map flow


def _ambient_covariant(grid, T, christoffel):
    """``D_k T`` for a vector-valued covariant tensor: flat on the value, Levi-Civita on slots."""
    nodes = grid.n
    s = T.ndim - nodes - 1
    parts = []
    for k in range(grid.n):
        dT = grid.d1(T, k)
        gamma_k = np.swapaxes(christoffel[..., :, k, :], -1, -2)
        for r in range(s):
            dT = dT - geo.contract_index(T, gamma_k, r, nodes)
        parts.append(dT)
    return np.stack(parts, axis=nodes)


def plucker_field(state, cache):
    return plucker_from_tangents(cache.dF, cache.sqrt_det_g)


def tension_field(rho, cache):
    """Tangential part of ``Delta_g rho`` for a Plücker-valued field ``rho``."""
    grid = cache.grid
    n = grid.n
    d_rho = np.stack([grid.d1(rho, i) for i in range(n)], axis=-2)
    lap = np.zeros_like(rho)
    for i in range(n):
        for j in range(n):
            dij = grid.d2(rho, i) if i == j else grid.d1(d_rho[..., i, :], j)
            lap += cache.g_inv[..., i, j, None] * dij
            for k in range(n):
                lap -= (cache.g_inv[..., i, j] * cache.christoffel[..., k, i, j])[..., None] * d_rho[..., k, :]
    PT = grassmann_tangent_projector(cache.normal_projector, n)
    return apply_matrix(PT, lap)


def complex_structure(cache, X):
    """Action of the Grassmannian complex structure on ``X`` in ``T G``: ``J`` applied to the normal slot."""
    return apply_matrix(derivation(cache.J_matrix, cache.grid.n), X)


def gauss_flow_residual(state, epsilon=0.0, ds=1e-4):
    """``max |d_t rho - (eps tau + J tau)|`` with ``d_t rho`` along the instantaneous flow direction."""
    from .flow import velocity, _frozen_derivative

    cache = geo.geometry(state)
    grid = state.grid
    V = velocity(state, epsilon)

    def rho_of(X):
        dF = np.stack([grid.d1(X, i) for i in range(grid.n)], axis=-2)
        det, _ = geo.det_and_inverse(geo.metric_tensor(dF))
        return plucker_from_tangents(dF, np.sqrt(det))

    drho = _frozen_derivative(rho_of, state.positions, V, ds)
    tau = tension_field(plucker_field(state, cache), cache)
    rhs = epsilon * tau + complex_structure(cache, tau)
    return float(np.max(np.linalg.norm(drho - rhs, axis=-1)))


# ---------------------------------------------------------------------------
# Gauss-map energy


def _slot_replacement_table(frame):
    """``K[..., i, a, I]``: Plücker coordinates of ``frame`` with column ``i`` replaced by ``e_a``."""
    m, n = frame.shape[-2:]
    sets = subsets(m, n)
    K = np.zeros(frame.shape[:-2] + (n, m, len(sets)))
    for idx, I in enumerate(sets):
        for i in range(n):
            for pos, a in enumerate(I):
                rows = [r for r in I if r != a]
                cols = [c for c in range(n) if c != i]
                sign = (-1) ** (pos + i)
                if rows:
                    minor = np.linalg.det(frame[..., rows, :][..., :, cols])
                else:
                    minor = np.ones(frame.shape[:-2])
                K[..., i, a, idx] = sign * minor
    return K


def embed_normal_tensor(T, frame, dF, g_inv, nodes):
    """Map a normal-valued tensor into ``T G``, consuming its last covariant slot.

    ``(iota T)_{...} = sum_i e_1 ^ ... ^ T_{...}(e_i) ^ ... ^ e_n`` for the
    orthonormal tangent frame ``e_i`` in ``frame``; an isometry onto the
    Grassmannian tangent space.
    """
    # e_i = sum_j C[j, i] F_j with C = g^-1 (dF . e)
    C = g_inv @ np.einsum("...ja,...ai->...ji", dF, frame)
    K = _slot_replacement_table(frame)
    s = T.ndim - nodes - 1
    Cb = C.reshape(C.shape[:-2] + (1,) * (s - 1) + C.shape[-2:])
    v = np.einsum("...ji,...ja->...ia", Cb, T)  # T(e_i) for each i, last slot consumed
    Kb = K.reshape(K.shape[:-3] + (1,) * (s - 1) + K.shape[-3:])
    return np.einsum("...ia,...iaI->...I", v, Kb)


@dataclass
class GaussEnergyReport:
    """Gauss-map energy ``vol + sum_l int |D^l d rho|^2`` computed two ways."""

    ambient: float
    decomposed: float
    ambient_levels: list
    decomposed_levels: list
    vol: float
    k: int

    @property
    def gap(self):
        return abs(self.ambient - self.decomposed)


def gauss_energy(state, k=1):
    """Gauss-map Sobolev energy by ambient derivatives and by the ``nabla A`` decomposition.

    (i) ``D^l d rho`` from finite differences of the Plücker field.
    (ii) ``D^l d rho = iota(nabla^l A) + R_l`` where the remainder collects
    the Grassmannian second-fundamental-form terms, realized through normal
    projections: ``R_1`` is the normal part of ``D d rho`` and
    ``R_l = D R_(l-1) + normal part of D iota(nabla^(l-1) A)``.
    """
    if not 0 <= k <= 3:
        raise ValueError("gauss_energy supports 0 <= k <= 3")
    cache = geo.geometry(state)
    grid = state.grid
    n = grid.n
    w = cache.area_weight
    vol = float(np.sum(w))
    rho = plucker_field(state, cache)
    frames = orthonormal_frame(cache.dF)
    PT = grassmann_tangent_projector(cache.normal_projector, n)
    C = PT.shape[-1]
    PN = np.eye(C) - PT

    def norm_sq(T):
        return grid.integrate(geo.tensor_norm_sq(T, cache.g_inv, n), w)

    def project(P, T):
        s = T.ndim - n - 1
        Pb = P.reshape(P.shape[:-2] + (1,) * s + P.shape[-2:])
        return np.einsum("...IJ,...J->...I", Pb, T)

    # (i) ambient derivatives
    level = np.stack([grid.d1(rho, i) for i in range(n)], axis=-2)
    ambient_levels = [norm_sq(level)]
    d_levels = [level]
    for _ in range(k):
        level = _ambient_covariant(grid, level, cache.christoffel)
        d_levels.append(level)
        ambient_levels.append(norm_sq(level))

    # (ii) decomposition
    nablas = geo.higher_derivatives(cache, k).nabla_A_levels
    decomposed_levels = [norm_sq_normal(nablas[0], cache)]
    remainder = None
    for l in range(1, k + 1):
        if l == 1:
            remainder = project(PN, d_levels[1])
        else:
            prev = embed_normal_tensor(nablas[l - 1], frames, cache.dF, cache.g_inv, n)
            remainder = _ambient_covariant(grid, remainder, cache.christoffel) + project(
                PN, _ambient_covariant(grid, prev, cache.christoffel)
            )
        X = embed_normal_tensor(nablas[l], frames, cache.dF, cache.g_inv, n)
        cross = grid.integrate(geo.tensor_norm_sq(X, cache.g_inv, n, remainder), w)
        decomposed_levels.append(norm_sq_normal(nablas[l], cache) + 2.0 * cross + norm_sq(remainder))
    return GaussEnergyReport(
        ambient=vol + sum(ambient_levels),
        decomposed=vol + sum(decomposed_levels),
        ambient_levels=ambient_levels,
        decomposed_levels=decomposed_levels,
        vol=vol,
        k=k,
    )


def norm_sq_normal(T, cache):
    return cache.grid.integrate(geo.tensor_norm_sq(T, cache.g_inv, cache.grid.n), cache.area_weight)


def gauss_identification_error(state):
    """``max | |d rho|^2 - |A|^2 |`` over nodes."""
    cache = geo.geometry(state)
    grid = state.grid
    rho = plucker_field(state, cache)
    d_rho = np.stack([grid.d1(rho, i) for i in range(grid.n)], axis=-2)
    a = geo.tensor_norm_sq(d_rho, cache.g_inv, grid.n)
    b = geo.tensor_norm_sq(cache.A, cache.g_inv, grid.n)
    return float(np.max(np.abs(a - b)))
