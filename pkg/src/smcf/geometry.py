"""Discrete geometry of codimension-2 immersions of a flat periodic torus.

Fields live on a uniform grid over the parameter torus ``T^n`` and are stored
with node axes first, e.g. positions have shape ``(*sizes, n + 2)``.  Spatial
derivatives are fourth-order central differences with periodic wrap.

Tensor conventions
------------------
A normal-valued covariant ``s``-tensor is an array of shape
``(*sizes, n, ..., n, m)`` with ``s`` coordinate axes followed by the ambient
component axis.  Christoffel symbols are stored as ``gamma[..., k, i, j]``
for :math:`\\Gamma^k_{ij}`.

The mean curvature vector follows :math:`H = \\Delta_g F`, so ``H`` points to
the center of a round circle.  The normal complex structure ``J`` rotates the
normal plane by a quarter turn such that ``(F_1, ..., F_n, v, Jv)`` is a
positively oriented basis of the ambient space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, prod

import numpy as np

from .errors import ConfigurationError, DegenerateImmersion, FrameGaugeFailure, NonFiniteState

G_MIN = 1e-8
FRAME_TOL = 1e-6

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on the flat torus ``[0, 2pi)^n``."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in np.atleast_1d(self.sizes))
        if len(sizes) not in (1, 2):
            raise ConfigurationError(f"grid dimension must be 1 or 2, got {len(sizes)}", field="sizes")
        for s in sizes:
            if s < 16 or s % 2:
                raise ConfigurationError(f"grid sizes must be even and >= 16, got {sizes}", field="sizes")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def ambient_dim(self) -> int:
        return self.n + 2

    @property
    def spacings(self) -> tuple:
        return tuple(2 * pi / s for s in self.sizes)

    @property
    def h_min(self) -> float:
        return min(self.spacings)

    @property
    def cell_volume(self) -> float:
        return prod(self.spacings)

    @property
    def num_nodes(self) -> int:
        return prod(self.sizes)

    def coordinates(self):
        """Parameter coordinates ``theta_i`` as a list of broadcast arrays."""
        axes = [np.arange(s) * h for s, h in zip(self.sizes, self.spacings)]
        return np.meshgrid(*axes, indexing="ij")

    def d1(self, f, axis):
        """Fourth-order first derivative along grid ``axis`` (node axes lead)."""
        h = self.spacings[axis]
        out = _D1[3] * (np.roll(f, -1, axis) - np.roll(f, 1, axis))
        out += _D1[4] * (np.roll(f, -2, axis) - np.roll(f, 2, axis))
        return out / h

    def d2(self, f, axis):
        """Fourth-order second derivative along grid ``axis``."""
        h = self.spacings[axis]
        out = _D2[2] * f
        out = out + _D2[1] * (np.roll(f, 1, axis) + np.roll(f, -1, axis))
        out += _D2[0] * (np.roll(f, 2, axis) + np.roll(f, -2, axis))
        return out / (h * h)

    def integrate(self, density, weight):
        """Deterministic quadrature of a per-node density against ``weight``."""
        return float(np.sum(density * weight))


@dataclass
class ImmersionState:
    """Node positions of an immersion ``T^n -> R^(n+2)`` at flow time ``time``.

    ``frame_ref`` optionally carries a reference normal frame of shape
    ``(*sizes, m, 2)`` used to fix the gauge of the orthonormal normal frame.
    """

    grid: PeriodicGrid
    positions: np.ndarray
    time: float = 0.0
    frame_ref: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        expected = (*self.grid.sizes, self.grid.ambient_dim)
        if self.positions.shape != expected:
            raise ConfigurationError(
                f"positions shape {self.positions.shape} does not match grid {expected}", field="positions"
            )
        if self.frame_ref is not None:
            self.frame_ref = np.asarray(self.frame_ref, dtype=float)
            if self.frame_ref.shape != (*expected, 2):
                raise ConfigurationError("frame_ref must have shape (*sizes, m, 2)", field="frame_ref")

    @property
    def n(self) -> int:
        return self.grid.n

    def check_finite(self):
        if not np.all(np.isfinite(self.positions)):
            raise NonFiniteState(f"non-finite positions at t={self.time}")

    def replace(self, positions=None, time=None, frame_ref=None):
        return ImmersionState(
            self.grid,
            self.positions if positions is None else positions,
            self.time if time is None else time,
            self.frame_ref if frame_ref is None else frame_ref,
        )


@dataclass
class GeometryCache:
    """Per-node geometric data of an immersion.

    Filled in two stages: :func:`induced_metric` sets the metric part and
    :func:`second_fundamental_and_H` the extrinsic part.
    """

    grid: PeriodicGrid
    dF: np.ndarray
    ddF: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: np.ndarray
    christoffel: np.ndarray
    A: np.ndarray | None = None
    H: np.ndarray | None = None
    nu1: np.ndarray | None = None
    nu2: np.ndarray | None = None
    J_matrix: np.ndarray | None = None
    normal_projector: np.ndarray | None = None

    @property
    def area_weight(self):
        return self.sqrt_det_g * self.grid.cell_volume

    @property
    def normal_frame(self):
        return np.stack([self.nu1, self.nu2], axis=-1)


# ---------------------------------------------------------------------------
# small tensor helpers


def frame_matrix(dF):
    """Stack tangent vectors ``dF[..., i, :]`` as columns: shape ``(..., m, n)``."""
    return np.swapaxes(dF, -1, -2)


def normal_project(v, P):
    """Apply per-node projector ``P`` (``(..., m, m)``) to trailing vector axis of ``v``."""
    extra = v.ndim - P.ndim + 1
    Pb = P.reshape(P.shape[:-2] + (1,) * extra + P.shape[-2:]) if extra else P
    return np.einsum("...ab,...b->...a", Pb, v)


def contract_index(T, M, index, nodes):
    """Replace coordinate ``index`` of ``T`` by ``M @ T`` along that index.

    ``T`` has shape ``(*node, n, ..., n, m)``, ``M`` has shape ``(*node, n, n)``.
    """
    s = T.ndim - nodes - 1
    letters = "bcdefghijkl"[:s]
    out_letters = letters[:index] + "a" + letters[index + 1 :]
    sub = f"...a{letters[index]},...{letters}z->...{out_letters}z"
    return np.einsum(sub, M, T)


def tensor_norm_sq(T, g_inv, nodes, S=None):
    """Pointwise ``<T, S>`` for normal-valued covariant tensors, indices raised with ``g_inv``."""
    if S is None:
        S = T
    s = T.ndim - nodes - 1
    raised = T
    for i in range(s):
        raised = contract_index(raised, g_inv, i, nodes)
    axes = tuple(range(nodes, T.ndim))
    return np.sum(raised * S, axis=axes)


def _cross_minus_one(X):
    """Generalized cross product of the ``m - 1`` columns of ``X`` (``(..., m, m-1)``).

    Returns ``c`` with ``c . w = det[X | w]`` for every ``w``.
    """
    m = X.shape[-2]
    comps = []
    for a in range(m):
        minor = np.delete(X, a, axis=-2)
        comps.append((-1) ** (a + m - 1) * np.linalg.det(minor))
    return np.stack(comps, axis=-1)


def _levi_civita_sign(perm):
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


# (c, d, a, b, sign): <J v, e_d> gets sign * p_ab * v_c with {a<b} complementary to {c, d}
_HODGE4 = [
    (c, d, *sorted(set(range(4)) - {c, d}), _levi_civita_sign(sorted(set(range(4)) - {c, d}) + [c, d]))
    for c in range(4)
    for d in range(4)
    if c != d
]


def apply_J(dF, sqrt_det_g, v):
    """Rotate normal vectors ``v`` by the oriented normal complex structure.

    ``J v`` is the vector with ``<Jv, w> = det[F_1, ..., F_n, v, w] / sqrt(det g)``.
    ``v`` must be normal; tangential parts are not removed here.
    """
    n, m = dF.shape[-2:]
    if m == 3:
        out = np.cross(dF[..., 0, :], v)
    elif m == 4:
        F1, F2 = dF[..., 0, :], dF[..., 1, :]
        out = np.zeros(np.broadcast_shapes(F1.shape, v.shape))
        pl = {}
        for c, d, a, b, sign in _HODGE4:
            if (a, b) not in pl:
                pl[(a, b)] = F1[..., a] * F2[..., b] - F1[..., b] * F2[..., a]
            out[..., d] += sign * pl[(a, b)] * v[..., c]
    else:
        X = np.concatenate([frame_matrix(dF), v[..., :, None]], axis=-1)
        out = _cross_minus_one(X)
    return out / sqrt_det_g[..., None]


def metric_tensor(dF):
    n = dF.shape[-2]
    g = np.empty(dF.shape[:-2] + (n, n))
    for i in range(n):
        for j in range(i, n):
            g[..., i, j] = np.sum(dF[..., i, :] * dF[..., j, :], axis=-1)
            g[..., j, i] = g[..., i, j]
    return g


def det_and_inverse(g):
    """Determinant and inverse of per-node metrics, closed form for ``n <= 2``.

    Singular nodes give non-finite inverses; callers check the determinant.
    """
    n = g.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        if n == 1:
            det = g[..., 0, 0]
            return det, (1.0 / det)[..., None, None]
        a, b, d = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
        det = a * d - b * b
        inv = np.empty_like(g)
        inv[..., 0, 0] = d / det
        inv[..., 1, 1] = a / det
        inv[..., 0, 1] = inv[..., 1, 0] = -b / det
        return det, inv


def tangential_part(v, dF, g_inv):
    """Tangential component of ambient vectors ``v`` (node-aligned, shape ``(*nodes, m)``)."""
    n = dF.shape[-2]
    c = [np.sum(v * dF[..., i, :], axis=-1) for i in range(n)]
    out = np.zeros_like(v)
    for i in range(n):
        coef = sum(g_inv[..., i, j] * c[j] for j in range(n))
        out += coef[..., None] * dF[..., i, :]
    return out


def _check_det(det, g_min):
    bad = det < g_min
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegenerateImmersion(f"det g = {det[node]:.3e} below {g_min:g} at node {node}", node=node)


# ---------------------------------------------------------------------------
# operations


def derivatives(grid, F):
    """First and second parameter derivatives of ``F``.

    Returns ``dF`` with shape ``(*nodes, n, m)`` and ``ddF`` with shape
    ``(*nodes, n, n, m)``; pure second derivatives use the five-point second
    difference stencil, mixed ones nest two first differences.
    """
    n = grid.n
    dF = np.stack([grid.d1(F, i) for i in range(n)], axis=-2)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if i == j:
                row.append(grid.d2(F, i))
            elif j < i:
                row.append(rows[j][i])
            else:
                row.append(grid.d1(dF[..., i, :], j))
        rows.append(row)
    ddF = np.stack([np.stack(r, axis=-2) for r in rows], axis=-3)
    return dF, ddF


def induced_metric(state, g_min=G_MIN):
    """Metric, inverse metric, Christoffel symbols and area weights of ``state``.

    Christoffel symbols use the Euclidean identity
    :math:`\\Gamma^k_{ij} = g^{kl} \\langle \\partial_i\\partial_j F, \\partial_l F\\rangle`.
    """
    grid = state.grid
    state.check_finite()
    dF, ddF = derivatives(grid, state.positions)
    g = metric_tensor(dF)
    det, g_inv = det_and_inverse(g)
    _check_det(det, g_min)
    lowered = np.einsum("...ija,...la->...lij", ddF, dF)
    christoffel = np.einsum("...kl,...lij->...kij", g_inv, lowered)
    return GeometryCache(
        grid=grid,
        dF=dF,
        ddF=ddF,
        g=g,
        g_inv=g_inv,
        sqrt_det_g=np.sqrt(det),
        christoffel=christoffel,
    )


def normal_projector(dF, g_inv):
    m = dF.shape[-1]
    tangent = np.einsum("...ia,...ij,...jb->...ab", dF, g_inv, dF)
    return np.eye(m) - tangent


def orientation_sign(dF, nu1, nu2):
    """Sign of ``det[F_1, ..., F_n, nu1, nu2]`` per node."""
    M = np.concatenate([frame_matrix(dF), nu1[..., :, None], nu2[..., :, None]], axis=-1)
    return np.sign(np.linalg.det(M))


def orthonormal_normal_frame(P, reference, dF):
    """Project a reference pair onto the normal planes and orthonormalize.

    ``reference`` has shape ``(*nodes, m, 2)``.  The second vector is flipped
    where needed so that ``(F_1, ..., F_n, nu1, nu2)`` is positively oriented.
    """
    r1 = normal_project(reference[..., 0], P)
    n1 = np.linalg.norm(r1, axis=-1)
    if np.min(n1) < FRAME_TOL:
        node = tuple(int(i) for i in np.unravel_index(np.argmin(n1), n1.shape))
        raise FrameGaugeFailure(f"reference frame degenerate at node {node}", node=node)
    nu1 = r1 / n1[..., None]
    r2 = normal_project(reference[..., 1], P)
    r2 = r2 - np.sum(r2 * nu1, axis=-1, keepdims=True) * nu1
    n2 = np.linalg.norm(r2, axis=-1)
    if np.min(n2) < FRAME_TOL:
        node = tuple(int(i) for i in np.unravel_index(np.argmin(n2), n2.shape))
        raise FrameGaugeFailure(f"reference frame degenerate at node {node}", node=node)
    nu2 = r2 / n2[..., None]
    sign = orientation_sign(dF, nu1, nu2)
    return nu1, nu2 * sign[..., None]


def propagated_reference(P):
    """Build a reference normal frame by sweeping through the grid.

    Each node inherits the frame of its predecessor (row-major sweep along
    axis 0, then along the remaining axes from the first slice), projected and
    re-orthonormalized.  Used when no smooth reference is supplied; the frame
    is continuous except possibly across the periodic seam.
    """
    nodes = P.shape[:-2]
    m = P.shape[-1]
    ref = np.zeros(nodes + (m, 2))
    flatP = P.reshape(-1, m, m)
    out = ref.reshape(-1, m, 2)

    def start_frame(Pn):
        w, V = np.linalg.eigh(Pn)
        return V[:, -2:]

    def carry(prev, Pn):
        cand = Pn @ prev
        q, r = np.linalg.qr(cand)
        q = q * np.sign(np.diag(r))[None, :]
        if abs(np.linalg.det(r)) < FRAME_TOL:
            return start_frame(Pn)
        return q

    index = np.arange(flatP.shape[0]).reshape(nodes)
    first = index.reshape(nodes[0], -1)
    prev = start_frame(flatP[0])
    # along axis 0 through the first column of the remaining axes
    for i in range(nodes[0]):
        node = first[i, 0]
        prev = carry(prev, flatP[node]) if i else prev
        out[node] = prev
        row_prev = prev
        for j in range(1, first.shape[1]):
            node_j = first[i, j]
            row_prev = carry(row_prev, flatP[node_j])
            out[node_j] = row_prev
    return ref


def second_fundamental_and_H(state, cache):
    """Fill in second fundamental form, mean curvature, normal frame and J."""
    P = normal_projector(cache.dF, cache.g_inv)
    A = normal_project(cache.ddF, P)
    H = np.einsum("...ij,...ija->...a", cache.g_inv, A)
    reference = state.frame_ref if state.frame_ref is not None else propagated_reference(P)
    nu1, nu2 = orthonormal_normal_frame(P, reference, cache.dF)
    J = np.einsum("...a,...b->...ab", nu2, nu1) - np.einsum("...a,...b->...ab", nu1, nu2)
    cache.A = A
    cache.H = H
    cache.nu1 = nu1
    cache.nu2 = nu2
    cache.J_matrix = J
    cache.normal_projector = P
    return cache


def geometry(state, g_min=G_MIN):
    """Full :class:`GeometryCache` for ``state``."""
    return second_fundamental_and_H(state, induced_metric(state, g_min))


def mean_curvature(state, g_min=G_MIN):
    """``(dF, sqrt_det_g, H)`` without Christoffel symbols or normal frame (hot path of the flow)."""
    grid = state.grid
    state.check_finite()
    F = state.positions
    n = grid.n
    dF = np.stack([grid.d1(F, i) for i in range(n)], axis=-2)
    g = metric_tensor(dF)
    det, g_inv = det_and_inverse(g)
    _check_det(det, g_min)
    lap = np.zeros_like(F)
    for i in range(n):
        lap += g_inv[..., i, i, None] * grid.d2(F, i)
        for j in range(i + 1, n):
            lap += 2.0 * g_inv[..., i, j, None] * grid.d1(dF[..., i, :], j)
    H = lap - tangential_part(lap, dF, g_inv)
    return dF, np.sqrt(det), H


def covariant_derivative(T, cache):
    """Covariant derivative of a normal-valued covariant tensor field.

    The new derivative index is placed first: ``out[..., k, i1, ..., is, :]``
    is :math:`(\\nabla_k T)_{i_1 \\dots i_s}`, using the normal connection on
    the vector part and Levi-Civita on each covariant slot.
    """
    grid = cache.grid
    nodes = grid.n
    s = T.ndim - nodes - 1
    P = cache.normal_projector
    parts = []
    for k in range(grid.n):
        dT = normal_project(grid.d1(T, k), P)
        gamma_k = cache.christoffel[..., :, k, :]  # [p, i] = Gamma^p_{k i}
        for r in range(s):
            dT = dT - contract_index(T, np.swapaxes(gamma_k, -1, -2), r, nodes)
        parts.append(dT)
    return np.stack(parts, axis=nodes)


@dataclass
class HigherDerivs:
    """Levels ``[A, nabla A, ..., nabla^k A]`` of the second fundamental form."""

    nabla_A_levels: list = field(default_factory=list)


def higher_derivatives(cache, k):
    levels = [cache.A]
    for _ in range(k):
        levels.append(covariant_derivative(levels[-1], cache))
    return HigherDerivs(levels)


@dataclass
class EnergyReport:
    """Geometric energies of one immersion.

    ``A_levels_sq[l]`` holds :math:`\\int |\\nabla^l A|^2 d\\mu`.
    """

    vol: float
    H_Lp: float
    A_levels_sq: list
    k: int
    delta: float
    p: float

    @property
    def A_sobolev_sq(self) -> float:
        return float(sum(self.A_levels_sq))

    @property
    def E_k(self) -> float:
        return self.vol + self.H_Lp**2 + self.A_sobolev_sq


def critical_order(n: int) -> int:
    """Smallest energy order controlling the flow: ``floor(n/2) + 1``."""
    return n // 2 + 1


def energy(state, k=None, delta=0.5, cache=None):
    """Volume, ``L^p`` norm of ``H`` with ``p = n + delta`` and Sobolev norms of ``A``."""
    n = state.n
    if k is None:
        k = critical_order(n)
    if k < 0:
        raise ConfigurationError("energy order k must be >= 0", field="k")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError("delta must lie in (0, 1)", field="delta")
    if cache is None:
        cache = geometry(state)
    grid = state.grid
    w = cache.area_weight
    p = n + delta
    vol = float(np.sum(w))
    Habs = np.linalg.norm(cache.H, axis=-1)
    H_Lp = float(np.sum(Habs**p * w)) ** (1.0 / p)
    levels = higher_derivatives(cache, k).nabla_A_levels
    sq = [grid.integrate(tensor_norm_sq(T, cache.g_inv, n), w) for T in levels]
    return EnergyReport(vol=vol, H_Lp=H_Lp, A_levels_sq=sq, k=k, delta=delta, p=p)
