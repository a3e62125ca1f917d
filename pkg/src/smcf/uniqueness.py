"""Distance functional between two immersions of the same parameter torus.

``L = L1 + L2 + L3`` with

* ``L1 = |d(rho, rho~)|^2 + |A - R_2 A~|^2 + |nabla A - R_3 nabla~ A~|^2``
* ``L2 = |g - g~|^2 + |Gamma - Gamma~|^2`` measured in a frozen background metric ``g0``
* ``L3 = |I - Q|^2`` with ``I`` the coordinate identity ``T Sigma~ -> T Sigma``
  and the norm taken in ``g~`` on the source and ``g`` on the target.

All integrals use the background area form ``dmu0`` of ``g0``.  With that
choice ``L1`` and ``L2`` are exactly symmetric under swapping the two
immersions; ``L3`` is symmetric only to leading order in the separation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import grassmann as gr
from .errors import ConfigurationError, CutLocus, MetricsInequivalent

MAX_EQUIVALENCE = 1e3


@dataclass
class Background:
    """Frozen metric ``g0`` (inverse and area weights) used for ``L2`` and all integrals."""

    g_inv: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_state(cls, state):
        cache = geo.induced_metric(state)
        return cls(cache.g_inv, cache.area_weight)


@dataclass
class LValue:
    """Components of the distance functional at one time."""

    L1: float
    L2: float
    L3: float
    t: float = 0.0
    parts: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.L1 + self.L2 + self.L3


@dataclass
class UniquenessReport:
    """Time series of the distance functional with the fitted Gronwall envelope."""

    values: list
    rate: float = float("nan")
    prefactor: float = float("nan")
    envelope_ratio: float = float("nan")
    envelope_ok: bool = False
    cut_time: float | None = None

    @property
    def times(self):
        return np.array([v.t for v in self.values])

    @property
    def totals(self):
        return np.array([v.total for v in self.values])

    def normalized(self):
        L = self.totals
        return L / L[0]


@dataclass
class _Side:
    cache: geo.GeometryCache
    frames: np.ndarray
    nabla_A: np.ndarray


def _side(state):
    cache = geo.geometry(state)
    levels = geo.higher_derivatives(cache, 1).nabla_A_levels
    return _Side(cache, gr.orthonormal_frame(cache.dF), levels[1])


def _check_equivalent(a, b):
    # smallest lam with g~ / lam <= g <= lam g~ at every node
    ev = np.linalg.eigvals(a.g_inv @ b.g).real
    with np.errstate(divide="ignore"):
        lam = np.maximum(np.max(ev, axis=-1), 1.0 / np.min(ev, axis=-1))
    worst = float(np.max(lam))
    if not np.all(np.isfinite(lam)) or np.any(ev <= 0) or worst >= MAX_EQUIVALENCE:
        raise MetricsInequivalent(f"metric equivalence constant {worst:.3g} exceeds {MAX_EQUIVALENCE:g}")


def _norm_g0(T, bg, nodes):
    """Pointwise ``|T|^2`` of a scalar-valued covariant tensor in ``g0`` (``T[..., i, j, ...]``)."""
    s = T.ndim - nodes
    raised = T[..., None]
    for r in range(s):
        raised = geo.contract_index(raised, bg.g_inv, r, nodes)
    return np.sum(raised[..., 0] * T, axis=tuple(range(nodes, T.ndim)))


def _christoffel_norm(diff, bg, g0, nodes):
    # |Gamma|^2 = g0_kl g0^ia g0^jb Gamma^k_ij Gamma^l_ab
    lowered = np.einsum("...kl,...lij->...kij", g0, diff)
    return np.einsum(
        "...kij,...kab,...ia,...jb->...", lowered, diff, bg.g_inv, bg.g_inv
    )


def L_functional(stateA, stateB, background=None, margin=gr.CUT_MARGIN, detail=False):
    """Distance functional between ``stateA`` (``F``) and ``stateB`` (``F~``).

    ``background`` defaults to the metric of ``stateA``.  Raises
    :class:`CutLocus` when some pair of tangent planes is too far apart and
    :class:`MetricsInequivalent` when the metrics are not uniformly equivalent.
    """
    if stateA.grid.sizes != stateB.grid.sizes or stateA.positions.shape != stateB.positions.shape:
        raise ConfigurationError("states must share one grid", field="grid")
    if np.array_equal(stateA.positions, stateB.positions):
        zero = dict.fromkeys(("distance", "A", "nabla_A", "metric", "christoffel"), 0.0)
        return LValue(0.0, 0.0, 0.0, stateA.time, zero if detail else {})
    bg = Background.from_state(stateA) if background is None else background
    a, b = _side(stateA), _side(stateB)
    return _L_from_sides(a, b, bg, stateA.time, margin, detail)


def _L_from_sides(a, b, bg, t, margin, detail):
    nodes = a.cache.grid.n
    _check_equivalent(a.cache, b.cache)
    pack = gr.geodesic_and_transport(a.frames, b.frames, margin)
    w = bg.weight
    dist = np.sum(pack.angles**2, axis=-1)
    R2 = gr.TensorTransport(pack, a.cache.dF, b.cache.dF, b.cache.g_inv, 2)
    R3 = gr.TensorTransport(pack, a.cache.dF, b.cache.dF, b.cache.g_inv, 3)
    dA = geo.tensor_norm_sq(a.cache.A - R2(b.cache.A), a.cache.g_inv, nodes)
    dNA = geo.tensor_norm_sq(a.nabla_A - R3(b.nabla_A), a.cache.g_inv, nodes)
    dg = _norm_g0(a.cache.g - b.cache.g, bg, nodes)
    g0 = np.linalg.inv(bg.g_inv)
    dG = _christoffel_norm(a.cache.christoffel - b.cache.christoffel, bg, g0, nodes)
    Q = gr.tangent_map_transport(pack, a.cache.dF, b.cache.dF, a.cache.g_inv)
    D = np.eye(nodes) - Q
    dQ = np.einsum("...ij,...ia,...ab,...bj->...", b.cache.g_inv, D, a.cache.g, D)
    parts = {
        "distance": float(np.sum(dist * w)),
        "A": float(np.sum(dA * w)),
        "nabla_A": float(np.sum(dNA * w)),
        "metric": float(np.sum(dg * w)),
        "christoffel": float(np.sum(dG * w)),
    }
    L1 = parts["distance"] + parts["A"] + parts["nabla_A"]
    L2 = parts["metric"] + parts["christoffel"]
    L3 = float(np.sum(dQ * w))
    return LValue(L1, L2, L3, t, parts if detail else {})


def fit_envelope(times, totals, tolerance=1e-2):
    """Least-squares rate ``C`` for ``L(t) ~ L(0) e^(C t)`` and the envelope ratio.

    The slope of ``log(L / L(0))`` is fitted through the origin.  When
    ``L(0) = 0`` (pairs that start identical) an intercept is fitted on the
    positive samples and it stands in for ``L(0)``.
    Returns ``(rate, prefactor, max ratio, ratio <= 1 + tolerance)``.
    """
    t = np.asarray(times, dtype=float)
    L = np.asarray(totals, dtype=float)
    if np.all(L == 0):
        return 0.0, 0.0, 0.0, True
    if L[0] > 0:
        y = np.log(L / L[0])
        s = t - t[0]
        denom = float(np.sum(s * s))
        rate = float(np.sum(s * y) / denom) if denom > 0 else 0.0
        pref = L[0]
    else:
        keep = L > 0
        s = t[keep] - t[0]
        if keep.sum() < 2:
            return 0.0, float(L[keep][0]) if keep.any() else 0.0, 1.0, True
        rate, logc = np.polyfit(s, np.log(L[keep]), 1)
        rate, pref = float(rate), float(np.exp(logc))
    ratio = float(np.max(L / (pref * np.exp(rate * (t - t[0])))))
    return rate, float(pref), ratio, ratio <= 1.0 + tolerance


def gronwall_study(statesA, statesB, background=None, tolerance=1e-2):
    """Distance functional along two matched sequences of states and the fitted envelope.

    ``statesA`` and ``statesB`` are sequences (or dicts keyed by time) of
    states at the same sample times.  The background metric is frozen at the
    first state of ``statesA``.  If transport fails at some sample the series
    stops there and ``cut_time`` records it.
    """
    if isinstance(statesA, dict):
        keys = sorted(statesA)
        if sorted(statesB) != keys:
            raise ConfigurationError("sample times of the two runs differ", field="sample_times")
        statesA = [statesA[k] for k in keys]
        statesB = [statesB[k] for k in keys]
    if len(statesA) != len(statesB) or not statesA:
        raise ConfigurationError("need matched, non-empty state sequences", field="sample_times")
    bg = Background.from_state(statesA[0]) if background is None else background
    values = []
    cut = None
    for A, B in zip(statesA, statesB):
        if abs(A.time - B.time) > 1e-12:
            raise ConfigurationError(f"unmatched times {A.time} and {B.time}", field="sample_times")
        try:
            values.append(L_functional(A, B, bg))
        except CutLocus:
            cut = A.time
            break
    report = UniquenessReport(values, cut_time=cut)
    if len(values) >= 2:
        report.rate, report.prefactor, report.envelope_ratio, report.envelope_ok = fit_envelope(
            report.times, report.totals, tolerance
        )
    return report


def rebased_study(statesA, statesB, window, tolerance=1e-2):
    """Gronwall study split into windows of ``window`` samples, each with its own background.

    Each window restarts the envelope at its first sample, mirroring an
    iteration of the estimate over consecutive time intervals.
    """
    if window < 2:
        raise ConfigurationError("window must hold at least two samples", field="window")
    reports = []
    for start in range(0, len(statesA) - 1, window - 1):
        stop = min(start + window, len(statesA))
        reports.append(gronwall_study(statesA[start:stop], statesB[start:stop], tolerance=tolerance))
        if reports[-1].cut_time is not None:
            break
    return reports


# ---------------------------------------------------------------------------
# diagnostics


def rough_laplacian(T, cache):
    """``g^ij nabla_i nabla_j T`` for a normal-valued covariant tensor field."""
    nodes = cache.grid.n
    DDT = geo.covariant_derivative(geo.covariant_derivative(T, cache), cache)
    s = T.ndim - nodes - 1
    gi = cache.g_inv.reshape(cache.g_inv.shape + (1,) * (s + 1))
    return np.sum(gi * DDT, axis=(nodes, nodes + 1))


@dataclass
class AuxiliaryReport:
    """Laplacian commutator of the transport and the quantities that bound it."""

    commutator_max: float
    commutator_l2: float
    ingredients_max: dict
    ingredients_l2: dict


def auxiliary_diagnostics(stateA, stateB, tensor=None, margin=gr.CUT_MARGIN):
    """``|Delta_g (R_s Phi) - R_s (Delta~ Phi)|`` with ``Phi`` on ``stateB`` (default its ``A``).

    Also reports the pointwise geodesic distance, ``|A - R_2 A~|``,
    ``|g - g~|`` and ``|Gamma - Gamma~|`` (the last two in the metric of ``stateA``).
    """
    a, b = _side(stateA), _side(stateB)
    nodes = a.cache.grid.n
    Phi = b.cache.A if tensor is None else tensor
    s = Phi.ndim - nodes - 1
    pack = gr.geodesic_and_transport(a.frames, b.frames, margin)
    Rs = gr.TensorTransport(pack, a.cache.dF, b.cache.dF, b.cache.g_inv, s)
    lhs = rough_laplacian(Rs(Phi), a.cache) - Rs(rough_laplacian(Phi, b.cache))
    pointwise = np.sqrt(geo.tensor_norm_sq(lhs, a.cache.g_inv, nodes))
    w = a.cache.area_weight
    bg = Background(a.cache.g_inv, w)
    R2 = gr.TensorTransport(pack, a.cache.dF, b.cache.dF, b.cache.g_inv, 2)
    ingredients = {
        "distance": pack.distance,
        "A": np.sqrt(geo.tensor_norm_sq(a.cache.A - R2(b.cache.A), a.cache.g_inv, nodes)),
        "metric": np.sqrt(_norm_g0(a.cache.g - b.cache.g, bg, nodes)),
        "christoffel": np.sqrt(np.abs(_christoffel_norm(a.cache.christoffel - b.cache.christoffel, bg, a.cache.g, nodes))),
    }
    return AuxiliaryReport(
        commutator_max=float(np.max(pointwise)),
        commutator_l2=float(np.sqrt(np.sum(pointwise**2 * w))),
        ingredients_max={k: float(np.max(v)) for k, v in ingredients.items()},
        ingredients_l2={k: float(np.sqrt(np.sum(v**2 * w))) for k, v in ingredients.items()},
    )
