"""Closed-form and reduced-model reference solutions.

* Round circles under the (perturbed) flow: rigid binormal translation, with
  radius shrinking as ``sqrt(r^2 - 2 eps t)`` when ``eps > 0``.
* Products of round spheres ``S^p(a) x S^q(b)``: the flow reduces to the ODE
  ``a' = s q / b``, ``b' = -s p / a`` where ``s = +-1`` is the orientation sign
  of the chosen normal frame (``s = +1`` when ``J nu_1 = nu_2`` for outward
  factor normals).
* Space curves: Hasimoto variable ``psi = kappa exp(i int tau ds)`` and a
  split-step Fourier solver for the focusing cubic Schrodinger equation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from scipy import integrate, optimize

from . import shapes
from .errors import ConfigurationError, VanishingCurvature
from .geometry import critical_order

BLOWUP_RADIUS = 1e-6


def circle_exact(r=1.0, epsilon=0.0, t=0.0, N=256):
    """Exact flow of a round circle of radius ``r`` in the ``xy``-plane at time ``t``.

    The circle stays round and moves along ``+z``; with ``epsilon > 0`` the
    radius is ``a(t) = sqrt(r^2 - 2 eps t)`` and the axial drift ``(r - a) / eps``.
    """
    if r <= 0:
        raise ConfigurationError("radius must be positive", field="r")
    if epsilon == 0:
        a, z = r, t / r
    else:
        disc = r * r - 2.0 * epsilon * t
        if disc <= 0:
            raise ConfigurationError(f"circle has collapsed before t={t}", field="t")
        a = np.sqrt(disc)
        z = (r - a) / epsilon
    state = shapes.circle(a, N, center=(0.0, 0.0, z))
    state.time = t
    return state


# ---------------------------------------------------------------------------
# products of spheres


@dataclass
class SphereProductState:
    p: int
    q: int
    a: float
    b: float
    t: float = 0.0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ConfigurationError("factor dimensions must be >= 1", field="p" if self.p < 1 else "q")
        if self.a <= 0 or self.b <= 0:
            raise ConfigurationError("radii must be positive", field="a" if self.a <= 0 else "b")

    @property
    def n(self):
        return self.p + self.q


@dataclass
class SphereProductTrajectory:
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    blowup_time: float | None
    ceiling_time: float | None
    dense: object = None

    def radii_at(self, times):
        times = np.asarray(times, dtype=float)
        if self.dense is None:
            return np.interp(times, self.t, self.a), np.interp(times, self.t, self.b)
        y = self.dense(times)
        return y[0], y[1]


def sphere_area(p):
    """Area of the unit ``p``-sphere."""
    return 2.0 * pi ** ((p + 1) / 2) / gamma((p + 1) / 2)


def sphere_product_velocity(state, orientation=1):
    return orientation * state.q / state.b, -orientation * state.p / state.a


def sphere_product_energy(p, q, a, b, k=None, delta=0.5):
    """Energy of ``S^p(a) x S^q(b)``; the second fundamental form is parallel so only level 0 contributes."""
    n = p + q
    vol = sphere_area(p) * sphere_area(q) * a**p * b**q
    H2 = (p / a) ** 2 + (q / b) ** 2
    A2 = p / a**2 + q / b**2
    P = n + delta
    return vol + vol ** (2.0 / P) * H2 + vol * A2


def sphere_product_ode(state0, t_end, orientation=1, energy_ceiling=None, k=None, delta=0.5, rtol=1e-12, atol=1e-14):
    """Integrate the reduced sphere-product flow.

    Integration stops at ``t_end`` or when a radius drops below
    ``BLOWUP_RADIUS`` (reported as ``blowup_time``).  With ``energy_ceiling``
    set, ``ceiling_time`` is the first time the closed-form energy exceeds
    ``energy_ceiling`` times its initial value.
    """
    p, q = state0.p, state0.q
    k = critical_order(p + q) if k is None else k

    def rhs(t, y):
        a, b = y
        return [orientation * q / b, -orientation * p / a]

    def collapse(t, y):
        return min(y) - BLOWUP_RADIUS

    collapse.terminal = True
    collapse.direction = -1
    events = [collapse]
    if energy_ceiling is not None:
        e0 = sphere_product_energy(p, q, state0.a, state0.b, k, delta)

        def ceiling(t, y):
            return sphere_product_energy(p, q, y[0], y[1], k, delta) - energy_ceiling * e0

        ceiling.direction = 1
        events.append(ceiling)
    sol = integrate.solve_ivp(
        rhs,
        (state0.t, state0.t + t_end),
        [state0.a, state0.b],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        events=events,
        dense_output=True,
    )
    blow = float(sol.t_events[0][0]) if len(sol.t_events[0]) else None
    ceil = None
    if energy_ceiling is not None and len(sol.t_events[1]):
        ceil = float(sol.t_events[1][0])
    return SphereProductTrajectory(sol.t, sol.y[0], sol.y[1], blow, ceil, sol.sol)


def sphere_product_blowup_time(p, q, a, b, orientation=1):
    """Closed-form collapse time when the shrinking factor has the larger dimension, else ``None``.

    ``a^p b^q`` is conserved.  For ``orientation = 1`` the ``b`` factor shrinks
    with ``d/dt b^(1 - q/p) = -(p - q) C^(-1/p)`` where ``C = a^p b^q``, so it
    collapses in finite time exactly when ``q < p``.
    """
    if orientation < 0:
        return sphere_product_blowup_time(q, p, b, a)
    if q >= p:
        return None
    C = a**p * b**q
    return b ** (1.0 - q / p) * C ** (1.0 / p) / (p - q)


# ---------------------------------------------------------------------------
# Hasimoto transform and cubic Schrodinger reference


@dataclass
class FilamentFunction:
    """Hasimoto variable on the nodes of a closed curve.

    ``s`` are arclength positions measured from node ``base``; ``length`` is
    the total length.
    """

    psi: np.ndarray
    s: np.ndarray
    length: float
    base: int = 0

    @property
    def curvature(self):
        return np.abs(self.psi)


def frenet_invariants(state):
    """Per-node ``(speed, curvature, torsion)`` of a closed space curve."""
    grid = state.grid
    if grid.n != 1 or grid.ambient_dim != 3:
        raise ConfigurationError("Hasimoto transform needs a closed curve in R^3", field="grid")
    F = state.positions
    d1 = grid.d1(F, 0)
    d2 = grid.d2(F, 0)
    d3 = grid.d1(d2, 0)
    speed = np.linalg.norm(d1, axis=-1)
    c = np.cross(d1, d2)
    cn = np.linalg.norm(c, axis=-1)
    kappa = cn / speed**3
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.sum(c * d3, axis=-1) / cn**2
    return speed, kappa, tau


def hasimoto_transform(state, base=0, kappa_min=1e-6):
    """``psi = kappa exp(i phi)`` with ``phi`` the torsion integrated in arclength from ``base``.

    The phase is accumulated by the periodic trapezoid rule along the nodes,
    so it is continuous along the curve (it may jump across the base node by
    the total torsion).
    """
    speed, kappa, tau = frenet_invariants(state)
    if np.min(kappa) < kappa_min:
        node = int(np.argmin(kappa))
        raise VanishingCurvature(f"curvature {kappa[node]:.2e} below {kappa_min:g} at node {node}", node=node)
    h = state.grid.spacings[0]
    N = kappa.size
    order = (np.arange(N) + base) % N
    ds = speed[order] * h
    rate = tau[order] * speed[order]
    phase_ordered = np.concatenate([[0.0], np.cumsum(0.5 * h * (rate[1:] + rate[:-1]))])
    s_ordered = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]))])
    phase = np.empty(N)
    s = np.empty(N)
    phase[order] = phase_ordered
    s[order] = s_ordered
    length = float(np.sum(ds))
    return FilamentFunction(kappa * np.exp(1j * phase), s, length, base)


def nls_reference(psi0, length, t_end, dt=1e-4, cubic=0.5, times=None):
    """Split-step Fourier solution of ``i psi_t + psi_ss + cubic |psi|^2 psi = 0``.

    ``psi0`` is sampled on a uniform periodic grid of period ``length``.
    Strang splitting (half linear, full nonlinear, half linear) is used; both
    substeps are exact, so the discrete mass is conserved to rounding.
    Returns the solution at ``t_end``, or a list at each of ``times``.
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    N = psi.size
    k = 2 * pi * np.fft.fftfreq(N, d=length / N)
    targets = [t_end] if times is None else list(times)
    out = []
    t = 0.0
    for target in targets:
        while t < target - 1e-14:
            h = min(dt, target - t)
            half = np.exp(-1j * k**2 * h / 2)
            psi = np.fft.ifft(half * np.fft.fft(psi))
            psi = psi * np.exp(1j * cubic * np.abs(psi) ** 2 * h)
            psi = np.fft.ifft(half * np.fft.fft(psi))
            t += h
        out.append(psi.copy())
    return out[0] if times is None else out


def nls_mass(psi, length):
    return float(np.sum(np.abs(psi) ** 2) * length / psi.size)


def calibrate_cubic(psi0, length, times, targets, dt=1e-4, bounds=(0.05, 2.0)):
    """Cubic coefficient minimizing the ``L^2`` mismatch between ``|psi(t)|`` and ``targets``.

    ``targets[i]`` is the curvature profile at ``times[i]`` on the same uniform grid.
    """
    w = length / len(psi0)

    def mismatch(c):
        sols = nls_reference(psi0, length, None, dt=dt, cubic=c, times=times)
        return sum(np.sum((np.abs(u) - np.asarray(v)) ** 2) * w for u, v in zip(sols, targets))

    res = optimize.minimize_scalar(mismatch, bounds=bounds, method="bounded", options={"xatol": 1e-8})
    return float(res.x)
