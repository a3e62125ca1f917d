"""Built-in initial immersions with smooth reference normal frames."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .geometry import ImmersionState, PeriodicGrid


def _grid(sizes):
    return sizes if isinstance(sizes, PeriodicGrid) else PeriodicGrid(tuple(np.atleast_1d(sizes)))


def _planar_curve_state(grid, x, y, phi, z=None):
    z = np.zeros_like(x) if z is None else z
    F = np.stack([x, y, z], axis=-1)
    radial = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    up = np.broadcast_to(np.array([0.0, 0.0, 1.0]), radial.shape)
    return ImmersionState(grid, F, 0.0, np.stack([radial, up], axis=-1))


def circle(r=1.0, N=256, center=(0.0, 0.0, 0.0)):
    """Round circle of radius ``r`` in the ``xy``-plane of ``R^3``."""
    if r <= 0:
        raise ConfigurationError("circle radius must be positive", field="r")
    grid = _grid(N)
    (theta,) = grid.coordinates()
    state = _planar_curve_state(grid, r * np.cos(theta), r * np.sin(theta), theta)
    state.positions = state.positions + np.asarray(center, dtype=float)
    return state


def perturbed_circle(r=1.0, m=3, amp=0.05, N=256, lift=0.0):
    """Circle with radius ``r (1 + amp cos(m theta))``; ``lift`` adds ``lift * r * sin(m theta)`` in ``z``."""
    if r <= 0:
        raise ConfigurationError("circle radius must be positive", field="r")
    grid = _grid(N)
    (theta,) = grid.coordinates()
    rad = r * (1.0 + amp * np.cos(m * theta))
    z = lift * r * np.sin(m * theta)
    return _planar_curve_state(grid, rad * np.cos(theta), rad * np.sin(theta), theta, z)


def arclength_perturbed_circle(r=1.0, m=3, amp=0.05, N=256, samples=4096):
    """Planar perturbed circle resampled at equal arclength.

    Arclength is integrated spectrally (the speed is smooth and periodic) and
    inverted node-wise by Newton's method, so ``|dF/dtheta|`` is constant to
    rounding in the continuum.  Returns ``(state, length)``.
    """
    if r <= 0:
        raise ConfigurationError("circle radius must be positive", field="r")
    grid = _grid(N)

    def speed(phi):
        rho = r * (1.0 + amp * np.cos(m * phi))
        drho = -r * amp * m * np.sin(m * phi)
        return np.hypot(rho, drho)

    fine = 2 * np.pi * np.arange(samples) / samples
    coef = np.fft.rfft(speed(fine)) / samples
    k = np.arange(coef.size)

    def arc(phi):
        phi = np.asarray(phi, dtype=float)[..., None]
        terms = 2.0 * coef[1:] * (np.exp(1j * k[1:] * phi) - 1.0) / (1j * k[1:])
        return coef[0].real * phi[..., 0] + np.sum(terms.real, axis=-1)

    length = 2 * np.pi * coef[0].real
    (theta,) = grid.coordinates()
    target = length * theta / (2 * np.pi)
    phi = theta.copy()
    for _ in range(50):
        delta = (arc(phi) - target) / speed(phi)
        phi -= delta
        if np.max(np.abs(delta)) < 1e-15:
            break
    rad = r * (1.0 + amp * np.cos(m * phi))
    state = _planar_curve_state(grid, rad * np.cos(phi), rad * np.sin(phi), phi)
    return state, float(length)


def tilted_circle(r=1.0, tilt=0.1, N=256, center=(0.0, 0.0, 0.0)):
    """Circle of radius ``r`` rotated by ``tilt`` radians about the ``x``-axis."""
    base = circle(r, N)
    c, s = np.cos(tilt), np.sin(tilt)
    R = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    F = base.positions @ R.T + np.asarray(center, dtype=float)
    ref = np.einsum("ab,...bk->...ak", R, base.frame_ref)
    return ImmersionState(base.grid, F, 0.0, ref)


def clifford_torus(a=1.0, b=1.0, N=(64, 64)):
    """Product torus ``S^1(a) x S^1(b)`` in ``R^4``."""
    if a <= 0 or b <= 0:
        raise ConfigurationError("torus radii must be positive", field="a" if a <= 0 else "b")
    return perturbed_torus(a, b, 0.0, N=N)


def perturbed_torus(a=1.0, b=1.0, amp=0.05, m=2, N=(64, 64)):
    """Torus ``(A cos t1, A sin t1, B cos t2, B sin t2)`` with modulated radii.

    ``A = a (1 + amp cos(m t2))`` and ``B = b (1 + amp sin(m t1))``.
    """
    grid = _grid(N)
    if grid.n != 2:
        raise ConfigurationError("torus needs a two-dimensional grid", field="sizes")
    t1, t2 = grid.coordinates()
    A = a * (1.0 + amp * np.cos(m * t2))
    B = b * (1.0 + amp * np.sin(m * t1))
    zero = np.zeros_like(t1)
    F = np.stack([A * np.cos(t1), A * np.sin(t1), B * np.cos(t2), B * np.sin(t2)], axis=-1)
    nu1 = np.stack([np.cos(t1), np.sin(t1), zero, zero], axis=-1)
    nu2 = np.stack([zero, zero, np.cos(t2), np.sin(t2)], axis=-1)
    return ImmersionState(grid, F, 0.0, np.stack([nu1, nu2], axis=-1))


def factor_radii(state):
    """Radii of the two circle factors of a product torus (mean distance to each factor's centroid)."""
    F = state.positions.reshape(-1, 4)
    out = []
    for sl in (slice(0, 2), slice(2, 4)):
        P = F[:, sl]
        out.append(float(np.mean(np.linalg.norm(P - P.mean(axis=0), axis=-1))))
    return tuple(out)


def circle_fit(state):
    """``(center, radius, normal)`` of a near-round space curve from its nodes."""
    F = state.positions
    center = F.mean(axis=0)
    X = F - center
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    radius = float(np.mean(np.linalg.norm(X, axis=-1)))
    return center, radius, vt[-1]
