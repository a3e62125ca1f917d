"""Random plane pairs, tangent bases and normal-valued tensors for transport tests."""

import numpy as np

from smcf import geometry as geo
from smcf import grassmann as gr


def random_pairs(rng, n, count, spread=0.3):
    """Tangent bases ``dF, dF~`` (shape ``(count, n, n+2)``) spanning nearby oriented planes."""
    m = n + 2
    E = np.linalg.qr(rng.standard_normal((count, m, n)))[0]
    X = spread * rng.standard_normal((count, m, n))
    X -= E @ (np.swapaxes(E, -1, -2) @ X)
    Et = gr.orthonormal_frame(np.swapaxes(E + X, -1, -2))

    def basis(frame):
        # singular values in [0.5, 2] keep cond(g) <= 16, so coordinate round-off stays small
        U = np.linalg.qr(rng.standard_normal((count, n, n)))[0]
        V = np.linalg.qr(rng.standard_normal((count, n, n)))[0]
        sv = np.exp(rng.uniform(np.log(0.5), np.log(2.0), (count, n)))
        M = U @ (sv[..., None] * V)
        M[:, :, 0] *= np.sign(np.linalg.det(M))[:, None]
        return np.swapaxes(frame @ M, -1, -2)

    return basis(E), basis(Et)


def normal_tensor(rng, frame, s):
    m = frame.shape[-2]
    P = np.eye(m) - frame @ np.swapaxes(frame, -1, -2)
    n = frame.shape[-1]
    T = rng.standard_normal(frame.shape[:1] + (n,) * s + (m,))
    return np.einsum("kab,k...b->k...a", P, T)


def metrics(dF):
    g = geo.metric_tensor(dF)
    return g, np.linalg.inv(g)
