"""Shared test helpers: seeded random stable systems and input signals."""

import numpy as np

from icmor.core import LtiSystem

#: decay margin used by the random system generator; every eigenvalue has
#: real part <= -MARGIN, so horizons ~60/MARGIN reach machine-level decay
MARGIN = 0.5


def random_stable_system(rng, n, p=1, q=1, margin=MARGIN, with_x0=True):
    """Dense random system, shifted so the rightmost eigenvalue sits at
    ``-margin``."""
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    A -= (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
    B = rng.standard_normal((n, q)) if q else None
    C = rng.standard_normal((p, n))
    x0 = rng.standard_normal(n) if with_x0 else None
    return LtiSystem(A, B, C, x0)


def random_similarity(rng, n, cond=1e3):
    """Random transformation with prescribed condition number."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.geomspace(1.0 / np.sqrt(cond), np.sqrt(cond), n)
    return U @ (s[:, None] * V)


class SineInput:
    """Band-limited input: per channel a sum of a few sinusoids."""

    def __init__(self, rng, q, n_modes=3, max_freq=2.0):
        self.amps = rng.standard_normal((q, n_modes))
        self.freqs = rng.uniform(0.2, max_freq, size=(q, n_modes))
        self.phases = rng.uniform(0, 2 * np.pi, size=(q, n_modes))
        self.discontinuities = ()

    def __call__(self, t):
        return np.sum(self.amps * np.sin(self.freqs * t + self.phases), axis=1)
