"""Gramian-based estimation of the initial-condition reduction error.

The squared L2 distance between the initial-state responses of a stable
full-order system and a stable reduced one is a quadratic form in the two
initial states, with the observability Gramian of the paired (error) system
as its kernel.  Precomputing the three blocks of that Gramian -- the
full-order factor ``U``, the ``N x n`` coupling block and the small reduced
Gramian -- gives an estimator whose online cost for a new initial state is
``O(Nm + Nn + n^2)``:

    delta(x0)^2 = ||U x0||^2 + 2 x0' Xc (W'x0) + (W'x0)' Xr (W'x0)

where ``Xc`` solves ``A'Xc + Xc Ar = C'Cr`` and ``Xr`` is the reduced
observability Gramian.  With an exact factor (``U'U = Q``) the estimator
equals the true error up to round-off; with a low-rank factor the defect is
bounded by ``||Q - U'U||_2 ||x0||^2`` inside the square root.

The estimator accepts any asymptotically stable reduced model of the
uncontrolled dynamics, including non-projection constructions, as long as a
map ``W`` from full to reduced initial states is supplied.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .core import require_hurwitz
from .errors import StabilityError
from .solvers import (
    OBSERVABILITY,
    GramianFactors,
    error_system_gramian_blocks,
)

#: dense A matrices up to this order get an eigenvalue-based stability check
#: inside build_offline; beyond it (and for sparse A) stability is taken on
#: trust from the system's construction
STABILITY_CHECK_MAX_N = 800


@dataclass(frozen=True)
class EstimatorOffline:
    """Precomputed, initial-state-independent estimator data.

    ``factor`` is the full-order observability factor (exact symmetric
    square root in the dense case), ``cross`` the coupling block, ``reduced``
    the reduced Gramian and ``w`` the map from full to reduced initial
    states.  ``gap_norm`` bounds ``||Q - U'U||_2``; it is exact in dense mode
    and a labeled estimate otherwise (``gap_is_estimate``).
    """

    factor: np.ndarray
    cross: np.ndarray
    reduced: np.ndarray
    w: np.ndarray
    gram: np.ndarray | None = None
    gap_norm: float | None = None
    gap_is_estimate: bool = False
    cross_residual: float = 0.0

    @property
    def full_order(self):
        return self.cross.shape[0]

    @property
    def reduced_order(self):
        return self.cross.shape[1]


@dataclass(frozen=True)
class Estimate:
    """Estimator value for one initial state.

    ``raw_square`` keeps the unclamped quadratic form for diagnostics; it can
    dip below zero by round-off when the reduced model is (near) exact.
    ``upper_bound`` adds the Gramian-approximation gap and is only present
    when the offline data carries a gap norm.
    """

    delta: float
    raw_square: float
    upper_bound: float | None = None


@dataclass(frozen=True)
class RestrictedGram:
    """Estimator restricted to initial states from a given subspace basis.

    For ``x0 = basis @ v``, ``delta(x0)^2 = v' Z v``; hence ``delta <=
    sup_root * ||v||`` with equality at the top eigenvector of ``Z``.
    """

    matrix: np.ndarray
    sup_root: float
    worst_direction: np.ndarray


def build_offline(sys, rom, obs, gap="auto"):
    """Assemble the offline estimator data for a reduced model of the
    uncontrolled dynamics.

    Parameters
    ----------
    sys : LtiSystem
        The full-order system (only ``A`` and ``C`` are used).
    rom : ReducedModel
        Stable reduced model; ``rom.W`` must be present as the initial-state
        map.
    obs : GramianFactors
        Observability Gramian of ``sys`` (dense with factor, or low-rank).
    gap : {'auto', 'exact', 'estimate', 'none'}
        How to obtain ``||Q - U'U||_2``.  'exact' needs the dense Gramian;
        'estimate' uses power iteration on the factored Lyapunov residual
        combined with a decay-rate estimate and is reported as an estimate,
        never as a certified bound.  'auto' picks 'exact' when the dense
        Gramian is available and N <= 2000, otherwise 'estimate'.

    Raises
    ------
    StabilityError
        When the reduced system matrix is not Hurwitz -- the error-system
        Gramian does not exist in that case.
    """
    if obs.side != OBSERVABILITY:
        raise ValueError("the estimator needs the observability Gramian")
    if rom.W is None:
        raise ValueError(
            "the reduced model carries no W basis; supply the map from full "
            "to reduced initial states"
        )
    require_hurwitz(rom.Ar, "reduced system matrix")
    if not sys.is_sparse and sys.n <= STABILITY_CHECK_MAX_N and not sys.assume_stable:
        require_hurwitz(sys.dense_a(), "full-order system matrix")

    blocks = error_system_gramian_blocks(sys.A, rom.Ar, sys.C, rom.Cr, obs)
    U = obs.require_factor()

    gap_norm, gap_est = None, False
    if gap == "auto":
        gap = "exact" if (obs.gram is not None and sys.n <= 2000) else (
            "estimate" if obs.kind == "low-rank" else "none")
    if gap == "exact":
        Q = obs.require_gram()
        gap_norm = float(np.abs(sla.eigh(Q - U.T @ U, eigvals_only=True)).max())
    elif gap == "estimate":
        gap_norm = _gap_estimate(sys, U)
        gap_est = True
    elif gap != "none":
        raise ValueError(f"unknown gap mode {gap!r}")

    return EstimatorOffline(
        factor=U, cross=blocks.cross, reduced=blocks.reduced, w=rom.W,
        gram=obs.gram, gap_norm=gap_norm, gap_is_estimate=gap_est,
        cross_residual=blocks.cross_residual,
    )


def _gap_estimate(sys, U, iters=20, seed=0):
    """Heuristic for ||Q - U'U||_2 at scale.

    Power iteration on the (symmetric, factored) Lyapunov residual operator
    R = A'U'U + U'UA + C'C gives ||R||_2; dividing by twice the decay rate
    of the slowest mode bounds the gap for normal-ish systems.  Labeled an
    estimate -- the true gap would require further large-scale solves.
    """
    A, C = sys.A, sys.C
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(sys.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = np.asarray(A.T @ (U.T @ (U @ v))) + U.T @ (U @ np.asarray(A @ v)) + C.T @ (C @ v)
        lam = np.linalg.norm(w)
        if lam == 0:
            return 0.0
        v = w / lam
    if sys.is_sparse:
        from .core import rightmost_eigenvalue_estimate

        mu = -rightmost_eigenvalue_estimate(A)
    else:
        mu = -np.max(sla.eigvals(sys.dense_a()).real)
    if mu <= 0:
        raise StabilityError("cannot estimate the Gramian gap for a non-decaying system")
    return float(lam / (2.0 * mu))


def estimate(off, x0):
    """Evaluate the estimator for one initial state.

    Online cost is a few thin matrix-vector products; no ``N x N`` matrix is
    formed.  The squared form is clamped at zero (tiny negative values occur
    for near-exact reduced models); the raw value is kept for diagnostics.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != off.full_order:
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {off.full_order}")
    w0 = off.w.T @ x0
    raw = float(np.linalg.norm(off.factor @ x0) ** 2
                + 2.0 * x0 @ (off.cross @ w0)
                + w0 @ off.reduced @ w0)
    delta = float(np.sqrt(max(raw, 0.0)))
    upper = None
    if off.gap_norm is not None:
        upper = float(np.sqrt(max(raw, 0.0) + off.gap_norm * float(x0 @ x0)))
    return Estimate(delta=delta, raw_square=raw, upper_bound=upper)


def exact_squared_error(off, x0):
    """Exact squared L2 error of the initial-state responses.

    Uses the dense Gramian instead of the factor; equals ``delta**2`` when
    the factor is an exact square root.
    """
    if off.gram is None:
        raise ValueError("exact form requires a dense Gramian in the offline data")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    w0 = off.w.T @ x0
    return float(x0 @ off.gram @ x0 + 2.0 * x0 @ (off.cross @ w0) + w0 @ off.reduced @ w0)


def restricted_gram(off, basis):
    """Restrict the estimator to initial states ``x0 = basis @ v``.

    Returns the small symmetric matrix of the restricted quadratic form, the
    square root of its spectral norm, and the unit direction attaining it.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.shape[0] != off.full_order:
        raise ValueError(f"basis has {basis.shape[0]} rows, expected {off.full_order}")
    UX = off.factor @ basis
    G = off.w.T @ basis
    CR = off.cross.T @ basis
    Z = UX.T @ UX + CR.T @ G + G.T @ CR + G.T @ off.reduced @ G
    Z = 0.5 * (Z + Z.T)
    w, V = sla.eigh(Z)
    top = int(np.argmax(w))
    return RestrictedGram(
        matrix=Z,
        sup_root=float(np.sqrt(max(w[top], 0.0))),
        worst_direction=V[:, top],
    )
