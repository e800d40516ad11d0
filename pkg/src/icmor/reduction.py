"""Reduction methods: balanced truncation, its initial-condition-aware
variants, and the interpolatory iterations IRKA / ISRK.

Balanced truncation uses the square-root formulation throughout: with
factors ``P ~ F'F`` and ``Q ~ U'U``, the SVD ``U F' = Z S Y'`` yields the
bases ``V = F' Y_n S_n^{-1/2}`` and ``W = U' Z_n S_n^{-1/2}``, which are
bi-orthogonal by construction.  The initial-condition variants either
augment the input matrix with a training basis ``X0`` (``bt-aug``) or reduce
the input-driven and initial-state-driven subsystems separately
(``bt-bt`` / ``split-irka`` / ``split-isrk``).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import LtiSystem, ReducedModel, SplitRom, is_hurwitz, project
from .errors import ReductionError, StabilityError
from .solvers import CONTROLLABILITY, OBSERVABILITY, GramianFactors, gramian

HSV_TIE_RTOL = 1e-12


@dataclass
class ReductionReport:
    """Diagnostics accompanying every reduced model."""

    method: str
    order: int
    hankel_values: np.ndarray | None = None
    alpha: float | None = None          # 2 * sum of truncated Hankel values
    aug_alpha: float | None = None      # same quantity for the augmented system
    iterations: int = 0
    converged: bool = True
    stable: bool | None = None
    X0: np.ndarray | None = None
    seed: int | None = None
    shifts: np.ndarray | None = None
    constraint_residuals: list = field(default_factory=list)
    parts: dict = field(default_factory=dict)


def hankel_singular_values(ctrl, obs):
    """Hankel singular values from a controllability/observability factor pair.

    These are the singular values of ``U F'`` (equivalently the square roots
    of the eigenvalues of ``PQ``); they are invariant under state
    transformations.
    """
    U = obs.require_factor()
    F = ctrl.require_factor()
    if U.shape[0] == 0 or F.shape[0] == 0:
        return np.zeros(0)
    return sla.svdvals(U @ F.T)


def _resolve_gramians(sys, gramians, need=("ctrl", "obs")):
    if gramians is not None:
        ctrl, obs = gramians
        if ctrl is not None and ctrl.side != CONTROLLABILITY:
            raise ValueError("first Gramian of the pair must be the controllability one")
        if obs is not None and obs.side != OBSERVABILITY:
            raise ValueError("second Gramian of the pair must be the observability one")
        return ctrl, obs
    if sys.is_sparse:
        raise ValueError("pass precomputed (low-rank) Gramians for sparse systems")
    ctrl = gramian(sys, CONTROLLABILITY) if "ctrl" in need else None
    obs = gramian(sys, OBSERVABILITY) if "obs" in need else None
    return ctrl, obs


def _check_truncation_order(sv, n):
    if n < 1:
        raise ReductionError("reduced order must be at least 1")
    cutoff = sv[0] * max(sv.size, 10) * np.finfo(float).eps if sv.size else 0.0
    rank = int(np.sum(sv > cutoff))
    if n > rank:
        raise ReductionError(
            f"requested order {n} exceeds the numerical rank {rank} of the factor product"
        )
    if n < sv.size and sv[n - 1] > 0:
        if (sv[n - 1] - sv[n]) <= HSV_TIE_RTOL * sv[n - 1]:
            raise ReductionError(
                f"ambiguous truncation order: Hankel values {n} and {n + 1} coincide "
                f"({sv[n - 1]:.6e} vs {sv[n]:.6e}); try order {n - 1} or {n + 1}"
            )


def balanced_truncation(sys, n, gramians=None):
    """Square-root balanced truncation to order ``n``.

    Parameters
    ----------
    sys : LtiSystem
        Asymptotically stable system.
    n : int
        Reduced order; must not split a Hankel-value tie.
    gramians : (GramianFactors, GramianFactors), optional
        Controllability/observability pair.  Computed densely when omitted
        (dense ``A`` only).

    Returns
    -------
    (ReducedModel, ReductionReport)
        The report carries the Hankel values and the truncation sum
        ``alpha = 2 * sum(sv[n:])``.
    """
    ctrl, obs = _resolve_gramians(sys, gramians)
    U = obs.require_factor()
    F = ctrl.require_factor()
    if U.shape[0] == 0 or F.shape[0] == 0:
        raise ReductionError("zero Gramian factor: system has no reachable/observable part")
    Z, sv, Yt = sla.svd(U @ F.T, full_matrices=False)
    _check_truncation_order(sv, n)
    scale = 1.0 / np.sqrt(sv[:n])
    V = F.T @ (Yt[:n].T * scale)
    W = U.T @ (Z[:, :n] * scale)
    rom = project(sys, V, W, enforce="biorthogonalize")
    report = ReductionReport(
        method="bt", order=n, hankel_values=sv, alpha=2.0 * float(np.sum(sv[n:])),
        stable=is_hurwitz(rom.Ar),
    )
    return rom, report


def augmented_bt(sys, X0, n, gramians=None, lowrank_tol=1e-10, max_rank=None):
    """Balanced truncation of the system augmented with the training matrix.

    The input matrix is extended to ``[B, X0]``, balanced truncation is run
    on the augmented system, and the resulting bases project the *original*
    system, so the reduced input matrix stays ``W'B`` and the reduced initial
    state is ``W'x0``.
    """
    X0 = _as_training_matrix(X0, sys.n)
    B_aug = np.hstack([sys.B, X0])
    aug = LtiSystem(sys.A, B_aug, sys.C, sys.x0, assume_stable=sys.assume_stable)
    if gramians is None:
        if sys.is_sparse:
            ctrl = gramian(aug, CONTROLLABILITY, method="lowrank", tol=lowrank_tol, max_rank=max_rank)
            obs = gramian(aug, OBSERVABILITY, method="lowrank", tol=lowrank_tol, max_rank=max_rank)
        else:
            ctrl, obs = None, None
        gr = None if ctrl is None else (ctrl, obs)
    else:
        gr = gramians
    rom_aug, rep_aug = balanced_truncation(aug, n, gr)
    rom = project(sys, rom_aug.V, rom_aug.W, enforce="biorthogonalize")
    report = ReductionReport(
        method="bt-aug", order=n, hankel_values=rep_aug.hankel_values,
        alpha=None, aug_alpha=rep_aug.alpha, stable=is_hurwitz(rom.Ar), X0=X0,
    )
    return rom, report


def _as_training_matrix(X0, N):
    X0 = np.zeros((N, 0)) if X0 is None else np.asarray(X0, dtype=float)
    if X0.ndim == 1:
        X0 = X0[:, None]
    if X0.shape[0] != N:
        raise ValueError(f"training matrix has {X0.shape[0]} rows, expected {N}")
    return X0


def _zero_rom(p, q):
    return ReducedModel(np.zeros((0, 0)), np.zeros((0, q)), np.zeros((p, 0)), np.zeros(0))


def split_reduction(sys, X0, n_uc, n_c, method_uc="bt", obs=None, seed=0,
                    lowrank_tol=1e-10, max_rank=None):
    """Reduce the input-driven and the initial-state-driven parts separately.

    The controlled part ``(A, B, C, x0=0)`` is reduced by balanced truncation
    to order ``n_c`` (skipped for uncontrolled systems).  The uncontrolled
    part is handled through the auxiliary system whose input matrix is the
    training basis ``X0`` and reduced by ``method_uc`` in {'bt', 'irka',
    'isrk'} to order ``n_uc``.

    Returns
    -------
    (SplitRom, ReductionReport)
        Report method is 'bt-bt', 'split-irka' or 'split-isrk'; ``alpha``
        comes from the controlled part's truncation, iteration counters from
        the uncontrolled method.
    """
    if method_uc not in ("bt", "irka", "isrk"):
        raise ValueError(f"unknown method for the uncontrolled part: {method_uc!r}")
    X0 = _as_training_matrix(X0, sys.n)
    if X0.shape[1] == 0:
        raise ValueError("split reduction needs a nonempty training matrix")
    grm = "lowrank" if sys.is_sparse else "dense"
    if obs is None:
        obs = gramian(sys, OBSERVABILITY, method=grm, tol=lowrank_tol, max_rank=max_rank)

    parts = {}
    p, q = sys.p, sys.q
    controlled_active = q > 0 and np.any(sys.B) and n_c > 0
    if controlled_active:
        ctrl = gramian(sys, CONTROLLABILITY, method=grm, tol=lowrank_tol, max_rank=max_rank)
        rom_c_full, rep_c = balanced_truncation(
            LtiSystem(sys.A, sys.B, sys.C, None, assume_stable=sys.assume_stable),
            n_c, (ctrl, obs))
        rom_c = ReducedModel(rom_c_full.Ar, rom_c_full.Br, rom_c_full.Cr,
                             np.zeros(n_c), W=rom_c_full.W, V=rom_c_full.V)
        parts["controlled"] = rep_c
    else:
        rom_c = _zero_rom(p, q)
        rep_c = None

    aux = LtiSystem(sys.A, X0, sys.C, sys.x0, assume_stable=sys.assume_stable)
    if method_uc == "bt":
        ctrl_x0 = gramian(aux, CONTROLLABILITY, method=grm, tol=lowrank_tol, max_rank=max_rank)
        rom_u_full, rep_u = balanced_truncation(aux, n_uc, (ctrl_x0, obs))
    elif method_uc == "irka":
        rom_u_full, rep_u = irka(aux, n_uc, seed=seed)
        if not is_hurwitz(rom_u_full.Ar):
            raise StabilityError(
                "the IRKA-reduced initial-condition part is unstable; "
                "the error estimator cannot certify it (use 'bt' or 'isrk')"
            )
    else:
        rom_u_full, rep_u = isrk(aux, n_uc, obs, seed=seed)
    rom_u = ReducedModel(rom_u_full.Ar, None, rom_u_full.Cr, rom_u_full.x0r,
                         W=rom_u_full.W, V=rom_u_full.V)
    parts["uncontrolled"] = rep_u

    method = {"bt": "bt-bt", "irka": "split-irka", "isrk": "split-isrk"}[method_uc]
    report = ReductionReport(
        method=method, order=rom_u.n + rom_c.n,
        hankel_values=None if rep_c is None else rep_c.hankel_values,
        alpha=None if rep_c is None else rep_c.alpha,
        iterations=rep_u.iterations, converged=rep_u.converged,
        stable=(rep_u.stable and (rep_c is None or rep_c.stable)),
        X0=X0, seed=seed, parts=parts,
    )
    return SplitRom(rom_u, rom_c), report


# ---------------------------------------------------------------------------
# interpolatory methods
# ---------------------------------------------------------------------------

def _initial_shifts(sys, n, seed):
    """Logarithmically spaced positive shifts spanning the (estimated) decay
    range of the spectrum."""
    from .solvers import _shift_candidates

    rng = np.random.default_rng(seed)
    cands = _shift_candidates(sys.A, rng)
    lo = max(np.min(-cands.real), 1e-12)
    hi = max(np.max(-cands.real), lo * (1 + 1e-12))
    return np.geomspace(lo, hi, n).astype(complex)


def _canonical_pairs(shifts, dirs):
    """Group a conjugate-symmetric shift multiset into real shifts and one
    representative per complex pair, preserving the matching directions."""
    order = np.lexsort((np.abs(shifts.imag), shifts.real))
    shifts, dirs = shifts[order], dirs[order]
    out = []
    used = np.zeros(len(shifts), dtype=bool)
    for i, s in enumerate(shifts):
        if used[i]:
            continue
        used[i] = True
        if abs(s.imag) <= 1e-12 * max(abs(s), 1e-300):
            out.append((complex(s.real), dirs[i], False))
        else:
            for j in range(i + 1, len(shifts)):
                if not used[j] and abs(shifts[j] - np.conj(s)) <= 1e-8 * max(abs(s), 1e-300):
                    used[j] = True
                    break
            out.append((complex(s), dirs[i], True))
    return out


def _tangential_basis(A, Bcols, shifts, dirs, transposed=False):
    """Real basis spanning {(sigma_i I - A)^{-1} B b_i}; complex conjugate
    shift pairs contribute their real and imaginary parts."""
    from .solvers import _ShiftedSolver

    solver = _ShiftedSolver(A)
    cols = []
    for s, d, is_pair in _canonical_pairs(shifts, dirs):
        if is_pair:
            v = -solver.solve(-s, np.asarray(Bcols @ d, dtype=complex), transposed=transposed)
            cols.extend([v.real, v.imag])
        else:
            v = -solver.solve(-s.real, np.real(Bcols @ d.real), transposed=transposed)
            cols.append(np.real(v))
    Vraw = np.column_stack(cols)
    if Vraw.shape[1] != len(shifts):
        raise ReductionError(
            "shift multiset is not closed under conjugation; complex shifts must come in pairs"
        )
    Qb, _ = np.linalg.qr(Vraw)
    return Qb


def _mirror_shifts(Ar, Br, Cr):
    """Next interpolation data from the current reduced model: reflected
    poles and the tangential directions of the pole residues."""
    lam, X = sla.eig(Ar)
    shifts = -lam
    # keep interpolation points in the open right half plane
    shifts = np.where(shifts.real <= 0, np.abs(shifts.real) + 1e-12 + 1j * shifts.imag, shifts)
    Xi = sla.inv(X)
    b_dirs = Xi @ Br             # rows: right directions
    c_dirs = (Cr @ X).T          # rows: left directions
    return shifts, b_dirs, c_dirs


def _shift_change(new, old):
    a = np.sort_complex(np.asarray(new))
    b = np.sort_complex(np.asarray(old))
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def irka(sys, n, init_shifts=None, seed=0, tol=1e-6, max_iter=100):
    """Iteratively corrected rational-Krylov reduction of order ``n``.

    Both bases are built from shifted solves, ``V`` from
    ``(s_i I - A)^{-1} B b_i`` and ``W`` from the adjoint counterpart, and
    the shifts are updated to the mirrored poles of the current reduced
    model until the (sorted) shift set stabilizes.  There is no stability
    guarantee; the report records whether the final model is Hurwitz.
    """
    if sys.q == 0 or not np.any(sys.B):
        raise ReductionError("interpolatory reduction needs a nonzero input matrix")
    if n < 1:
        raise ReductionError("reduced order must be at least 1")
    rng = np.random.default_rng(seed)
    shifts = (np.asarray(init_shifts, dtype=complex).reshape(-1)
              if init_shifts is not None else _initial_shifts(sys, n, seed))
    if shifts.size != n:
        raise ValueError(f"need {n} initial shifts, got {shifts.size}")
    b_dirs = rng.standard_normal((n, sys.q)).astype(complex)
    c_dirs = rng.standard_normal((n, sys.p)).astype(complex)

    converged = False
    it = 0
    rom = None
    for it in range(1, max_iter + 1):
        V = _tangential_basis(sys.A, sys.B, shifts, b_dirs)
        W = _tangential_basis(sys.A, sys.C.T, shifts, c_dirs, transposed=True)
        M = W.T @ V
        try:
            W = W @ np.linalg.inv(M).T
        except np.linalg.LinAlgError as exc:
            raise ReductionError(f"interpolation bases degenerated (WV singular): {exc}") from exc
        Ar = W.T @ (sys.A @ V)
        Br = W.T @ sys.B
        Cr = sys.C @ V
        new_shifts, b_dirs, c_dirs = _mirror_shifts(Ar, Br, Cr)
        change = _shift_change(new_shifts, shifts)
        shifts = new_shifts
        rom = ReducedModel(Ar, Br, Cr, W.T @ sys.x0, W=W, V=V)
        if change < tol:
            converged = True
            break

    report = ReductionReport(
        method="irka", order=n, iterations=it, converged=converged,
        stable=is_hurwitz(rom.Ar), seed=seed, shifts=shifts,
    )
    return rom, report


def isrk(sys, n, obs, init_shifts=None, seed=0, tol=1e-6, max_iter=100):
    """Interpolatory reduction with the Gramian-coupled left basis.

    Like :func:`irka`, but only ``V`` comes from shifted solves; in every
    sweep the left basis is set to ``W = QV (V'QV)^{-1}`` through the
    observability factor ``U`` (``Q = U'U`` is never formed), which makes
    ``W'V = I`` automatic and yields a stable reduced model whenever the
    Gramian is exact.  The relative constraint residual is recorded for
    every sweep.
    """
    if sys.q == 0 or not np.any(sys.B):
        raise ReductionError("interpolatory reduction needs a nonzero input matrix")
    if n < 1:
        raise ReductionError("reduced order must be at least 1")
    U = obs.require_factor()
    rng = np.random.default_rng(seed)
    shifts = (np.asarray(init_shifts, dtype=complex).reshape(-1)
              if init_shifts is not None else _initial_shifts(sys, n, seed))
    if shifts.size != n:
        raise ValueError(f"need {n} initial shifts, got {shifts.size}")
    b_dirs = rng.standard_normal((n, sys.q)).astype(complex)

    reseeded = False
    converged = False
    residuals = []
    it = 0
    rom = None
    while it < max_iter:
        it += 1
        V = _tangential_basis(sys.A, sys.B, shifts, b_dirs)
        UV = U @ V
        M = UV.T @ UV
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > 1e14:
            if reseeded:
                raise ReductionError(
                    "V'QV is numerically singular even after re-seeding the shifts"
                )
            reseeded = True
            shifts = _initial_shifts(sys, n, seed + 1)
            b_dirs = np.random.default_rng(seed + 1).standard_normal((n, sys.q)).astype(complex)
            it -= 1
            continue
        QV = U.T @ UV
        W = np.linalg.solve(M, QV.T).T
        residuals.append(float(np.linalg.norm(W - QV @ np.linalg.inv(M))
                               / max(np.linalg.norm(W), 1e-300)))
        Ar = W.T @ (sys.A @ V)
        Br = W.T @ sys.B
        Cr = sys.C @ V
        new_shifts, b_dirs, _ = _mirror_shifts(Ar, Br, Cr)
        change = _shift_change(new_shifts, shifts)
        shifts = new_shifts
        rom = ReducedModel(Ar, Br, Cr, W.T @ sys.x0, W=W, V=V)
        if change < tol:
            converged = True
            break

    report = ReductionReport(
        method="isrk", order=n, iterations=it, converged=converged,
        stable=is_hurwitz(rom.Ar), seed=seed, shifts=shifts,
        constraint_residuals=residuals,
    )
    return rom, report
