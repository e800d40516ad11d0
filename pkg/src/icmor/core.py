"""State-space data model, Petrov-Galerkin projection and stability checks.

The central objects are :class:`LtiSystem` (the full-order model) and
:class:`ReducedModel` (a low-dimensional surrogate obtained either by
projection with bi-orthogonal bases ``W, V`` or by any other construction
that supplies the matrices directly).  All objects are treated as immutable
after construction; operations are pure functions.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import StabilityError

#: eigenvalues with real part in (-TOL_STAB_REL * rho, 0] count as marginally
#: stable and are rejected wherever asymptotic stability is required
TOL_STAB_REL = 1e-12

BIORTH_TOL = 1e-10


def _as_2d(M, name):
    M = sp.csr_matrix(M) if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got ndim={M.ndim}")
    return M


class LtiSystem:
    """Asymptotically stable LTI system ``x' = A x + B u, y = C x, x(0) = x0``.

    Parameters
    ----------
    A : (N, N) array or sparse matrix
        System matrix; expected Hurwitz for everything downstream.
    B : (N, q) array or None
        Input matrix.  ``None`` or zero columns give an uncontrolled system
        (q = 0), which is a first-class citizen here.
    C : (p, N) array
        Output matrix.
    x0 : (N,) array or None
        Initial state; defaults to zero.
    assume_stable : bool
        Record that stability is known from construction (used for sparse
        systems where a dense eigensolve is infeasible).
    """

    def __init__(self, A, B, C, x0=None, assume_stable=False):
        self.A = sp.csr_matrix(A) if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f"A must be square, got {self.A.shape}")
        N = self.A.shape[0]
        if B is None:
            B = np.zeros((N, 0))
        B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
        self.B = B[:, None] if B.ndim == 1 else np.atleast_2d(B)
        self.C = _as_2d(C.toarray() if sp.issparse(C) else C, "C")
        self.x0 = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
        self.assume_stable = bool(assume_stable)

        if self.B.shape[0] != N:
            raise ValueError(f"B has {self.B.shape[0]} rows, expected {N}")
        if self.C.shape[1] != N:
            raise ValueError(f"C has {self.C.shape[1]} columns, expected {N}")
        if self.x0.shape[0] != N:
            raise ValueError(f"x0 has length {self.x0.shape[0]}, expected {N}")
        if not self.is_sparse and not np.all(np.isfinite(self.A)):
            raise ValueError("A contains non-finite entries")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def q(self):
        return self.B.shape[1]

    @property
    def is_sparse(self):
        return sp.issparse(self.A)

    def dense_a(self):
        return self.A.toarray() if self.is_sparse else self.A

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"LtiSystem(N={self.n}, p={self.p}, q={self.q}, {kind})"


class ReducedModel:
    """Reduced system with (optional) reduction bases.

    A projection-based model stores the bases ``W, V`` (with ``W.T @ V = I``)
    and carries ``x0r = W.T @ x0``.  Non-projection constructions may pass the
    matrices directly; ``W`` then still acts as the map from a full initial
    state to the reduced one whenever the model is used for error estimation.
    """

    def __init__(self, Ar, Br, Cr, x0r=None, W=None, V=None):
        self.Ar = np.atleast_2d(np.asarray(Ar, dtype=float))
        n = self.Ar.shape[0]
        if self.Ar.shape != (n, n):
            raise ValueError(f"Ar must be square, got {self.Ar.shape}")
        if Br is None:
            self.Br = np.zeros((n, 0))
        else:
            Br = np.asarray(Br, dtype=float)
            self.Br = Br[:, None] if Br.ndim == 1 else np.atleast_2d(Br)
        if self.Br.shape[0] != n:
            raise ValueError(f"Br has {self.Br.shape[0]} rows, expected {n}")
        Cr = np.asarray(Cr, dtype=float)
        self.Cr = Cr[None, :] if Cr.ndim == 1 else np.atleast_2d(Cr)
        if self.Cr.shape[1] != n:
            raise ValueError(f"Cr has {self.Cr.shape[1]} columns, expected {n}")
        self.x0r = np.zeros(n) if x0r is None else np.asarray(x0r, dtype=float).reshape(-1)
        if self.x0r.shape[0] != n:
            raise ValueError(f"x0r has length {self.x0r.shape[0]}, expected {n}")
        self.W = None if W is None else np.asarray(W, dtype=float)
        self.V = None if V is None else np.asarray(V, dtype=float)
        for name, M in (("W", self.W), ("V", self.V)):
            if M is not None and (M.ndim != 2 or M.shape[1] != n):
                raise ValueError(f"{name} must be N x {n}, got {M.shape}")
        if self.W is not None and self.V is not None:
            gap = np.linalg.norm(self.W.T @ self.V - np.eye(n))
            if gap > BIORTH_TOL * max(1.0, n):
                raise ValueError(f"bases are not bi-orthogonal: ||W'V - I|| = {gap:.2e}")

    @property
    def n(self):
        return self.Ar.shape[0]

    @property
    def p(self):
        return self.Cr.shape[0]

    @property
    def q(self):
        return self.Br.shape[1]

    def to_lti(self):
        """View the reduced model as a (small, dense) state-space system."""
        return LtiSystem(self.Ar, self.Br, self.Cr, self.x0r)

    def __repr__(self):
        return f"ReducedModel(n={self.n}, p={self.p}, q={self.q})"


class SplitRom:
    """Pair of independently reduced subsystems: one driven only by the
    initial state, one only by the input.

    The total surrogate output is the sum of both parts.  ``uncontrolled``
    has no input matrix; ``controlled`` starts from a zero state.
    """

    def __init__(self, uncontrolled, controlled):
        if uncontrolled.q != 0 and np.any(uncontrolled.Br):
            raise ValueError("uncontrolled part must have a zero input matrix")
        if np.any(controlled.x0r):
            raise ValueError("controlled part must have a zero initial state")
        if uncontrolled.p != controlled.p:
            raise ValueError("output dimensions of the two parts differ")
        self.uncontrolled = uncontrolled
        self.controlled = controlled

    @property
    def n(self):
        return self.uncontrolled.n + self.controlled.n

    def to_lti(self):
        """Combine both parts into one block-diagonal state-space system.

        Output = uncontrolled output + controlled output, so simulating the
        combined system reproduces the surrogate's total response.
        """
        nu, nc = self.uncontrolled.n, self.controlled.n
        A = np.zeros((nu + nc, nu + nc))
        A[:nu, :nu] = self.uncontrolled.Ar
        A[nu:, nu:] = self.controlled.Ar
        B = np.vstack([np.zeros((nu, self.controlled.q)), self.controlled.Br])
        C = np.hstack([self.uncontrolled.Cr, self.controlled.Cr])
        x0 = np.concatenate([self.uncontrolled.x0r, np.zeros(nc)])
        return LtiSystem(A, B, C, x0)

    def __repr__(self):
        return f"SplitRom(n_uc={self.uncontrolled.n}, n_c={self.controlled.n})"


def stability_margin(A):
    """Return ``(max_real_part, spectral_radius)`` of a dense square matrix."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.size == 0:
        return -np.inf, 0.0
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    try:
        lam = sla.eigvals(A)
    except sla.LinAlgError as exc:
        raise StabilityError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(lam.real)), float(np.max(np.abs(lam)))


def is_hurwitz(A, tol_rel=TOL_STAB_REL):
    """True iff all eigenvalues of ``A`` have real part < ``-tol_rel * rho(A)``.

    Eigenvalues in the marginal band ``(-tol, 0]`` do not count as stable;
    they make the Lyapunov operators used downstream (nearly) singular.
    """
    max_re, rho = stability_margin(A)
    return max_re < -tol_rel * rho


def require_hurwitz(A, what="system matrix"):
    """Raise :class:`StabilityError` unless ``A`` is safely Hurwitz."""
    max_re, rho = stability_margin(A)
    tol = TOL_STAB_REL * rho
    if max_re >= -tol:
        kind = "marginally stable" if max_re <= 0 else "unstable"
        raise StabilityError(
            f"{what} is {kind} (max Re(lambda) = {max_re:.3e}); "
            "an asymptotically stable (Hurwitz) matrix is required"
        )


def rightmost_eigenvalue_estimate(A, k=6, seed=0):
    """Estimate the rightmost eigenvalue of a large sparse matrix.

    Shift-and-invert Arnoldi around the origin; adequate for diffusion-type
    operators whose rightmost eigenvalue is also the one closest to zero.
    Heuristic, intended for on-demand stability checks of sparse systems.
    """
    import scipy.sparse.linalg as spla

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(A.shape[0])
    lam = spla.eigs(A.tocsc() if sp.issparse(A) else A, k=k, sigma=0.0,
                    which="LM", v0=v0, return_eigenvectors=False)
    return float(np.max(lam.real))


def biorthonormalize(V, W):
    """Rescale ``W`` so that ``W.T @ V = I`` while leaving ``V`` unchanged.

    Raises ``ValueError`` when ``W.T @ V`` is numerically singular.
    """
    M = W.T @ V
    n = M.shape[0]
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise ValueError("bases not bi-orthogonalizable: W'V is numerically singular")
    return V, W @ np.linalg.inv(M).T, np.eye(n)


def project(sys, V, W, enforce="check"):
    """Petrov-Galerkin projection of ``sys`` onto ``span(V)`` along ``W``.

    Parameters
    ----------
    sys : LtiSystem
    V, W : (N, n) arrays
        Reduction bases with ``W.T @ V = I`` (up to ``1e-10``).
    enforce : {'check', 'biorthogonalize'}
        'check' rejects bases that fail bi-orthogonality; 'biorthogonalize'
        rescales ``W`` first.

    Returns
    -------
    ReducedModel
        With ``Ar = W'AV``, ``Br = W'B``, ``Cr = CV`` and ``x0r = W'x0``.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if W.ndim == 1:
        W = W[:, None]
    if V.shape != W.shape or V.shape[0] != sys.n:
        raise ValueError(f"bases must both be N x n with N={sys.n}, got {V.shape} and {W.shape}")
    n = V.shape[1]
    gap = np.linalg.norm(W.T @ V - np.eye(n))
    if gap > BIORTH_TOL * max(1.0, n):
        if enforce == "biorthogonalize":
            V, W, _ = biorthonormalize(V, W)
        else:
            raise ValueError(
                f"bases fail bi-orthogonality (||W'V - I|| = {gap:.2e}); "
                "pass enforce='biorthogonalize' to rescale"
            )
    Ar = W.T @ (sys.A @ V)
    return ReducedModel(Ar, W.T @ sys.B, sys.C @ V, W.T @ sys.x0, W=W, V=V)


def split_system(sys):
    """Split into an uncontrolled part (keeps ``x0``) and a controlled part
    (keeps ``B``, zero initial state).  For any input, the outputs of the two
    parts sum to the output of ``sys``.
    """
    uncontrolled = LtiSystem(sys.A, None, sys.C, sys.x0, assume_stable=sys.assume_stable)
    controlled = LtiSystem(sys.A, sys.B, sys.C, None, assume_stable=sys.assume_stable)
    return uncontrolled, controlled
