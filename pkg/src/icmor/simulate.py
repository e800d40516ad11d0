"""Time integration of LTI trajectories and cumulative L2 error curves.

Outputs are sampled on a time mesh that is strongly refined around the
origin: zero followed by logarithmically spaced points spanning twenty
decades up to the final time.  Cumulative L2 norms on such a mesh use the
trapezoidal rule.  Two integration backends are available: an adaptive
embedded Runge-Kutta method (the default) and an exact matrix-exponential
stepping mode for small systems that serves as a cross-validation oracle.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .core import LtiSystem

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


@dataclass(frozen=True)
class TimeMesh:
    """Ascending sample times starting at zero."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.size < 2 or pts[0] != 0.0:
            raise ValueError("mesh must start at 0 and contain at least two points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("mesh points must be strictly increasing")

    @property
    def T(self):
        return float(self.points[-1])

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class Trajectory:
    """Output samples on a mesh, one column per mesh point."""

    mesh: TimeMesh
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "y", y)
        if y.shape[1] != len(self.mesh):
            raise ValueError(f"{y.shape[1]} output columns for {len(self.mesh)} mesh points")
        if not np.all(np.isfinite(y)):
            raise ValueError("trajectory contains non-finite values")


def log_mesh(T, num=10000):
    """Mesh of ``num + 1`` points: zero, then ``num`` logarithmically spaced
    values from ``1e-20 * T`` up to ``T`` inclusive."""
    if T <= 0:
        raise ValueError("final time must be positive")
    pts = np.geomspace(1e-20 * T, T, num)
    pts[-1] = T
    return TimeMesh(np.concatenate([[0.0], pts]))


class PulseInput:
    """Input that is ``amplitude`` on ``[t_on, t_off]`` and zero elsewhere.

    Scalar-valued; broadcast over all input channels by the integrator.
    The switching times are exposed so integration can restart there.
    """

    def __init__(self, t_on, t_off, amplitude=1.0):
        if not t_on < t_off:
            raise ValueError("need t_on < t_off")
        self.t_on = float(t_on)
        self.t_off = float(t_off)
        self.amplitude = float(amplitude)
        self.discontinuities = (self.t_on, self.t_off)

    def __call__(self, t):
        return self.amplitude if self.t_on <= t <= self.t_off else 0.0

    def constant_value(self, t_a, t_b):
        """Constant value on a subinterval free of switching times."""
        mid = 0.5 * (t_a + t_b)
        return self.amplitude if self.t_on <= mid <= self.t_off else 0.0


def _as_lti(sys):
    if isinstance(sys, LtiSystem):
        return sys
    return sys.to_lti()


def _input_function(u, q):
    if u is None:
        return None
    if not callable(u):
        raise TypeError("input must be callable or None")

    def uf(t):
        return np.broadcast_to(np.atleast_1d(np.asarray(u(t), dtype=float)), (q,))

    return uf


def _segments(mesh, u):
    """Split the mesh span at the input's declared discontinuities."""
    T = mesh.T
    cuts = sorted({float(d) for d in getattr(u, "discontinuities", ())
                   if 0.0 < float(d) < T})
    return [0.0] + cuts + [T]


def integrate_lti(sys, u, mesh, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, method="adaptive"):
    """Simulate a system and sample its output on the mesh.

    Parameters
    ----------
    sys : LtiSystem, ReducedModel or SplitRom
        Reduced objects are converted through their ``to_lti`` view.
    u : callable or None
        Input signal; an attribute ``discontinuities`` (iterable of times)
        makes the integrator restart there so jumps are hit exactly.
    mesh : TimeMesh
    method : {'adaptive', 'expm'}
        'adaptive' uses an embedded Runge-Kutta pair with dense output;
        'expm' steps exactly with matrix exponentials (small systems only,
        inputs must be piecewise constant).
    """
    sys = _as_lti(sys)
    if method == "adaptive":
        return _integrate_adaptive(sys, u, mesh, rtol, atol)
    if method == "expm":
        return _integrate_expm(sys, u, mesh)
    raise ValueError(f"unknown integration method {method!r}")


def _integrate_adaptive(sys, u, mesh, rtol, atol):
    pts = mesh.points
    p, N = sys.p, sys.n
    if N == 0:
        return Trajectory(mesh, np.zeros((p, len(mesh))),
                          {"method": "adaptive", "rtol": rtol, "atol": atol})
    uf = _input_function(u, sys.q)
    A = sys.A
    if uf is None or sys.q == 0:
        def rhs(t, x):
            return A @ x
    else:
        B = sys.B

        def rhs(t, x):
            return A @ x + B @ uf(t)

    Y = np.empty((p, pts.size))
    Y[:, 0] = sys.C @ sys.x0
    x = sys.x0.copy()
    nfev = 0
    for t_a, t_b in zip(*(lambda s: (s[:-1], s[1:]))(_segments(mesh, u))):
        inside = np.flatnonzero((pts > t_a) & (pts <= t_b))
        t_eval = np.unique(np.concatenate([pts[inside], [t_b]]))
        sol = solve_ivp(rhs, (t_a, t_b), x, method="RK45", t_eval=t_eval,
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"integration failed in [{t_a}, {t_b}]: {sol.message}")
        nfev += sol.nfev
        keep = np.isin(sol.t, pts[inside])
        Y[:, inside] = sys.C @ sol.y[:, keep]
        x = sol.y[:, -1]
    return Trajectory(mesh, Y, {"method": "adaptive", "rtol": rtol, "atol": atol,
                                "nfev": nfev})


def _integrate_expm(sys, u, mesh):
    if sys.n > 500:
        raise ValueError("matrix-exponential stepping is a small-system reference mode")
    pts = mesh.points
    p, N = sys.p, sys.n
    if N == 0:
        return Trajectory(mesh, np.zeros((p, len(mesh))), {"method": "expm"})
    A = sys.dense_a()
    uncontrolled = u is None or sys.q == 0
    if not uncontrolled and not hasattr(u, "constant_value"):
        raise ValueError("expm mode supports only piecewise-constant inputs")

    # merge switching times into the stepping grid, remembering which grid
    # entries are actual mesh points
    grid = pts
    if not uncontrolled:
        extra = [d for d in u.discontinuities if 0.0 < d < pts[-1] and d not in pts]
        grid = np.unique(np.concatenate([pts, extra]))
    is_sample = np.isin(grid, pts)

    Y = np.empty((p, pts.size))
    x = sys.x0.copy()
    col = 0
    if is_sample[0]:
        Y[:, col] = sys.C @ x
        col += 1
    for k in range(1, grid.size):
        dt = grid[k] - grid[k - 1]
        if uncontrolled:
            x = sla.expm(A * dt) @ x
        else:
            uval = np.broadcast_to(np.atleast_1d(u.constant_value(grid[k - 1], grid[k])),
                                   (sys.q,))
            M = np.zeros((N + 1, N + 1))
            M[:N, :N] = A
            M[:N, N] = sys.B @ uval
            E = sla.expm(M * dt)
            x = E[:N, :N] @ x + E[:N, N]
        if is_sample[k]:
            Y[:, col] = sys.C @ x
            col += 1
    return Trajectory(mesh, Y, {"method": "expm"})


def cumulative_l2_error(traj_a, traj_b=None):
    """Cumulative L2 norm of the output difference along the mesh.

    Trapezoidal cumulative integral of the squared pointwise distance,
    followed by a square root; non-decreasing by construction.  With one
    argument it returns the cumulative norm of that trajectory.
    """
    if traj_b is not None:
        if not np.array_equal(traj_a.mesh.points, traj_b.mesh.points):
            raise ValueError("trajectories live on different meshes")
        d = np.sum((traj_a.y - traj_b.y) ** 2, axis=0)
    else:
        d = np.sum(traj_a.y ** 2, axis=0)
    dt = np.diff(traj_a.mesh.points)
    inc = 0.5 * (d[1:] + d[:-1]) * dt
    return np.sqrt(np.concatenate([[0.0], np.cumsum(inc)]))


@dataclass(frozen=True)
class L2Result:
    """An (effectively) infinite-horizon L2 norm from adaptive integration.

    ``settled`` records whether the coupled state decayed below the target
    before ``t_final``; if not, the value is a truncation of the integral.
    """

    value: float
    t_final: float
    settled: bool


def output_error_l2(sys_a, sys_b=None, t_max=1e6, rtol=1e-11, atol=1e-13,
                    settle=1e-9):
    """L2 norm of the uncontrolled output (difference) over ``[0, inf)``.

    Augments the (coupled) uncontrolled dynamics with a quadrature state for
    the squared output (difference) and integrates until the state norm has
    decayed by ``settle`` relative to the initial state, or ``t_max``.
    Serves as the simulation-side oracle for the Gramian-based quantities.
    """
    a = _as_lti(sys_a)
    if sys_b is None:
        Ablk, Cblk, z0 = a.A, a.C, a.x0
    else:
        b = _as_lti(sys_b)
        if b.p != a.p:
            raise ValueError("output dimensions differ")
        na, nb = a.n, b.n
        if a.is_sparse or b.is_sparse:
            Ablk = sp.block_diag([a.A, b.A], format="csr")
        else:
            Ablk = np.zeros((na + nb, na + nb))
            Ablk[:na, :na] = a.A
            Ablk[na:, na:] = b.A
        Cblk = np.hstack([a.C, -b.C])
        z0 = np.concatenate([a.x0, b.x0])
    nrm0 = np.linalg.norm(z0)
    if nrm0 == 0.0:
        return L2Result(0.0, 0.0, True)

    n_state = z0.size

    def rhs(t, s):
        x = s[:n_state]
        out = Cblk @ x
        return np.concatenate([np.asarray(Ablk @ x), [out @ out]])

    def settled_event(t, s):
        return np.linalg.norm(s[:n_state]) - settle * nrm0

    settled_event.terminal = True
    settled_event.direction = -1

    state = np.concatenate([z0, [0.0]])
    t0, chunk = 0.0, 1.0
    while t0 < t_max:
        t1 = min(t0 + chunk, t_max)
        sol = solve_ivp(rhs, (t0, t1), state, method="RK45", rtol=rtol, atol=atol,
                        events=settled_event, dense_output=False)
        if not sol.success:
            raise RuntimeError(f"integration failed near t={sol.t[-1]}: {sol.message}")
        state = sol.y[:, -1]
        t0 = sol.t[-1]
        if sol.t_events[0].size:
            return L2Result(float(np.sqrt(max(state[-1], 0.0))), float(t0), True)
        chunk *= 2.0
    return L2Result(float(np.sqrt(max(state[-1], 0.0))), float(t0), False)


def forced_error_l2(sys_a, sys_b, u, T, rtol=1e-9, atol=1e-12):
    """L2 norm of the output difference over ``[0, T]`` under a shared input.

    Both systems start from their own initial states; the squared output
    difference is carried as a quadrature state, split at the input's
    declared discontinuities.
    """
    a, b = _as_lti(sys_a), _as_lti(sys_b)
    if a.q != b.q and min(a.q, b.q) > 0:
        raise ValueError("input dimensions differ")
    na, nb = a.n, b.n
    q = max(a.q, b.q)
    uf = _input_function(u, q)

    def rhs(t, s):
        xa, xb = s[:na], s[na:na + nb]
        dya = a.C @ xa - b.C @ xb
        da = np.asarray(a.A @ xa)
        db = np.asarray(b.A @ xb)
        if uf is not None and q:
            uv = uf(t)
            if a.q:
                da = da + a.B @ uv[:a.q]
            if b.q:
                db = db + b.B @ uv[:b.q]
        return np.concatenate([da, db, [dya @ dya]])

    state = np.concatenate([a.x0, b.x0, [0.0]])
    cuts = [0.0] + sorted({float(d) for d in getattr(u, "discontinuities", ())
                           if 0.0 < float(d) < T}) + [T]
    for t_a, t_b in zip(cuts[:-1], cuts[1:]):
        sol = solve_ivp(rhs, (t_a, t_b), state, method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"integration failed in [{t_a}, {t_b}]: {sol.message}")
        state = sol.y[:, -1]
    return float(np.sqrt(max(state[-1], 0.0)))


def input_l2_norm(u, T, q=1, rtol=1e-12, atol=1e-14):
    """L2 norm of an input signal over ``[0, T]`` by adaptive quadrature."""
    uf = _input_function(u, q)
    cuts = [0.0] + sorted({float(d) for d in getattr(u, "discontinuities", ())
                           if 0.0 < float(d) < T}) + [T]
    total = 0.0
    for t_a, t_b in zip(cuts[:-1], cuts[1:]):
        sol = solve_ivp(lambda t, s: [float(uf(t) @ uf(t))], (t_a, t_b), [0.0],
                        method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"quadrature failed in [{t_a}, {t_b}]")
        total += sol.y[0, -1]
    return float(np.sqrt(total))
