"""Benchmark constructors: a convection-diffusion system generated on the
fly, and loading scenarios for the externally distributed beam model.

Grid convention for the convection-diffusion problem: the unit square with
``grid`` inner points per direction, spacing ``h = 1/(grid+1)``, unknowns at
``(i*h, j*h)`` for ``i, j = 1..grid``.  States are ordered with the first
coordinate fastest: index ``k = (j-1)*grid + (i-1)``.  All operators and
initial vectors use this ordering.
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import LtiSystem
from .errors import DataError
from .simulate import PulseInput

#: training parameters mu_k = 2 + k/20 for k = 0..20
CONVDIFF_TRAINING_MUS = 2.0 + np.arange(21) / 20.0

BEAM_FILES = ("A.mtx", "B.mtx", "C.mtx")
BEAM_EXPECTED_ORDER = 349


@dataclass(frozen=True)
class ConvDiffConfig:
    """Uniform-grid discretization parameters; ``grid`` inner points per
    direction, ``N = grid**2`` unknowns."""

    grid: int

    def __post_init__(self):
        if self.grid < 3:
            raise ValueError("need at least 3 inner grid points per direction")

    @property
    def h(self):
        return 1.0 / (self.grid + 1)

    @property
    def n_states(self):
        return self.grid ** 2


def _grid_coords(cfg):
    xi = np.arange(1, cfg.grid + 1) * cfg.h
    X1, X2 = np.meshgrid(xi, xi, indexing="xy")  # first coordinate fastest
    return X1.ravel(), X2.ravel()


def convdiff_initial_state(mu, cfg):
    """Initial-state family evaluated on the inner grid nodes.

    ``x(s1, s2) = s1^(1/4) s2^(1/mu) (1-s1)(1-s2) [cos(10 (s2 + mu/5)^3)
    + exp(s1^2 mu / (1 + s1 s2))]`` -- smooth, vanishing at the boundary.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not isinstance(cfg, ConvDiffConfig):
        cfg = ConvDiffConfig(int(cfg))
    s1, s2 = _grid_coords(cfg)
    return (s1 ** 0.25 * s2 ** (1.0 / mu) * (1.0 - s1) * (1.0 - s2)
            * (np.cos(10.0 * (s2 + mu / 5.0) ** 3)
               + np.exp(s1 ** 2 * mu / (1.0 + s1 * s2))))


def _output_matrix(cfg):
    """Nine box-average outputs.

    Row L weights the nodes inside ``[9/20, 11/20] x [L/10 - 1/50, L/10 +
    1/50]`` by the cell area ``h^2``.  Membership of node ``(i*h, j*h)`` in
    the closed boxes is decided in integer arithmetic so grid points landing
    exactly on a box edge are classified reproducibly:

        9(grid+1) <= 20 i <= 11(grid+1)  and  |50 j - 5 L (grid+1)| <= grid+1.
    """
    g = cfg.grid
    d = g + 1
    i_idx = np.arange(1, g + 1)
    j_idx = np.arange(1, g + 1)
    in_x1 = (9 * d <= 20 * i_idx) & (20 * i_idx <= 11 * d)
    rows, cols, vals = [], [], []
    for ell in range(1, 10):
        in_x2 = np.abs(50 * j_idx - 5 * ell * d) <= d
        jj, ii = np.meshgrid(j_idx[in_x2], i_idx[in_x1], indexing="ij")
        k = (jj.ravel() - 1) * g + (ii.ravel() - 1)
        rows.extend([ell - 1] * k.size)
        cols.extend(k.tolist())
        vals.extend([cfg.h ** 2] * k.size)
    return sp.csr_matrix((vals, (rows, cols)), shape=(9, g * g)).toarray()


def convdiff_system(cfg):
    """Sparse convection-diffusion system and its training matrix.

    Five-point Laplacian plus a central-difference discretization of the
    convection term ``(1/2) s1^2 s2  d/ds1`` with zero Dirichlet boundary;
    diffusion dominates on these grids, so the central scheme is stable and
    the system matrix is Hurwitz.  There is no input (q = 0).  Returns the
    system together with the 21-column training matrix of initial states.
    """
    if not isinstance(cfg, ConvDiffConfig):
        cfg = ConvDiffConfig(int(cfg))
    g, h = cfg.grid, cfg.h
    ones = np.ones(g - 1)
    T1 = sp.diags([ones, -2.0 * np.ones(g), ones], [-1, 0, 1])
    S = sp.diags([-ones, ones], [-1, 1])
    eye = sp.eye(g)
    lap = (sp.kron(eye, T1) + sp.kron(T1, eye)) / h ** 2
    s1, s2 = _grid_coords(cfg)
    coeff = 0.5 * s1 ** 2 * s2
    conv = sp.diags(coeff) @ sp.kron(eye, S) / (2.0 * h)
    A = (lap + conv).tocsr()
    C = _output_matrix(cfg)
    X0 = np.column_stack([convdiff_initial_state(mu, cfg) for mu in CONVDIFF_TRAINING_MUS])
    sys = LtiSystem(A, None, C, convdiff_initial_state(3.0, cfg), assume_stable=True)
    return sys, X0


@dataclass(frozen=True)
class BeamScenario:
    """One of the two beam experiment setups built from external data."""

    system: LtiSystem
    X0: np.ndarray
    case: str
    T: float
    u: object          # input signal or None
    x0: np.ndarray


def beam_training_matrix(N):
    """Two-column training basis: unit load at state 5 and a 100-weighted
    load at state 101 (1-based)."""
    if N < 101:
        raise DataError(f"beam model of order {N} is too small for the training pattern")
    X0 = np.zeros((N, 2))
    X0[4, 0] = 1.0
    X0[100, 1] = 100.0
    return X0


def beam_load_scenario(path, case):
    """Load the beam model from Matrix Market files and set up a scenario.

    Parameters
    ----------
    path : str
        Directory containing ``A.mtx``, ``B.mtx`` and ``C.mtx`` of the beam
        model (single input, single output).  The dataset is not bundled
        here; see the README for how to point the package at it.
    case : {'trained', 'not-trained'}
        'trained': ``x0 = X0 @ [10, -1]``, unit pulse input on ``[100, 200]``,
        final time 1000.  'not-trained': all-fives initial state, no input,
        final time 10000.
    """
    from .mmio import load_matrix

    if case not in ("trained", "not-trained"):
        raise ValueError(f"unknown beam case {case!r}")
    missing = [f for f in BEAM_FILES if not os.path.isfile(os.path.join(path, f))]
    if missing:
        raise DataError(
            "beam data not found: missing "
            + ", ".join(os.path.join(path, f) for f in missing)
            + " (export the beam benchmark model as Matrix Market files "
            "A.mtx, B.mtx, C.mtx into that directory)"
        )
    A = load_matrix(os.path.join(path, "A.mtx"))
    B = np.atleast_2d(load_matrix(os.path.join(path, "B.mtx"), dense=True))
    C = np.atleast_2d(load_matrix(os.path.join(path, "C.mtx"), dense=True))
    N = A.shape[0]
    if sp.issparse(A) and N <= 800:
        A = A.toarray()  # keep the model dense so stability checks stay cheap
    if B.shape[0] != N:
        B = B.T
    if C.shape[1] != N:
        C = C.T
    if N != BEAM_EXPECTED_ORDER:
        warnings.warn(
            f"beam model has order {N}, expected {BEAM_EXPECTED_ORDER}; proceeding",
            stacklevel=2,
        )
    X0 = beam_training_matrix(N)
    if case == "trained":
        x0 = X0 @ np.array([10.0, -1.0])
        T, u = 1000.0, PulseInput(100.0, 200.0, 1.0)
    else:
        x0 = np.full(N, 5.0)
        T, u = 10000.0, None
    sysm = LtiSystem(A, B, C, x0)
    return BeamScenario(system=sysm, X0=X0, case=case, T=T, u=u, x0=x0)
