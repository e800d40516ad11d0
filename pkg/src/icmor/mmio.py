"""File interchange: Matrix Market matrices with manifests, CSV tables.

Systems are stored as one Matrix Market file per matrix (coordinate format
for sparse, array format for dense) next to a small INI manifest naming the
files and dimensions.  CSV output uses 17 significant digits so downstream
tools can round freely.
"""

import configparser
import os

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from .core import LtiSystem
from .errors import DataError

CSV_FMT = "%.17g"


def save_matrix(path, M):
    mmwrite(path, sp.csr_matrix(M) if sp.issparse(M) else np.atleast_2d(np.asarray(M)))


def load_matrix(path, dense=False):
    if not os.path.isfile(path):
        raise DataError(f"matrix file not found: {path}")
    M = mmread(path)
    if dense and sp.issparse(M):
        M = M.toarray()
    return M.tocsr() if sp.issparse(M) else np.asarray(M)


def save_vector(path, v):
    save_matrix(path, np.asarray(v, dtype=float).reshape(-1, 1))


def load_vector(path):
    return np.asarray(load_matrix(path, dense=True)).reshape(-1)


def save_system(directory, sys, X0=None):
    """Write a system (and optional training matrix) plus its manifest."""
    os.makedirs(directory, exist_ok=True)
    save_matrix(os.path.join(directory, "A.mtx"), sys.A)
    save_matrix(os.path.join(directory, "B.mtx"), sys.B)
    save_matrix(os.path.join(directory, "C.mtx"), sys.C)
    save_vector(os.path.join(directory, "x0.mtx"), sys.x0)
    cfg = configparser.ConfigParser()
    cfg["system"] = {
        "a": "A.mtx", "b": "B.mtx", "c": "C.mtx", "x0": "x0.mtx",
        "n": str(sys.n), "p": str(sys.p), "q": str(sys.q),
        "sparse_a": str(sys.is_sparse).lower(),
        "stable_by_construction": str(sys.assume_stable).lower(),
    }
    if X0 is not None:
        save_matrix(os.path.join(directory, "X0.mtx"), np.asarray(X0))
        cfg["training"] = {"x0_basis": "X0.mtx"}
    with open(os.path.join(directory, "manifest.ini"), "w") as fh:
        cfg.write(fh)


def load_system(directory):
    """Read a system written by :func:`save_system`.

    Returns ``(LtiSystem, X0)`` where ``X0`` is None when no training matrix
    was stored.
    """
    manifest = os.path.join(directory, "manifest.ini")
    if not os.path.isfile(manifest):
        raise DataError(f"system manifest not found: {manifest}")
    cfg = configparser.ConfigParser()
    cfg.read(manifest)
    sec = cfg["system"]
    A = load_matrix(os.path.join(directory, sec.get("a", "A.mtx")))
    B = load_matrix(os.path.join(directory, sec.get("b", "B.mtx")), dense=True)
    C = load_matrix(os.path.join(directory, sec.get("c", "C.mtx")), dense=True)
    x0 = load_vector(os.path.join(directory, sec.get("x0", "x0.mtx")))
    if not sec.getboolean("sparse_a", fallback=sp.issparse(A)) and sp.issparse(A):
        A = A.toarray()
    sysm = LtiSystem(A, B, C, x0,
                     assume_stable=sec.getboolean("stable_by_construction", fallback=False))
    n = sec.getint("n", fallback=sysm.n)
    if n != sysm.n:
        raise DataError(f"manifest says n={n} but A is {sysm.n} x {sysm.n}")
    X0 = None
    if cfg.has_section("training"):
        X0 = np.asarray(load_matrix(
            os.path.join(directory, cfg["training"]["x0_basis"]), dense=True))
    return sysm, X0


def save_rom(directory, rom):
    """Persist a reduced model (matrices, initial state, bases)."""
    os.makedirs(directory, exist_ok=True)
    save_matrix(os.path.join(directory, "Ar.mtx"), rom.Ar)
    save_matrix(os.path.join(directory, "Br.mtx"), rom.Br)
    save_matrix(os.path.join(directory, "Cr.mtx"), rom.Cr)
    save_vector(os.path.join(directory, "x0r.mtx"), rom.x0r)
    cfg = configparser.ConfigParser()
    cfg["rom"] = {"n": str(rom.n), "p": str(rom.p), "q": str(rom.q)}
    for name, M in (("W", rom.W), ("V", rom.V)):
        if M is not None:
            save_matrix(os.path.join(directory, f"{name}.mtx"), M)
            cfg["rom"][name.lower()] = f"{name}.mtx"
    with open(os.path.join(directory, "rom.ini"), "w") as fh:
        cfg.write(fh)


def load_rom(directory):
    from .core import ReducedModel

    manifest = os.path.join(directory, "rom.ini")
    if not os.path.isfile(manifest):
        raise DataError(f"reduced-model manifest not found: {manifest}")
    cfg = configparser.ConfigParser()
    cfg.read(manifest)
    sec = cfg["rom"]

    def opt(key):
        name = sec.get(key, "")
        if not name:
            return None
        return np.asarray(load_matrix(os.path.join(directory, name), dense=True))

    return ReducedModel(
        np.asarray(load_matrix(os.path.join(directory, "Ar.mtx"), dense=True)),
        np.asarray(load_matrix(os.path.join(directory, "Br.mtx"), dense=True)),
        np.asarray(load_matrix(os.path.join(directory, "Cr.mtx"), dense=True)),
        load_vector(os.path.join(directory, "x0r.mtx")),
        W=opt("w"), V=opt("v"),
    )


def save_offline(directory, off):
    """Persist estimator offline data (factor, coupling block, reduced
    Gramian, initial-state map) for later online evaluation."""
    os.makedirs(directory, exist_ok=True)
    save_matrix(os.path.join(directory, "obs_factor.mtx"), off.factor)
    save_matrix(os.path.join(directory, "cross_block.mtx"), off.cross)
    save_matrix(os.path.join(directory, "reduced_gram.mtx"), off.reduced)
    save_matrix(os.path.join(directory, "w_map.mtx"), off.w)
    cfg = configparser.ConfigParser()
    cfg["offline"] = {
        "obs_factor": "obs_factor.mtx",
        "cross_block": "cross_block.mtx",
        "reduced_gram": "reduced_gram.mtx",
        "w_map": "w_map.mtx",
        "gap_norm": "" if off.gap_norm is None else repr(off.gap_norm),
        "gap_is_estimate": str(off.gap_is_estimate).lower(),
        "cross_residual": repr(off.cross_residual),
    }
    if off.gram is not None:
        save_matrix(os.path.join(directory, "obs_gram.mtx"), off.gram)
        cfg["offline"]["obs_gram"] = "obs_gram.mtx"
    with open(os.path.join(directory, "offline.ini"), "w") as fh:
        cfg.write(fh)


def load_offline(directory):
    from .estimator import EstimatorOffline

    manifest = os.path.join(directory, "offline.ini")
    if not os.path.isfile(manifest):
        raise DataError(f"offline manifest not found: {manifest}")
    cfg = configparser.ConfigParser()
    cfg.read(manifest)
    sec = cfg["offline"]
    gram = None
    if sec.get("obs_gram", ""):
        gram = np.asarray(load_matrix(os.path.join(directory, sec["obs_gram"]), dense=True))
    gap = sec.get("gap_norm", "")
    return EstimatorOffline(
        factor=np.asarray(load_matrix(os.path.join(directory, sec["obs_factor"]), dense=True)),
        cross=np.asarray(load_matrix(os.path.join(directory, sec["cross_block"]), dense=True)),
        reduced=np.asarray(load_matrix(os.path.join(directory, sec["reduced_gram"]), dense=True)),
        w=np.asarray(load_matrix(os.path.join(directory, sec["w_map"]), dense=True)),
        gram=gram,
        gap_norm=None if gap == "" else float(gap),
        gap_is_estimate=sec.getboolean("gap_is_estimate", fallback=False),
        cross_residual=sec.getfloat("cross_residual", fallback=0.0),
    )


def write_csv(path, names, columns):
    """Write named columns at full double precision."""
    cols = [np.asarray(c, dtype=float).reshape(-1) for c in columns]
    data = np.column_stack(cols) if cols else np.zeros((0, 0))
    np.savetxt(path, data, fmt=CSV_FMT, delimiter=",",
               header=",".join(names), comments="")


def save_trajectory(path, traj):
    names = ["t"] + [f"y{i + 1}" for i in range(traj.y.shape[0])]
    write_csv(path, names, [traj.mesh.points] + list(traj.y))


def save_error_curve(path, mesh, E):
    write_csv(path, ["t", "E"], [mesh.points, E])


def save_report(directory, report):
    """Reduction report as INI plus a CSV of the Hankel values."""
    os.makedirs(directory, exist_ok=True)
    cfg = configparser.ConfigParser()
    body = {
        "method": report.method,
        "order": str(report.order),
        "iterations": str(report.iterations),
        "converged": str(report.converged).lower(),
    }
    for name in ("alpha", "aug_alpha"):
        val = getattr(report, name)
        if val is not None:
            body[name] = repr(float(val))
    if report.stable is not None:
        body["stable"] = str(report.stable).lower()
    if report.seed is not None:
        body["seed"] = str(report.seed)
    cfg["reduction"] = body
    with open(os.path.join(directory, "report.ini"), "w") as fh:
        cfg.write(fh)
    if report.hankel_values is not None:
        write_csv(os.path.join(directory, "hankel.csv"), ["sigma"],
                  [report.hankel_values])
    if report.constraint_residuals:
        write_csv(os.path.join(directory, "isrk_constraint_residuals.csv"),
                  ["residual"], [report.constraint_residuals])
