"""Command-line experiment runner.

Subcommands mirror the reduce -> estimate -> simulate workflow:

* ``generate``        write a benchmark system to Matrix Market files
* ``reduce``          reduce a stored system, save the model and report
* ``estimate``        build estimator offline data / evaluate it for an x0
* ``simulate``        integrate a stored system and export trajectories
* ``run``             full pipeline driven by an INI experiment config
* ``reproduce-table`` rebuild one of the three reference result tables

Every run writes a provenance manifest (config copy, seed, tolerances,
library versions).  The data directory for external models can also be set
through the ``ICMOR_DATA_DIR`` environment variable.
"""

import argparse
import configparser
import os
import shutil
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, benchmarks, estimator, mmio, reduction, simulate, solvers
from .core import LtiSystem, ReducedModel, SplitRom, split_system
from .errors import IcmorError

DATA_DIR_ENV = "ICMOR_DATA_DIR"

#: published reference values for the beam tables (trained case: error of the
#: initial-condition part and the estimator; both coincide to three digits)
TABLE1_REF = {"bt-bt": 3.47e1, "bt-aug": 1.40e1}
TABLE_ORDERS = (12, 18, 24, 30)
TABLE2_REF_E = {
    "bt": (1.4e-1, 1.8e-2, 3.7e-2, 1.1e-2),
    "irka": (2.7, 2.7, 2.7, 1.3e-2),
    "isrk": (2.7, 2.8e-2, 2.8e-2, 6.5e-3),
}
TABLE2_REF_RELDIFF = {
    "bt": (5.3e-6, 1.3e-5, 2.4e-5, 5.5e-5),
    "irka": (1.6e-6, 1.6e-6, 1.6e-6, 1.2e-4),
    "isrk": (1.5e-6, 1.3e-5, 7.8e-5, 6.2e-5),
}
TABLE3_REF_E = {
    "bt": (3.3e-6, 2.9e-7, 5.3e-8, 4.2e-9),
    "irka": (2.0e-6, 2.7e-7, 3.9e-8, 5.3e-9),
    "isrk": (2.3e-6, 2.8e-7, 5.4e-8, 4.3e-9),
}
TABLE3_REF_RELDIFF = {
    "bt": (1.6e-6, 2.2e-6, 8.9e-6, 4.5e-4),
    "irka": (1.6e-6, 1.6e-6, 8.2e-6, 9.0e-4),
    "isrk": (1.6e-6, 2.5e-6, 7.5e-6, 4.6e-3),
}


@dataclass
class ExperimentConfig:
    """Flat view of one experiment INI file."""

    source: str = "convdiff"
    grid: int = 40
    data_dir: str = ""
    method: str = "bt"
    order: int = 12
    order_controlled: int = 0
    order_uncontrolled: int = 0
    gramians: str = "dense"
    lowrank_tol: float = 1e-10
    max_rank: int = 0
    gap: str = "auto"
    x0_spec: str = "stored"
    u_spec: str = "none"
    T: float = 1.0
    rtol: float = 1e-10
    atol: float = 1e-12
    mesh_points: int = 10000
    out_dir: str = "out"
    seed: int = 0
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_ini(cls, path):
        cfg = configparser.ConfigParser()
        if not cfg.read(path):
            raise IcmorError(f"cannot read config file {path}")
        get = cfg.get
        c = cls()
        c.source = get("system", "source", fallback=c.source)
        c.grid = cfg.getint("system", "grid", fallback=c.grid)
        c.data_dir = get("system", "dir", fallback=os.environ.get(DATA_DIR_ENV, ""))
        c.method = get("reduction", "method", fallback=c.method)
        c.order = cfg.getint("reduction", "order", fallback=c.order)
        c.order_controlled = cfg.getint("reduction", "order_controlled", fallback=0)
        c.order_uncontrolled = cfg.getint("reduction", "order_uncontrolled", fallback=0)
        c.gramians = get("reduction", "gramians", fallback=c.gramians)
        c.lowrank_tol = cfg.getfloat("reduction", "lowrank_tol", fallback=c.lowrank_tol)
        c.max_rank = cfg.getint("reduction", "max_rank", fallback=0)
        c.gap = get("estimator", "gap_bound", fallback=c.gap)
        c.x0_spec = get("scenario", "x0", fallback=c.x0_spec)
        c.u_spec = get("scenario", "u", fallback=c.u_spec)
        c.T = cfg.getfloat("scenario", "t", fallback=c.T)
        c.rtol = cfg.getfloat("integration", "rtol", fallback=c.rtol)
        c.atol = cfg.getfloat("integration", "atol", fallback=c.atol)
        c.mesh_points = cfg.getint("integration", "mesh_points", fallback=c.mesh_points)
        c.out_dir = get("output", "dir", fallback=c.out_dir)
        c.seed = cfg.getint("output", "seed", fallback=c.seed)
        c.raw = {s: dict(cfg[s]) for s in cfg.sections()}
        return c


def _parse_input(spec):
    if spec in ("none", "", None):
        return None
    if spec.startswith("pulse:"):
        parts = spec.split(":")[1:]
        if len(parts) not in (2, 3):
            raise IcmorError(f"bad input spec {spec!r}; expected pulse:t_on:t_off[:amp]")
        amp = float(parts[2]) if len(parts) == 3 else 1.0
        return simulate.PulseInput(float(parts[0]), float(parts[1]), amp)
    raise IcmorError(f"unknown input spec {spec!r}")


def _parse_x0(spec, sys, X0, cfg):
    if spec == "stored":
        return sys.x0
    if spec == "ones":
        return np.ones(sys.n)
    if spec == "fives":
        return np.full(sys.n, 5.0)
    if spec.startswith("mu:"):
        if cfg.source != "convdiff":
            raise IcmorError("x0 = mu:<value> is only defined for the convdiff generator")
        return benchmarks.convdiff_initial_state(float(spec[3:]), benchmarks.ConvDiffConfig(cfg.grid))
    if spec.startswith("training:"):
        if X0 is None:
            raise IcmorError("x0 = training:<coeffs> needs a training matrix")
        v0 = np.array([float(v) for v in spec.split(":")[1].split(",")])
        return X0 @ v0
    if spec.startswith("file:"):
        return mmio.load_vector(spec[5:])
    raise IcmorError(f"unknown x0 spec {spec!r}")


def _stage(name):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, Exception):
                raise IcmorError(f"[{name}] {exc}") from exc
            return False

    return _Ctx()


def _build_system(cfg):
    if cfg.source == "convdiff":
        return benchmarks.convdiff_system(benchmarks.ConvDiffConfig(cfg.grid))
    if cfg.source == "beam":
        case = "trained" if cfg.x0_spec.startswith("training") else "not-trained"
        sc = benchmarks.beam_load_scenario(cfg.data_dir, case)
        return sc.system, sc.X0
    if cfg.source == "files":
        return mmio.load_system(cfg.data_dir)
    if cfg.source == "scalar-demo":
        return LtiSystem([[-1.0]], None, [[1.0]], [1.0]), np.array([[1.0]])
    raise IcmorError(f"unknown system source {cfg.source!r}")


def reduce_uncontrolled(sys, X0, n, method, obs=None, seed=0, lowrank_tol=1e-10,
                        max_rank=None):
    """Reduce the initial-state response of an uncontrolled system.

    Dispatches 'bt', 'irka' or 'isrk' on the auxiliary system whose input
    matrix is the training basis ``X0`` and returns the reduced model with
    its input stripped (the surrogate is autonomous).
    """
    grm = "lowrank" if sys.is_sparse else "dense"
    if obs is None and method in ("bt", "isrk"):
        obs = solvers.gramian(sys, "observability", method=grm,
                              tol=lowrank_tol, max_rank=max_rank)
    aux = LtiSystem(sys.A, X0, sys.C, sys.x0, assume_stable=sys.assume_stable)
    if method == "bt":
        ctrl = solvers.gramian(aux, "controllability", method=grm,
                               tol=lowrank_tol, max_rank=max_rank)
        rom_full, rep = reduction.balanced_truncation(aux, n, (ctrl, obs))
    elif method == "irka":
        rom_full, rep = reduction.irka(aux, n, seed=seed)
    elif method == "isrk":
        rom_full, rep = reduction.isrk(aux, n, obs, seed=seed)
    else:
        raise IcmorError(f"method {method!r} needs an input matrix (system has q = 0)")
    rep.method = method
    rom = ReducedModel(rom_full.Ar, None, rom_full.Cr, rom_full.x0r,
                       W=rom_full.W, V=rom_full.V)
    return rom, rep, obs


def _reduce(cfg, sys, X0):
    """Returns (sim_model, rom_uc, report, obs) where sim_model reproduces the
    total output and rom_uc is the uncontrolled part fed to the estimator."""
    method = cfg.method
    grm_method = cfg.gramians if not sys.is_sparse else "lowrank"
    max_rank = cfg.max_rank or None
    obs = None
    if cfg.source == "scalar-demo":
        rom = ReducedModel([[-2.0]], None, [[1.0]], [1.0],
                           W=np.array([[1.0]]), V=np.array([[1.0]]))
        rep = reduction.ReductionReport(method="fixed-demo", order=1, stable=True)
        return rom, rom, rep, None

    if sys.q == 0 and method in ("bt", "irka", "isrk"):
        rom, rep, obs = reduce_uncontrolled(
            sys, X0, cfg.order, method, seed=cfg.seed,
            lowrank_tol=cfg.lowrank_tol, max_rank=max_rank)
        return rom, rom, rep, obs

    obs = solvers.gramian(sys, "observability", method=grm_method,
                          tol=cfg.lowrank_tol, max_rank=max_rank)
    if method == "bt":
        ctrl = solvers.gramian(sys, "controllability", method=grm_method,
                               tol=cfg.lowrank_tol, max_rank=max_rank)
        rom, rep = reduction.balanced_truncation(sys, cfg.order, (ctrl, obs))
        rom_uc = ReducedModel(rom.Ar, None, rom.Cr, rom.x0r, W=rom.W, V=rom.V)
        return rom, rom_uc, rep, obs
    if method == "bt-aug":
        ctrl_aug = None
        if grm_method == "lowrank":
            aug = LtiSystem(sys.A, np.hstack([sys.B, X0]), sys.C, sys.x0,
                            assume_stable=sys.assume_stable)
            ctrl_aug = solvers.gramian(aug, "controllability", method="lowrank",
                                       tol=cfg.lowrank_tol, max_rank=max_rank)
        rom, rep = reduction.augmented_bt(
            sys, X0, cfg.order,
            gramians=None if ctrl_aug is None else (ctrl_aug, obs))
        rom_uc = ReducedModel(rom.Ar, None, rom.Cr, rom.x0r, W=rom.W, V=rom.V)
        return rom, rom_uc, rep, obs
    if method in ("bt-bt", "split-irka", "split-isrk"):
        method_uc = {"bt-bt": "bt", "split-irka": "irka", "split-isrk": "isrk"}[method]
        n_uc = cfg.order_uncontrolled or cfg.order
        n_c = cfg.order_controlled or cfg.order
        split, rep = reduction.split_reduction(
            sys, X0, n_uc, n_c, method_uc, obs=obs, seed=cfg.seed,
            lowrank_tol=cfg.lowrank_tol, max_rank=max_rank)
        return split, split.uncontrolled, rep, obs
    if method in ("irka", "isrk"):
        if method == "irka":
            rom, rep = reduction.irka(sys, cfg.order, seed=cfg.seed)
        else:
            rom, rep = reduction.isrk(sys, cfg.order, obs, seed=cfg.seed)
        rom_uc = ReducedModel(rom.Ar, None, rom.Cr, rom.x0r, W=rom.W, V=rom.V)
        return rom, rom_uc, rep, obs
    raise IcmorError(f"unknown reduction method {method!r}")


def _write_manifest(out_dir, cfg, extras=None):
    import scipy

    man = configparser.ConfigParser()
    man["provenance"] = {
        "package": f"icmor {__version__}",
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": str(cfg.seed),
        "rtol": repr(cfg.rtol),
        "atol": repr(cfg.atol),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    for sec, body in (cfg.raw or {}).items():
        man[f"config.{sec}"] = body
    if extras:
        man["results"] = {k: repr(v) for k, v in extras.items()}
    with open(os.path.join(out_dir, "manifest.ini"), "w") as fh:
        man.write(fh)


def run_experiment(cfg, config_path=None):
    """Full pipeline: build -> reduce -> estimate -> simulate -> tabulate.

    Writes the error curve, estimator values, reports and provenance
    manifest into the configured output directory and returns a summary
    dict.  Raises :class:`IcmorError` with the failing stage in the message.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    if config_path:
        shutil.copy(config_path, os.path.join(cfg.out_dir, "config.ini"))

    with _stage("benchmarks"):
        sys_full, X0 = _build_system(cfg)
    with _stage("reduction"):
        sim_model, rom_uc, report, obs = _reduce(cfg, sys_full, X0)
        mmio.save_report(cfg.out_dir, report)
        if report.stable is False:
            raise IcmorError(
                "reduced model is not asymptotically stable; the estimator "
                "requires a Hurwitz reduced system matrix"
            )
    with _stage("estimator"):
        if obs is None:
            obs = solvers.gramian(sys_full, "observability",
                                  method="lowrank" if sys_full.is_sparse else cfg.gramians,
                                  tol=cfg.lowrank_tol, max_rank=cfg.max_rank or None)
        off = estimator.build_offline(sys_full, rom_uc, obs, gap=cfg.gap)
        mmio.save_offline(os.path.join(cfg.out_dir, "offline"), off)
        x0 = _parse_x0(cfg.x0_spec, sys_full, X0, cfg)
        est = estimator.estimate(off, x0)
    with _stage("simulate"):
        u = _parse_input(cfg.u_spec)
        mesh = simulate.log_mesh(cfg.T, cfg.mesh_points)
        fom_run = LtiSystem(sys_full.A, sys_full.B, sys_full.C, x0,
                            assume_stable=sys_full.assume_stable)
        traj_f = simulate.integrate_lti(fom_run, u, mesh, rtol=cfg.rtol, atol=cfg.atol)
        sim_rom = _with_x0(sim_model, x0)
        traj_r = simulate.integrate_lti(sim_rom, u, mesh, rtol=cfg.rtol, atol=cfg.atol)
        E = simulate.cumulative_l2_error(traj_f, traj_r)
        uc_f, _ = split_system(fom_run)
        traj_f_uc = traj_f if u is None else simulate.integrate_lti(
            uc_f, None, mesh, rtol=cfg.rtol, atol=cfg.atol)
        if u is None and sim_model is rom_uc:
            traj_r_uc = traj_r
        else:
            traj_r_uc = simulate.integrate_lti(_with_x0(rom_uc, x0), None, mesh,
                                               rtol=cfg.rtol, atol=cfg.atol)
        E_uc = simulate.cumulative_l2_error(traj_f_uc, traj_r_uc)

        mmio.save_trajectory(os.path.join(cfg.out_dir, "fom_output.csv"), traj_f)
        mmio.save_trajectory(os.path.join(cfg.out_dir, "rom_output.csv"), traj_r)
        mmio.save_error_curve(os.path.join(cfg.out_dir, "error_curve.csv"), mesh, E)
        mmio.save_error_curve(os.path.join(cfg.out_dir, "error_curve_x0.csv"), mesh, E_uc)

    E_T, E_uc_T = float(E[-1]), float(E_uc[-1])
    rel = abs(est.delta - E_uc_T) / E_uc_T if E_uc_T > 0 else float("nan")
    summary = {
        "delta": est.delta, "raw_square": est.raw_square,
        "upper_bound": est.upper_bound if est.upper_bound is not None else float("nan"),
        "error_T": E_T, "error_x0_T": E_uc_T, "rel_discrepancy": rel,
        "alpha": report.alpha if report.alpha is not None else float("nan"),
        "aug_alpha": report.aug_alpha if report.aug_alpha is not None else float("nan"),
    }
    mmio.write_csv(os.path.join(cfg.out_dir, "estimate.csv"),
                   list(summary), [[v] for v in summary.values()])
    _write_manifest(cfg.out_dir, cfg, summary)
    return summary


def _with_x0(model, x0):
    """Return a copy of a reduced object carrying the reduced image of x0."""
    if isinstance(model, SplitRom):
        uc = model.uncontrolled
        return SplitRom(ReducedModel(uc.Ar, uc.Br, uc.Cr, uc.W.T @ x0, W=uc.W, V=uc.V),
                        model.controlled)
    if model.W is not None:
        return ReducedModel(model.Ar, model.Br, model.Cr, model.W.T @ x0,
                            W=model.W, V=model.V)
    return model


# ---------------------------------------------------------------------------
# table reproduction
# ---------------------------------------------------------------------------

def reproduce_table(which, scale="desk", data_dir=None, out=None, seed=0,
                    lowrank_tol=1e-12):
    """Recompute one of the reference result tables.

    table1/table2 need the external beam data (``data_dir`` or the
    ``ICMOR_DATA_DIR`` environment variable).  table3 at 'desk' scale runs
    the generated convection-diffusion problem at grid 40 without reference
    columns (those depend on the full problem size); 'full' scale uses grid
    150 and carries the published reference values.
    """
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV, "")
    if which == "table1":
        rows = _table1_rows(data_dir)
        names = ["method", "error_x0_T", "delta", "reference_error", "reference_delta"]
    elif which == "table2":
        rows = _beam_sweep_rows(data_dir)
        names = ["method", "order", "error_T", "rel_discrepancy",
                 "reference_error", "reference_rel_discrepancy"]
    elif which == "table3":
        grid = 40 if scale == "desk" else 150
        orders = (12, 18, 24) if scale == "desk" else TABLE_ORDERS
        rows = _convdiff_sweep_rows(grid, orders, seed, lowrank_tol,
                                    with_refs=(scale == "full"))
        names = ["method", "order", "error_T", "delta", "rel_discrepancy"]
        if scale == "full":
            names += ["reference_error", "reference_rel_discrepancy"]
    else:
        raise IcmorError(f"unknown table {which!r}")

    lines = [",".join(names)]
    for row in rows:
        lines.append(",".join(
            v if isinstance(v, str) else mmio.CSV_FMT % v for v in row))
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    return text


def _beam_uncontrolled_error(scenario, rom_uc, rtol=1e-10, atol=1e-12):
    mesh = simulate.log_mesh(scenario.T)
    uc, _ = split_system(scenario.system)
    traj_f = simulate.integrate_lti(uc, None, mesh, rtol=rtol, atol=atol)
    traj_r = simulate.integrate_lti(rom_uc, None, mesh, rtol=rtol, atol=atol)
    return float(simulate.cumulative_l2_error(traj_f, traj_r)[-1])


def _table1_rows(data_dir):
    sc = benchmarks.beam_load_scenario(data_dir, "trained")
    sysm = sc.system
    obs = solvers.gramian(sysm, "observability")
    rows = []
    for method, ref in TABLE1_REF.items():
        if method == "bt-bt":
            split, _ = reduction.split_reduction(sysm, sc.X0, 15, 15, "bt", obs=obs)
            rom_uc = split.uncontrolled
        else:
            rom, _ = reduction.augmented_bt(sysm, sc.X0, 30, gramians=None)
            rom_uc = ReducedModel(rom.Ar, None, rom.Cr, rom.x0r, W=rom.W, V=rom.V)
        off = estimator.build_offline(sysm, rom_uc, obs)
        delta = estimator.estimate(off, sc.x0).delta
        err = _beam_uncontrolled_error(sc, _with_x0(rom_uc, sc.x0))
        rows.append((method, err, delta, ref, ref))
    return rows


def _beam_sweep_rows(data_dir):
    sc = benchmarks.beam_load_scenario(data_dir, "not-trained")
    sysm = sc.system
    obs = solvers.gramian(sysm, "observability")
    rows = []
    for method in ("bt", "irka", "isrk"):
        for i, order in enumerate(TABLE_ORDERS):
            rom_uc, _, _ = reduce_uncontrolled(sysm, sc.X0, order, method, obs=obs)
            off = estimator.build_offline(sysm, rom_uc, obs)
            delta = estimator.estimate(off, sc.x0).delta
            err = _beam_uncontrolled_error(sc, _with_x0(rom_uc, sc.x0))
            rel = abs(delta - err) / err
            rows.append((method, order, err, rel,
                         TABLE2_REF_E[method][i], TABLE2_REF_RELDIFF[method][i]))
    return rows


def _convdiff_sweep_rows(grid, orders, seed, lowrank_tol, with_refs):
    sysm, X0 = benchmarks.convdiff_system(benchmarks.ConvDiffConfig(grid))
    dense_ok = sysm.n <= 4000
    if dense_ok:
        dense_sys = LtiSystem(sysm.A.toarray(), None, sysm.C, sysm.x0, assume_stable=True)
        obs = solvers.gramian(dense_sys, "observability")
    else:
        obs = solvers.gramian(sysm, "observability", method="lowrank",
                              tol=lowrank_tol, max_rank=600)
    mesh = simulate.log_mesh(1.0)
    traj_f = simulate.integrate_lti(sysm, None, mesh)
    rows = []
    for method in ("bt", "irka", "isrk"):
        for i, order in enumerate(orders):
            rom_uc, _, _ = reduce_uncontrolled(sysm, X0, order, method, obs=obs,
                                               seed=seed, lowrank_tol=lowrank_tol,
                                               max_rank=600)
            off = estimator.build_offline(sysm, rom_uc, obs, gap="none")
            delta = estimator.estimate(off, sysm.x0).delta
            traj_r = simulate.integrate_lti(rom_uc, None, mesh)
            err = float(simulate.cumulative_l2_error(traj_f, traj_r)[-1])
            rel = abs(delta - err) / err
            row = [method, order, err, delta, rel]
            if with_refs:
                row += [TABLE3_REF_E[method][i], TABLE3_REF_RELDIFF[method][i]]
            rows.append(tuple(row))
    return rows


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _cmd_generate(args):
    if args.benchmark != "convdiff":
        raise IcmorError("only the convdiff benchmark can be generated; "
                         "the beam model is external data")
    sysm, X0 = benchmarks.convdiff_system(benchmarks.ConvDiffConfig(args.grid))
    mmio.save_system(args.out, sysm, X0=X0)
    print(f"wrote convdiff grid={args.grid} (N={sysm.n}) to {args.out}")


def _cmd_reduce(args):
    sysm, X0 = mmio.load_system(args.system)
    cfg = ExperimentConfig(method=args.method, order=args.order,
                           order_controlled=args.order_controlled,
                           order_uncontrolled=args.order_uncontrolled,
                           gramians=args.gramians, lowrank_tol=args.lowrank_tol,
                           seed=args.seed)
    sim_model, rom_uc, report, _ = _reduce(cfg, sysm, X0)
    os.makedirs(args.out, exist_ok=True)
    mmio.save_report(args.out, report)
    mmio.save_rom(os.path.join(args.out, "rom_uc"), rom_uc)
    if isinstance(sim_model, SplitRom):
        mmio.save_rom(os.path.join(args.out, "rom_controlled"), sim_model.controlled)
    elif sim_model is not rom_uc:
        mmio.save_rom(os.path.join(args.out, "rom"), sim_model)
    print(f"reduced with {args.method} to order {report.order}; "
          f"stable={report.stable} -> {args.out}")


def _cmd_estimate(args):
    if args.offline:
        off = mmio.load_offline(args.offline)
    else:
        sysm, _ = mmio.load_system(args.system)
        rom_uc = mmio.load_rom(args.rom)
        method = "lowrank" if sysm.is_sparse else "dense"
        obs = solvers.gramian(sysm, "observability", method=method,
                              tol=args.lowrank_tol)
        off = estimator.build_offline(sysm, rom_uc, obs, gap=args.gap)
        if args.save_offline:
            mmio.save_offline(args.save_offline, off)
    if args.x0:
        x0 = mmio.load_vector(args.x0)
        est = estimator.estimate(off, x0)
        upper = "" if est.upper_bound is None else mmio.CSV_FMT % est.upper_bound
        print("delta,upper_bound")
        print(f"{mmio.CSV_FMT % est.delta},{upper}")


def _cmd_simulate(args):
    sysm, _ = mmio.load_system(args.system)
    mesh = simulate.log_mesh(args.t, args.mesh_points)
    traj = simulate.integrate_lti(sysm, _parse_input(args.u), mesh,
                                  rtol=args.rtol, atol=args.atol)
    mmio.save_trajectory(args.out, traj)
    print(f"wrote {traj.y.shape[0]} outputs at {len(mesh)} mesh points to {args.out}")


def _cmd_run(args):
    paths = list(args.config)
    if len(paths) > 1 and args.jobs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=args.jobs) as ex:
            futures = {ex.submit(_run_one, p): p for p in paths}
            for fut in cf.as_completed(futures):
                fut.result()
    else:
        for p in paths:
            _run_one(p)


def _run_one(path):
    cfg = ExperimentConfig.from_ini(path)
    summary = run_experiment(cfg, config_path=path)
    print(f"{path}: delta={summary['delta']:.6e} E_x0(T)={summary['error_x0_T']:.6e} "
          f"rel={summary['rel_discrepancy']:.3e} -> {cfg.out_dir}")


def _cmd_table(args):
    text = reproduce_table(args.which, scale=args.scale, data_dir=args.data_dir,
                           out=args.out, seed=args.seed)
    print(text, end="")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="icmor",
        description="Model reduction and initial-condition error estimation "
                    "for stable LTI systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark system to files")
    g.add_argument("--benchmark", default="convdiff", choices=["convdiff"])
    g.add_argument("--grid", type=int, default=40)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("reduce", help="reduce a stored system")
    r.add_argument("--system", required=True, help="directory with manifest.ini")
    r.add_argument("--method", default="bt",
                   choices=["bt", "bt-aug", "bt-bt", "split-irka", "split-isrk",
                            "irka", "isrk"])
    r.add_argument("--order", type=int, default=12)
    r.add_argument("--order-controlled", type=int, default=0)
    r.add_argument("--order-uncontrolled", type=int, default=0)
    r.add_argument("--gramians", default="dense", choices=["dense", "lowrank"])
    r.add_argument("--lowrank-tol", type=float, default=1e-10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_reduce)

    e = sub.add_parser("estimate", help="build offline data / evaluate the estimator")
    e.add_argument("--offline", help="directory with precomputed offline data")
    e.add_argument("--system", help="system directory (when building offline data)")
    e.add_argument("--rom", help="reduced-model directory (when building)")
    e.add_argument("--gap", default="auto", choices=["auto", "exact", "estimate", "none"])
    e.add_argument("--lowrank-tol", type=float, default=1e-10)
    e.add_argument("--save-offline", help="directory to persist the offline data")
    e.add_argument("--x0", help="Matrix Market vector file with the initial state")
    e.set_defaults(func=_cmd_estimate)

    s = sub.add_parser("simulate", help="integrate a stored system")
    s.add_argument("--system", required=True)
    s.add_argument("--t", type=float, required=True, help="final time")
    s.add_argument("--u", default="none", help="input spec: none | pulse:t0:t1[:amp]")
    s.add_argument("--rtol", type=float, default=1e-8)
    s.add_argument("--atol", type=float, default=1e-10)
    s.add_argument("--mesh-points", type=int, default=10000)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    ru = sub.add_parser("run", help="run experiment configs")
    ru.add_argument("config", nargs="+", help="INI experiment file(s)")
    ru.add_argument("--jobs", type=int, default=1,
                    help="run multiple configs concurrently")
    ru.set_defaults(func=_cmd_run)

    t = sub.add_parser("reproduce-table", help="recompute a reference table")
    t.add_argument("--which", required=True, choices=["table1", "table2", "table3"])
    t.add_argument("--scale", default="desk", choices=["desk", "full"])
    t.add_argument("--data-dir", default=None, help="beam data directory")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="CSV output file")
    t.set_defaults(func=_cmd_table)

    args = parser.parse_args(argv)
    try:
        args.func(args)
    except IcmorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
