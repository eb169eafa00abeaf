"""Command-line front end.

Subcommands: simulate, prepare-init, consistency, hamiltonian, dispersion,
stability-report.  Every run reads one INI config (--config), writes CSV
and JSON outputs under --out (or the config's output directory), and
leaves a manifest echoing the configuration with its content hash; each
CSV carries that hash in its first line.

Exit codes: 0 success, 1 config or usage error, 2 instability halt,
3 solver failure.
"""

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig, fmt, load_config, write_manifest
from .consistency import (
    DEFAULT_DELTAS,
    dispersion_error_sweep,
    dispersion_symbols,
    flat_residual_norms,
    hamiltonian_error,
    order_fit,
)
from .elliptic import prepare_initial_data, recover_time_derivatives
from .errors import ConfigError, KakinumaError, SolverSingular
from .evolution import CanonicalState, simulate, stability_function_a, stability_margin
from .grid import ScalarField, field_to_csv
from .operators import InterfaceState, compute_velocities
from .params import stability_constants

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INSTABILITY = 2
EXIT_SOLVER = 3


def _open_out(cfg: RunConfig, out_override: str | None):
    out_dir = out_override or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _write_csv(path: str, header, rows, manifest_hash: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest: {manifest_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")


def cmd_simulate(cfg: RunConfig, out_dir: str, threads: int) -> int:
    grid = cfg.grid()
    params = cfg.params()
    spec = cfg.spec()
    zeta0, phi0, b = cfg.initial_fields(grid)
    phi0 = phi0.project_mean_free()
    state0 = CanonicalState(0.0, zeta0, phi0)
    rec = simulate(state0, b, params, spec, T=cfg.T, dt=cfg.dt, stride=cfg.stride,
                   energy_m=cfg.energy_m, halt_on_instability=cfg.halt_on_instability,
                   cstab=cfg.cstab)
    h = cfg.content_hash()
    csv_path = os.path.join(out_dir, "trajectory.csv")
    _write_csv(
        csv_path,
        ["t", "H_K", "mass", "min_margin", "E_m", "max_abs_zeta"],
        [
            (t, hk, m, mg, em, mz)
            for t, hk, m, mg, em, mz in zip(
                rec.times, rec.hamiltonian, rec.mass, rec.min_margin,
                rec.energy_Em, rec.max_abs_zeta)
        ],
        h,
    )
    extra = {"kind": "trajectory", "halted": rec.halted, "halt_reason": rec.halt_reason,
             "min_margin": min(rec.min_margin) if rec.min_margin else None}
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg,
                   ["trajectory.csv"], extra=extra)
    return EXIT_INSTABILITY if rec.halted else EXIT_OK


def cmd_prepare_init(cfg: RunConfig, out_dir: str, threads: int) -> int:
    grid = cfg.grid()
    params = cfg.params()
    spec = cfg.spec()
    zeta0, phi0, b = cfg.initial_fields(grid)
    phi0 = phi0.project_mean_free()
    state = InterfaceState(zeta=zeta0, b=b, params=params)
    state.require_noncavitation()
    phi1, phi2 = prepare_initial_data(zeta0, phi0, b, params, spec)
    h = cfg.content_hash()
    files = []
    for layer, stack in ((1, phi1), (2, phi2)):
        for i, comp in enumerate(stack):
            name = f"phi{layer}_{i}.csv"
            with open(os.path.join(out_dir, name), "w") as fh:
                fh.write(f"# manifest: {h}\n")
                field_to_csv(comp, fh)
            files.append(name)
    ops1_res = [float(np.abs(v).max()) for v in _compat_residuals(state, phi1, phi2, params, spec)]
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg, files,
                   extra={"kind": "prepare-init", "compat_residuals": ops1_res})
    return EXIT_OK


def _compat_residuals(state, phi1, phi2, params, spec):
    from .operators import layer_ops

    ops1 = layer_ops(state, params, spec, 1)
    ops2 = layer_ops(state, params, spec, 2)
    res = [ops1.apply_calL(phi1, i).values for i in range(1, ops1.K)]
    res += [ops2.apply_calL(phi2, i).values for i in range(1, ops2.K)]
    comb = (params.h1 * ops1.apply_calL(phi1, 0) + params.h2 * ops2.apply_calL(phi2, 0))
    res.append(comb.values)
    return res


def _sweep_deltas(cfg: RunConfig):
    if cfg.delta_sweep:
        return cfg.delta_sweep
    return DEFAULT_DELTAS


def cmd_consistency(cfg: RunConfig, out_dir: str, threads: int) -> int:
    deltas = _sweep_deltas(cfg)
    if not deltas:
        raise ConfigError("consistency needs a non-empty delta sweep")
    grid = cfg.grid()
    spec = cfg.spec()

    def one(d):
        params = cfg.params(d)
        norms = flat_residual_norms(params, spec, grid)
        return {"delta": d, "h1delta": params.delta1, "h2delta": params.delta2,
                "err_r1": norms["r1"], "err_r2": norms["r2"], "err_r0": norms["r0"]}

    rows = _parallel(one, deltas, threads)
    h = cfg.content_hash()
    _write_csv(
        os.path.join(out_dir, "consistency.csv"),
        ["delta", "h1delta", "h2delta", "err_r1", "err_r2", "err_r0"],
        [(r["delta"], r["h1delta"], r["h2delta"], r["err_r1"], r["err_r2"], r["err_r0"])
         for r in rows],
        h,
    )
    slopes = _fit_columns(deltas, rows, ("err_r1", "err_r2", "err_r0"))
    slopes["expected_order"] = 4 * cfg.N + 2
    with open(os.path.join(out_dir, "slopes.json"), "w") as fh:
        json.dump({"manifest": h, "fits": slopes}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg,
                   ["consistency.csv", "slopes.json"], extra={"kind": "consistency"})
    return EXIT_OK


def cmd_hamiltonian(cfg: RunConfig, out_dir: str, threads: int) -> int:
    deltas = _sweep_deltas(cfg)
    if not deltas:
        raise ConfigError("hamiltonian needs a non-empty delta sweep")
    grid = cfg.grid()
    spec = cfg.spec()
    order = 4 * cfg.N + 2

    def one(d):
        params = cfg.params(d)
        zeta, phi, b = cfg.initial_fields(grid)
        phi = phi.project_mean_free()
        expected = max(params.delta1, params.delta2) ** order
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            err = hamiltonian_error(zeta, phi, b, params, spec,
                                    target=max(0.01 * expected, 5e-14))
        return {"delta": d, "h1delta": params.delta1, "h2delta": params.delta2,
                "err_H": abs(err)}

    rows = _parallel(one, deltas, threads)
    h = cfg.content_hash()
    _write_csv(
        os.path.join(out_dir, "hamiltonian.csv"),
        ["delta", "h1delta", "h2delta", "err_H"],
        [(r["delta"], r["h1delta"], r["h2delta"], r["err_H"]) for r in rows],
        h,
    )
    slopes = _fit_columns(deltas, rows, ("err_H",))
    slopes["expected_order"] = order
    with open(os.path.join(out_dir, "slopes.json"), "w") as fh:
        json.dump({"manifest": h, "fits": slopes}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg,
                   ["hamiltonian.csv", "slopes.json"], extra={"kind": "hamiltonian"})
    return EXIT_OK


def cmd_dispersion(cfg: RunConfig, out_dir: str, threads: int) -> int:
    deltas = _sweep_deltas(cfg)
    spec = cfg.spec()
    ds, errs = dispersion_error_sweep(cfg.rho1, cfg.h1, cfg.N, cfg.case, deltas=deltas)
    curves = []
    params = cfg.params()
    for xi in np.linspace(0.25, cfg.M / 4.0, 32):
        w2f, w2m = dispersion_symbols(float(xi), params, spec)
        curves.append((float(xi), w2f, w2m))
    h = cfg.content_hash()
    _write_csv(os.path.join(out_dir, "dispersion_error.csv"),
               ["delta", "err_omega2"],
               list(zip(ds.tolist(), errs.tolist())), h)
    _write_csv(os.path.join(out_dir, "dispersion_curves.csv"),
               ["xi", "omega2_full", "omega2_model"], curves, h)
    fit = _try_fit(ds, errs)
    doc = {"manifest": h, "fits": {"err_omega2": fit, "expected_order": 4 * cfg.N + 2}}
    with open(os.path.join(out_dir, "slopes.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg,
                   ["dispersion_error.csv", "dispersion_curves.csv", "slopes.json"],
                   extra={"kind": "dispersion"})
    return EXIT_OK


def cmd_stability_report(cfg: RunConfig, out_dir: str, threads: int) -> int:
    grid = cfg.grid()
    params = cfg.params()
    spec = cfg.spec()
    zeta0, phi0, b = cfg.initial_fields(grid)
    phi0 = phi0.project_mean_free()
    state = InterfaceState(zeta=zeta0, b=b, params=params)
    state.require_noncavitation()
    phi1, phi2 = prepare_initial_data(zeta0, phi0, b, params, spec)
    derivs = recover_time_derivatives(state, phi1, phi2, params, spec)
    a = stability_function_a(state, phi1, phi2, derivs, params, spec)
    consts = stability_constants(spec)
    vel = compute_velocities(phi1, phi2, state, params, spec)
    margin = stability_margin(state, vel, a, params, consts)
    m1, m2 = state.min_thickness()
    doc = {
        "manifest": cfg.content_hash(),
        "min_H1": m1,
        "min_H2": m2,
        "min_margin": float(margin.values.min()),
        "a": {
            "min": float(a.values.min()),
            "max": float(a.values.max()),
            "mean": float(a.values.mean()),
        },
        "alpha1": consts.alpha1,
        "alpha2": consts.alpha2,
    }
    with open(os.path.join(out_dir, "stability.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out_dir, "manifest.json"), cfg, ["stability.json"],
                   extra={"kind": "stability-report"})
    return EXIT_OK


def _parallel(fn, deltas, threads):
    if threads <= 1 or len(deltas) <= 1:
        return [fn(d) for d in deltas]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, deltas))


def _try_fit(deltas, errors):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = order_fit(list(deltas), list(errors))
        return {"slope": fit.slope, "r2": fit.r2, "excluded": fit.excluded,
                "conclusive": fit.conclusive}
    except ValueError as exc:
        return {"slope": None, "r2": None, "error": str(exc), "conclusive": False}


def _fit_columns(deltas, rows, keys):
    return {key: _try_fit(deltas, [r[key] for r in rows]) for key in keys}


_COMMANDS = {
    "simulate": cmd_simulate,
    "prepare-init": cmd_prepare_init,
    "consistency": cmd_consistency,
    "hamiltonian": cmd_hamiltonian,
    "dispersion": cmd_dispersion,
    "stability-report": cmd_stability_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kakinuma",
        description="Two-layer interfacial wave model laboratory",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="INI run configuration")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized property demos")
    args = parser.parse_args(argv)
    np.random.seed(args.seed % 2**32)
    try:
        cfg = load_config(args.config)
        out_dir = _open_out(cfg, args.out)
        return _COMMANDS[args.command](cfg, out_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverSingular as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except KakinumaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
