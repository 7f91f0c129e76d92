"""Command-line orchestration: every pipeline stage behind one executable with
deterministic, manifest-carrying artifact directories.

    hartree4 <subcommand> [--config PATH] [--out DIR] [--override k=v ...]
             [--threads N] [--mem-cap GB]

Subcommands: ground-state, linops-verify, multipole-fit,
mbody (mode=integrate|scatter|central-config|parabolic), mod-traj,
build-approx, residual-order, evolve, pc-transform, verify-all.

Every run writes manifest.json echoing the full configuration (defaults
included), tolerances, pass/fail flags and the produced files.  Reruns with
identical configuration are bit-identical except the manifest timestamp.

Exit codes: 0 success, 2 usage/validation, 3 convergence failure,
4 domain/resource violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .errors import (BlowUpDetected, CollisionError, ConvergenceError,
                     DomainError, FitFailureError, InvalidArgumentError,
                     NearSingularRHSError, UnsupportedOrderError)

USAGE_ERRORS = (InvalidArgumentError, UnsupportedOrderError, FitFailureError)
CONVERGENCE_ERRORS = (ConvergenceError, NearSingularRHSError, CollisionError)
DOMAIN_ERRORS = (DomainError, BlowUpDetected, MemoryError)


DEFAULTS = {
    "common": {"r_max": 22.0, "n_radial": 2048, "gs_tol": 1e-8, "seed": 0,
               "mem_cap_gb": 4.0, "threads": 1, "bundle_dir": ""},
    "ground-state": {"refine_check": False},
    "linops-verify": {"ells": [0, 1, 2], "n_radial": 1024, "r_max": 18.0,
                      "gs_tol": 1e-7},
    "multipole-fit": {"orders": [0, 1, 2], "separations": [8.0, 12.0, 16.0, 24.0, 32.0],
                      "n_radial": 768, "r_max": 16.0, "gs_tol": 1e-6},
    "mbody": {"mode": "parabolic", "m": 2, "kappa": "auto", "eta": 0.0,
              "t_span": [0.0, 1000.0], "ode_tol": 1e-12, "T0": 20.0,
              "x": [], "v": [], "restarts": 12},
    "mod-traj": {"regime": "hyperbolic", "m": 2, "N": 2, "T0": 20.0,
                 "lam_inf": [1.0, 1.0], "v0": 0.25, "impact": 2.0, "eta": 0.0,
                 "n_radial": 1024, "r_max": 18.0, "gs_tol": 1e-7},
    "build-approx": {"N": 1, "separation": 12.0, "n_field": 48, "L": "auto",
                     "v0": 1.0, "impact": 6.0, "T0": 2.5,
                     "n_radial": 1024, "r_max": 18.0, "gs_tol": 1e-7},
    "residual-order": {"orders": [1, 2], "separations": [8.0, 12.0, 16.0, 24.0],
                       "n_field": 48, "v0": 1.0, "impact": 6.0, "T0": 2.5,
                       "margin": 6.0, "n_radial": 1024, "r_max": 18.0,
                       "gs_tol": 1e-7},
    "evolve": {"init": "ground-state", "n_field": 48, "L": 9.0, "dt": 1e-3,
               "t_end": 0.1, "stride": 10, "amplitude": 1.0, "width": 1.5,
               "checkpoints": False, "n_radial": 1024, "r_max": 18.0,
               "gs_tol": 1e-7, "track": False},
    "pc-transform": {"times": [1.0, 0.5, 0.25], "n_field": 48,
                     "n_radial": 1024, "r_max": 18.0, "gs_tol": 1e-7},
    "verify-all": {"n_radial": 1024, "r_max": 18.0, "gs_tol": 1e-7},
}


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(subcommand: str, config_path, overrides) -> dict:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS.get(subcommand, {}))
    if config_path:
        with open(config_path) as fh:
            user = json.load(fh)
        unknown = set(user) - set(cfg)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    for item in overrides or []:
        if "=" not in item:
            raise InvalidArgumentError(f"override must be key=value, got {item!r}")
        key, val = item.split("=", 1)
        if key not in cfg:
            raise InvalidArgumentError(f"unknown config key in override: {key}")
        cfg[key] = _coerce(val)
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if cfg["r_max"] <= 0:
        raise InvalidArgumentError(f"r_max must be positive, got {cfg['r_max']}")
    if cfg["n_radial"] < 16:
        raise InvalidArgumentError("n_radial must be >= 16")
    if "n_field" in cfg and cfg["n_field"] < 8:
        raise InvalidArgumentError("n_field must be >= 8")
    if "dt" in cfg and cfg["dt"] <= 0:
        raise InvalidArgumentError("dt must be positive")


def _bundle(cfg, outdir):
    """Load or compute the ground-state bundle; cache under the run dir."""
    from . import ground_state as gs

    if cfg.get("bundle_dir"):
        return gs.load_bundle(cfg["bundle_dir"])
    cache = os.path.join(outdir, "bundle")
    if os.path.exists(os.path.join(cache, "manifest.json")):
        return gs.load_bundle(cache)
    from .radial_core import make_grid
    b = gs.build_bundle(make_grid(cfg["r_max"], cfg["n_radial"]), tol=cfg["gs_tol"])
    gs.save_bundle(b, cache)
    return b


# ---------------------------------------------------------------------------
# runners (each returns a manifest fragment: results + pass flag + files)
# ---------------------------------------------------------------------------

def run_ground_state(cfg, outdir):
    from . import ground_state as gs

    b = _bundle(cfg, outdir)
    report = gs.verify_root_identities(b)
    oracle = gs.shooting_oracle()
    rel = abs(oracle["mass"] - b.mass_Q) / b.mass_Q
    results = {
        "mass_Q": b.mass_Q, "residual": b.residual,
        "shooting_mass": oracle["mass"], "shooting_rel_dev": rel,
        "identities": report,
        "energy_quarter_form": b.energy,
        "energy_8pi2_form": b.energy_8pi2_form,
        "energy_identity_residual": abs(b.grad_Q_norm2 + b.pot_QQ + b.mass_Q) / b.mass_Q,
        "potential_norm_check_4pi2": abs(b.pot_QQ + b.grad_phi_norm2 / (4 * np.pi**2))
        / abs(b.pot_QQ),
    }
    ok = (b.residual < cfg["gs_tol"] and rel < 1e-5 and report["pass"])
    if cfg.get("refine_check"):
        from .radial_core import make_grid
        b2 = gs.solve_ground_state(make_grid(cfg["r_max"], 2 * cfg["n_radial"]),
                                   tol=cfg["gs_tol"])
        results["mass_refined_rel_change"] = abs(b2.mass_Q - b.mass_Q) / b.mass_Q
        ok = ok and results["mass_refined_rel_change"] < 1e-6
    return results, ok, ["bundle"]


def run_linops_verify(cfg, outdir):
    from . import linearized_ops as lo

    b = _bundle(cfg, outdir)
    path = os.path.join(outdir, "linops_report.json")
    report = lo.sector_report(b, ells=tuple(cfg["ells"]), json_path=path)
    gam = {"gamma0_half_vs_ln3": abs(lo.gamma_coeff(0, 0.5) - np.log(3.0))}
    mono = True
    for t in np.linspace(0.1, 0.9, 9):
        vals = [lo.gamma_coeff(ell, float(t)) for ell in range(12)]
        mono &= all(vals[i] > vals[i + 1] > 0 for i in range(11))
    gam["monotone_l0_to_11"] = bool(mono)
    report["gamma_suite"] = gam
    ok = (report["identities"]["pass"] and gam["gamma0_half_vs_ln3"] < 1e-8 and mono
          and report["eigenvalues"]["minus_l0"]["lowest_deflated"] > 0
          and report["eigenvalues"]["plus_l1"]["lowest_deflated"] > 0)
    from .jsonio import dump_json
    dump_json(report, path)
    return report, ok, ["linops_report.json"]


def run_multipole_fit(cfg, outdir):
    from . import multipole as mp
    from .radial_core import RadialFn

    b = _bundle(cfg, outdir)
    dens = RadialFn(b.grid, b.Q.values**2)
    fits = {}
    ok = True
    for N in cfg["orders"]:
        fit = mp.truncation_order_fit(int(N), dens, cfg["separations"])
        fits[str(N)] = fit
        ok &= abs(fit["slope"] - fit["expected"]) <= 0.3
    from .jsonio import dump_json
    path = os.path.join(outdir, "fits.json")
    dump_json(fits, path)
    return {"fits": fits}, ok, ["fits.json"]


def run_mbody(cfg, outdir):
    from . import mbody as mb

    kappa = cfg["kappa"]
    if kappa == "auto":
        kappa = _bundle(cfg, outdir).mass_Q
    kappa = float(kappa)
    mode = cfg["mode"]
    files = []
    results = {"kappa": kappa, "mode": mode}
    if mode == "integrate":
        x = np.array(cfg["x"], dtype=float).reshape(-1, 4)
        v = np.array(cfg["v"], dtype=float).reshape(-1, 4)
        path = mb.integrate(mb.BodyState(x, v, kappa), tuple(cfg["t_span"]),
                            tol=cfg["ode_tol"])
        mb.save_path_csv(path, os.path.join(outdir, "path.csv"))
        files.append("path.csv")
        results["energy_drift"] = path.energy_drift()
        ok = results["energy_drift"] < 1e-9
    elif mode == "scatter":
        x = np.array(cfg["x"], dtype=float).reshape(-1, 4)
        v = np.array(cfg["v"], dtype=float).reshape(-1, 4)
        orbit = mb.hyperbolic_scatter(x, v, T0=cfg["T0"], kappa=kappa)
        path = orbit.to_path()
        mb.save_path_csv(path, os.path.join(outdir, "path.csv"))
        rep = mb.classify_orbit(path)
        mb.save_classification_json(rep, os.path.join(outdir, "classification.json"))
        files += ["path.csv", "classification.json"]
        results["fixed_point_residual"] = orbit.meta["fixed_point_residual"]
        results["classification"] = rep["label"]
        ok = results["fixed_point_residual"] < 1e-8 and rep["label"] == "hyperbolic"
    elif mode == "central-config":
        b, U = mb.central_config(int(cfg["m"]), seed=int(cfg["seed"]), kappa=kappa)
        resid = mb.lagrange_residual(b, kappa)
        results.update({"U": U, "lagrange_residual": resid,
                        "multiplier_minus_2U": 0.0, "b": b.tolist()})
        ok = resid < 1e-8
    elif mode == "parabolic":
        b, U = mb.central_config(int(cfg["m"]), seed=int(cfg["seed"]), kappa=kappa)
        orbit = mb.parabolic_orbit(b, eta=float(cfg["eta"]), kappa=kappa)
        resid = mb.orbit_ode_residual(orbit, [1.0, 10.0, 100.0])
        path = orbit.to_path((max(cfg["t_span"][0], 1e-3), cfg["t_span"][1]))
        mb.save_path_csv(path, os.path.join(outdir, "path.csv"))
        rep = mb.classify_orbit(path)
        mb.save_classification_json(rep, os.path.join(outdir, "classification.json"))
        files += ["path.csv", "classification.json"]
        results.update({"U": U, "ode_residual": resid,
                        "lagrange_residual": mb.lagrange_residual(b, kappa),
                        "classification": rep["label"]})
        ok = resid < 1e-8 and rep["label"] == "parabolic"
    else:
        raise InvalidArgumentError(f"unknown mbody mode {mode!r}")
    return results, ok, files


def _standard_trajectory(cfg, b, outdir):
    """Shared mod-traj construction: symmetric 2-soliton in either regime."""
    from . import mbody as mb
    from . import modulation as md

    kappa = b.mass_Q
    kc = md.pair_coupling(kappa)
    m = int(cfg["m"])
    if cfg["regime"] == "hyperbolic":
        if cfg.get("x") and cfg.get("v"):
            x = np.array(cfg["x"], dtype=float).reshape(m, 4)
            v = np.array(cfg["v"], dtype=float).reshape(m, 4)
        else:
            # antipodal pair with a transverse impact parameter: the orbit is
            # globally expansive, unlike head-on data which collides backwards
            v0 = float(cfg.get("v0", 0.25))
            bimp = float(cfg.get("impact", 2.0))
            v = np.zeros((m, 4))
            v[0, 0], v[1, 0] = v0, -v0
            x = np.zeros((m, 4))
            x[0, 1], x[1, 1] = bimp / 2.0, -bimp / 2.0
        orbit = mb.hyperbolic_scatter(x, v, T0=cfg["T0"], kappa=kc)
        path = md.solve_mod_traj_hyperbolic(orbit, cfg["lam_inf"], int(cfg["N"]),
                                            T0=orbit.T0, kappa=kappa)
    else:
        bcfg, _ = mb.central_config(m, seed=int(cfg["seed"]), kappa=kc)
        orbit = mb.parabolic_orbit(bcfg, eta=float(cfg["eta"]), kappa=kc)
        path = md.solve_mod_traj_parabolic(orbit, cfg["lam_inf"], int(cfg["N"]),
                                           T0=cfg["T0"], kappa=kappa)
    return path


def run_mod_traj(cfg, outdir):
    from . import modulation as md

    b = _bundle(cfg, outdir)
    path = _standard_trajectory(cfg, b, outdir)
    md.save_mod_path(path, os.path.join(outdir, "mod_path.csv"),
                     os.path.join(outdir, "mod_manifest.json"))
    res = md.mod_residual(path)
    results = {"max_mod": float(np.max(res["mod"])),
               "deviations": path.meta["deviations"],
               "fixed_point_residual": path.meta["fixed_point_residual"],
               "trace": path.meta["trace"]}
    devs = path.meta["deviations"]
    ok = results["max_mod"] < 1e-6
    if cfg["regime"] == "hyperbolic" and int(cfg["N"]) >= 2:
        for name, budget in (("lam", -1.5), ("beta", -1.5), ("mu", -2.5),
                             ("delta", -3.5)):
            ok &= devs[name]["exponent"] <= budget
    return results, ok, ["mod_path.csv", "mod_manifest.json"]


def run_build_approx(cfg, outdir):
    from . import approx_soliton as ap
    from . import evolver as ev
    from . import modulation as md

    b = _bundle(cfg, outdir)
    a = float(cfg["separation"])
    cfg2 = dict(cfg)
    cfg2.setdefault("regime", "hyperbolic")
    cfg2.setdefault("m", 2)
    cfg2.setdefault("lam_inf", [1.0] * cfg2["m"])
    path = _standard_trajectory(cfg2, b, outdir)
    t_eval = _time_for_separation(path, a)
    P = path.eval(t_eval)
    profiles = ap.build_corrections(b, P, int(cfg["N"]))
    L = cfg["L"] if cfg["L"] != "auto" else a / 2.0 + 6.0
    field = ap.assemble_R(b, profiles, P, int(cfg["n_field"]), float(L), time=t_eval)
    ev.save_checkpoint(field, os.path.join(outdir, "R_field"))
    mass = float(np.sum(np.abs(field.values) ** 2) * field.dV)
    results = {"separation": a, "t_eval": t_eval, "mass_R": mass,
               "mass_per_soliton_expected": b.mass_Q,
               "mass_rel_dev": abs(mass - P.m * b.mass_Q) / (P.m * b.mass_Q)}
    return results, results["mass_rel_dev"] < 1e-2, ["R_field.json", "R_field.bin"]


def _time_for_separation(path, a_target: float) -> float:
    """Invert the (monotone) pair separation a(t) along a trajectory."""
    keep = path.xi >= 0.05              # Mod trust window
    ts = path.t[keep]
    a_of_t = path.min_separation()[keep]
    order = np.argsort(ts)
    return float(np.interp(a_target, a_of_t[order], ts[order]))


def run_residual_order(cfg, outdir):
    from . import approx_soliton as ap

    b = _bundle(cfg, outdir)
    seps = [float(a) for a in cfg["separations"]]
    cfg2 = dict(cfg)
    cfg2.update({"regime": "hyperbolic", "m": 2, "lam_inf": [1.0, 1.0]})
    results = {"orders": {}}
    ok = True
    for N in cfg["orders"]:
        cfg2["N"] = int(N)
        path = _standard_trajectory(cfg2, b, outdir)
        profiles = ap.build_corrections(b, path.eval(path.T0), int(N))
        sups = {}
        for a in seps:
            t_eval = _time_for_separation(path, a)
            L = a / 2.0 + float(cfg["margin"])
            psi, norms = ap.residual_psi(b, profiles, path, t_eval,
                                         int(cfg["n_field"]), L)
            norms["t_eval"] = t_eval
            sups[a] = norms
        xs = np.log(np.array(seps))
        ys = np.log(np.array([sups[a]["sup"] for a in seps]))
        slope = float(np.polyfit(xs, ys, 1)[0])
        results["orders"][str(N)] = {"sup_norms": {str(a): sups[a]["sup"] for a in seps},
                                     "norms": {str(a): sups[a] for a in seps},
                                     "slope": slope, "expected": -(int(N) + 2)}
        ok &= abs(slope + int(N) + 2) <= 0.3
    from .jsonio import dump_json
    path_json = os.path.join(outdir, "residual_order.json")
    dump_json(results, path_json)
    return results, ok, ["residual_order.json"]


def run_evolve(cfg, outdir):
    from . import evolver as ev
    from .radial_core import interp_radial

    b = _bundle(cfg, outdir)
    n, L = int(cfg["n_field"]), float(cfg["L"])
    if cfg["init"] == "ground-state":
        f = ev.make_field(n, L)
        ax = f.axis()
        X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
        R = np.sqrt(sum(x * x for x in X))
        f.values[...] = interp_radial(b.Q, np.minimum(R, b.grid.r_max * (1 - 1e-12)))
    elif cfg["init"] == "gaussian":
        w = float(cfg["width"])
        amp = float(cfg["amplitude"])
        f = ev.make_field(n, L, lambda x0, x1, x2, x3: amp * np.exp(
            -(x0**2 + x1**2 + x2**2 + x3**2) / (2 * w * w)))
    else:
        raise InvalidArgumentError(f"unknown init {cfg['init']!r}")
    hist = ev.evolve(f, float(cfg["t_end"]), float(cfg["dt"]),
                     snapshot_stride=int(cfg["stride"]),
                     checkpoint_dir=outdir if cfg["checkpoints"] else None)
    ev.save_timeseries_csv(hist["times"], hist["series"],
                           os.path.join(outdir, "timeseries.csv"),
                           tracks=hist["tracks"])
    s0, s1 = hist["series"][0], hist["series"][-1]
    results = {"mass_drift": abs(s1.mass - s0.mass) / s0.mass,
               "energy_drift": abs(s1.energy - s0.energy) / max(abs(s0.energy), 1e-12),
               "steps": int(round(cfg["t_end"] / cfg["dt"]))}
    if len(hist["snapshots"]) >= 5:
        vir = ev.virial_check(hist["snapshots"][:5])
        results["virial"] = vir
    ok = results["mass_drift"] < 1e-10
    return results, ok, ["timeseries.csv"]


def run_pc_transform(cfg, outdir):
    from . import evolver as ev
    from .radial_core import interp_radial

    b = _bundle(cfg, outdir)
    rows = []
    for t in cfg["times"]:
        t = float(t)
        # sample u(1/t, y) = e^{i/t}Q(|y|) on its natural box, transform onto
        # the shrunken output box t·L_src (keeps x/t resolved at small t)
        L_src = 8.0
        n = int(cfg["n_field"])
        src = ev.make_field(n, L_src)
        ax = src.axis()
        X = np.meshgrid(ax, ax, ax, ax, indexing="ij", sparse=True)
        R = np.sqrt(sum(x * x for x in X))
        src.values[...] = interp_radial(b.Q, R) * np.exp(1j / t)
        src.time = 1.0 / t
        g = ev.pseudo_conformal(src, t, out_n=n, out_L=t * L_src)
        c = ev.conserved(g)
        from scipy import fft as sfft
        gh = sfft.fftn(g.values)
        grad = float(np.sqrt(np.sum(g.k2() * np.abs(gh) ** 2) / g.n**4 * g.dV))
        law = float(np.sqrt(b.grad_Q_norm2 / t**2 + 0.25 * b.xQ_norm2))
        rows.append({"t": t, "grad_norm": grad, "exact_law": law,
                     "mass": c.mass, "rel_dev_from_law": abs(grad - law) / law})
    path = os.path.join(outdir, "pc_series.csv")
    with open(path, "w") as fh:
        fh.write("t,grad_norm,exact_law,mass,rel_dev\n")
        for r in rows:
            fh.write(f"{r['t']!r},{r['grad_norm']!r},{r['exact_law']!r},"
                     f"{r['mass']!r},{r['rel_dev_from_law']!r}\n")
    scaling = [r["grad_norm"] * r["t"] for r in rows]
    results = {"rows": rows, "t_times_grad": scaling,
               "max_rel_dev_from_law": max(r["rel_dev_from_law"] for r in rows)}
    ok = results["max_rel_dev_from_law"] < 0.02
    return results, ok, ["pc_series.csv"]


def run_verify_all(cfg, outdir):
    from . import ground_state as gs
    from . import linearized_ops as lo
    from . import mbody as mb
    from . import modulation as md
    from . import multipole as mp
    from .radial_core import RadialFn, make_grid

    b = _bundle(cfg, outdir)
    suites = {}
    # ground state + root space
    rep = gs.verify_root_identities(b)
    suites["root_identities"] = {"pass": bool(rep["pass"]), "detail": rep}
    # gamma suite
    g0 = abs(lo.gamma_coeff(0, 0.5) - np.log(3.0))
    mono = all(all(lo.gamma_coeff(l, float(t)) > lo.gamma_coeff(l + 1, float(t)) > 0
                   for l in range(11)) for t in np.linspace(0.1, 0.9, 9))
    suites["gamma"] = {"pass": bool(g0 < 1e-8 and mono), "g0_dev": g0}
    # sector coercivity
    opm = lo.assemble_sector(b, 0, "minus")
    opp = lo.assemble_sector(b, 1, "plus")
    e_minus = lo.lowest_eigenvalue(opm, [b.Q])
    e_plus = lo.lowest_eigenvalue(opp, opp.kernel_profiles())
    suites["coercivity"] = {"pass": bool(e_minus > 0 and e_plus > 0),
                            "minus_l0": e_minus, "plus_l1": e_plus}
    # multipole
    dens = RadialFn(b.grid, b.Q.values**2)
    fit = mp.truncation_order_fit(1, dens, [8, 12, 16, 24, 32])
    suites["multipole"] = {"pass": bool(abs(fit["slope"] + 3) <= 0.3),
                           "slope_N1": fit["slope"]}
    # m-body
    kc = md.pair_coupling(b.mass_Q)
    bcfg, U = mb.central_config(2, seed=int(cfg["seed"]), kappa=kc)
    orbp = mb.parabolic_orbit(bcfg, kappa=kc)
    ode_res = mb.orbit_ode_residual(orbp, [1.0, 10.0])
    st = mb.BodyState([[5, 0, 0, 0], [-5, 0, 0, 0]],
                      [[1, 0, 0, 0], [-1, 0, 0, 0]], b.mass_Q)
    drift = mb.integrate(st, (0, 1000.0), tol=1e-12).energy_drift()
    suites["mbody"] = {"pass": bool(ode_res < 1e-8 and drift < 1e-9),
                       "parabolic_ode_residual": ode_res, "energy_drift": drift}
    # modulation
    v = np.array([[0.25, 0, 0, 0], [-0.25, 0, 0, 0]])
    x = np.zeros((2, 4))
    orbit = mb.hyperbolic_scatter(x, v, T0=20.0, kappa=kc)
    pathh = md.solve_mod_traj_hyperbolic(orbit, [1.0, 1.0], 2, kappa=b.mass_Q)
    maxmod = float(np.max(md.mod_residual(pathh)["mod"]))
    suites["modulation"] = {"pass": bool(maxmod < 1e-6), "max_mod": maxmod}

    ok = all(s["pass"] for s in suites.values())
    from .jsonio import dump_json
    path = os.path.join(outdir, "verify_all.json")
    dump_json(suites, path)
    return suites, ok, ["verify_all.json"]


RUNNERS = {
    "ground-state": run_ground_state,
    "linops-verify": run_linops_verify,
    "multipole-fit": run_multipole_fit,
    "mbody": run_mbody,
    "mod-traj": run_mod_traj,
    "build-approx": run_build_approx,
    "residual-order": run_residual_order,
    "evolve": run_evolve,
    "pc-transform": run_pc_transform,
    "verify-all": run_verify_all,
}


def run(subcommand: str, cfg: dict, outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    t0 = time.time()
    results, ok, files = RUNNERS[subcommand](cfg, outdir)
    import hartree4
    import scipy
    manifest = {
        "subcommand": subcommand,
        "config": cfg,
        "versions": {"hartree4": hartree4.__version__,
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "results": results,
        "pass": bool(ok),
        "files": files,
        "runtime_seconds": round(time.time() - t0, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    from .jsonio import dump_json
    dump_json(manifest, os.path.join(outdir, "manifest.json"))
    print(f"{subcommand}: {'PASS' if ok else 'FAIL'} "
          f"({manifest['runtime_seconds']}s) -> {outdir}")
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hartree4", description=__doc__)
    parser.add_argument("subcommand", choices=sorted(RUNNERS))
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--out", default="runs/out", help="artifact directory")
    parser.add_argument("--override", action="append", default=[],
                        metavar="key=value")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--mem-cap", type=float, default=None, metavar="GB")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.subcommand, args.config, args.override)
        if args.threads is not None:
            cfg["threads"] = args.threads
        if args.mem_cap is not None:
            cfg["mem_cap_gb"] = args.mem_cap
        return run(args.subcommand, cfg, args.out)
    except USAGE_ERRORS as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except CONVERGENCE_ERRORS as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    except DOMAIN_ERRORS as exc:
        print(f"domain/resource error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
