"""Command-line entry point.

    shearmix {verify,sweep,constants,couple,drift,minorize} [--config PATH]
             [--seed U64] [--workers N] [--out PATH] [--format json|csv]

Parameters come from built-in defaults, then the JSON config file, then
command-line flags (later wins).  Exit codes: 0 success, 1 failed check or
plan, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import mpmath
import numpy as np

from . import coupling, derivatives, flow, harris, mixing, qift
from .streams import WORKERS_ENV, default_workers, stream
from .torus import Z_STAR, distance_to_R, linf_dist, separation, wrap, wrap_signed


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "verify": {
        "fixed_point_amplitudes": [1.0, 5.0, 25.0, 100.0],
        "fixed_point_samples": 1000,
        "fixed_point_tol": 1e-12,
        "det_amplitudes": [1.0, 2.0, 5.0, 10.0, 50.0],
        "det_tol": 1e-10,
        "constancy_amplitudes": [1.0, 2.0, 10.0],
        "constancy_samples": 1000,
        "constancy_tol": 1e-9,
        "qift_amplitude": 1.0,
        "qift_pairs": 10000,
        "qift_directions": 50,
        "reach_tol": 1e-8,
        "implicit_tol": 1e-10,
    },
    "sweep": {
        "amplitudes": None,
        "trials": 10,
        "periods": 100,
        "grid": 2048,
        "init": "single_mode",
        "mode": [1, 0],
        "k_max": 4,
        "floor_frac": 0.1,
    },
    "constants": {
        "amplitudes": [10.0],
        "C": 3.0,
        "q": 3.0,
        "p": 0.5,
        "s_star": 0.5,
        "gamma": 0.5,
        "K1": 1.0,
        "C1": 1.0, "C2": 1.0, "C3": 1.0, "C4": 1.0,
        "dps": 60,
    },
    "couple": {
        "amplitude": 4.0,
        "z": None,
        "samples": 10,
        "s_star": 1.0,
        "r1": 0.1,
        "max_steps": 10000,
    },
    "drift": {
        "amplitude": 40.0,
        "p": 0.5,
        "s_star": 0.5,
        "gamma": 0.5,
        "K1": 1.0,
        "z_samples": 100,
        "mc_samples": 10000,
    },
    "minorize": {
        "amplitude": 3.0,
        "center": None,
        "n": 2,
        "rho_in": 0.01,
        "rho_out": [0.5],
        "boundary_samples": 16,
        "mc_samples": 1000000,
    },
}

STOCHASTIC = {"verify", "sweep", "couple", "drift", "minorize"}


# -- helpers -------------------------------------------------------------------

def _num(x):
    """JSON-safe number: floats keep full repr precision, mpf becomes a decimal string."""
    if isinstance(x, mpmath.mpf):
        return mpmath.nstr(x, mpmath.mp.dps)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    return x


def _check(name, passed, value, tolerance, witness=None, gated=True):
    rec = {"name": name, "passed": bool(passed), "gated": gated,
           "value": _num(value), "tolerance": _num(tolerance)}
    if not passed and witness is not None:
        rec["witness"] = _num(witness)
    return rec


def load_config(command, path, overrides):
    cfg = dict(DEFAULTS[command])
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        # allow either a flat object or one keyed by command name
        if command in doc and isinstance(doc[command], dict):
            doc = doc[command]
        unknown = set(doc) - set(cfg) - {"seed", "workers"}
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(doc)
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    return cfg


def _pos_int(cfg, key, minimum=1):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}")
    return v


def _pos_float(cfg, key):
    v = cfg[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not (v > 0) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a positive number")
    return float(v)


def _amp_list(cfg, key):
    v = cfg[key]
    if v is None:
        raise ConfigError(f"{key} is required")
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a nonempty list")
    out = []
    for a in v:
        if not isinstance(a, (int, float)) or isinstance(a, bool) or not (a > 0) or not math.isfinite(a):
            raise ConfigError(f"{key} entries must be positive numbers")
        out.append(float(a))
    return out


def _tol(cfg, key):
    v = cfg[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
        raise ConfigError(f"{key} must be a nonnegative number")
    return float(v)


def _lyap(cfg):
    try:
        return harris.LyapunovParams(p=cfg["p"], s_star=cfg["s_star"], gamma=cfg["gamma"], K1=cfg["K1"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# -- commands --------------------------------------------------------------------

def cmd_verify(cfg, seed, workers):
    """Fixed points, special-point Jacobian and determinant, constancy on R, QIFT checks."""
    checks = []
    tol = _tol(cfg, "fixed_point_tol")
    n = _pos_int(cfg, "fixed_point_samples")
    for i, A in enumerate(_amp_list(cfg, "fixed_point_amplitudes")):
        z = derivatives.random_points_on_R(stream(seed, 10, i), n)
        xi = np.array([flow.fixed_point_shifts(zz, 2) for zz in z])
        # binary64 pairs sit about an ulp off R and the fixed point is hyperbolic,
        # so this version is informational; the gated check runs at 30 digits
        err = linf_dist(flow.flow_pair(z, xi, A), z)
        w = int(np.argmax(err))
        checks.append(_check(f"fixed_point_binary64_A={A!r}", err[w] <= tol, err[w], tol,
                             {"z": z[w], "xi": xi[w]}, gated=False))
        worst, wz = 0.0, None
        for zz in z:
            ze = flow.pair_on_R_extended(zz[:2])
            e = float(flow.extended_linf_dist(flow.flow_pair_extended(ze, [zz[1], zz[0]] * 2, A), ze))
            if e >= worst:
                worst, wz = e, zz
        checks.append(_check(f"fixed_point_A={A!r}", worst <= tol, worst, tol, {"x": wz[:2]}))

    tol = _tol(cfg, "det_tol")
    for A in _amp_list(cfg, "det_amplitudes"):
        det = derivatives.special_point_determinant(A)
        rel = abs(det + 4 * A ** 6) / (4 * A ** 6)
        checks.append(_check(f"determinant_A={A!r}", rel <= tol, rel, tol, {"det": det}))
        J = derivatives.shift_jacobian_at_special_point(A)
        ref = derivatives.special_jacobian_closed_form(A)
        err = float(np.max(np.abs(J - ref)) / np.max(np.abs(ref)))
        checks.append(_check(f"special_jacobian_A={A!r}", err <= tol, err, tol, {"jacobian": J}))

    tol = _tol(cfg, "constancy_tol")
    n = _pos_int(cfg, "constancy_samples")
    for i, A in enumerate(_amp_list(cfg, "constancy_amplitudes")):
        dev = derivatives.shift_jacobian_constancy_on_R(n, A, None, z=derivatives.random_points_on_R(stream(seed, 11, i), n))
        checks.append(_check(f"constancy_on_R_A={A!r}", dev <= tol, dev, tol))

    checks.extend(qift_checks(_pos_float(cfg, "qift_amplitude"), _pos_int(cfg, "qift_pairs"),
                              _pos_int(cfg, "qift_directions"), _tol(cfg, "reach_tol"),
                              _tol(cfg, "implicit_tol"), seed))
    report = {"command": "verify", "seed": seed, "checks": checks,
              "passed": all(c["passed"] for c in checks if c["gated"])}
    return report, 0 if report["passed"] else 1


def shift_map(A):
    """F(x) = Phi_4(z*, x) on the lift, and its Jacobian; both vectorised."""
    F = lambda x: flow.flow_pair_lifted(Z_STAR, np.asarray(x), A)
    DF = lambda x: derivatives.propagate_derivatives(Z_STAR, np.asarray(x), A).d_shift
    return F, DF


def qift_checks(A, pairs, directions, reach_tol, implicit_tol, seed):
    checks = []
    D = derivatives.shift_c2_bound(4, A)
    c = qift.qift_constants(4, D, 4 * A ** 6)
    F, DF = shift_map(A)
    inj = qift.check_injectivity(F, c, pairs, _seed_int(seed, 20), DF=DF)
    checks.append(_check("qift_injectivity", inj.injective, inj.margin, 0.0, inj.witness))
    rng = stream(seed, 21)
    worst = 0.0
    for _ in range(directions):
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        worst = max(worst, qift.reach_target(F, DF, c, v).residual)
    checks.append(_check("qift_reach_target_residual", worst <= reach_tol, worst, reach_tol))

    G = lambda z, ze: wrap_signed(flow.flow_pair_lifted(z, ze, A) - Z_STAR)
    DyG = lambda z, ze: derivatives.propagate_derivatives(z, ze, A).d_shift
    rad = c.image_radius
    worst_res, worst_det = 0.0, math.inf
    for u in implicit_grid(rad):
        res = qift.implicit_solve(G, Z_STAR, np.zeros(4), Z_STAR + u, c, DyG=DyG)
        worst_res = max(worst_res, res.residual)
        worst_det = min(worst_det, abs(res.det))
    checks.append(_check("qift_implicit_residual", worst_res <= implicit_tol, worst_res, implicit_tol))
    checks.append(_check("qift_implicit_det_floor", worst_det >= 2 * A ** 6, worst_det, 2 * A ** 6))
    return checks


def _seed_int(seed, *key):
    """Derived integer seed for functions that take a plain seed."""
    return int(np.random.SeedSequence(int(seed), spawn_key=key).generate_state(1, np.uint64)[0])


def implicit_grid(radius, per_axis=3):
    """Grid points of the cube [-1, 1]^4 scaled into the open ball of the given radius."""
    g = np.linspace(-1.0, 1.0, per_axis)
    pts = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), -1).reshape(-1, 4)
    return pts * (0.99 * radius / 2.0)


def cmd_sweep(cfg, seed, workers):
    amps = _amp_list(cfg, "amplitudes")
    trials = _pos_int(cfg, "trials")
    periods = _pos_int(cfg, "periods")
    grid = _pos_int(cfg, "grid", 2)
    if grid & (grid - 1):
        raise ConfigError("grid must be a power of two")
    if cfg["init"] == "single_mode":
        init = ("single_mode", {"k": tuple(cfg["mode"])})
    elif cfg["init"] == "random_band_limited":
        init = ("random_band_limited", {"k_max": _pos_int(cfg, "k_max")})
    else:
        raise ConfigError("init must be single_mode or random_band_limited")
    try:
        res = mixing.amplitude_sweep(amps, trials, periods, grid, init, seed, workers,
                                     floor_frac=_pos_float(cfg, "floor_frac"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    summary = [{"A": a, "mean_rate": m, "std": s, "rates": r} for a, m, s, r in mixing.sweep_summary(res)]
    report = {
        "command": "sweep", "seed": seed,
        "columns": ["A", "trial", "period", "h_minus_1", "h1_initial", "rate", "r2"],
        "rows": [list(r) for r in mixing.sweep_rows(res)],
        "summary": summary,
        "truncated": [{"A": r.A, "trial": r.trial, "last_period": r.times[-1]} for r in res if r.truncated],
    }
    return report, 0


def cmd_constants(cfg, seed, workers):
    amps = _amp_list(cfg, "amplitudes")
    lp = _lyap(cfg)
    out = []
    ok = True
    for A in amps:
        try:
            hc = harris.constants_pipeline(A, lp, C=cfg["C"], q=cfg["q"], C1=cfg["C1"], C2=cfg["C2"],
                                           C3=cfg["C3"], C4=cfg["C4"], dps=_pos_int(cfg, "dps", 20))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        checks = harris.inequality_audit(hc)
        ok &= harris.audit_passed(checks)
        out.append(harris.constants_record(hc, checks))
    return {"command": "constants", "results": out, "passed": ok}, 0 if ok else 1


def cmd_couple(cfg, seed, workers):
    A = _pos_float(cfg, "amplitude")
    s_star = _pos_float(cfg, "s_star")
    r1 = _pos_float(cfg, "r1")
    max_steps = _pos_int(cfg, "max_steps")
    if cfg["z"] is not None:
        zs = np.atleast_2d(np.asarray(cfg["z"], dtype=float))
        if zs.shape[1] != 4:
            raise ConfigError("z must have 4 coordinates")
    else:
        rng = stream(seed, 30)
        zs = []
        while len(zs) < _pos_int(cfg, "samples"):
            z = rng.uniform(0.0, 2 * math.pi, 4)
            if separation(z) >= s_star / A ** 2:
                zs.append(z)
        zs = np.array(zs)
    bound = coupling.n1_bound(A, s_star)
    plans = []
    ok = True
    for i, z in enumerate(zs):
        try:
            plan = coupling.plan_to_R(z, A, s_star, max_steps)
        except ValueError as exc:
            return {"command": "couple", "error": str(exc), "z": _num(z), "passed": False}, 1
        except coupling.PlanError as exc:
            plans.append({"z": _num(z), "error": str(exc), "best_residual": exc.best_residual})
            ok = False
            continue
        cert = coupling.tube_certificate(z, plan, r1, A, rng_seed=_seed_int(seed, 31, i))
        chain = coupling.ball_chain(plan.terminal, r1)
        ok &= plan.residual < coupling.R_TOL
        plans.append({
            "z": _num(z), "steps": _num(plan.steps), "N1": plan.N1,
            "terminal": _num(plan.terminal), "residual": plan.residual,
            "N1_bound": bound, "within_N1_bound": plan.N1 <= bound,
            "tube_log_probability": coupling.tube_probability(plan, r1, A),
            "tube_max_deviation": cert.max_deviation, "tube_certificate": cert.holds,
            "ball_chain_length": chain.N2 + 1, "N2": chain.N2,
        })
    return {"command": "couple", "A": A, "r1": r1, "plans": plans, "passed": ok}, 0 if ok else 1


def cmd_drift(cfg, seed, workers):
    A = _pos_float(cfg, "amplitude")
    lp = _lyap(cfg)
    try:
        rep = harris.drift_check(lp, A, _pos_int(cfg, "z_samples"), _pos_int(cfg, "mc_samples"),
                                 seed, workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ok = rep.gamma_hat < 1 and rep.offdiag_ok
    return {"command": "drift", "A": A, "gamma_hat": rep.gamma_hat, "K_hat": rep.K_hat,
            "worst_ratio": rep.worst_ratio, "offdiag_max": rep.offdiag_max,
            "offdiag_bound": rep.offdiag_bound, "offdiag_ok": rep.offdiag_ok,
            "passed": ok}, 0 if ok else 1


def cmd_minorize(cfg, seed, workers):
    A = _pos_float(cfg, "amplitude")
    center = Z_STAR if cfg["center"] is None else wrap(np.asarray(cfg["center"], dtype=float))
    rho = cfg["rho_out"]
    rho = rho if isinstance(rho, list) else [rho]
    try:
        res = harris.minorization_mc(center, _pos_float(cfg, "rho_in"), rho, _pos_int(cfg, "n"),
                                     _pos_int(cfg, "boundary_samples", 0), _pos_int(cfg, "mc_samples"),
                                     A, seed, workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ok = all(lo > 0 for lo in res.inf_lower)
    return {"command": "minorize", "A": A, "center": _num(center), "rho_out": res.rho_out,
            "inf_prob_estimate": res.inf_prob_estimate, "inf_lower_95": res.inf_lower,
            "lebesgue_ratio": res.lebesgue_ratio, "reference_density": 1 / (4 * A ** 6),
            "passed": ok}, 0 if ok else 1


COMMANDS = {
    "verify": cmd_verify, "sweep": cmd_sweep, "constants": cmd_constants,
    "couple": cmd_couple, "drift": cmd_drift, "minorize": cmd_minorize,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--workers", type=int, metavar="N",
                        help=f"worker threads (default: ${WORKERS_ENV} or 1)")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--format", choices=["json", "csv"])
    ap = argparse.ArgumentParser(prog="shearmix", parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "sweep":
            sp.add_argument("--amplitudes", type=float, nargs="+")
            sp.add_argument("--trials", type=int)
            sp.add_argument("--periods", type=int)
            sp.add_argument("--grid", type=int)
        if name in ("constants",):
            sp.add_argument("--amplitudes", type=float, nargs="+")
            sp.add_argument("--C", type=float)
            sp.add_argument("--q", type=float)
        if name in ("couple", "drift", "minorize"):
            sp.add_argument("--amplitude", type=float)
    return ap


def render(report, fmt):
    if fmt == "csv":
        if "rows" not in report:
            raise ConfigError("csv output is only available for sweep")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report["columns"])
        for row in report["rows"]:
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
        return buf.getvalue()
    return json.dumps(_num(report), indent=2, sort_keys=False) + "\n"


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    cmd = args.command
    overrides = {k: getattr(args, k, None) for k in ("amplitudes", "trials", "periods", "grid", "C", "q", "amplitude")}
    if overrides.get("amplitudes") is not None:
        overrides["amplitudes"] = list(overrides["amplitudes"])
    try:
        cfg = load_config(cmd, args.config, overrides)
        seed = args.seed if args.seed is not None else cfg.pop("seed", None)
        cfg.pop("seed", None)
        cfg_workers = cfg.pop("workers", None)
        if args.workers is not None:
            workers = args.workers
        elif cfg_workers is not None:
            workers = cfg_workers
        else:
            try:
                workers = default_workers()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer")
        if cmd in STOCHASTIC and seed is None:
            raise ConfigError(f"{cmd} needs a master seed (--seed or 'seed' in the config)")
        if seed is not None and not (0 <= int(seed) < 2 ** 64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        fmt = args.format or ("csv" if cmd == "sweep" else "json")
        report, code = COMMANDS[cmd](cfg, seed, workers)
        text = render(report, fmt)
    except ConfigError as exc:
        print(f"shearmix {cmd}: {exc}", file=sys.stderr)
        ap.print_usage(sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
