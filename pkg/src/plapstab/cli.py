"""Batch front door: one JSON config in, a CSV table + JSON report (+ SVG) out.

Usage:
    plapstab CONFIG.json [--set key.sub=value ...] [--out DIR]

Exit status: 0 all checks pass, 1 some check failed, 2 configuration or IO error.
"""
import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict

import jsonschema
import numpy as np

from .bubble import Bubble, bubble_field, sobolev_level
from .deficit import deficit_report
from .errors import DomainError
from .extraction import ExtractionConfig, extract
from .fields import Paraboloid, p_laplacian_values
from .lab import TABLE_COLUMNS, SweepConfig, make_perturbed, sweep
from .params import Params, make_params
from .pfunction import c_monotone_check, identity_residual, matrix_inequality_check, v_of_u
from .quadrature import QuadConfig, norms

log = logging.getLogger("plapstab")

OUTPUT_ENV = "PLAPSTAB_OUTPUT_DIR"
COMMANDS = ("bubble-check", "deficit", "extract", "sweep", "identity-check", "matrix-check")

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "params": {"type": "object", "additionalProperties": False,
                   "properties": {"n": {"type": "integer"}, "p": _num}},
        "family": {"type": "object", "additionalProperties": False,
                   "properties": {"lambda": _num, "lambdas": {"type": "array", "items": _num},
                                  "epsilon": _num,
                                  "epsilon_grid": {"type": "array", "items": _num},
                                  "phi_radius": _num}},
        "quad": {"type": "object", "additionalProperties": False,
                 "properties": {"rel_tol": _num, "abs_tol": _num, "r_cut": _num,
                                "tail_policy": {"enum": ["analytic-power-tail", "hard-truncate"]},
                                "max_subdivisions": {"type": "integer"}}},
        "schedule": {"type": "object", "additionalProperties": False,
                     "properties": {"t": _opt_num, "alpha": _num, "r_big": _opt_num}},
        "matrix": {"type": "object", "additionalProperties": False,
                   "properties": {"trials": {"type": "integer"},
                                  "dims": {"type": "array", "items": {"type": "integer"}}}},
        "identity": {"type": "object", "additionalProperties": False,
                     "properties": {"h": _num, "radii": {"type": "integer"}}},
        "dictionary_size": {"type": "integer"},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"dir": {"type": "string"}, "table": {"type": "string"},
                                  "report": {"type": "string"}, "plot": {"type": "boolean"}}},
        "seed": {"type": "integer"},
    },
}

DEFAULTS = {
    "params": {"n": 4, "p": 2.0},
    "family": {"lambda": 1.0, "lambdas": [0.5, 1.0, 2.0], "epsilon": 1e-3,
               "epsilon_grid": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4], "phi_radius": 1.0},
    "quad": {},
    "schedule": {"t": None, "alpha": 0.5, "r_big": None},
    "matrix": {"trials": 10000, "dims": [2, 3, 4, 5, 6]},
    "identity": {"h": 1e-4, "radii": 20},
    "dictionary_size": 16,
    "output": {"table": "results.csv", "report": "report.json", "plot": True},
    "seed": 0,
}


class ConfigError(Exception):
    pass


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg, overrides):
    cfg = copy.deepcopy(cfg)
    applied = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for k in parts[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(text)
        applied.append({"key": key, "value": node[parts[-1]]})
    return cfg, applied


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            raw = json.load(fh, parse_constant=lambda c: (_ for _ in ()).throw(
                ConfigError(f"non-standard JSON constant {c}")))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg, applied = apply_overrides(raw, overrides)
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} at {list(exc.absolute_path)}") from exc
    full = _merge(DEFAULTS, cfg)
    try:
        params = make_params(full["params"]["n"], full["params"]["p"])
        quad = QuadConfig(**full["quad"])
        ExtractionConfig(alpha=full["schedule"]["alpha"], t=full["schedule"]["t"],
                         r_big=full["schedule"]["r_big"])
        if full["command"] == "sweep":
            SweepConfig(params, tuple(full["family"]["epsilon_grid"]),
                        full["family"]["phi_radius"], full["family"]["lambda"], quad)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config values: {exc}") from exc
    return full, applied, params, quad


def _check(name, ok, value, tol):
    return {"name": name, "pass": bool(ok), "value": _clean(value), "tolerance": tol}


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# -- commands: each returns (columns, rows, records, slopes, checks) -------------

def cmd_bubble_check(cfg, P, quad):
    lvl = sobolev_level(P, quad)
    cols = ["lambda", "max_residual", "grad_energy", "lpstar_mass", "rel_gap", "s_pow_n"]
    rows, checks = [], []
    r = np.logspace(-3, 3, 64)
    for lam in cfg["family"]["lambdas"]:
        U = bubble_field(Bubble(lam), P)
        rhs = U(r) ** (P.p_star - 1.0)
        res = float(np.max(np.abs(p_laplacian_values(U, P, r) + rhs) / rhs))
        g = norms(U, "grad_lp", P, quad, power=True)
        m = norms(U, "lpstar", P, quad, power=True)
        gap = abs(g - m) / g
        rows.append([lam, res, g, m, gap, lvl.s_pow_n])
        checks += [_check(f"residual(lambda={lam})", res < 1e-8, res, 1e-8),
                   _check(f"energy_identity(lambda={lam})", gap < 1e-6, gap, 1e-6),
                   _check(f"scale_invariance(lambda={lam})",
                          abs(g - lvl.s_pow_n) < 1e-6 * lvl.s_pow_n,
                          abs(g - lvl.s_pow_n) / lvl.s_pow_n, 1e-6)]
    return cols, rows, [dict(zip(cols, x)) for x in rows], {}, checks


def cmd_deficit(cfg, P, quad):
    fam = cfg["family"]
    u, k = make_perturbed(P, fam["lambda"], fam["epsilon"], fam["phi_radius"])
    rep = deficit_report(u, k, P, quad)
    cols = ["epsilon", "kappa0", "kappa0_energy", "deficit_cfm", "sobolev_deficit", "energy",
            "window_lo", "window_hi", "energy_window_ok"]
    row = [fam["epsilon"], rep.kappa0, rep.kappa0_energy, rep.deficit_cfm, rep.sobolev_deficit,
           rep.energy, rep.energy_window[0], rep.energy_window[1], int(rep.energy_window_ok)]
    gap = abs(rep.kappa0 - rep.kappa0_energy) / abs(rep.kappa0)
    checks = [_check("deficit_nonnegative", rep.deficit_cfm >= 0, rep.deficit_cfm, 0.0),
              _check("sobolev_deficit_nonnegative", rep.sobolev_deficit >= -1e-9,
                     rep.sobolev_deficit, 1e-9),
              _check("kappa0_quotients_agree", gap < 1e-6, gap, 1e-6)]
    return cols, [row], [_clean(asdict(rep))], {}, checks


def cmd_extract(cfg, P, quad):
    fam, sch = cfg["family"], cfg["schedule"]
    u, k = make_perturbed(P, fam["lambda"], fam["epsilon"], fam["phi_radius"])
    ecfg = ExtractionConfig(alpha=sch["alpha"], t=sch["t"], r_big=sch["r_big"])
    rep = extract(u, k, P, quad, ecfg)
    cols = ["epsilon", "lambda_hat", "p_bar", "v_at_x0", "t_used", "r_big", "err_interior",
            "err_exterior", "err_total", "deficit"]
    row = [fam["epsilon"], rep.lam, rep.p_bar, rep.v_at_x0, rep.t_used, rep.schedule.r_big,
           rep.err_interior, rep.err_exterior, rep.err_total, rep.deficit]
    p = P.p
    split = abs(rep.err_total ** p - rep.err_interior ** p - rep.err_exterior ** p)
    checks = [_check("lambda_positive", rep.lam > 0, rep.lam, 0.0),
              _check("error_split", split <= 1e-12 * max(rep.err_total ** p, 1e-300) + 1e-300,
                     split, 1e-12)]
    if fam["epsilon"] == 0:
        rel = abs(rep.lam / fam["lambda"] - 1.0)
        checks.append(_check("round_trip_lambda", rel < 1e-6, rel, 1e-6))
    else:
        # ||grad(u - U)||_p = eps ||grad phi||_p
        bound = 10 * norms(u - bubble_field(Bubble(fam["lambda"]), P), "grad_lp", P, quad)
        checks.append(_check("err_total_O(eps)", rep.err_total <= bound, rep.err_total, bound))
    return cols, [row], [_clean(asdict(rep))], {}, checks


def sweep_checks(res):
    s = res.slopes
    ok = [r for r in res.records if r.error is None]
    ext = [r.extraction_error for r in res.records]
    mono = all(b <= a for a, b in zip(ext, ext[1:]))
    checks = [
        _check("all_records_ok", len(ok) == len(res.records), len(ok), len(res.records)),
        _check("lhs_norm_slope", abs(s["lhs_norm"]["slope"] - 1) <= 1e-6, s["lhs_norm"]["slope"], 1e-6),
        _check("deficit_cfm_slope", abs(s["deficit_cfm"]["slope"] - 1) <= 0.1,
               s["deficit_cfm"]["slope"], 0.1),
        _check("dual_lower_bound_slope", abs(s["dual_lower_bound"]["slope"] - 1) <= 0.15,
               s["dual_lower_bound"]["slope"], 0.15),
        _check("sobolev_deficit_slope", abs(s["sobolev_deficit"]["slope"] - 2) <= 0.3,
               s["sobolev_deficit"]["slope"], 0.3),
        _check("extraction_error_monotone", mono, ext, 0.0),
        _check("extraction_vs_deficit_slope_positive",
               s["extraction_error_vs_deficit"]["slope"] > 0,
               s["extraction_error_vs_deficit"]["slope"], 0.0),
        _check("dual_bound_below_ceiling", all(r.dual_lower_bound <= r.dual_ceiling for r in ok),
               [r.dual_lower_bound / r.dual_ceiling for r in ok], 1.0),
        _check("lhs_norm_direct", all(abs(r.lhs_direct / r.lhs_norm - 1) < 1e-8 for r in ok),
               [r.lhs_direct / r.lhs_norm - 1 for r in ok], 1e-8),
        _check("quadratic_stability_constant_positive", res.stability_constant > 0,
               res.stability_constant, 0.0),
    ]
    return checks


def cmd_sweep(cfg, P, quad):
    fam, sch = cfg["family"], cfg["schedule"]
    scfg = SweepConfig(P, tuple(fam["epsilon_grid"]), fam["phi_radius"], fam["lambda"], quad,
                       ExtractionConfig(alpha=sch["alpha"], t=sch["t"], r_big=sch["r_big"]),
                       cfg["seed"], cfg["dictionary_size"])
    res = sweep(scfg)
    rows = [[getattr(r, c) for c in TABLE_COLUMNS] for r in res.records]
    records = [_clean(asdict(r)) for r in res.records]
    slopes = dict(res.slopes)
    slopes["quadratic_stability_constant"] = res.stability_constant
    return list(TABLE_COLUMNS), rows, records, slopes, sweep_checks(res)


def identity_combos():
    P = make_params(4, 2)
    vb = v_of_u(bubble_field(Bubble(1.0), P), P).v
    return [("1+r^2,p=2,n=3", Paraboloid(1.0, 1.0, 2.0), 2.0, 3, (0.1, 3.0)),
            ("1+r^2,p=4,n=4", Paraboloid(1.0, 1.0, 2.0), 4.0, 4, (0.1, 3.0)),
            ("bubble-v,p=2,n=4", vb, 2.0, 4, (0.25, 3.0))]


def cmd_identity_check(cfg, P, quad):
    h, m = cfg["identity"]["h"], cfg["identity"]["radii"]
    cols, rows, checks = ["combo", "r", "lhs", "rhs", "residual"], [], []
    for name, w, pp, n, (lo, hi) in identity_combos():
        r = np.linspace(lo, hi, m)
        ir = identity_residual(w, pp, n, r, h=h)
        rows += [[name, a, b, c, d] for a, b, c, d in zip(r, ir.lhs, ir.rhs, ir.residual)]
        checks.append(_check(f"identity[{name}]", ir.max_residual < 1e-5, ir.max_residual, 1e-5))
    return cols, rows, [dict(zip(cols, x)) for x in rows], {}, checks


def cmd_matrix_check(cfg, P, quad):
    trials, seed = cfg["matrix"]["trials"], cfg["seed"]
    cols = ["dim", "trials", "violations_antisym", "violations_trace", "max_slack_antisym",
            "max_slack_trace"]
    rows, checks = [], []
    for d in cfg["matrix"]["dims"]:
        rep = matrix_inequality_check(d, trials, seed)
        rows.append([d, trials, rep.violations_antisym, rep.violations_trace,
                     rep.max_slack_antisym, rep.max_slack_trace])
        checks.append(_check(f"matrix_dim{d}", rep.passed,
                             rep.violations_antisym + rep.violations_trace, 1e-10))
    mono, _, _ = c_monotone_check(100)
    checks.append(_check("c_rho_decreasing", mono, mono, 0.0))
    return cols, rows, [dict(zip(cols, x)) for x in rows], {}, checks


HANDLERS = {"bubble-check": cmd_bubble_check, "deficit": cmd_deficit, "extract": cmd_extract,
            "sweep": cmd_sweep, "identity-check": cmd_identity_check,
            "matrix-check": cmd_matrix_check}


# -- output ----------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def render_table(cols, rows, quad_id):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(list(cols) + ["quad_id"])
    for row in rows:
        wr.writerow([_fmt(x) for x in row] + [quad_id])
    return buf.getvalue()


def render_sweep_plot(records, slopes, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "plapstab"
    eps = [r["epsilon"] for r in records]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for key in ("lhs_norm", "deficit_cfm", "sobolev_deficit", "projection_distance",
                "extraction_error", "dual_lower_bound"):
        ys = [r[key] for r in records]
        if all(isinstance(y, float) and y > 0 for y in ys):
            ax.loglog(eps, ys, "o-", label=f"{key} (slope {slopes[key]['slope']:.3f})")
    ax.set_xlabel("epsilon")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run(cfg, applied, P, quad, outdir):
    try:
        cols, rows, records, slopes, checks = HANDLERS[cfg["command"]](cfg, P, quad)
    except (ValueError, ArithmeticError) as exc:
        # a numerical failure is a failed check, reported like any other
        log.error("%s failed: %s", cfg["command"], exc)
        cols, rows, records, slopes = ["error"], [[f"{type(exc).__name__}: {exc}"]], [], {}
        checks = [_check("computation", False, f"{type(exc).__name__}: {exc}", 0.0)]
    os.makedirs(outdir, exist_ok=True)
    out = cfg["output"]
    table = render_table(cols, rows, quad.ident)
    report = {"config_echo": cfg, "overrides": applied, "quad_id": quad.ident,
              "records": records, "slopes": _clean(slopes), "checks": checks}
    with open(os.path.join(outdir, out["table"]), "w", newline="") as fh:
        fh.write(table)
    with open(os.path.join(outdir, out["report"]), "w") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg["command"] == "sweep" and out["plot"]:
        render_sweep_plot(records, slopes, os.path.join(outdir, "sweep.svg"))
    failed = [c["name"] for c in checks if not c["pass"]]
    status = "PASS" if not failed else "FAIL"
    print(f"{status} {cfg['command']}: {len(checks) - len(failed)}/{len(checks)} checks"
          + (f" (failed: {', '.join(failed)})" if failed else ""))
    return 0 if not failed else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="plapstab", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="strict JSON run configuration")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted-key override, e.g. family.epsilon=1e-4 (repeatable)")
    ap.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./plapstab-out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, applied, P, quad = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for o in applied:
        log.info("override %s = %r", o["key"], o["value"])
    outdir = args.out or cfg["output"].get("dir") or os.environ.get(OUTPUT_ENV) or "plapstab-out"
    try:
        return run(cfg, applied, P, quad, outdir)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
