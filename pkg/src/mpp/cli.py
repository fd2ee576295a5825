"""Command-line front-end.

    mpp solve          --config cfg.json --target=X,Y,Z --out path.csv [--summary res.json]
    mpp integrate      --config cfg.json --v0 1,0 --chi0 0 --T 3.14 --steps 4000 [--out path.csv]
    mpp closed-form-s2 --config cfg.json --out fan.csv [--summary fan.json]
    mpp sample         --config cfg.json --out samples.csv
    mpp estimate       --manifold cfg.json --samples samples.csv --out result.json
    mpp lattice-s2     --amax 1.0 --na 8 --npsi 16 --nt 24 --out lattice.bin
    mpp estimate-s2    --lattice lattice.bin --samples samples.csv --out result.json
    mpp verify         --config cfg.json

Exit codes: 0 success, 1 numerical non-convergence or failed verification
(best iterate still written), 2 configuration or I/O error.  With
``--json-errors`` every error is also reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .development import CovarianceSpec, sample_anisotropic
from .dynamics import hamiltonian_flow, integrate_mpp
from .elliptic import elliptic_K, jacobi_sncndn
from .errors import ConfigError, IntegrationError, MppError, NumericalError, UnsupportedManifoldError
from .geometry import Manifold, manifold_from_config
from .io import FLOAT_FMT, dumps_json, header_comment, path_summary, read_samples_csv, write_json, write_path_csv, write_samples_csv
from .records import sup_distance

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    text = resources.files("mpp").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _fill_defaults(schema, obj):
    for key, sub in schema.get("properties", {}).items():
        if key in obj:
            if sub.get("type") == "object" and isinstance(obj[key], dict):
                _fill_defaults(sub, obj[key])
        elif "default" in sub:
            obj[key] = json.loads(json.dumps(sub["default"]))
        elif sub.get("type") == "object":
            obj[key] = {}
            _fill_defaults(sub, obj[key])
    return obj


def validate_config(cfg) -> dict:
    """Validate against the shipped schema and fill in its documented defaults."""
    schema = load_schema()
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    return _fill_defaults(schema, json.loads(json.dumps(cfg)))


def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate_config(cfg)


def build_covariance(m: Manifold, cfg: dict) -> CovarianceSpec:
    c = cfg.get("covariance", {})
    base = np.asarray(c["base"], dtype=float) if "base" in c else m.default_point()
    base = m.check_point(base)
    if "frame" in c:
        F = np.asarray(c["frame"], dtype=float).T
    else:
        F = m.tangent_basis(base)
    lam = c.get("lambdas", [1.0] * m.dim)
    return CovarianceSpec.create(m, base, F, lam)


def _vector(text, name):
    text = text.strip()
    try:
        if text.startswith("["):
            vals = json.loads(text)
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
        arr = np.asarray(vals, dtype=float).ravel()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"--{name}: cannot parse {text!r} as a vector") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"--{name}: non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _emit(obj, path):
    if path is None:
        sys.stdout.write(dumps_json(obj))
    else:
        write_json(obj, path)


def _setup(args):
    cfg = load_config(args.config)
    m = manifold_from_config(cfg["manifold"])
    return cfg, m, build_covariance(m, cfg)


def cmd_integrate(args):
    cfg, m, cov = _setup(args)
    d = m.dim
    T = cfg["solver"]["T"] if args.T is None else args.T
    steps = cfg["solver"]["n_steps"] if args.steps is None else args.steps
    v0 = _vector(args.v0, "v0")
    nchi = d * (d - 1) // 2
    chi0 = _vector(args.chi0, "chi0") if args.chi0 is not None else np.zeros(nchi)
    if len(v0) != d:
        raise ConfigError(f"--v0 needs {d} components")
    if nchi == 0 and not np.any(chi0):
        chi0 = np.zeros(0)
    if len(chi0) != nchi:
        raise ConfigError(f"--chi0 needs {nchi} components")
    rec = integrate_mpp(m, cov, v0, chi0, T, steps)
    if args.out:
        write_path_csv(rec, args.out)
    _emit(path_summary(rec), args.summary)
    return EXIT_OK


def cmd_solve(args):
    from .shooting import ShootingProblem, shoot

    cfg, m, cov = _setup(args)
    s = cfg["solver"]
    over = {"T": args.T, "n_steps": args.steps, "tol": args.tol, "max_iters": args.max_iters, "n_starts": args.starts}
    for k, v in over.items():
        if v is not None:
            s[k] = v
    target = _vector(args.target, "target")
    p = ShootingProblem(m, cov, target, T=s["T"], tol=s["tol"], max_iters=s["max_iters"], n_steps=s["n_steps"],
                        n_starts=s["n_starts"], method=s["method"], learning_rate=s["learning_rate"])
    res = shoot(p)
    write_path_csv(res.path, args.out)
    summary = {
        "v0": res.v0, "chi0": res.chi0, "residual": res.residual, "iterations": res.iterations,
        "converged": res.converged, "c": res.c, "energy": res.energy, "length": res.length,
        "endpoint": res.path.endpoint, "chi_T": res.path.chi_end,
        "target": target, "solutions": [{"v0": v, "chi0": c, "energy": e} for v, c, e in res.solutions],
    }
    _emit(summary, args.summary)
    if not res.converged:
        raise NumericalError(f"shooting did not converge: residual {res.residual:.3e} > tol {p.tol:.1e}")
    return EXIT_OK


def cmd_closed_form(args):
    from .surfaces import constant_curvature, mpp_constant_curvature

    cfg, m, cov = _setup(args)
    constant_curvature(m)
    if m.dim != 2:
        raise UnsupportedManifoldError("closed-form fans are defined on surfaces only")
    fan = cfg["fan"]
    rows, ends = [], []
    for branch in fan["branches"]:
        for psi0 in fan["psi"]:
            for T in fan["T"]:
                rec = mpp_constant_curvature(m, cov, psi0, branch, T, fan["n_steps"])
                for k in range(len(rec.t)):
                    rows.append([branch, psi0, T, rec.t[k], *rec.points[k], *rec.v[k], rec.chi[k, 0]])
                ends.append({"branch": branch, "psi0": psi0, "T": T, "endpoint": rec.endpoint,
                             "method": rec.meta.get("method"), "k": rec.meta.get("k")})
    n = m.ambient_dim
    header = ["branch", "psi0", "T", "t"] + [f"x{i}" for i in range(n)] + ["v0", "v1", "chi0"]
    with Path(args.out).open("w") as fh:
        fh.write(header_comment(m) + "\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(FLOAT_FMT % x for x in r) + "\n")
    _emit({"lambdas": cov.lambdas, "paths": ends}, args.summary)
    return EXIT_OK


def cmd_sample(args):
    cfg, m, cov = _setup(args)
    s = cfg["sampling"]
    if args.seed is not None:
        s["seed"] = args.seed
    if args.n is not None:
        s["n_samples"] = args.n
    pts = sample_anisotropic(m, cov, t=s["t"], n_steps=s["n_steps"], n_samples=s["n_samples"],
                             rng_seed=s["seed"], scheme=s["scheme"])
    info = f"seed={s['seed']} t={s['t']!r} n_steps={s['n_steps']} scheme={s['scheme']} lambdas={list(map(float, cov.lambdas))}"
    write_samples_csv(pts, args.out, m, extra_header=info)
    return EXIT_OK


def _check_samples_manifold(meta, m):
    if meta is not None and manifold_from_config(meta).to_dict() != m.to_dict():
        raise ConfigError(f"samples were drawn on {meta}, not on {m.to_dict()}")


def _estimation_summary(m, res):
    return {
        "mean": res.mean, "C": res.C, "lambdas": res.cov.lambdas, "frame": res.cov.vectors.T,
        "sigma_ambient": res.cov.matrix(m), "lambdas_unit": res.cov_unit.lambdas,
        "objective": res.objective, "coverage": res.coverage, "iterations": res.iterations,
        "converged": res.converged, "sq_dists": res.sq_dists,
        "meta": {k: v for k, v in res.meta.items() if isinstance(v, (int, float, bool, str, list, np.ndarray))},
    }


def cmd_estimate(args):
    from .estimation import estimate

    cfg = load_config(args.config)
    m = manifold_from_config(cfg["manifold"])
    pts, meta = read_samples_csv(args.samples)
    _check_samples_manifold(meta, m)
    e = cfg["estimation"]
    init = None
    if "covariance" in cfg and "base" in cfg["covariance"]:
        cov = build_covariance(m, cfg)
        init = (cov.base, cov)
    res = estimate(m, pts, init=init, max_iters=e["max_iters"], tol=e["tol"], n_steps=e["n_steps"],
                   inner_steps=e["inner_steps"])
    _emit(_estimation_summary(m, res), args.out)
    if not res.converged:
        raise NumericalError(f"estimation did not converge in {res.iterations} iterations")
    return EXIT_OK


def cmd_lattice(args):
    from .s2lattice import build_s2_lattice, save_lattice

    lat_cfg = load_config(args.config)["lattice"] if args.config else validate_config({"manifold": {"kind": "sphere"}})["lattice"]
    for key, val in (("a_max", args.amax), ("n_a", args.na), ("n_psi", args.npsi), ("n_T", args.nt), ("max_step", args.max_step)):
        if val is not None:
            lat_cfg[key] = val
    validate_config({"manifold": {"kind": "sphere"}, "lattice": lat_cfg})
    lat = build_s2_lattice(**lat_cfg)
    save_lattice(lat, args.out)
    return EXIT_OK


def cmd_estimate_s2(args):
    from .s2lattice import estimate_s2, load_lattice

    lat = load_lattice(args.lattice)
    pts, meta = read_samples_csv(args.samples)
    if meta is not None and (meta.get("kind") != "sphere" or float(meta.get("r", 1.0)) != 1.0 or int(meta.get("d", 2)) != 2):
        raise ConfigError("the lattice estimator needs samples on the unit 2-sphere")
    opts = load_config(args.config)["estimate_s2"] if args.config else {"grid": [10, 10, 10], "refine": True}
    if args.grid is not None:
        opts["grid"] = [int(g) for g in _vector(args.grid, "grid")]
    res = estimate_s2(lat, pts, grid=tuple(opts["grid"]), refine=opts["refine"])
    m = manifold_from_config({"kind": "sphere"})
    _emit(_estimation_summary(m, res), args.out)
    return EXIT_OK


def run_verify(m: Manifold, cov: CovarianceSpec, seed=0, n_cases=5, T=1.0, n_steps=1000) -> list:
    """Invariant suite: first integral, Hamiltonian oracle, closed form (surfaces of constant curvature), elliptic identities."""
    rng = np.random.default_rng(seed)
    d = m.dim
    checks = []

    def add(name, value, bound):
        checks.append({"check": name, "value": float(value), "bound": bound, "passed": bool(value <= bound)})

    drift, ham = 0.0, 0.0
    for _ in range(n_cases):
        v0 = rng.normal(size=d)
        chi0 = 0.3 * rng.normal(size=d * (d - 1) // 2)
        rec = integrate_mpp(m, cov, v0, chi0, T, n_steps)
        drift = max(drift, rec.first_integral_drift())
        orc = hamiltonian_flow(m, cov, v0, chi0, T, n_steps)
        ham = max(ham, sup_distance(rec, orc))
    add("first_integral_drift", drift, 1e-7)
    add("hamiltonian_oracle_sup_distance", ham, 1e-7)

    try:
        from .surfaces import constant_curvature, mpp_constant_curvature

        constant_curvature(m)
        closed_ok = d == 2
    except UnsupportedManifoldError:
        closed_ok = False
    if closed_ok:
        worst = 0.0
        for _ in range(n_cases):
            psi0 = rng.uniform(-2.5, 2.5)
            br = int(rng.choice([1, -1]))
            cf = mpp_constant_curvature(m, cov, psi0, br, T, n_steps)
            rk = integrate_mpp(m, cov, cf.v[0], cf.chi[0], T, n_steps)
            worst = max(worst, sup_distance(cf, rk))
        add("closed_form_sup_distance", worst, 1e-5)

    ident, kerr = 0.0, 0.0
    from scipy.integrate import quad

    for k in (0.0, 0.3, 0.7, 0.95):
        u = np.linspace(-3.0, 3.0, 61)
        sn, cn, dn = jacobi_sncndn(u, k)
        ident = max(ident, float(np.max(np.abs(dn**2 + k**2 * sn**2 - 1))), float(np.max(np.abs(sn**2 + cn**2 - 1))))
        ref = quad(lambda th: 1.0 / math.sqrt(1.0 - (k * math.sin(th)) ** 2), 0.0, math.pi / 2, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        kerr = max(kerr, abs(float(elliptic_K(k)) - ref))
    add("elliptic_identities", ident, 1e-12)
    add("elliptic_K_quadrature", kerr, 1e-12)
    return checks


def cmd_verify(args):
    cfg, m, cov = _setup(args)
    checks = run_verify(m, cov, seed=cfg["sampling"]["seed"], T=cfg["solver"]["T"], n_steps=cfg["solver"]["n_steps"])
    ok = all(c["passed"] for c in checks)
    _emit({"manifold": m.to_dict(), "passed": ok, "checks": checks}, args.summary)
    if not ok:
        raise NumericalError("verification failed: " + ", ".join(c["check"] for c in checks if not c["passed"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpp", description="Most probable paths of anisotropic Brownian motions.")
    p.add_argument("--json-errors", action="store_true", help="also report errors as JSON on stderr (accepted anywhere)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cfg_arg(sp, required=True):
        sp.add_argument("--config", required=required, help="run configuration (JSON, see schema)")

    sp = sub.add_parser("solve", help="shoot an MPP to a target point")
    cfg_arg(sp)
    sp.add_argument("--target", required=True, help="target in embedding coordinates, e.g. --target=0,1,0")
    sp.add_argument("--out", required=True, help="path CSV")
    sp.add_argument("--summary", help="JSON summary (default: stdout)")
    sp.add_argument("--T", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--starts", type=int)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("integrate", help="integrate the MPP equations from initial data")
    cfg_arg(sp)
    sp.add_argument("--v0", required=True, help="initial velocity in eigenframe components")
    sp.add_argument("--chi0", help="strict upper triangle of chi(0) (default 0)")
    sp.add_argument("--T", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--out", help="path CSV")
    sp.add_argument("--summary", help="JSON summary (default: stdout)")
    sp.set_defaults(func=cmd_integrate)

    sp = sub.add_parser("closed-form-s2", help="fan of closed-form MPPs on S^2(r) or H^2(r)")
    cfg_arg(sp)
    sp.add_argument("--out", required=True, help="fan CSV")
    sp.add_argument("--summary", help="JSON endpoints (default: stdout)")
    sp.set_defaults(func=cmd_closed_form)

    sp = sub.add_parser("sample", help="sample the anisotropic normal distribution")
    cfg_arg(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("estimate", help="estimate mean and covariance from samples")
    sp.add_argument("--manifold", "--config", dest="config", required=True)
    sp.add_argument("--samples", required=True)
    sp.add_argument("--out", help="result JSON (default: stdout)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("lattice-s2", help="precompute the unit-sphere MPP lattice")
    cfg_arg(sp, required=False)
    sp.add_argument("--amax", type=float)
    sp.add_argument("--na", type=int)
    sp.add_argument("--npsi", type=int)
    sp.add_argument("--nt", type=int)
    sp.add_argument("--max-step", dest="max_step", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_lattice)

    sp = sub.add_parser("estimate-s2", help="lattice estimator on the unit sphere")
    cfg_arg(sp, required=False)
    sp.add_argument("--lattice", required=True)
    sp.add_argument("--samples", required=True)
    sp.add_argument("--grid", help="Euler grid sizes, e.g. 10,10,10")
    sp.add_argument("--out", help="result JSON (default: stdout)")
    sp.set_defaults(func=cmd_estimate_s2)

    sp = sub.add_parser("verify", help="run the invariant self-check suite")
    cfg_arg(sp)
    sp.add_argument("--summary", help="JSON report (default: stdout)")
    sp.set_defaults(func=cmd_verify)
    return p


def _exit_code(exc):
    if isinstance(exc, (NumericalError, IntegrationError)):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    argv = [a for a in argv if a != "--json-errors"]
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (MppError, OSError, jsonschema.ValidationError, ValueError) as exc:
        code = _exit_code(exc)
        kind = type(exc).__name__
        sys.stderr.write(f"mpp: error: {exc}\n")
        if json_errors:
            err = {"error": kind, "message": str(exc), "exit_code": code}
            if isinstance(exc, IntegrationError) and exc.suggested_steps:
                err["suggested_steps"] = exc.suggested_steps
            sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return code


def dispatch(argv) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
