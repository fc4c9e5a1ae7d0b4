"""Command-line driver: configuration, scans and deterministic CSV/JSON reports."""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
import hashlib
import io
import json
import math
import os
import sys

import numpy as np
import yaml

from . import __version__
from .errors import DegenerateCritical
from . import certifier as cert
from . import cocycle as cc
from . import frequency as fq
from . import induction as ind
from . import potential as pot
from . import spectrum as sp

OUTPUT_ENV = "COCYCLELAB_OUTPUT_DIR"


@dataclass
class RunConfig:
    family: str = "schrodinger"
    potential: str = "cos"
    potential_eps: float = 0.0
    potential_value: float = 0.0
    potential_path: str | None = None
    amplitude: float = 1.0
    alpha: str = "golden"
    coupling: float = 5.0
    k: int = 0
    window: list = field(default_factory=lambda: [-7.0, 7.0])
    grid: int = 200
    param: float = 0.0
    x_grid: int = 512
    n_min: int = 8
    n_max: int = 256
    c: float = 1.0
    rho: float = math.exp(0.5)
    augment_max: int = 64
    oracle_N: list = field(default_factory=lambda: [200])
    oracle_phases: int = 8
    oracle_tol: float = sp.ORACLE_TOL
    lyapunov_steps: int = 0
    lyapunov_samples: int = 16
    method: str = "ueg"
    interval: list = field(default_factory=lambda: [0.0, 1.0])
    gap: float = 0.1
    M: int = 64
    min_return: int = 1
    levels: int = 2
    tau: float = 2.1
    epsilon: float = 0.5
    q_min: int = 5
    nt: int = 16
    resonance_k: int | None = None
    cf_depth: int = 30
    seed: int = 0
    output_dir: str = "out"

    def canonical(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    if key not in _FIELD_TYPES:
        raise SystemExit(f"unknown config key {key!r}")
    if isinstance(value, str):
        value = yaml.safe_load(value)
    kind = _FIELD_TYPES[key]
    if value is None:
        return None
    if kind == "float":
        return float(value)
    if kind == "int":
        return int(value)
    if kind.startswith("int |"):
        return int(value)
    if kind == "str" or kind.startswith("str |"):
        return str(value)
    if kind == "list":
        return list(value) if isinstance(value, (list, tuple)) else [value]
    return value


def load_config(path=None, overrides=()):
    data = {}
    if path:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    cfg = RunConfig()
    for key, value in data.items():
        setattr(cfg, key, _coerce(key, value))
    for item in overrides:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        setattr(cfg, key.strip(), _coerce(key.strip(), value))
    return cfg


def parse_alpha(text):
    """'golden', a decimal, or 'cf:a1,a2,...' for [0; a1, a2, ...]."""
    text = str(text).strip()
    if text == "golden":
        return fq.GOLDEN
    if text.startswith("cf:"):
        terms = [int(a) for a in text[3:].split(",") if a.strip()]
        val = Fraction(0)
        for a in reversed(terms):
            val = 1 / (a + val)
        return float(val)
    return float(text)


def build_function(cfg):
    f = pot.by_name(cfg.potential, eps=cfg.potential_eps, value=cfg.potential_value, path=cfg.potential_path)
    return f if cfg.amplitude == 1.0 else f.scaled(cfg.amplitude)


def build_spec(cfg, param=0.0):
    alpha = parse_alpha(cfg.alpha)
    spec = cc.CocycleSpec(cfg.family, build_function(cfg), float(cfg.coupling), param, k=int(cfg.k),
                          alpha=alpha if cfg.family == "szego" else None)
    return spec.validate(), alpha


def n_list(cfg):
    ns = [2**j for j in range(0, 31) if cfg.n_min <= 2**j <= cfg.n_max]
    return tuple(ns + [-n for n in ns])


def budgets(cfg):
    return sp.ScanBudgets(x_grid_size=cfg.x_grid, n_list=n_list(cfg), c=cfg.c, rho=cfg.rho,
                          augment_max=cfg.augment_max, oracle_N=tuple(cfg.oracle_N),
                          oracle_phases=cfg.oracle_phases, oracle_tol=cfg.oracle_tol,
                          lyapunov_steps=cfg.lyapunov_steps, lyapunov_samples=cfg.lyapunov_samples)


def param_grid(cfg):
    if cfg.grid <= 0:
        return []
    return [float(v) for v in np.linspace(cfg.window[0], cfg.window[1], cfg.grid)]


# ---------------------------------------------------------------- output

def output_dir(cfg, cli_value=None):
    path = os.environ.get(OUTPUT_ENV) or cli_value or cfg.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dump_json(path, payload, cfg):
    body = {"config_hash": cfg.digest(), "version": __version__, "config": asdict(cfg), **payload}
    with open(path, "w") as fh:
        json.dump(_jsonable(body), fh, sort_keys=True, indent=2)
        fh.write("\n")


def dump_csv(path, header, rows, cfg):
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.digest()} version={__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                    for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


# ---------------------------------------------------------------- parallel scans

def _certify_chunk(args):
    cfg_dict, params = args
    cfg = RunConfig(**cfg_dict)
    spec, alpha = build_spec(cfg)
    return sp.certify_points(spec, alpha, params, budgets(cfg))


def _lyapunov_chunk(args):
    cfg_dict, params = args
    cfg = RunConfig(**cfg_dict)
    spec, alpha = build_spec(cfg)
    return [(e.value, e.stderr) for e in sp.lyapunov_batch(spec, alpha, params, cfg.lyapunov_steps,
                                                          cfg.lyapunov_samples)]


def _chunks(grid, jobs, size=64):
    size = max(1, min(size, math.ceil(len(grid) / max(jobs, 1)) if grid else 1))
    return [grid[i:i + size] for i in range(0, len(grid), size)]


def run_parallel(func, cfg, grid, jobs):
    """Apply func to grid chunks, in a process pool when jobs > 1, merging in grid order."""
    tasks = [(asdict(cfg), chunk) for chunk in _chunks(grid, jobs)]
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


def _merge_certified(parts):
    status, rates, lyap = [], [], []
    for s, r, l in parts:
        status += s
        rates += r
        lyap += l
    return status, rates, lyap


# ---------------------------------------------------------------- commands

def cmd_freq(cfg, args):
    alpha = parse_alpha(cfg.alpha)
    cf = fq.expand(alpha, cfg.cf_depth)
    est = fq.diophantine_estimate(cf, cfg.tau, min(cf.denominators[-1], 10**6))
    rows = [(k, cf.partial_quotients[k - 1] if k else "", p, q) for k, (p, q) in enumerate(cf.convergents)]
    out = output_dir(cfg, args.out)
    dump_csv(os.path.join(out, "freq.csv"), ["k", "a_k", "p_k", "q_k"], rows, cfg)
    payload = {"alpha": alpha, "diophantine": asdict(est)}
    if args.interval_length:
        payload["hitting_time_bound"] = fq.hitting_time_bound(alpha, cf, args.interval_length)
    dump_json(os.path.join(out, "freq.json"), payload, cfg)
    with open(os.path.join(out, "freq.csv")) as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_validate_potential(cfg, args):
    f = build_function(cfg)
    try:
        rep = pot.validate_admissible(f)
        payload = rep.to_dict()
    except DegenerateCritical as exc:
        payload = {"admissible": False, "error": str(exc)}
    payload["potential"] = f.name
    path = os.path.join(output_dir(cfg, args.out), "potential.json")
    dump_json(path, payload, cfg)
    print(json.dumps(_jsonable({"admissible": payload["admissible"], "report": path})))
    return 0 if payload["admissible"] else 1


def cmd_scan(cfg, args):
    spec, alpha = build_spec(cfg)
    grid = param_grid(cfg)
    parts = run_parallel(_certify_chunk, cfg, grid, args.jobs)
    scan = sp.gap_scan(spec, alpha, grid, budgets(cfg), certified=_merge_certified(parts))
    out = output_dir(cfg, args.out)
    dump_csv(os.path.join(out, "scan.csv"), ["parameter", "status", "L_estimate", "oracle_min_dist"],
             scan.rows(), cfg)
    dump_json(os.path.join(out, "gaps.json"),
              {"gaps": scan.gaps, "spectral_interval": scan.spectral_interval, "log": scan.log,
               "points": len(grid), "certified": sum(s == "certified" for s in scan.status)}, cfg)
    print(os.path.join(out, "scan.csv"))
    return 0


def cmd_certify(cfg, args):
    spec, alpha = build_spec(cfg)
    if cfg.method == "ueg":
        res = cert.ueg_test(spec, alpha, cfg.param, cfg.x_grid, n_list(cfg), cfg.c, cfg.rho,
                            augment_max=cfg.augment_max)
    elif cfg.method == "chain":
        res = cert.chain_certify(spec, alpha, cfg.param, fq.Arc(*cfg.interval), cfg.gap, cfg.M,
                                 x_grid_size=cfg.x_grid, min_return=cfg.min_return)
    else:
        raise SystemExit(f"unknown method {cfg.method!r}")
    path = os.path.join(output_dir(cfg, args.out), "certificate.json")
    dump_json(path, {"certificate": res.to_dict()}, cfg)
    print(json.dumps({"status": res.status, "certificate": path}))
    return 0


def cmd_induction_trace(cfg, args):
    cfg = replace(cfg, family="polar")
    spec, alpha = build_spec(cfg)
    config = ind.InductionConfig(lam=float(cfg.coupling), tau=cfg.tau, epsilon=cfg.epsilon,
                                 max_level=max(int(cfg.levels), 0), q_min=cfg.q_min, cf_depth=cfg.cf_depth)
    ts = [float(t) for t in np.linspace(cfg.window[0], cfg.window[1], cfg.nt)]
    t_res = None
    if cfg.resonance_k is not None:
        t_res = ind.resonant_parameter(spec, alpha, int(cfg.resonance_k), cfg.window)
        if t_res is not None:
            ts = sorted(ts + [float(t_res)])
    state = ind.run(spec, alpha, config, cfg.window, ts=ts)
    payload = {"trace": state.to_trace(), "resonant_parameter": t_res,
               "estimates": ind.verify_estimates(state) if state.level >= 1 else [],
               "rho": sp.rho_track(state)}
    path = os.path.join(output_dir(cfg, args.out), "induction.json")
    dump_json(path, payload, cfg)
    print(path)
    return 0


def cmd_lyapunov_scan(cfg, args):
    if cfg.lyapunov_steps < 1000:
        cfg = replace(cfg, lyapunov_steps=10000)
    grid = param_grid(cfg)
    parts = run_parallel(_lyapunov_chunk, cfg, grid, args.jobs)
    rows = [(p, v, e) for p, (v, e) in zip(grid, [x for part in parts for x in part])]
    path = os.path.join(output_dir(cfg, args.out), "lyapunov.csv")
    dump_csv(path, ["parameter", "L_estimate", "stderr"], rows, cfg)
    print(path)
    return 0


def cmd_szego_scan(cfg, args):
    cfg = replace(cfg, family="szego")
    spec, alpha = build_spec(cfg)
    grid = param_grid(cfg)
    parts = run_parallel(_certify_chunk, cfg, grid, args.jobs)
    status, rates, lyap = _merge_certified(parts)
    psi = cc.szego_rotation_equivalent(spec).function
    out = output_dir(cfg, args.out)
    dump_csv(os.path.join(out, "szego_scan.csv"), ["parameter", "status", "L_estimate", "min_growth_rate"],
             zip(grid, status, lyap, rates), cfg)
    dump_json(os.path.join(out, "szego.json"),
              {"conjugation_check": cc.conjugation_check(seed=cfg.seed),
               "reduced_coupling": math.sqrt((1 + cfg.coupling) / (1 - cfg.coupling)),
               "angle_range": pot.angle_range(psi), "angle_range_below_pi": pot.angle_range(psi) < math.pi,
               "gaps": sp.collate_gaps(grid, status)}, cfg)
    print(os.path.join(out, "szego_scan.csv"))
    return 0


COMMANDS = {
    "freq": (cmd_freq, "continued fraction, convergents and Diophantine estimate of alpha"),
    "validate-potential": (cmd_validate_potential, "check that a potential has two nondegenerate critical points"),
    "scan-spectrum": (cmd_scan, "certify a parameter grid and collate spectral gaps"),
    "certify": (cmd_certify, "certify one parameter value (ueg or chain)"),
    "induction-trace": (cmd_induction_trace, "run the critical-point induction and write its trace"),
    "lyapunov-scan": (cmd_lyapunov_scan, "Lyapunov exponents over a parameter grid"),
    "szego-scan": (cmd_szego_scan, "scan the reduced Szego family over the spectral angle"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="cocyclelab", description=__doc__)
    p.add_argument("--version", action="version", version=f"cocyclelab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="YAML file with RunConfig keys")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        s.add_argument("--family", choices=cc.FAMILIES)
        s.add_argument("--potential", help="cos | cos+eps*sin | const | cos4 | tabulated")
        s.add_argument("--potential-path", help="CSV table x,v for the tabulated potential")
        s.add_argument("--lambda", dest="coupling", type=float)
        s.add_argument("--alpha", help="golden, a decimal, or cf:a1,a2,...")
        s.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
        s.add_argument("--grid", type=int)
        s.add_argument("--param", type=float)
        s.add_argument("--levels", type=int)
        s.add_argument("--method", choices=("ueg", "chain"))
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help=f"output directory (the {OUTPUT_ENV} variable takes precedence)")
        s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        if name == "freq":
            s.add_argument("--interval-length", type=float)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, args.set)
    for key in ("family", "potential", "potential_path", "coupling", "alpha", "window", "grid", "param",
                "levels", "method", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, _coerce(key, val) if not isinstance(val, list) else list(val))
    func = COMMANDS[args.command][0]
    return func(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
