"""Command-line front end.

Every command resolves its parameters from defaults, then an optional JSON
config file, then explicit flags.  Results are written to ``--out`` under a
name built from the command and a hash of the resolved parameters, next to
a manifest echoing the parameters, the package version and the wall time.

Exit status: 0 on success, 2 on a configuration error, 3 on a numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import discrepancy_field, discrepancy_moment
from .energy import Configuration, FeketeOptions, minimize_fekete, splitting_report
from .errors import CoulombLabError, PotentialError, SingularConfigurationError
from .obstacle import obstacle_solve_grid
from .periodic import Torus, lattice_scan, w_periodic
from .potential import Potential, solve_equilibrium_radial
from .sampler import McmcParams, ginibre_exact, mcmc_chain, write_run
from .zfunc import fit_order_n_coefficient, sweep, write_sweep_csv

logger = logging.getLogger("coulomb_lab")


class ConfigError(Exception):
    """Invalid or missing configuration key."""

    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _potential_value(v):
    if isinstance(v, dict):
        return v
    v = str(v).strip()
    if v.startswith("{"):
        doc = json.loads(v)
        if not isinstance(doc, dict):
            raise ValueError("potential must be a name or a JSON object")
        return doc
    return {"kind": v}


# parameter tables: name -> (converter, default, help).  A default of
# REQUIRED must be supplied by the config file or a flag.
REQUIRED = object()
POTENTIAL = {"potential": (_potential_value, {"kind": "quadratic"}, "quadratic, quartic, or a JSON object"),
             "coeffs": (_floats, None, "radial coefficients a_k of sum a_k r^(2k)")}

COMMANDS = {
    "equilibrium": dict(POTENTIAL, **{
        "solver": (str, "radial", "radial (closed form plus quadrature) or grid (obstacle problem)"),
        "h": (float, 1.0 / 128, "grid step of the obstacle solver"),
        "half_width": (float, 2.0, "half width of the obstacle box"),
    }),
    "energy": dict(POTENTIAL, **{
        "input": (str, None, "configuration CSV (x,y); omitted: n i.i.d. points of mu_0"),
        "n": (int, 10, "number of random points when no input is given"),
    }),
    "fekete": dict(POTENTIAL, **{
        "n": (int, REQUIRED, "number of points"),
        "multistarts": (int, 1, "independent random starts"),
        "max_iters": (int, 20000, "iteration cap per start"),
        "grad_tol": (float, None, "sup-norm gradient tolerance (default 1e-8 n)"),
    }),
    "sample": dict(POTENTIAL, **{
        "n": (int, REQUIRED, "number of particles"),
        "beta": (float, 2.0, "inverse temperature"),
        "sweeps": (int, 1000, "total sweeps including burn-in"),
        "burn_in": (int, 100, "burn-in sweeps"),
        "sigma": (float, None, "proposal width (default 1/sqrt(n))"),
        "thinning": (int, 1, "keep every k-th sweep"),
    }),
    "ginibre": {
        "n": (int, REQUIRED, "matrix size"),
        "draws": (int, 1, "number of independent matrices"),
    },
    "wper": {
        "lattice": (str, "triangular", "triangular, square, or tau"),
        "tau": (_floats, None, "Re tau, Im tau for --lattice tau"),
        "points": (str, None, "CSV of points in a cell of area n (overrides --lattice points)"),
        "basis": (_floats, None, "u_x,u_y,v_x,v_y for --points"),
        "tol": (float, 1e-10, "truncation tolerance"),
        "alpha": (float, None, "Ewald splitting parameter"),
    },
    "scan-lattice": {
        "nx": (int, 41, "grid points in Re tau"),
        "ny": (int, 41, "grid points in Im tau"),
        "tol": (float, 1e-8, "truncation tolerance"),
    },
    "discrepancy": dict(POTENTIAL, **{
        "input": (str, REQUIRED, "configuration CSV (x,y)"),
        "R": (float, REQUIRED, "blown-up radius"),
        "window": (_floats, None, "blown-up window x0,x1,y0,y1 (default: covers the points)"),
        "grid_step": (float, 0.5, "spacing of the centers"),
    }),
    "zcheck": {
        "n_max": (int, 2000, "largest n of the sweep"),
        "ns": (_ints, None, "explicit list of n (overrides --n-max)"),
    },
}
COMMON = {"seed": (int, 0, "random seed")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coulomb-lab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, table in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of parameters (flags override)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default $COULOMB_LAB_THREADS or 1)")
        p.add_argument("-v", "--verbose", action="store_true")
        for key, (_, _, help_) in {**COMMON, **table}.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_)
    return parser


def resolve(command: str, file_cfg: dict, flags: dict) -> dict:
    """Defaults < config file < flags, converted and checked."""
    table = {**COMMON, **COMMANDS[command]}
    for key in file_cfg:
        if key not in table and key != "command":
            raise ConfigError(key, f"unknown parameter for {command!r}")
    cfg = {}
    for key, (conv, default, _) in table.items():
        raw = flags.get(key)
        if raw is None:
            raw = file_cfg.get(key, default)
        if raw is REQUIRED:
            raise ConfigError(key, "required")
        if raw is None:
            cfg[key] = None
            continue
        try:
            cfg[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {raw!r} ({exc})") from None
    if "potential" in cfg:
        cfg["potential"] = _potential_entry(cfg.pop("potential"), cfg.pop("coeffs"))
    return cfg


def _potential_entry(entry: dict, coeffs):
    entry = dict(entry)
    if coeffs is not None:
        entry["coeffs"] = coeffs
        entry.setdefault("kind", "radial")
        if entry["kind"] == "quadratic":
            entry["kind"] = "radial"
    try:
        Potential.from_dict(entry)
    except (KeyError, PotentialError, OSError) as exc:
        raise ConfigError("potential", str(exc)) from None
    return entry


def config_hash(command: str, cfg: dict) -> str:
    text = json.dumps({"command": command, **cfg}, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_plain) + "\n", encoding="utf-8")


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _em_for(p: Potential):
    if p.is_radial:
        return solve_equilibrium_radial(p)
    return obstacle_solve_grid(p)


# --- commands --------------------------------------------------------------

def cmd_equilibrium(cfg, stem: Path, threads):
    p = Potential.from_dict(cfg["potential"])
    if cfg["solver"] == "grid":
        if not cfg["h"] > 0 or abs(round(2 * cfg["half_width"] / cfg["h"]) * cfg["h"] - 2 * cfg["half_width"]) > 1e-9 \
                or round(2 * cfg["half_width"] / cfg["h"]) < 8:
            raise ConfigError("h", "2 * half_width must be a multiple of h with at least 8 cells")
        em = obstacle_solve_grid(p, half_width=cfg["half_width"], h=cfg["h"])
    elif cfg["solver"] == "radial":
        em = solve_equilibrium_radial(p)
    else:
        raise ConfigError("solver", "must be 'radial' or 'grid'")
    doc = em.to_json(stem.with_suffix(".json"))
    return {"outputs": [stem.with_suffix(".json").name], "R_star": doc["R_star"], "c": doc["c"]}


def cmd_energy(cfg, stem: Path, threads):
    p = Potential.from_dict(cfg["potential"])
    em = _em_for(p)
    if cfg["input"]:
        c = Configuration.from_csv(cfg["input"])
    else:
        c = Configuration(em.sample(cfg["n"], np.random.Generator(np.random.Philox(cfg["seed"]))))
        c.to_csv(stem.with_suffix(".points.csv"))
    rep = splitting_report(c, em, p)
    stem.with_suffix(".json").write_text(rep.to_json() + "\n", encoding="utf-8")
    return {"outputs": [stem.with_suffix(".json").name], "residual": rep.residual}


def cmd_fekete(cfg, stem: Path, threads):
    p = Potential.from_dict(cfg["potential"])
    em = _em_for(p)
    rng = np.random.Generator(np.random.Philox(cfg["seed"]))
    start = em.sample(cfg["n"], rng)
    opts = FeketeOptions(max_iters=cfg["max_iters"], grad_tol=cfg["grad_tol"],
                         multistarts=cfg["multistarts"], seed=cfg["seed"], workers=threads)
    res = minimize_fekete(start, p, opts, em=em)
    res.configuration.to_csv(stem.with_suffix(".csv"))
    rep = splitting_report(res.configuration, em, p)
    _write_json(stem.with_suffix(".json"), {"w_n": res.w_n, "grad_inf": res.grad_inf,
                                            "iterations": res.iterations, "report": rep.__dict__})
    return {"outputs": [stem.with_suffix(".csv").name, stem.with_suffix(".json").name], "w_n": res.w_n}


def cmd_sample(cfg, stem: Path, threads):
    p = Potential.from_dict(cfg["potential"])
    em = _em_for(p)
    try:
        params = McmcParams(cfg["beta"], cfg["n"], cfg["sweeps"], cfg["burn_in"], cfg["sigma"],
                            cfg["seed"], cfg["thinning"])
    except ValueError as exc:
        raise ConfigError("sample", str(exc)) from None
    samples, stats = mcmc_chain(p, em, params)
    files = write_run(samples, stats, params, stem, p)
    return {"outputs": [str(Path(stem.name) / f.name) for f in files],
            "acceptance_rate": stats.acceptance_rate}


def cmd_ginibre(cfg, stem: Path, threads):
    seeds = np.random.SeedSequence(cfg["seed"]).generate_state(cfg["draws"], dtype=np.uint64)
    path = stem.with_suffix(".csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample,index,x,y\n")
        for s, seed in enumerate(seeds):
            for i, (x, y) in enumerate(ginibre_exact(cfg["n"], int(seed)).points):
                fh.write(f"{s},{i},{x:.17g},{y:.17g}\n")
    return {"outputs": [path.name]}


def cmd_wper(cfg, stem: Path, threads):
    if cfg["points"]:
        if cfg["basis"] is None or len(cfg["basis"]) != 4:
            raise ConfigError("basis", "four numbers u_x,u_y,v_x,v_y are required with --points")
        b = cfg["basis"]
        pts = Configuration.from_csv(cfg["points"]).points
        T = Torus((b[0], b[1]), (b[2], b[3]), pts)
    elif cfg["lattice"] == "triangular":
        T = Torus.triangular()
    elif cfg["lattice"] == "square":
        T = Torus.square()
    elif cfg["lattice"] == "tau":
        if cfg["tau"] is None or len(cfg["tau"]) != 2 or not cfg["tau"][1] > 0:
            raise ConfigError("tau", "need Re tau, Im tau with Im tau > 0")
        T = Torus.from_tau(complex(*cfg["tau"]))
    else:
        raise ConfigError("lattice", "must be triangular, square or tau")
    try:
        rec = w_periodic(T, cfg["tol"], cfg["alpha"], record=True)
    except ValueError as exc:
        if isinstance(exc, SingularConfigurationError):
            raise
        raise ConfigError("points", str(exc)) from None
    stem.with_suffix(".json").write_text(rec.to_json() + "\n", encoding="utf-8")
    return {"outputs": [stem.with_suffix(".json").name], "W": rec.W}


def cmd_scan_lattice(cfg, stem: Path, threads):
    scan = lattice_scan(cfg["tol"], cfg["nx"], cfg["ny"], workers=threads)
    scan.to_csv(stem.with_suffix(".csv"))
    k = int(np.argmin(scan.W))
    _write_json(stem.with_suffix(".json"), {"argmin": [scan.argmin.real, scan.argmin.imag],
                                            "W_min": float(scan.W[k]), "err_max": float(scan.err.max())})
    return {"outputs": [stem.with_suffix(".csv").name, stem.with_suffix(".json").name]}


def cmd_discrepancy(cfg, stem: Path, threads):
    p = Potential.from_dict(cfg["potential"])
    em = _em_for(p)
    c = Configuration.from_csv(cfg["input"])
    s = math.sqrt(c.n)
    window = cfg["window"]
    if window is None:
        lo = s * c.points.min(axis=0) - cfg["R"]
        hi = s * c.points.max(axis=0) + cfg["R"]
        window = [lo[0], hi[0], lo[1], hi[1]]
    if len(window) != 4:
        raise ConfigError("window", "need x0,x1,y0,y1")
    field = discrepancy_field(c, em, window, cfg["R"], cfg["grid_step"])
    field.to_csv(stem.with_suffix(".csv"))
    moment = discrepancy_moment(c, em, window, cfg["R"], cfg["grid_step"])
    _write_json(stem.with_suffix(".json"), {"moment": moment, "R": cfg["R"], "window": window,
                                            "grid_step": cfg["grid_step"]})
    return {"outputs": [stem.with_suffix(".csv").name, stem.with_suffix(".json").name]}


def cmd_zcheck(cfg, stem: Path, threads):
    ns = cfg["ns"] or list(range(1, cfg["n_max"] + 1))
    if min(ns) < 1:
        raise ConfigError("ns", "all n must be positive")
    reports = sweep(ns)
    write_sweep_csv(reports, stem.with_suffix(".csv"))
    fit_ns = [n for n in ns if n >= 10]
    coeff = fit_order_n_coefficient(fit_ns) if len(fit_ns) >= 3 else float("nan")
    _write_json(stem.with_suffix(".json"), {"order_n_coefficient_fit": coeff, "fit_ns": fit_ns})
    return {"outputs": [stem.with_suffix(".csv").name, stem.with_suffix(".json").name]}


HANDLERS = {"equilibrium": cmd_equilibrium, "energy": cmd_energy, "fekete": cmd_fekete,
            "sample": cmd_sample, "ginibre": cmd_ginibre, "wper": cmd_wper,
            "scan-lattice": cmd_scan_lattice, "discrepancy": cmd_discrepancy, "zcheck": cmd_zcheck}


def _load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be an object")
    # a manifest can be fed back in to reproduce its run
    if "config" in doc and isinstance(doc["config"], dict) and "version" in doc:
        doc = doc["config"]
    return doc


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or int(os.environ.get("COULOMB_LAB_THREADS", "1") or 1)
    command = args.command
    try:
        file_cfg = _load_config(args.config) if args.config else {}
        if file_cfg.get("command", command) != command:
            raise ConfigError("command", f"config is for {file_cfg['command']!r}, not {command!r}")
        flags = {k: v for k, v in vars(args).items() if k in {**COMMON, **COMMANDS[command]}}
        cfg = resolve(command, file_cfg, flags)
    except ConfigError as exc:
        print(f"coulomb-lab: error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"{command}-{config_hash(command, cfg)}"
    stem = out / name
    t0 = time.perf_counter()
    try:
        info = HANDLERS[command](cfg, stem, max(1, threads))
    except ConfigError as exc:
        print(f"coulomb-lab: error: {exc}", file=sys.stderr)
        return 2
    except CoulombLabError as exc:
        print(f"coulomb-lab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"coulomb-lab: error: invalid parameters for {command!r}: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    manifest = {"command": command, "config": {"command": command, **cfg}, "version": __version__,
                "wall_time_s": wall, "outputs": info.pop("outputs"), "summary": info}
    _write_json(out / f"{name}.manifest.json", manifest)
    _write_json(out / "manifest.json", manifest)
    print(json.dumps({"name": name, **manifest["summary"]}, sort_keys=True, default=_plain))
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
