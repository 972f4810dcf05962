"""Command-line driver: solve, sweep, ghost and stability experiments written as CSV."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import NORM_KEYS, convergence_sweep, k_for, parse_k_rule, stability_probe
from .lattice import ConfigurationError, LatticeConfig, backward_difference
from .loads import LoadSpec, parse_load
from .operators import MODELS, assemble, ghost_vector
from .potential import (LinearizedCoeffs, PairPotential, check_assumptions, linearize,
                        parse_potential)
from .solver import SolverError, solve_model

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_SOLVER = 0, 1, 2, 3, 4
COMMANDS = ("solve", "sweep", "ghost", "stability")
CONFIG_KEYS = ("model", "potential", "F", "load", "N", "K", "out", "trials", "seed",
               "allow_outside_theory")
DEFAULT_N = {"solve": "64", "sweep": "32,64,128,256,512", "ghost": "64", "stability": "16,64,256"}


class AssumptionViolation(RuntimeError):
    pass


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str
    models: tuple[str, ...] = ("qnl",)
    potential: str = "lj"
    F: float = 1.0
    load: str = "sin:1,1"
    N_list: tuple[int, ...] = (64,)
    K_rule: tuple = ("frac", 0.25)
    out: str = ""
    trials: int = 200
    seed: int = 0
    allow_outside_theory: bool = False
    # parsed objects, filled by validate()
    pot: PairPotential | None = field(default=None, repr=False)
    load_spec: LoadSpec | None = field(default=None, repr=False)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        for m in self.models:
            if m not in MODELS:
                raise ConfigError("model", f"unknown model {m!r} (choose from {', '.join(MODELS)})")
        try:
            self.pot = parse_potential(self.potential)
        except ValueError as exc:
            raise ConfigError("potential", str(exc)) from None
        if not (math.isfinite(self.F) and self.F > 0):
            raise ConfigError("F", f"must be a positive number, got {self.F!r}")
        try:
            self.load_spec = parse_load(self.load)
        except ValueError as exc:
            raise ConfigError("load", str(exc)) from None
        _check_n_list(self.N_list, self.command)
        try:
            self.K_rule = parse_k_rule(self.K_rule)
        except ValueError as exc:
            raise ConfigError("K", str(exc)) from None
        for N in self.N_list:
            try:
                LatticeConfig(N, k_for(self.K_rule, N), self.F)
            except ConfigurationError as exc:
                raise ConfigError("K", f"rule {self.K_rule} invalid for N={N}: {exc}") from None
        if self.trials < 1:
            raise ConfigError("trials", "must be at least 1")
        return self


def _check_n_list(N_list, command):
    if not N_list:
        raise ConfigError("N", "at least one value required")
    if any(n < 4 for n in N_list):
        raise ConfigError("N", f"every N must be at least 4, got {list(N_list)}")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N", f"values must be strictly increasing, got {list(N_list)}")
    base = N_list[0]
    for n in N_list[1:]:
        q, r = divmod(n, base)
        if r or q & (q - 1):
            raise ConfigError("N", f"{n} is not a power-of-two multiple of {base}")
    if command == "sweep" and len(N_list) < 4:
        raise ConfigError("N", "a sweep needs at least 4 levels")


def read_config_file(path) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep:
            raise ConfigError(key or f"line {lineno}", "expected key=value")
        if key not in CONFIG_KEYS:
            raise ConfigError(key, f"unknown configuration key (line {lineno})")
        out[key] = value.strip()
    return out


def _int_list(key, text) -> tuple[int, ...]:
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated integers, got {text!r}") from None
    if any(v != int(v) for v in vals):
        raise ConfigError(key, f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _bool(key, text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional config file with command-line flags (flags win)."""
    merged = read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            merged[key] = val
    cfg = RunConfig(args.command)
    default_models = "qce,qnl" if args.command == "stability" else "qnl"
    cfg.models = tuple(m.strip().lower() for m in str(merged.get("model", default_models)).split(",")
                       if m.strip())
    if args.command == "ghost":
        cfg.models = ("qce",)
        merged.setdefault("load", "zero")
    cfg.potential = str(merged.get("potential", cfg.potential))
    try:
        cfg.F = float(merged.get("F", cfg.F))
    except ValueError:
        raise ConfigError("F", f"expected a number, got {merged['F']!r}") from None
    cfg.load = str(merged.get("load", cfg.load))
    if args.command == "ghost" and cfg.load.strip().lower() != "zero":
        raise ConfigError("load", "the ghost experiment uses zero load")
    cfg.N_list = _int_list("N", merged.get("N", DEFAULT_N[args.command]))
    cfg.K_rule = merged.get("K", "frac:0.25")
    cfg.out = str(merged.get("out", ""))
    for key in ("trials", "seed"):
        try:
            setattr(cfg, key, int(merged.get(key, getattr(cfg, key))))
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {merged[key]!r}") from None
    cfg.allow_outside_theory = _bool("allow_outside_theory", merged.get("allow_outside_theory", False))
    return cfg.validate()


# --- CSV output ------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if x is None:
        return ""
    return "%.17g" % float(x)


def meta_line(cfg: RunConfig, coeffs: LinearizedCoeffs) -> list[str]:
    c = coeffs.as_dict()
    return ["#meta", f"potential={cfg.pot.describe()}", f"F={fmt(cfg.F)}",
            *(f"{k}={fmt(v)}" for k, v in c.items()), f"version={__version__}"]


def write_csv(path: Path, meta: list[str], header: list[str], rows, footer=()) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(meta)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
        for r in footer:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
    return path


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out + name)


def _require_theory(cfg: RunConfig, coeffs: LinearizedCoeffs, models) -> list[str]:
    which = tuple(m for m in models if m in ("qce", "qnl"))
    rep = check_assumptions(coeffs, which=which)
    if rep.ok:
        return []
    msg = "assumption check failed: " + ", ".join(
        f"{c.name}={c.value:.6g}" for c in rep.checks if not c.passed)
    if not cfg.allow_outside_theory:
        raise AssumptionViolation(msg + " (pass --allow-outside-theory to run anyway)")
    print("warning: " + msg + "; results are outside theory", file=sys.stderr)
    return rep.failures()


# --- commands --------------------------------------------------------------

def _lattice(cfg: RunConfig, model: str, N: int) -> LatticeConfig:
    return LatticeConfig(N, k_for(cfg.K_rule, N) if model in ("qce", "qnl") else None, cfg.F)


def cmd_solve(cfg: RunConfig, coeffs: LinearizedCoeffs) -> list[Path]:
    paths = []
    for model in cfg.models:
        for N in cfg.N_list:
            lat = _lattice(cfg, model, N)
            u = solve_model(model, lat, coeffs, cfg.load_spec).solution.values
            du = backward_difference(u, lat).values
            rows = zip(lat.indices, lat.x, u, du)
            paths.append(write_csv(_out(cfg, f"solution_{model}_N{N}.csv"), meta_line(cfg, coeffs),
                                   ["j", "x_j", "u_j", "Du_j"], rows))
    return paths


def cmd_sweep(cfg: RunConfig, coeffs: LinearizedCoeffs) -> tuple[list[Path], bool]:
    rows, footer, failed = [], [], False
    for model in cfg.models:
        rep = convergence_sweep(model, cfg.pot, cfg.F, cfg.load_spec, cfg.N_list, cfg.K_rule)
        for r in rep.rows:
            rows.append([model, r["N"], r["h"], r["K"] if r["K"] is not None else ""]
                        + [r[k] for k in NORM_KEYS])
            if r["status"] != "ok":
                footer.append(["#status", model, r["N"], r["status"]])
                failed |= r["status"].startswith("failed")
        for k in NORM_KEYS:
            footer.append(["#rate", model, k, rep.fitted_rate[k], rep.levels_used[k]])
    path = write_csv(_out(cfg, "sweep.csv"), meta_line(cfg, coeffs),
                     ["model", "N", "h", "K", *NORM_KEYS], rows, footer)
    return [path], failed


def cmd_ghost(cfg: RunConfig, coeffs: LinearizedCoeffs) -> list[Path]:
    paths = []
    for N in cfg.N_list:
        lat = _lattice(cfg, "qce", N)
        g = ghost_vector(lat, coeffs).values
        u = solve_model("qce", lat, coeffs, LoadSpec.zero()).solution.values
        paths.append(write_csv(_out(cfg, f"ghost_N{N}.csv"), meta_line(cfg, coeffs),
                               ["j", "g_j", "u_qce_j"], zip(lat.indices, g, u)))
    return paths


def cmd_stability(cfg: RunConfig, coeffs: LinearizedCoeffs) -> list[Path]:
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for model in cfg.models:
        for N in cfg.N_list:
            lat = _lattice(cfg, model, N)
            op = assemble(model, lat, coeffs, check=False)
            nu = coeffs.nu(model)
            rep = stability_probe(op, nu, trials=cfg.trials, rng=rng, exact=False)
            if rep.violations:
                print(f"{model} N={N}: {rep.violations} of {cfg.trials} probes below nu", file=sys.stderr)
            rows.append([model, N, lat.K if lat.K is not None else "", nu, rep.min_ratio])
    return [write_csv(_out(cfg, "stability.csv"), meta_line(cfg, coeffs),
                      ["model", "N", "K", "nu_theory", "min_ratio"], rows)]


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit status."""
    coeffs = linearize(cfg.pot, cfg.F)
    _require_theory(cfg, coeffs, cfg.models)
    failed = False
    if cfg.command == "solve":
        paths = cmd_solve(cfg, coeffs)
    elif cfg.command == "sweep":
        paths, failed = cmd_sweep(cfg, coeffs)
    elif cfg.command == "ghost":
        paths = cmd_ghost(cfg, coeffs)
    else:
        paths = cmd_stability(cfg, coeffs)
    for p in paths:
        print(p)
    return EXIT_SOLVER if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override its entries")
    common.add_argument("--model", help="model name, or comma list for sweep/stability")
    common.add_argument("--potential", help="'lj' or 'explicit:phi1F,phi2F,phi1_2F,phi2_2F'")
    common.add_argument("--F", type=str, help="reference lattice spacing")
    common.add_argument("--load", help="'zero' or 'sin:m,A[;m,A...]'")
    common.add_argument("--N", help="N or comma-separated list")
    common.add_argument("--K", help="'frac:theta' or 'fixed:K'")
    common.add_argument("--out", help="output path prefix")
    common.add_argument("--trials", type=str, help="random probes per operator (stability)")
    common.add_argument("--seed", type=str, help="RNG seed (stability)")
    common.add_argument("--allow-outside-theory", dest="allow_outside_theory", action="store_true",
                        help="run even when the stability assumptions fail")
    parser = argparse.ArgumentParser(prog="quasicontinuum",
                                     description="Linearized 1D quasicontinuum experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "equilibrium displacements per model and N"),
                       ("sweep", "error norms and fitted rates over a refinement sweep"),
                       ("ghost", "ghost force and zero-load QCE displacement"),
                       ("stability", "random probes of h v.Lv / |Dv|^2 against nu")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except AssumptionViolation as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ASSUMPTION
    except (SolverError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
