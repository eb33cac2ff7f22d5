"""Command-line front end.

Exit codes: 0 pass, 1 statistical failure, 2 usage or configuration error.
Settings resolve as flags > ``--config`` key=value file > defaults; the
default seed may come from the FOU_SEED environment variable.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .clark_ocone import ESTIMATORS, ROUTES, representation_check
from .errors import FracOUError
from .girsanov import DIRECTIONS, density_normalization, direction_by_label, ibp_check
from .grid import RngSpec, make_grid
from .kernel import check_hurst, dump_kernel_csv, kernel_matrix
from .lsi import lsi_check_many, lsi_constants
from .malliavin import LIBRARY, SHIPPED, functional_by_label
from .selftest import run_selftest
from .simulate import ModelParams, set_threads, simulate_batch_arrays, write_paths_csv

COMMANDS = (
    "simulate",
    "kernel-dump",
    "verify-ibp",
    "verify-clark-ocone",
    "lsi-constant",
    "lsi-check",
    "selftest",
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    hurst: str = "0.75"
    alpha: str = "1.0"
    steps: int = 256
    paths: int = 10000
    seed: int = 7
    functional: str = "linear"
    direction: str = "const1"
    output: str = "-"
    format: str = "json"
    dim: int = 1
    threads: int = 1
    estimator: str = "auto"
    basis_degree: int = 3
    route: str = "matrix"
    r: float = 0.5
    layout: str = "long"
    z_max: float = 3.0
    max_ratio: float = 0.10

    @property
    def hursts(self) -> list[float]:
        return _floats(self.hurst, "hurst")

    @property
    def alphas(self) -> list[float]:
        return _floats(self.alpha, "alpha")

    def single(self) -> tuple[float, float]:
        hs, als = self.hursts, self.alphas
        if len(hs) != 1 or len(als) != 1:
            raise UsageError("this command takes a single --hurst and --alpha value")
        return hs[0], als[0]


COMMAND_DEFAULTS = {
    "simulate": {"paths": 100, "format": "csv"},
    "kernel-dump": {"format": "csv"},
    "lsi-constant": {"hurst": "0.6,0.75,0.9", "alpha": "0,0.5,1"},
    "lsi-check": {"hurst": "0.6,0.75,0.9", "alpha": "0,0.5,1", "functional": "all"},
}


def _floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve_config(command: str, flags: dict, config_file: str | None) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict = dict(COMMAND_DEFAULTS.get(command, {}))
    env_seed = os.environ.get("FOU_SEED")
    if env_seed is not None:
        values["seed"] = env_seed
    if config_file:
        for key, value in read_config_file(config_file).items():
            if key not in types:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = value
    values.update({k: v for k, v in flags.items() if v is not None and k in types})
    casts = {"int": int, "float": float, "str": str}
    parsed = {}
    for key, value in values.items():
        try:
            parsed[key] = casts[types[key]](value)
        except ValueError:
            raise UsageError(f"{key}: cannot parse {value!r}") from None
    cfg = replace(RunConfig(), **parsed)
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: RunConfig) -> None:
    for h in cfg.hursts:
        if not 0.5 < h < 1:
            raise UsageError(f"hurst must lie in (0.5, 1), got {h}")
    if any(a < 0 for a in cfg.alphas):
        raise UsageError("alpha must be >= 0")
    if cfg.steps < 16:
        raise UsageError("steps must be >= 16")
    if cfg.paths < 100:
        raise UsageError("paths must be >= 100")
    if cfg.dim < 1 or cfg.threads < 1:
        raise UsageError("dim and threads must be >= 1")
    if cfg.format not in ("json", "csv"):
        raise UsageError("format must be json or csv")
    known = set(LIBRARY) | {"constant"} | ({"all"} if command == "lsi-check" else set())
    if cfg.functional not in known:
        raise UsageError(f"unknown functional {cfg.functional!r}; choose from {sorted(known)}")
    if cfg.direction not in DIRECTIONS:
        raise UsageError(f"unknown direction {cfg.direction!r}; choose from {sorted(DIRECTIONS)}")
    if cfg.estimator not in ESTIMATORS:
        raise UsageError(f"estimator must be one of {ESTIMATORS}")
    if cfg.route not in ROUTES:
        raise UsageError(f"route must be one of {ROUTES}")
    if cfg.layout not in ("long", "per-path"):
        raise UsageError("layout must be long or per-path")
    if not -1.0 <= cfg.r <= 1.0:
        raise UsageError("r must lie in [-1, 1]")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracou", description="fOU Malliavin-calculus numerics and checks")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file (flags take precedence)")
    common.add_argument("--hurst", help="Hurst index; comma list for lattice commands")
    common.add_argument("--alpha", help="mean-reversion rate; comma list for lattice commands")
    common.add_argument("--steps", type=int)
    common.add_argument("--paths", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--functional", help=f"one of {', '.join(SHIPPED)}, constant")
    common.add_argument("--direction", help=f"one of {', '.join(DIRECTIONS)}")
    common.add_argument("--output", help="report path, '-' for stdout")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--threads", type=int, help="worker threads for Monte-Carlo chunks")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")

    sp = sub.add_parser("simulate", parents=[common], help="write sampled B, B^H and X paths")
    sp.add_argument("--layout", choices=("long", "per-path"))
    sp.add_argument("--scheme", choices=("euler", "exponential"), default="euler")
    sub.add_parser("kernel-dump", parents=[common], help="write the discrete kernel matrix")
    sp = sub.add_parser("verify-ibp", parents=[common], help="Monte-Carlo integration-by-parts check")
    sp.add_argument("--z-max", type=float)
    sp.add_argument("--r", type=float, help="also report the mean Girsanov density at this r")
    sp = sub.add_parser("verify-clark-ocone", parents=[common], help="martingale-representation residual")
    sp.add_argument("--estimator", choices=ESTIMATORS)
    sp.add_argument("--basis-degree", type=int)
    sp.add_argument("--route", choices=ROUTES)
    sp.add_argument("--max-ratio", type=float)
    sub.add_parser("lsi-constant", parents=[common], help="explicit log-Sobolev constants")
    sp = sub.add_parser("lsi-check", parents=[common], help="Monte-Carlo log-Sobolev inequality check")
    sp.add_argument("--z-max", type=float)
    sub.add_parser("selftest", parents=[common], help="exact invariants of every module")
    return p


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _emit_json(report: dict, cfg: RunConfig, command: str, stamp: bool) -> str:
    body = dict(report)
    body["command"] = command
    # where the report goes and how many threads ran do not change its content
    body["config"] = {k: v for k, v in asdict(cfg).items() if k not in ("output", "threads")}
    if stamp:
        body["timestamp"] = datetime.now(timezone.utc).isoformat()
    return json.dumps(_plain(body), sort_keys=True, indent=2) + "\n"


def _emit_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        keys = sorted(rows[0])
        buf.write(",".join(keys) + "\n")
        for row in rows:
            buf.write(",".join(repr(_plain(row[k])) if isinstance(row[k], float) else str(row[k]) for k in keys) + "\n")
    return buf.getvalue()


def _write(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _model(cfg: RunConfig) -> tuple[ModelParams, object]:
    H, alpha = cfg.single()
    params = ModelParams(H, alpha, cfg.dim, test_mode=alpha == 0)
    return params, kernel_matrix(H, make_grid(cfg.steps))


# commands ---------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, args) -> tuple[int, dict | str]:
    params, kernel = _model(cfg)
    batch = simulate_batch_arrays(params, kernel, cfg.paths, RngSpec(cfg.seed), args.scheme)
    if cfg.format == "json":
        return 0, {
            "n_paths": batch.n_paths,
            "var_fbm_1": float(np.var(batch.fbm[:, -1, 0], ddof=1)),
            "var_fou_1": float(np.var(batch.fou[:, -1, 0], ddof=1)),
        }
    if cfg.layout == "per-path":
        if cfg.output == "-":
            raise UsageError("per-path layout needs --output as a file stem")
        stem, ext = os.path.splitext(cfg.output)
        for i in range(batch.n_paths):
            buf = io.StringIO()
            sub = type(batch)(batch.bm[i : i + 1], batch.fbm[i : i + 1], batch.fou[i : i + 1],
                              batch.increments[i : i + 1], batch.base.offset(i))
            write_paths_csv(buf, kernel.grid.points, sub, long_format=False)
            _write(buf.getvalue(), f"{stem}_{i:05d}{ext or '.csv'}")
        return 0, ""
    buf = io.StringIO()
    write_paths_csv(buf, kernel.grid.points, batch)
    return 0, buf.getvalue()


def cmd_kernel_dump(cfg: RunConfig, args) -> tuple[int, dict | str]:
    H = cfg.single()[0]
    kernel = kernel_matrix(H, make_grid(cfg.steps))
    if cfg.format == "json":
        return 0, {"H": H, "n": kernel.n, "matrix": kernel.matrix.tolist()}
    buf = io.StringIO()
    dump_kernel_csv(kernel, buf)
    return 0, buf.getvalue()


def cmd_verify_ibp(cfg: RunConfig, args) -> tuple[int, dict]:
    params, kernel = _model(cfg)
    F = functional_by_label(cfg.functional, cfg.dim)
    d = direction_by_label(cfg.direction)
    rep = ibp_check(F, d, params, kernel, cfg.paths, RngSpec(cfg.seed))
    out = {
        "lhs": rep.lhs,
        "rhs": rep.rhs,
        "se_lhs": rep.se_lhs,
        "se_rhs": rep.se_rhs,
        "se": rep.se_diff,
        "z": rep.z_score,
        "n_paths": rep.n_paths,
        "passed": rep.passed(cfg.z_max),
    }
    if args.r is not None:
        dens = density_normalization(d, params, kernel, cfg.r, cfg.paths, RngSpec(cfg.seed, 1 << 40))
        out.update(mean_rho=dens.mean_rho, se_rho=dens.se, z_rho=dens.z_score)
        out["passed"] = out["passed"] and abs(dens.z_score) <= 4.0
    return (0 if out["passed"] else 1), out


def cmd_verify_clark_ocone(cfg: RunConfig, args) -> tuple[int, dict]:
    params, kernel = _model(cfg)
    F = functional_by_label(cfg.functional, cfg.dim)
    rep = representation_check(
        F, params, kernel, cfg.paths, RngSpec(cfg.seed), cfg.estimator, cfg.route, cfg.basis_degree
    )
    out = asdict(rep)
    out["passed"] = rep.residual_var_ratio <= cfg.max_ratio
    return (0 if out["passed"] else 1), out


def cmd_lsi_constant(cfg: RunConfig, args) -> tuple[int, dict]:
    rows = [lsi_constants(H, a).as_dict() for H in cfg.hursts for a in cfg.alphas]
    if len(rows) == 1:
        return 0, rows[0]
    return 0, {"table": rows}


def cmd_lsi_check(cfg: RunConfig, args) -> tuple[int, dict]:
    labels = SHIPPED if cfg.functional == "all" else (cfg.functional,)
    Fs = [functional_by_label(lab, cfg.dim) for lab in labels]
    rows = []
    for H in cfg.hursts:
        kernel = kernel_matrix(H, make_grid(cfg.steps))
        for a in cfg.alphas:
            params = ModelParams(H, a, cfg.dim, test_mode=a == 0)
            for rep in lsi_check_many(Fs, params, kernel, cfg.paths, RngSpec(cfg.seed)):
                row = asdict(rep)
                row.update(H=H, alpha=a, passed=rep.passed(cfg.z_max))
                rows.append(row)
    ok = all(r["passed"] for r in rows)
    return (0 if ok else 1), {"rows": rows, "passed": ok}


def cmd_selftest(cfg: RunConfig, args) -> tuple[int, dict]:
    checks = run_selftest()
    ok = all(checks.values())
    return (0 if ok else 1), {"checks": checks, "passed": ok}


HANDLERS = {
    "simulate": cmd_simulate,
    "kernel-dump": cmd_kernel_dump,
    "verify-ibp": cmd_verify_ibp,
    "verify-clark-ocone": cmd_verify_clark_ocone,
    "lsi-constant": cmd_lsi_constant,
    "lsi-check": cmd_lsi_check,
    "selftest": cmd_selftest,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "no_timestamp")}
    try:
        cfg = resolve_config(args.command, flags, args.config)
        set_threads(cfg.threads)
        code, report = HANDLERS[args.command](cfg, args)
    except UsageError as exc:
        print(f"fracou: error: {exc}", file=sys.stderr)
        return 2
    except FracOUError as exc:
        print(f"fracou: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if isinstance(report, str):
        if report:
            _write(report, cfg.output)
        return code
    if cfg.format == "csv":
        rows = report.get("rows") or report.get("table") or [
            {k: v for k, v in report.items() if not isinstance(v, (dict, list))}
        ]
        _write(_emit_csv(rows), cfg.output)
    else:
        _write(_emit_json(report, cfg, args.command, not args.no_timestamp), cfg.output)
    return code


def main(argv: list[str] | None = None) -> int:
    return dispatch(argv)
