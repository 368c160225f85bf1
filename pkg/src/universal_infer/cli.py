"""Command-line frontend: ``universal-infer {test,power,size,tune,mixture-demo}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

from .mixture import MixtureParams, parse_truth
from .models import ContractError, LinearHypothesis, parse_coords, read_csv, read_hypothesis
from .montecarlo import (
    STATISTICS,
    SimCell,
    check_fold_sizes,
    parse_grid,
    run_cell,
    sweep_delta,
    sweep_gamma,
    tune_gamma,
)
from .report import atomic_write, cells_to_csv, check_writable, render_svg
from .slrt import SplitSpec, TestConfig, run_test


DEFAULTS = {
    "n": 100,
    "alpha": 0.05,
    "reps": 10000,
    "seed": 0,
    "delta": 0.0,
    "delta_grid": "0:0.5:0.025",
    "gamma_grid": "0.1:0.9:0.05",
    "gamma": 0.5,
    "statistic": "plain",
    "target_power": 0.8,
    "truth": "null",
    "header": False,
    "cross_fit": False,
}


@dataclass
class RunConfig:
    subcommand: str
    n: Optional[int] = None
    dim: Optional[int] = None
    null_dim: Optional[int] = None
    gamma: Optional[float] = None
    alpha: float = 0.05
    reps: Optional[int] = None
    seed: int = 0
    delta: Optional[float] = None
    delta_grid: list = field(default_factory=list)
    gamma_grid: list = field(default_factory=list)
    statistic: str = "plain"
    critical_value: Optional[float] = None
    target_power: Optional[float] = None
    threads: Optional[int] = None
    out: Optional[str] = None
    svg: Optional[str] = None
    # test
    data: Optional[str] = None
    header: bool = False
    free_coords: Optional[list] = None
    hypothesis: Optional[str] = None
    cross_fit: bool = False
    assign: Optional[list] = None
    # mixture-demo
    truth: Optional[MixtureParams] = None


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _add_common(p: argparse.ArgumentParser, sweep: bool) -> None:
    p.add_argument("--config", help="flat key=value file supplying defaults")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--critical-value", type=float,
                   help="override 1/alpha (voids the finite-sample guarantee)")
    if sweep:
        p.add_argument("--n", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--statistic", choices=STATISTICS)
        p.add_argument("--threads", type=int, help="worker processes, 0 = all CPUs")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--svg", help="optional SVG plot path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="universal-infer",
                                     description="Split likelihood ratio tests and power studies.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("test", help="run one split LR test on a CSV dataset")
    _add_common(p, sweep=False)
    p.add_argument("--data")
    p.add_argument("--header", action="store_true", default=None)
    p.add_argument("--free-coords", help="1-based free coordinates of the null, e.g. 1..45 or none")
    p.add_argument("--hypothesis", help="hypothesis file (offset/basis or free_coords)")
    p.add_argument("--gamma", type=float)
    p.add_argument("--cross-fit", action="store_true", default=None)
    p.add_argument("--assign", type=_int_list, help="0-based evaluation-fold row indices")

    for name, helptext in (("power", "power as a function of delta"),
                           ("size", "rejection rate as a function of gamma"),
                           ("tune", "pick gamma maximizing simulated power")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p, sweep=True)
        p.add_argument("--dim", type=int)
        p.add_argument("--null-dim", type=int)
        if name == "power":
            p.add_argument("--gamma", type=float)
            p.add_argument("--delta-grid")
        else:
            p.add_argument("--delta", type=float)
            p.add_argument("--gamma-grid")
        if name == "tune":
            p.add_argument("--target-power", type=float)

    p = sub.add_parser("mixture-demo", help="mixture SLRT rejection rate for one configuration")
    _add_common(p, sweep=True)
    p.add_argument("--truth", help='"null" or "mix:<w>,<mu1>,<mu2>"')
    p.add_argument("--gamma", type=float)
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"--config {path}:{lineno}: expected key = value")
                key, value = line.split("=", 1)
                out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    return out


def _apply_config(ns: argparse.Namespace, sub: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    for key, raw in cfg.items():
        if key not in actions:
            raise UsageError(f"--config: unknown key {key!r} for this subcommand")
        if getattr(ns, key) is not None:
            continue  # command-line flags win
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                value = action.type(raw) if action.type else raw
            except (TypeError, ValueError):
                raise UsageError(f"--config: invalid value for {key}: {raw!r}") from None
            if action.choices and value not in action.choices:
                raise UsageError(f"--config: {key} must be one of {list(action.choices)}")
        setattr(ns, key, value)


def _flag(dest: str) -> str:
    return "--" + dest.replace("_", "-")


def _validate(ns: argparse.Namespace) -> RunConfig:
    sc = ns.subcommand
    vals = {k: v for k, v in vars(ns).items() if k not in ("config", "subcommand")}
    for key, value in DEFAULTS.items():
        if key in vals and vals[key] is None:
            vals[key] = value

    def need(*keys):
        for k in keys:
            if vals.get(k) is None:
                raise UsageError(f"{_flag(k)} is required for '{sc}'")

    def check(ok: bool, key: str, msg: str):
        if not ok:
            raise UsageError(f"{_flag(key)}: {msg}")

    check(0 < vals["alpha"] < 1, "alpha", "must lie in (0, 1)")
    check(0 <= vals["seed"] < 2**64, "seed", "must be an unsigned 64-bit integer")
    cv = vals.get("critical_value")
    check(cv is None or (math.isfinite(cv) and cv > 0), "critical_value", "must be positive")
    if vals.get("gamma") is not None:
        check(0 < vals["gamma"] < 1, "gamma", "must lie in (0, 1)")

    cfg = RunConfig(subcommand=sc, alpha=vals["alpha"], seed=vals["seed"], critical_value=cv,
                    gamma=vals.get("gamma"))

    if sc == "test":
        need("data", "gamma")
        if (vals["free_coords"] is None) == (vals["hypothesis"] is None):
            raise UsageError("give exactly one of --free-coords or --hypothesis")
        if vals["free_coords"] is not None:
            try:
                cfg.free_coords = parse_coords(vals["free_coords"])
            except (ContractError, ValueError) as exc:
                raise UsageError(f"--free-coords: {exc}") from None
        if vals["assign"] is not None:
            check(len(vals["assign"]) >= 1, "assign", "needs at least one index")
        return replace(cfg, data=vals["data"], header=bool(vals["header"]),
                       hypothesis=vals["hypothesis"], cross_fit=bool(vals["cross_fit"]),
                       assign=vals["assign"])

    check(vals["n"] >= 2, "n", "must be >= 2")
    check(vals["reps"] >= 1, "reps", "must be >= 1")
    threads = vals.get("threads")
    check(threads is None or threads >= 0, "threads", "must be >= 0")
    cfg = replace(cfg, n=vals["n"], reps=vals["reps"], statistic=vals["statistic"],
                  threads=threads, out=vals.get("out"), svg=vals.get("svg"))

    if sc == "mixture-demo":
        try:
            cfg.truth = parse_truth(vals["truth"])
        except ContractError as exc:
            raise UsageError(f"--truth: {exc}") from None
        try:
            check_fold_sizes(cfg.n, cfg.gamma)
        except ContractError as exc:
            raise UsageError(f"--gamma: {exc}") from None
        return cfg

    need("dim", "null_dim", "out")
    check(vals["dim"] >= 1, "dim", "must be >= 1")
    check(0 <= vals["null_dim"] < vals["dim"], "null_dim", "must satisfy 0 <= null-dim < dim")
    cfg = replace(cfg, dim=vals["dim"], null_dim=vals["null_dim"])

    if sc == "power":
        try:
            cfg.delta_grid = parse_grid(vals["delta_grid"])
        except (ContractError, ValueError) as exc:
            raise UsageError(f"--delta-grid: {exc}") from None
        check(len(cfg.delta_grid) > 0, "delta_grid", "is empty")
        check(all(math.isfinite(v) for v in cfg.delta_grid), "delta_grid", "must be finite")
        try:
            check_fold_sizes(cfg.n, cfg.gamma)
        except ContractError as exc:
            raise UsageError(f"--gamma: {exc}") from None
        return cfg

    check(math.isfinite(vals["delta"]), "delta", "must be finite")
    cfg.delta = vals["delta"]
    try:
        cfg.gamma_grid = parse_grid(vals["gamma_grid"])
    except (ContractError, ValueError) as exc:
        raise UsageError(f"--gamma-grid: {exc}") from None
    check(len(cfg.gamma_grid) > 0, "gamma_grid", "is empty")
    bad = []
    for g in cfg.gamma_grid:
        try:
            if not 0 < g < 1:
                raise ContractError("")
            check_fold_sizes(cfg.n, g)
        except ContractError:
            bad.append(g)
    check(not bad, "gamma_grid", f"values {bad} are outside (0, 1) or leave a fold empty")
    if sc == "tune":
        cfg.target_power = vals["target_power"]
        check(0 < cfg.target_power < 1, "target_power", "must lie in (0, 1)")
        check(cv is None, "critical_value", "tuning keeps the critical value at 1/alpha")
    return cfg


def parse_args(argv=None) -> RunConfig:
    """Parse and validate; usage problems exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[ns.subcommand]
    try:
        if ns.config:
            _apply_config(ns, sub, _read_config(ns.config))
        return _validate(ns)
    except UsageError as exc:
        sub.error(str(exc))


def _base_cell(cfg: RunConfig, kind: str, **overrides) -> SimCell:
    fields = dict(n=cfg.n, d=cfg.dim, q=cfg.null_dim, delta=cfg.delta or 0.0,
                  gamma=cfg.gamma or 0.5, alpha=cfg.alpha, reps=cfg.reps, seed=cfg.seed,
                  statistic=cfg.statistic, kind=kind, critical_value=cfg.critical_value)
    fields.update(overrides)
    return SimCell(**fields)


def _run_test(cfg: RunConfig) -> int:
    data = read_csv(cfg.data, header=cfg.header)
    if cfg.hypothesis is not None:
        h = read_hypothesis(cfg.hypothesis, data.d)
    else:
        h = LinearHypothesis.coordinate(data.d, cfg.free_coords)
    spec = None if cfg.assign is not None else SplitSpec(cfg.gamma, cfg.seed)
    result = run_test(
        data, h, spec, TestConfig(cfg.alpha, cfg.critical_value),
        cross_fit=cfg.cross_fit, assignment=cfg.assign,
    )
    print(result.format_line())
    return 0


def _write_outputs(cfg: RunConfig, cells, x: str, title: str) -> None:
    text = cells_to_csv(cells)
    if cfg.out:
        atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)
    if cfg.svg:
        atomic_write(cfg.svg, render_svg(cells, x, title))


def run(cfg: RunConfig) -> int:
    try:
        for path in (cfg.out, cfg.svg):
            if path:
                check_writable(path)
        if cfg.subcommand == "test":
            return _run_test(cfg)
        if cfg.subcommand == "power":
            cells = sweep_delta(_base_cell(cfg, "power"), cfg.delta_grid, workers=cfg.threads)
            _write_outputs(cfg, cells, "delta",
                           f"power, d={cfg.dim}, q={cfg.null_dim}, n={cfg.n}, gamma={cfg.gamma}")
        elif cfg.subcommand == "size":
            cells = sweep_gamma(_base_cell(cfg, "size"), cfg.gamma_grid, workers=cfg.threads)
            _write_outputs(cfg, cells, "gamma",
                           f"rejection rate, d={cfg.dim}, q={cfg.null_dim}, delta={cfg.delta}")
        elif cfg.subcommand == "tune":
            res = tune_gamma(_base_cell(cfg, "tune"), cfg.gamma_grid, cfg.target_power,
                             workers=cfg.threads)
            _write_outputs(cfg, list(res.cells), "gamma",
                           f"power, d={cfg.dim}, q={cfg.null_dim}, delta={cfg.delta}")
            print(f"gamma_star={res.gamma_star!r} achieved_power={res.achieved_power!r} "
                  f"target_power={res.target_power!r} meets_target={int(res.meets_target)}")
        elif cfg.subcommand == "mixture-demo":
            t = cfg.truth
            sep = 0.0 if t is None else abs(t.mu2 - t.mu1) / 2
            cell = SimCell(n=cfg.n, d=1, q=0, delta=sep, gamma=cfg.gamma, alpha=cfg.alpha,
                           reps=cfg.reps, seed=cfg.seed, statistic=cfg.statistic,
                           kind="mixture", model="mixture", mixture=t,
                           critical_value=cfg.critical_value)
            _write_outputs(cfg, [run_cell(cell, workers=cfg.threads)], "gamma", "mixture SLRT")
        return 0
    except (OSError, ContractError, ValueError) as exc:
        print(f"universal-infer: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
