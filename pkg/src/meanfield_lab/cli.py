"""Command-line front end: INI experiment configs in, CSV artifacts out.

One experiment per invocation; the single config section names the
experiment and carries key=value fields. Unknown keys are rejected before
any computation. A given config and seed produce byte-identical outputs.

Potential grammar:   quadratic:a=1.0 | doublewell:a=1.0 | zero
Density grammar:     gaussian:mean=0.0,var=1.0 | uniform | uniform:a=0.0,b=1.0
Table grammar:       product:p=0.5 | product:w=0.25,0.75
Lists are comma-separated (n_list = 8,32,128).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checks, dynamics, fokker_planck
from .checks import CheckResult, write_results_csv
from .dynamics import SdeConfig
from .fokker_planck import PdeConfig
from .measures import (
    GridDensity,
    derive_seed,
    gaussian_density,
    product_measure,
    sample_product,
    uniform_density,
)
from .potentials import Potential, double_well, free_energy_mf, quadratic, zero_potential


class ConfigError(ValueError):
    pass


EXPERIMENTS = (
    "simulate", "solve-pde", "chaos-sweep", "evi-check", "evi-lifted-check",
    "gamma-check", "df-check", "isometry-check",
)

_COMMON_REQUIRED = ("seed",)
_COMMON_OPTIONAL = ("out_dir",)

_SCHEMA: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    # experiment: (required keys, optional keys), beyond the common ones
    "simulate": (("v", "h", "grid", "dt", "t_end", "n_particles", "n_replicas",
                  "rho0"), ("snapshot_times",)),
    "solve-pde": (("v", "h", "grid", "dt", "t_end", "rho0"), ("snapshot_times",)),
    "chaos-sweep": (("v", "h", "grid", "rho0", "n_list", "n_replicas", "t_list",
                     "sde_dt", "pde_dt"), ()),
    "evi-check": (("v", "h", "grid", "dt", "rho1", "rho2", "s", "t", "lambda"),
                  ("tolerance",)),
    "evi-lifted-check": (("v", "h", "grid", "sde_dt", "pde_dt", "rho_s", "nu",
                          "n_particles", "n_replicas", "s", "t", "lambda"), ()),
    "gamma-check": (("v", "h", "grid", "rho", "n_list"), ()),
    "df-check": (("sites", "n_particles", "n_marginal", "table"), ()),
    "isometry-check": (("grid", "rho_a", "rho_b", "n_list", "m_list"), ()),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    out_dir: str
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# field parsers


def _fail(name: str, message: str):
    raise ConfigError(f"field {name!r}: {message}")


def _parse_float(name: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        _fail(name, f"not a number: {raw!r}")


def _parse_int(name: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        _fail(name, f"not an integer: {raw!r}")


def _parse_float_list(name: str, raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in raw.split(","))
    except ValueError:
        _fail(name, f"not a comma-separated number list: {raw!r}")


def _parse_int_list(name: str, raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in raw.split(","))
    except ValueError:
        _fail(name, f"not a comma-separated integer list: {raw!r}")


def _split_spec(name: str, raw: str) -> tuple[str, dict[str, str]]:
    head, _, rest = raw.strip().partition(":")
    opts: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                _fail(name, f"expected key=value in {item!r}")
            opts[key.strip()] = val.strip()
    return head.strip(), opts


def _parse_potential(name: str, raw: str) -> Potential:
    head, opts = _split_spec(name, raw)
    if head == "zero":
        if opts:
            _fail(name, "zero takes no parameters")
        return zero_potential()
    if head == "quadratic":
        if set(opts) != {"a"}:
            _fail(name, "quadratic requires exactly a=...")
        return quadratic(_parse_float(name, opts["a"]))
    if head == "doublewell":
        if set(opts) != {"a"}:
            _fail(name, "doublewell requires exactly a=...")
        return double_well(_parse_float(name, opts["a"]))
    _fail(name, f"unknown potential {head!r}")


def _parse_grid(name: str, raw: str) -> tuple[float, float, int]:
    parts = raw.split(",")
    if len(parts) != 3:
        _fail(name, "expected left,right,cells")
    left = _parse_float(name, parts[0])
    right = _parse_float(name, parts[1])
    cells = _parse_int(name, parts[2])
    if not right > left or cells < 2:
        _fail(name, "grid must satisfy right > left and cells >= 2")
    return left, right, cells


def _parse_density_spec(name: str, raw: str) -> tuple[str, dict[str, float]]:
    head, opts = _split_spec(name, raw)
    if head == "gaussian":
        if set(opts) != {"mean", "var"}:
            _fail(name, "gaussian requires mean=...,var=...")
        var = _parse_float(name, opts["var"])
        if var <= 0:
            _fail(name, "variance must be positive")
        return "gaussian", {"mean": _parse_float(name, opts["mean"]), "var": var}
    if head == "uniform":
        if not opts:
            return "uniform", {}
        if set(opts) != {"a", "b"}:
            _fail(name, "uniform takes either no parameters or a=...,b=...")
        a = _parse_float(name, opts["a"])
        b = _parse_float(name, opts["b"])
        if not b > a:
            _fail(name, "uniform support requires b > a")
        return "uniform", {"a": a, "b": b}
    _fail(name, f"unknown density {head!r}")


def _build_density(spec: tuple[str, dict[str, float]],
                   grid: tuple[float, float, int]) -> GridDensity:
    kind, opts = spec
    left, right, cells = grid
    if kind == "gaussian":
        return gaussian_density(opts["mean"], opts["var"], left, right, cells)
    if "a" in opts:
        return uniform_density(left, right, cells, support=(opts["a"], opts["b"]))
    return uniform_density(left, right, cells)


def _parse_table_spec(name: str, raw: str) -> tuple[str, dict]:
    head, opts = _split_spec(name, raw)
    if head != "product":
        _fail(name, f"unknown table {head!r}")
    if set(opts) == {"p"}:
        p = _parse_float(name, opts["p"])
        if not 0.0 <= p <= 1.0:
            _fail(name, "p must lie in [0, 1]")
        return "product-p", {"p": p}
    if set(opts) == {"w"}:
        w = _parse_float_list(name, opts["w"])
        if any(x < 0 for x in w) or sum(w) <= 0:
            _fail(name, "weights must be nonnegative with positive sum")
        return "product-w", {"w": w}
    _fail(name, "product requires p=... or w=...")


_FIELD_PARSERS = {
    "v": _parse_potential,
    "h": _parse_potential,
    "grid": _parse_grid,
    "dt": _parse_float,
    "sde_dt": _parse_float,
    "pde_dt": _parse_float,
    "t_end": _parse_float,
    "s": _parse_float,
    "t": _parse_float,
    "lambda": _parse_float,
    "tolerance": _parse_float,
    "n_particles": _parse_int,
    "n_replicas": _parse_int,
    "n_marginal": _parse_int,
    "n_list": _parse_int_list,
    "m_list": _parse_int_list,
    "t_list": _parse_float_list,
    "snapshot_times": _parse_float_list,
    "sites": _parse_float_list,
    "rho0": _parse_density_spec,
    "rho1": _parse_density_spec,
    "rho2": _parse_density_spec,
    "rho_a": _parse_density_spec,
    "rho_b": _parse_density_spec,
    "rho_s": _parse_density_spec,
    "rho": _parse_density_spec,
    "nu": _parse_density_spec,
    "table": _parse_table_spec,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment config. Unknown keys, missing keys
    and malformed values are errors naming the offending field."""
    parser = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError(f"expected exactly one experiment section, got {sections}")
    experiment = sections[0]
    if experiment not in _SCHEMA:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    raw = dict(parser.items(experiment))
    required, optional = _SCHEMA[experiment]
    allowed = set(required) | set(optional) | set(_COMMON_REQUIRED) | set(_COMMON_OPTIONAL)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for experiment {experiment!r}")
    for key in list(required) + list(_COMMON_REQUIRED):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r} for {experiment!r}")
    seed = _parse_int("seed", raw.pop("seed"))
    out_dir = raw.pop("out_dir", "out")
    params = {}
    for key, value in raw.items():
        params[key] = _FIELD_PARSERS[key](key, value)
    return ExperimentConfig(experiment=experiment, seed=seed, out_dir=out_dir,
                            params=params)


# ---------------------------------------------------------------------------
# experiment runners


def _write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(content)


def _particles_csv(snaps) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "replica", "particle", "position"])
    for t, ens in snaps:
        for r in range(ens.n_replicas):
            for p in range(ens.n_particles):
                writer.writerow([f"{t:.17g}", r, p,
                                 f"{ens.configurations[r, p]:.17g}"])
    return buf.getvalue()


def _pde_csv(snaps) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "cell_center", "mass", "density_value"])
    for t, rho in snaps:
        centers = rho.centers
        dens = rho.density_values()
        for c in range(rho.cells):
            writer.writerow([f"{t:.17g}", f"{centers[c]:.17g}",
                             f"{rho.mass[c]:.17g}", f"{dens[c]:.17g}"])
    return buf.getvalue()


def _run_simulate(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    left, right, cells = p["grid"]
    rho0 = _build_density(p["rho0"], p["grid"])
    snapshot_times = p.get("snapshot_times", (p["t_end"],))
    sde = SdeConfig(dt=p["dt"], t_end=p["t_end"], V=p["v"], H=p["h"],
                    domain=(left, right), seed=cfg.seed,
                    snapshot_times=snapshot_times)
    ens0 = sample_product(rho0, p["n_particles"], p["n_replicas"],
                          derive_seed(cfg.seed, "simulate-init"))
    snaps = dynamics.evolve(ens0, sde)
    _write(out / "particles.csv", _particles_csv(snaps))
    worst = max(float(np.max(np.abs(ens.configurations - (left + right) / 2.0)))
                for _, ens in snaps)
    return [CheckResult.inequality("simulate-domain-bounds", worst,
                                   (right - left) / 2.0, tolerance=0.0,
                                   snapshots=len(snaps))]


def _run_solve_pde(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    rho0 = _build_density(p["rho0"], p["grid"])
    snapshot_times = p.get("snapshot_times", (p["t_end"],))
    pde = PdeConfig(dt=p["dt"], t_end=p["t_end"], V=p["v"], H=p["h"],
                    grid=p["grid"], snapshot_times=snapshot_times)
    snaps = fokker_planck.solve(rho0, pde)
    _write(out / "pde.csv", _pde_csv(snaps))
    results = []
    for t, rho in snaps:
        results.append(CheckResult.identity(
            f"pde-mass-t{t:g}", float(rho.mass.sum()), 1.0, tolerance=1e-12))
    budget = checks._default_budget(pde.dx, pde.dt)
    energies = [(t, free_energy_mf(rho, p["v"], p["h"]).total) for t, rho in snaps]
    for (t0, f0), (t1, f1) in zip(energies[:-1], energies[1:]):
        results.append(CheckResult.inequality(
            f"pde-dissipation-t{t0:g}-t{t1:g}", f1, f0, tolerance=budget))
    return results


def _run_chaos(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    left, right, cells = p["grid"]
    rho0 = _build_density(p["rho0"], p["grid"])
    t_end = max(p["t_list"])
    sde = SdeConfig(dt=p["sde_dt"], t_end=t_end, V=p["v"], H=p["h"],
                    domain=(left, right), seed=cfg.seed,
                    snapshot_times=tuple(sorted(p["t_list"])))
    pde = PdeConfig(dt=p["pde_dt"], t_end=t_end, V=p["v"], H=p["h"],
                    grid=p["grid"], snapshot_times=tuple(sorted(p["t_list"])))
    return checks.chaos_sweep(rho0, p["n_list"], p["n_replicas"], p["t_list"],
                              sde, pde)


def _run_evi(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    rho1 = _build_density(p["rho1"], p["grid"])
    rho2 = _build_density(p["rho2"], p["grid"])
    duration = p["t"] - p["s"]
    if duration <= 0:
        raise ConfigError("field 't': must exceed 's'")
    pde = PdeConfig(dt=p["dt"], t_end=duration, V=p["v"], H=p["h"],
                    grid=p["grid"], snapshot_times=(duration,))
    return [checks.evi_mf_check(rho1, rho2, p["s"], p["t"], p["lambda"], pde,
                                tolerance=p.get("tolerance"))]


def _run_evi_lifted(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    left, right, cells = p["grid"]
    rho_s = _build_density(p["rho_s"], p["grid"])
    nu = _build_density(p["nu"], p["grid"])
    duration = p["t"] - p["s"]
    if duration <= 0:
        raise ConfigError("field 't': must exceed 's'")
    sde = SdeConfig(dt=p["sde_dt"], t_end=duration, V=p["v"], H=p["h"],
                    domain=(left, right), seed=derive_seed(cfg.seed, "evi-lifted-sde"),
                    snapshot_times=(duration,))
    pde = PdeConfig(dt=p["pde_dt"], t_end=duration, V=p["v"], H=p["h"],
                    grid=p["grid"], snapshot_times=(duration,))
    ens0 = sample_product(rho_s, p["n_particles"], p["n_replicas"],
                          derive_seed(cfg.seed, "evi-lifted-init"))
    return [checks.evi_lifted_check(ens0, nu, p["s"], p["t"], p["lambda"],
                                    sde, p["v"], p["h"], rho_s, pde)]


def _run_gamma(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    rho = _build_density(p["rho"], p["grid"])
    return checks.gamma_check(rho, p["n_list"], p["v"], p["h"])


def _run_df(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    sites = np.array(p["sites"])
    kind, opts = p["table"]
    if kind == "product-p":
        if sites.size != 2:
            raise ConfigError("field 'table': product:p=... requires exactly 2 sites")
        weights = np.array([1.0 - opts["p"], opts["p"]])
    else:
        weights = np.array(opts["w"], dtype=float)
        if weights.size != sites.size:
            raise ConfigError("field 'table': one weight per site required")
        weights = weights / weights.sum()
    m = product_measure(sites, weights, p["n_particles"])
    n = p["n_marginal"]
    if not 1 <= n < m.n:
        raise ConfigError("field 'n_marginal': must satisfy 1 <= n < n_particles")
    return [checks.df_check(m, n)]


def _run_isometry(cfg: ExperimentConfig, out: Path) -> list[CheckResult]:
    p = cfg.params
    rho_a = _build_density(p["rho_a"], p["grid"])
    rho_b = _build_density(p["rho_b"], p["grid"])
    results = []
    for n in p["n_list"]:
        for m in p["m_list"]:
            results.append(checks.isometry_check(rho_a, rho_b, n, m, cfg.seed))
    return results


_RUNNERS = {
    "simulate": _run_simulate,
    "solve-pde": _run_solve_pde,
    "chaos-sweep": _run_chaos,
    "evi-check": _run_evi,
    "evi-lifted-check": _run_evi_lifted,
    "gamma-check": _run_gamma,
    "df-check": _run_df,
    "isometry-check": _run_isometry,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute the experiment, write CSV artifacts, print one PASS/FAIL line
    per check. Exit code 0 iff every non-conditional check passes."""
    out = Path(cfg.out_dir)
    try:
        results = _RUNNERS[cfg.experiment](cfg, out)
    except OSError as exc:
        print(f"ERROR i/o: {exc}", file=sys.stderr)
        return 2
    _write(out / "results.csv", write_results_csv(results))
    for r in results:
        print(r.summary())
    failed = [r for r in results if not r.passed and not r.conditional]
    print(f"{cfg.experiment}: {len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="meanfield-lab",
        description="Run one interacting-diffusion experiment from an INI config.")
    parser.add_argument("--config", required=True, help="path to the INI config")
    parser.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"ERROR reading config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        if args.out is not None:
            cfg = ExperimentConfig(cfg.experiment, cfg.seed, args.out, cfg.params)
        if args.seed is not None:
            cfg = ExperimentConfig(cfg.experiment, args.seed, cfg.out_dir, cfg.params)
        return run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
