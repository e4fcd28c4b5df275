"""Batch command-line entry point.

Subcommands map one-to-one onto the library stages: ``analyze`` (structural
checks), ``design`` (gain synthesis), ``simulate`` (trajectory generation),
``estimate`` (the least-squares fit), ``witness`` (identifiability report),
and ``report`` (the whole pipeline). Stage failures map to distinct exit
codes:

    1  unparseable config, missing files or keys
    2  system validation failure
    3  not strongly detectable
    4  no stabilizing gain / unstable error dynamics
    5  solver infeasibility or insufficient data

A JSON config file (--config) overrides flags. All randomness derives from
the root seed, so a rerun with the same config is byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from .als import (
    AlsProblem,
    InsufficientDataError,
    NonIdentifiableError,
    problem_to_json,
    solve_joint,
    solve_q_given_r,
    solve_r_given_q,
)
from .error_dynamics import UnstableDynamicsError, analytic_autocov, build_error_dynamics
from .filtering import DesignOptions, GainDesignError, design_gains, load_gains, save_gains, validate_gains
from .identifiability import build_identifiability_report
from .linalg import as_matrix, spectral_radius
from .simulate import (
    generate_unknown_input,
    innovation_sequence,
    innovations_to_csv,
    parse_input_spec,
    simulate_plant,
)
from .structural import check_strong_detectability
from .systems import DimensionError, load_system, validate_system

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_NOT_STRONGLY_DETECTABLE = 3
EXIT_NO_STABILIZING_GAIN = 4
EXIT_SOLVER = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; parse failures must be 1 here
    def error(self, message):
        raise CliError(EXIT_PARSE, message)


@dataclasses.dataclass
class RunConfig:
    system: str
    gains: str = "auto"
    N: int | None = None
    nd: int | None = None
    input: str = "zero"
    q: str | None = None
    r: str | None = None
    reg: str = "minnorm"
    seed: int = 0
    out: str | None = None
    replicates: int = 1

    def canonical(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def build_parser() -> _Parser:
    parser = _Parser(prog="uials", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")
    for name, descr in (
        ("analyze", "validate the system and run the structural checks"),
        ("design", "synthesize stabilizing unbiased filter gains"),
        ("simulate", "generate a trajectory and its innovation sequence"),
        ("estimate", "build the regression and solve for the covariances"),
        ("witness", "rank diagnostics and null-space witnesses"),
        ("report", "full pipeline with JSON report and human summary"),
    ):
        p = sub.add_parser(name, help=descr)
        p.add_argument("--system", required=True, help="system description JSON")
        p.add_argument("--gains", default="auto", help="gains JSON path or 'auto'")
        p.add_argument("-N", "--window", dest="N", type=int, default=None, help="autocovariance lag window")
        p.add_argument("--nd", type=int, default=None, help="simulated data length")
        p.add_argument("--input", default="zero", help="unknown-input spec (zero|step:..|sin:..|walk:..|file:..)")
        p.add_argument("--q", dest="q", default=None, help="known Q JSON (estimate R only)")
        p.add_argument("--r", "-r", dest="r", default=None, help="known R JSON (estimate Q only)")
        p.add_argument("--reg", default="minnorm", help="regularization: none | minnorm | tik:<lambda>")
        p.add_argument("--seed", type=int, default=0, help="root seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--replicates", type=int, default=1, help="independent simulation replicates")
        p.add_argument("--config", default=None, help="JSON config file; entries override flags")
    return parser


def _merge_config(ns: argparse.Namespace) -> RunConfig:
    values = {
        f.name: getattr(ns, f.name)
        for f in dataclasses.fields(RunConfig)
        if hasattr(ns, f.name)
    }
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_PARSE, f"cannot read config {ns.config}: {exc}") from exc
        unknown = set(overrides) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise CliError(EXIT_PARSE, f"unknown config keys: {sorted(unknown)}")
        values.update(overrides)
    cfg = RunConfig(**values)
    if cfg.N is not None and cfg.N < 1:
        raise CliError(EXIT_PARSE, f"N must be >= 1, got {cfg.N}")
    if cfg.nd is not None and cfg.N is not None and cfg.nd < cfg.N:
        raise CliError(EXIT_PARSE, f"nd={cfg.nd} must be >= N={cfg.N}")
    return cfg


def _parse_reg(text: str):
    if text == "none":
        return "none", None
    if text == "minnorm":
        return "min_norm", None
    if text.startswith("tik:"):
        try:
            lam = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise CliError(EXIT_PARSE, f"bad tikhonov parameter in {text!r}") from exc
        if lam <= 0:
            raise CliError(EXIT_PARSE, "tikhonov lambda must be > 0")
        return "tikhonov", lam
    raise CliError(EXIT_PARSE, f"unknown regularization {text!r}")


def _load_stage(cfg: RunConfig):
    try:
        return load_system(cfg.system)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CliError(EXIT_PARSE, f"cannot load system {cfg.system}: {exc}") from exc
    except (DimensionError, ValueError) as exc:
        raise CliError(EXIT_VALIDATION, f"invalid system {cfg.system}: {exc}") from exc


def _validate_stage(system):
    report = validate_system(system)
    if not report.overall:
        failed = [c.name for c in report.checks if not c.passed]
        raise CliError(EXIT_VALIDATION, f"system validation failed: {failed}")
    return report


def _structural_stage(system, seed: int):
    report = check_strong_detectability(system, seed=seed)
    if not report.strongly_detectable:
        reasons = []
        if not report.rank_matching.passed:
            reasons.append("rank matching")
        if not report.minimum_phase:
            reasons.append("minimum phase")
        raise CliError(EXIT_NOT_STRONGLY_DETECTABLE, f"not strongly detectable: {reasons} violated")
    return report


def _gains_stage(cfg: RunConfig, system):
    if cfg.gains == "auto":
        try:
            gains = design_gains(system, DesignOptions(seed=cfg.seed))
        except GainDesignError as exc:
            raise CliError(EXIT_NO_STABILIZING_GAIN, str(exc)) from exc
    else:
        try:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                gains = load_gains(cfg.gains, system)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise CliError(EXIT_PARSE, f"cannot load gains {cfg.gains}: {exc}") from exc
    report = validate_gains(system, gains.F, gains.L)
    if not report.check("error_dynamics_stable").passed:
        radius = report.check("error_dynamics_stable").evidence["spectral_radius"]
        raise CliError(EXIT_NO_STABILIZING_GAIN, f"error dynamics unstable (spectral radius {radius:.6f})")
    if not report.overall:
        failed = [c.name for c in report.checks if not c.passed]
        raise CliError(EXIT_VALIDATION, f"gains violate unbiasedness constraints: {failed}")
    return gains, report


def _require_window(cfg: RunConfig, system) -> int:
    if cfg.N is None:
        # no principled default exists beyond N >= n + 1, so the window is explicit
        raise CliError(EXIT_PARSE, "-N/--window is required for this command")
    return cfg.N


def _require_noise(cfg: RunConfig, noise):
    if noise is None:
        raise CliError(EXIT_PARSE, f"system file {cfg.system} must define Q and R for this command")
    return noise


def _load_known_matrix(path, name):
    try:
        with open(path) as fh:
            data = json.load(fh)
        if isinstance(data, dict):
            data = data[name]
        return as_matrix(data, name)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"cannot load {name} from {path}: {exc}") from exc


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out if cfg.out else "uials_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _simulate_innovations(cfg: RunConfig, system, noise, gains, nd: int, seed_pair):
    input_seed, plant_seed = seed_pair
    try:
        signal = parse_input_spec(cfg.input, system.q)
    except (ValueError, OSError) as exc:
        raise CliError(EXIT_PARSE, f"bad input spec {cfg.input!r}: {exc}") from exc
    if signal.kind == "random_walk" and signal.seed == 0:
        signal = dataclasses.replace(signal, seed=int(input_seed))
    d = generate_unknown_input(signal, nd, system.q)
    traj = simulate_plant(system, noise, d, seed=int(plant_seed))
    return traj, innovation_sequence(system, gains, traj)


def _spawn_seeds(root: int, count: int):
    children = np.random.SeedSequence(root).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def cmd_analyze(cfg: RunConfig) -> int:
    system, _ = _load_stage(cfg)
    validation = validate_system(system)
    structural = check_strong_detectability(system, seed=cfg.seed)
    payload = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "validation": validation.to_dict(),
        "structural": structural.to_dict(),
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if cfg.out:
        _dump_json(payload, _outdir(cfg) / "analysis.json")
    print(text)
    if not validation.overall:
        return EXIT_VALIDATION
    if not structural.strongly_detectable:
        return EXIT_NOT_STRONGLY_DETECTABLE
    return EXIT_OK


def cmd_design(cfg: RunConfig) -> int:
    system, _ = _load_stage(cfg)
    _validate_stage(system)
    _structural_stage(system, cfg.seed)
    gains, report = _gains_stage(cfg, system)
    radius = report.check("error_dynamics_stable").evidence["spectral_radius"]
    if cfg.out:
        save_gains(gains, _outdir(cfg) / "gains.json")
    print(json.dumps({**gains.to_dict(), "spectral_radius": radius}, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    system, noise = _load_stage(cfg)
    _validate_stage(system)
    _structural_stage(system, cfg.seed)
    noise = _require_noise(cfg, noise)
    gains, _ = _gains_stage(cfg, system)
    if cfg.nd is None:
        raise CliError(EXIT_PARSE, "--nd is required for simulate")
    seeds = _spawn_seeds(cfg.seed, 2)
    traj, innov = _simulate_innovations(cfg, system, noise, gains, cfg.nd, seeds)
    out = _outdir(cfg)
    traj.to_csv(out / "trajectory.csv")
    innovations_to_csv(innov, out / "innovations.csv")
    print(f"wrote {out / 'trajectory.csv'} and {out / 'innovations.csv'}")
    return EXIT_OK


def _solve_stage(cfg: RunConfig, prob: AlsProblem):
    reg, lam = _parse_reg(cfg.reg)
    try:
        if cfg.q is not None and cfg.r is not None:
            raise CliError(EXIT_PARSE, "--q and --r are mutually exclusive")
        if cfg.q is not None:
            return solve_r_given_q(prob, _load_known_matrix(cfg.q, "Q"), reg=reg, lam=lam)
        if cfg.r is not None:
            return solve_q_given_r(prob, _load_known_matrix(cfg.r, "R"), reg=reg, lam=lam)
        return solve_joint(prob, reg=reg, lam=lam)
    except NonIdentifiableError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc


def cmd_estimate(cfg: RunConfig) -> int:
    system, noise = _load_stage(cfg)
    _validate_stage(system)
    _structural_stage(system, cfg.seed)
    gains, _ = _gains_stage(cfg, system)
    N = _require_window(cfg, system)
    try:
        ed = build_error_dynamics(system, gains)
    except UnstableDynamicsError as exc:
        raise CliError(EXIT_NO_STABILIZING_GAIN, str(exc)) from exc

    noise = _require_noise(cfg, noise)
    solutions = []
    if cfg.nd is None:
        prob = AlsProblem.analytic(ed, system.G, noise, N)
        solutions.append(_solve_stage(cfg, prob))
    else:
        seeds = _spawn_seeds(cfg.seed, 2 * cfg.replicates)
        prob = None
        for pair in zip(seeds[::2], seeds[1::2]):
            _, innov = _simulate_innovations(cfg, system, noise, gains, cfg.nd, pair)
            try:
                prob = AlsProblem.from_innovations(ed, system.G, innov, N)
            except InsufficientDataError as exc:
                raise CliError(EXIT_SOLVER, str(exc)) from exc
            solutions.append(_solve_stage(cfg, prob))

    payload = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "provenance": prob.provenance,
        "solutions": [s.to_dict() for s in solutions],
    }
    if cfg.out:
        out = _outdir(cfg)
        problem_to_json(prob, out / "als_problem.json")
        _dump_json(payload, out / "solution.json")
    print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_witness(cfg: RunConfig) -> int:
    system, _ = _load_stage(cfg)
    _validate_stage(system)
    _structural_stage(system, cfg.seed)
    gains, _ = _gains_stage(cfg, system)
    N = _require_window(cfg, system)
    try:
        ed = build_error_dynamics(system, gains)
    except UnstableDynamicsError as exc:
        raise CliError(EXIT_NO_STABILIZING_GAIN, str(exc)) from exc
    report = build_identifiability_report(system, gains, ed, N)
    if cfg.out:
        _dump_json(
            {"version": __version__, "config_hash": cfg.digest(), **report.to_dict()},
            _outdir(cfg) / "identifiability.json",
        )
    print(report.to_text())
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    system, noise = _load_stage(cfg)
    validation = validate_system(system)
    if not validation.overall:
        failed = [c.name for c in validation.checks if not c.passed]
        raise CliError(EXIT_VALIDATION, f"system validation failed: {failed}")
    structural = _structural_stage(system, cfg.seed)
    gains, gains_report = _gains_stage(cfg, system)
    N = _require_window(cfg, system)
    try:
        ed = build_error_dynamics(system, gains)
    except UnstableDynamicsError as exc:
        raise CliError(EXIT_NO_STABILIZING_GAIN, str(exc)) from exc
    ident = build_identifiability_report(system, gains, ed, N)
    radius = gains_report.check("error_dynamics_stable").evidence["spectral_radius"]

    out = _outdir(cfg)
    payload = {
        "version": __version__,
        "config_hash": cfg.digest(),
        "config": dataclasses.asdict(cfg),
        "validation": validation.to_dict(),
        "structural": structural.to_dict(),
        "gains": {**gains.to_dict(), "K": gains.K.tolist(), "spectral_radius": radius},
        "identifiability": ident.to_dict(),
        "solution": None,
        "empirical_solution": None,
    }

    if noise is not None:
        prob = AlsProblem.analytic(ed, system.G, noise, N)
        problem_to_json(prob, out / "als_problem.json")
        analytic_autocov(ed, noise, system.G, N).to_csv(out / "autocov_analytic.csv")
        payload["solution"] = _solve_stage(cfg, prob).to_dict()
        if cfg.nd is not None:
            seeds = _spawn_seeds(cfg.seed, 2)
            traj, innov = _simulate_innovations(cfg, system, noise, gains, cfg.nd, seeds)
            traj.to_csv(out / "trajectory.csv")
            innovations_to_csv(innov, out / "innovations.csv")
            try:
                emp = AlsProblem.from_innovations(ed, system.G, innov, N)
            except InsufficientDataError as exc:
                raise CliError(EXIT_SOLVER, str(exc)) from exc
            payload["empirical_solution"] = _solve_stage(cfg, emp).to_dict()

    _dump_json(payload, out / "report.json")
    summary = _summary_text(cfg, system, structural, radius, ident)
    (out / "summary.txt").write_text(summary)
    print(summary)
    return EXIT_OK


def _summary_text(cfg, system, structural, radius, ident) -> str:
    rm = structural.rank_matching
    zeros = ", ".join(f"{z.real:g}{z.imag:+g}j" if z.imag else f"{z.real:g}" for z in structural.invariant_zeros)
    r = ident.ranks
    lines = [
        f"system: {cfg.system} (n={system.n}, q={system.q}, g={system.g}, p={system.p})",
        "validation: PASS",
        f"rank matching: {'PASS' if rm.passed else 'FAIL'} ({rm.rank_block} = {rm.rank_d} + {rm.rank_bd})",
        f"invariant zeros: [{zeros}]  minimum phase: {'PASS' if structural.minimum_phase else 'FAIL'}",
        f"strongly detectable: {'PASS' if structural.strongly_detectable else 'FAIL'}",
        f"filter gains: spectral radius of error dynamics = {radius:g}",
        f"regression: H is {system.n * system.n * ident.N}x{r.cols_h} over a lag window N={ident.N}",
    ]
    lines.append(f"rank(H)={r.rank_h}, rank(H1)={r.rank_h1}, rank(H2)={r.rank_h2}")
    lines.append(f"joint problem: not uniquely identifiable (nullity {r.nullity_h})")
    lines.append(f"Q-only problem: not uniquely identifiable (nullity {r.nullity_h1})")
    lines.append(f"R-only problem: not uniquely identifiable (nullity {r.nullity_h2})")
    for w in ident.witnesses:
        lines.append(f"witness [{w.kind}]: |H xi| = {w.residual:.3e}")
    lines.append(f"config hash: {cfg.digest()}")
    lines.append(f"version: {__version__}")
    return "\n".join(lines) + "\n"


_HANDLERS = {
    "analyze": cmd_analyze,
    "design": cmd_design,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "witness": cmd_witness,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise CliError(EXIT_PARSE, "a subcommand is required (analyze, design, simulate, estimate, witness, report)")
        cfg = _merge_config(ns)
        return _HANDLERS[ns.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
