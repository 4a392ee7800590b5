"""Experiment runner.

Parses a flat INI config describing a problem, block structure, schedule,
and run; executes the randomized solver, its full-vector specialization, or
the two-loop regularization sweep; and writes CSV traces, a schedule
validation report, and (for deblurring) PGM snapshots of the averaged
iterate. All files are written atomically (temp + rename).

Commands: ``run <config>``, ``validate <config>`` (schedule report only),
``compare <config>`` (randomized mode vs two-loop on the same instance).
The environment variable RBIRG_SEED overrides the configured seed.
Exit codes: 0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import baselines, diagnostics, imaging, problems, solver
from .core import ScheduleError, StepSchedule, make_schedule, validate_schedule

MODES = ("rbirg", "full_irg", "two_loop")
PROBLEM_TYPES = ("deblur", "least_squares", "penalty")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem_type: str
    image: Optional[str] = None
    kernel: Optional[str] = None
    boundary: str = "replicate"
    noise_sigma: float = 0.0
    matrix: Optional[str] = None
    rhs: Optional[str] = None
    instance: Optional[str] = None
    block_count: Optional[int] = None
    block_sizes: Optional[tuple[int, ...]] = None
    probabilities: Optional[tuple[float, ...]] = None
    gamma0: Optional[float] = None
    eta0: Optional[float] = None
    delta: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    r: float = 0.5
    mode: str = "rbirg"
    iterations: int = 1000
    seed: int = 0
    checkpoints: Optional[tuple[int, ...]] = None
    snapshots: tuple[int, ...] = ()
    etas: Optional[tuple[float, ...]] = None
    inner_iterations: Optional[int] = None
    step0: Optional[float] = None
    warm_start: bool = False
    output_dir: str = "."


def _get(cp, section, option, field_name, *, required=False, default=None):
    if not cp.has_option(section, option):
        if required:
            raise ConfigError(field_name, "missing required option")
        return default
    return cp.get(section, option).strip()


def _parse_number(raw, field_name, kind):
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(field_name, f"expected {kind.__name__}, got {raw!r}") from None


def _parse_tuple(raw, field_name, kind):
    try:
        return tuple(kind(tok) for tok in raw.split())
    except ValueError:
        raise ConfigError(field_name, f"expected {kind.__name__} list, got {raw!r}") from None


def parse_config(path) -> ExperimentConfig:
    """Read and validate an experiment config file.

    Referenced data files must exist; cross-field invariants (mode-specific
    options, snapshot/checkpoint containment) are enforced here. Schedule
    validity against the problem is checked when the experiment starts.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError("config", f"cannot read {path!r}")

    ptype = _get(cp, "problem", "type", "problem.type", required=True)
    if ptype not in PROBLEM_TYPES:
        raise ConfigError("problem.type", f"must be one of {PROBLEM_TYPES}, got {ptype!r}")

    kw: dict = {"problem_type": ptype}
    if ptype == "deblur":
        kw["image"] = _get(cp, "problem", "image", "problem.image", required=True)
        kw["kernel"] = _get(cp, "problem", "kernel", "problem.kernel")
        kw["boundary"] = _get(cp, "problem", "boundary", "problem.boundary",
                              default="replicate")
        if kw["boundary"] not in imaging.BOUNDARIES:
            raise ConfigError("problem.boundary",
                              f"must be one of {imaging.BOUNDARIES}, got {kw['boundary']!r}")
        raw = _get(cp, "problem", "noise_sigma", "problem.noise_sigma", default="0")
        kw["noise_sigma"] = _parse_number(raw, "problem.noise_sigma", float)
        if kw["noise_sigma"] < 0:
            raise ConfigError("problem.noise_sigma", "must be >= 0")
        for field_name in ("image", "kernel"):
            p = kw[field_name]
            if p is not None and not os.path.exists(p):
                raise ConfigError(f"problem.{field_name}", f"file not found: {p!r}")
    elif ptype == "least_squares":
        kw["matrix"] = _get(cp, "problem", "matrix", "problem.matrix", required=True)
        kw["rhs"] = _get(cp, "problem", "rhs", "problem.rhs", required=True)
        for field_name in ("matrix", "rhs"):
            if not os.path.exists(kw[field_name]):
                raise ConfigError(f"problem.{field_name}",
                                  f"file not found: {kw[field_name]!r}")
    else:
        name = _get(cp, "problem", "instance", "problem.instance", required=True)
        if name not in problems.BUILTIN_PENALTY_PROBLEMS:
            raise ConfigError("problem.instance",
                              f"unknown instance {name!r}; available: "
                              f"{sorted(problems.BUILTIN_PENALTY_PROBLEMS)}")
        kw["instance"] = name

    sizes = _get(cp, "blocks", "sizes", "blocks.sizes")
    count = _get(cp, "blocks", "count", "blocks.count")
    if sizes is not None and count is not None:
        raise ConfigError("blocks", "give either sizes or count, not both")
    if sizes is not None:
        kw["block_sizes"] = _parse_tuple(sizes, "blocks.sizes", int)
    if count is not None:
        kw["block_count"] = _parse_number(count, "blocks.count", int)
        if kw["block_count"] < 1:
            raise ConfigError("blocks.count", "must be >= 1")
    probs = _get(cp, "blocks", "probabilities", "blocks.probabilities")
    if probs is not None and probs != "uniform":
        kw["probabilities"] = _parse_tuple(probs, "blocks.probabilities", float)

    mode = _get(cp, "run", "mode", "run.mode", default="rbirg")
    if mode not in MODES:
        raise ConfigError("run.mode", f"must be one of {MODES}, got {mode!r}")
    kw["mode"] = mode

    if cp.has_section("schedule"):
        for name, caster in (("gamma0", float), ("eta0", float), ("delta", float),
                             ("a", float), ("b", float)):
            raw = _get(cp, "schedule", name, f"schedule.{name}")
            if raw is not None:
                kw[name] = _parse_number(raw, f"schedule.{name}", caster)
        raw = _get(cp, "schedule", "r", "schedule.r")
        if raw is not None:
            kw["r"] = _parse_number(raw, "schedule.r", float)

    raw = _get(cp, "run", "iterations", "run.iterations", default="1000")
    kw["iterations"] = _parse_number(raw, "run.iterations", int)
    if kw["iterations"] < 1:
        raise ConfigError("run.iterations", "must be >= 1")
    raw = _get(cp, "run", "seed", "run.seed", default="0")
    kw["seed"] = _parse_number(raw, "run.seed", int)
    env_seed = os.environ.get("RBIRG_SEED")
    if env_seed is not None:
        kw["seed"] = _parse_number(env_seed, "run.seed (RBIRG_SEED)", int)
    raw = _get(cp, "run", "checkpoints", "run.checkpoints")
    if raw is not None:
        kw["checkpoints"] = _parse_tuple(raw, "run.checkpoints", int)
    raw = _get(cp, "run", "snapshots", "run.snapshots")
    if raw is not None:
        kw["snapshots"] = _parse_tuple(raw, "run.snapshots", int)
    raw = _get(cp, "run", "etas", "run.etas")
    if raw is not None:
        kw["etas"] = _parse_tuple(raw, "run.etas", float)
    raw = _get(cp, "run", "inner_iterations", "run.inner_iterations")
    if raw is not None:
        kw["inner_iterations"] = _parse_number(raw, "run.inner_iterations", int)
    raw = _get(cp, "run", "step0", "run.step0")
    if raw is not None:
        kw["step0"] = _parse_number(raw, "run.step0", float)
    raw = _get(cp, "run", "warm_start", "run.warm_start")
    if raw is not None:
        if raw.lower() not in ("true", "false", "0", "1", "yes", "no"):
            raise ConfigError("run.warm_start", f"expected boolean, got {raw!r}")
        kw["warm_start"] = raw.lower() in ("true", "1", "yes")

    kw["output_dir"] = _get(cp, "output", "directory", "output.directory", default=".")

    cfg = ExperimentConfig(**kw)
    _check_cross_fields(cfg)
    return cfg


def _check_cross_fields(cfg: ExperimentConfig):
    if cfg.mode == "two_loop":
        if cfg.etas is None:
            raise ConfigError("run.etas", "required for two_loop")
        if cfg.inner_iterations is None or cfg.inner_iterations < 1:
            raise ConfigError("run.inner_iterations", "required (>= 1) for two_loop")
        if cfg.step0 is None or cfg.step0 <= 0:
            raise ConfigError("run.step0", "required (> 0) for two_loop")
    if cfg.mode in ("rbirg", "full_irg"):
        if cfg.gamma0 is None or cfg.eta0 is None:
            raise ConfigError("schedule.gamma0", "schedule requires gamma0 and eta0")
        if cfg.delta is None and (cfg.a is None or cfg.b is None):
            raise ConfigError("schedule.delta", "give delta or both a and b")
        effective = cfg.checkpoints or solver.default_checkpoints(cfg.iterations)
        missing = [k for k in cfg.snapshots if k not in effective]
        if missing:
            raise ConfigError("run.snapshots",
                              f"snapshot iterations {missing} are not checkpoints")
    if cfg.snapshots and cfg.problem_type != "deblur":
        raise ConfigError("run.snapshots", "only supported for deblur problems")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a config back to INI text; parsing it again reproduces cfg."""
    lines = ["[problem]", f"type = {cfg.problem_type}"]
    if cfg.problem_type == "deblur":
        lines.append(f"image = {cfg.image}")
        if cfg.kernel is not None:
            lines.append(f"kernel = {cfg.kernel}")
        lines.append(f"boundary = {cfg.boundary}")
        lines.append(f"noise_sigma = {cfg.noise_sigma!r}")
    elif cfg.problem_type == "least_squares":
        lines.append(f"matrix = {cfg.matrix}")
        lines.append(f"rhs = {cfg.rhs}")
    else:
        lines.append(f"instance = {cfg.instance}")
    lines.append("")
    lines.append("[blocks]")
    if cfg.block_sizes is not None:
        lines.append("sizes = " + " ".join(str(s) for s in cfg.block_sizes))
    if cfg.block_count is not None:
        lines.append(f"count = {cfg.block_count}")
    if cfg.probabilities is not None:
        lines.append("probabilities = " + " ".join(repr(p) for p in cfg.probabilities))
    lines.append("")
    lines.append("[schedule]")
    for name in ("gamma0", "eta0", "delta", "a", "b"):
        value = getattr(cfg, name)
        if value is not None:
            lines.append(f"{name} = {value!r}")
    lines.append(f"r = {cfg.r!r}")
    lines.append("")
    lines.append("[run]")
    lines.append(f"mode = {cfg.mode}")
    lines.append(f"iterations = {cfg.iterations}")
    lines.append(f"seed = {cfg.seed}")
    if cfg.checkpoints is not None:
        lines.append("checkpoints = " + " ".join(str(k) for k in cfg.checkpoints))
    if cfg.snapshots:
        lines.append("snapshots = " + " ".join(str(k) for k in cfg.snapshots))
    if cfg.etas is not None:
        lines.append("etas = " + " ".join(repr(e) for e in cfg.etas))
    if cfg.inner_iterations is not None:
        lines.append(f"inner_iterations = {cfg.inner_iterations}")
    if cfg.step0 is not None:
        lines.append(f"step0 = {cfg.step0!r}")
    lines.append(f"warm_start = {str(cfg.warm_start).lower()}")
    lines.append("")
    lines.append("[output]")
    lines.append(f"directory = {cfg.output_dir}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------


def _atomic_write(path, data):
    tmp = f"{path}.tmp.{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


@dataclass
class ProblemBundle:
    problem: problems.BilevelProblem
    x_ref: Optional[np.ndarray]
    f_star: Optional[float]
    image_shape: Optional[tuple[int, int]] = None  # (width, height)


def build_problem(cfg: ExperimentConfig) -> ProblemBundle:
    """Construct the problem instance plus reference quantities when cheap."""
    if cfg.problem_type == "penalty":
        prob = problems.builtin_penalty_problem(cfg.instance)
        if cfg.block_sizes is not None and tuple(cfg.block_sizes) != prob.blocks.block_sizes:
            raise ConfigError("blocks.sizes",
                              f"instance {cfg.instance!r} fixes sizes "
                              f"{prob.blocks.block_sizes}")
        x_ref, f_star = problems.BUILTIN_PENALTY_REFERENCES.get(cfg.instance, (None, None))
        return ProblemBundle(problem=prob, x_ref=x_ref, f_star=f_star)

    if cfg.problem_type == "deblur":
        image = imaging.read_pgm(cfg.image)
        kernel = (imaging.gaussian_kernel() if cfg.kernel is None
                  else imaging.load_kernel(cfg.kernel))
        _, prob = imaging.make_deblur_instance(
            image, kernel, boundary=cfg.boundary,
            num_blocks=cfg.block_count or 1, noise_sigma=cfg.noise_sigma,
            noise_seed=cfg.seed)
        if cfg.block_sizes is not None:
            prob = problems.least_squares_problem(prob.least_squares,
                                                  block_sizes=cfg.block_sizes)
        shape = (image.width, image.height)
    else:
        inst = problems.load_least_squares(cfg.matrix, cfg.rhs)
        prob = problems.least_squares_problem(inst, block_sizes=cfg.block_sizes,
                                              num_blocks=cfg.block_count)
        shape = None

    x_ref = f_star = None
    try:
        x_ref = problems.min_norm_oracle(prob.least_squares)
        r = prob.least_squares.A @ x_ref - prob.least_squares.b
        f_star = float(r @ r)
    except ValueError:
        pass  # beyond the dense-oracle scale; reference columns stay empty
    return ProblemBundle(problem=prob, x_ref=x_ref, f_star=f_star,
                         image_shape=shape)


def _schedule_from(cfg: ExperimentConfig) -> StepSchedule:
    return make_schedule(cfg.gamma0, cfg.eta0, delta=cfg.delta, a=cfg.a,
                         b=cfg.b, r=cfg.r)


def _validate_or_raise(cfg, bundle) -> str:
    sched = _schedule_from(cfg)
    report = validate_schedule(sched, bundle.problem.mu, bundle.problem.blocks.d,
                               cfg.probabilities)
    if not report.passed:
        raise ConfigError("schedule", "failed conditions: " + ", ".join(report.failed()))
    return report.render()


def _run_solver_mode(cfg: ExperimentConfig, bundle: ProblemBundle, out_dir: str):
    report_text = _validate_or_raise(cfg, bundle)
    _atomic_write(os.path.join(out_dir, "validation.txt"), report_text + "\n")
    sched = _schedule_from(cfg)
    runner = solver.run_rbirg if cfg.mode == "rbirg" else baselines.full_irg
    trace = runner(bundle.problem, sched, cfg.iterations, seed=cfg.seed,
                   checkpoints=cfg.checkpoints, probabilities=cfg.probabilities,
                   x_ref=bundle.x_ref, snapshot_ks=cfg.snapshots)
    csv_text = solver.trace_to_csv(trace)
    if bundle.f_star is not None:
        gaps = diagnostics.feasibility_gap(trace, bundle.f_star)
        try:
            fit = diagnostics.fit_rate_slope(gaps, k_min=max(1, cfg.iterations // 100))
            csv_text += diagnostics.rate_fit_footer(fit)
        except ValueError:
            pass  # too few usable checkpoints for a slope estimate
    _atomic_write(os.path.join(out_dir, "trace.csv"), csv_text)
    if cfg.problem_type == "deblur":
        width, height = bundle.image_shape
        for k, xbar in sorted(trace.snapshots.items()):
            img = imaging.image_from_vector(xbar, width, height)
            tmp = os.path.join(out_dir, f".snapshot_k{k}.pgm.tmp.{os.getpid()}")
            imaging.write_pgm(img, tmp)
            os.replace(tmp, os.path.join(out_dir, f"snapshot_k{k}.pgm"))
    return trace


def _run_two_loop_mode(cfg: ExperimentConfig, bundle: ProblemBundle, out_dir: str):
    reports = baselines.two_loop_sweep(bundle.problem, cfg.etas,
                                       cfg.inner_iterations, cfg.step0,
                                       warm_start=cfg.warm_start, seed=cfg.seed)
    _atomic_write(os.path.join(out_dir, "sweep.csv"),
                  baselines.sweep_to_csv(reports, x_ref=bundle.x_ref))
    return reports


def run_experiment(config_path) -> int:
    """Execute a config: artifacts on disk, exit status returned."""
    try:
        cfg = parse_config(config_path)
        bundle = build_problem(cfg)
        out_dir = cfg.output_dir
        os.makedirs(out_dir, exist_ok=True)
        if cfg.mode == "two_loop":
            _run_two_loop_mode(cfg, bundle, out_dir)
        else:
            _run_solver_mode(cfg, bundle, out_dir)
    except (ConfigError, ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


def validate_command(config_path) -> int:
    try:
        cfg = parse_config(config_path)
        bundle = build_problem(cfg)
        sched = _schedule_from(cfg)
        report = validate_schedule(sched, bundle.problem.mu,
                                   bundle.problem.blocks.d, cfg.probabilities)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    print(report.render())
    return 0 if report.passed else 2


COMPARISON_HEADER = "mode,subgrad_evals,dist_to_ref"


def compare_modes(config_path) -> int:
    """Run the randomized mode and the two-loop sweep on the same instance
    and write one cost/accuracy row per mode."""
    try:
        cfg = parse_config(config_path)
        if cfg.etas is None or cfg.inner_iterations is None or cfg.step0 is None:
            raise ConfigError("run.etas",
                              "compare needs two_loop options (etas, "
                              "inner_iterations, step0) alongside the schedule")
        bundle = build_problem(cfg)
        out_dir = cfg.output_dir
        os.makedirs(out_dir, exist_ok=True)
        trace = _run_solver_mode(cfg, bundle, out_dir)
        reports = _run_two_loop_mode(cfg, bundle, out_dir)
    except (ConfigError, ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3

    def dist(x) -> str:
        if bundle.x_ref is None or x is None:
            return ""
        return f"{float(np.linalg.norm(x - bundle.x_ref)):.17g}"

    lines = [COMPARISON_HEADER]
    # one inner + one outer subgradient evaluation per iteration, either mode
    lines.append(f"{cfg.mode},{2 * cfg.iterations},{dist(trace.final.x_bar)}")
    total_inner = sum(rep.inner_iterations for rep in reports)
    lines.append(f"two_loop,{2 * total_inner},{dist(reports[-1].x_eta)}")
    _atomic_write(os.path.join(out_dir, "comparison.csv"), "\n".join(lines) + "\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rbirg",
        description="Randomized block iterative regularized gradient experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run an experiment config"),
                            ("validate", "print the schedule validity report"),
                            ("compare", "randomized mode vs two-loop sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the experiment config file")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config)
    if args.command == "validate":
        return validate_command(args.config)
    return compare_modes(args.config)


if __name__ == "__main__":
    sys.exit(main())
