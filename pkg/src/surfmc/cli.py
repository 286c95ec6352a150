"""Command-line front end: declarative run specs, deterministic CSV/JSON output.

Subcommands:
    run        sample one or more chains, write samples.csv + diagnostics.json
    analyze    autocovariance, autocorrelation time, angle histogram, bin ratios
    table1     off/on jump acceptance rates over a grid of epsilon values
    baseline   pure soft-move chain with its step size tuned to ~40% acceptance
    check-flat exactness scan on random linear models

Run specs are JSON documents (see the specs/ directory for examples).  All
output files are byte-deterministic given the spec and seed.  CSV files use
comma delimiters, '.' decimals and a header row.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    QuadratureGrid,
    WindowNotFound,
    autocovariance,
    bin_ratio_report,
    integrated_autocorrelation_time,
)
from .geometry import ConstraintModel
from .models import EllipsoidSphereModel, LinearModel, TwoSpheresModel, theta_coordinate
from .moves import SOFT, SamplerConfig
from .projection import NewtonSettings
from .sampler import (
    InitializationFailure,
    OFF_SURFACE,
    SampleLog,
    flat_exactness_deviation,
    run_chains,
)

EXIT_OK = 0
EXIT_BAD_SPEC = 1
EXIT_INIT_FAILURE = 2
EXIT_BAD_SAMPLES = 3

FLOAT_FMT = "%.17g"


class SpecError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class RunSpec:
    model: ConstraintModel
    config: SamplerConfig
    n_steps: int
    burn_in: int
    thin: int
    n_chains: int
    init: np.ndarray
    observable: int
    window_constant: float
    bins: int
    grid: QuadratureGrid | None
    output: Path


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise SpecError(f"{where}.{key}", "missing required field")
    return mapping[key]


def build_model(section: dict) -> ConstraintModel:
    kind = _require(section, "type", "model")
    try:
        if kind == "linear":
            return LinearModel(_require(section, "matrix", "model"))
        if kind == "two_spheres":
            return TwoSpheresModel(
                _require(section, "center1", "model"),
                _require(section, "center2", "model"),
                _require(section, "radius1", "model"),
                _require(section, "radius2", "model"),
            )
        if kind == "ellipsoid_sphere":
            return EllipsoidSphereModel(
                _require(section, "sphere_center", "model"),
                _require(section, "sphere_radius", "model"),
                _require(section, "ellipsoid_center", "model"),
                _require(section, "semi_axes", "model"),
            )
    except SpecError:
        raise
    except (ValueError, TypeError) as exc:
        raise SpecError("model", str(exc)) from exc
    raise SpecError("model.type", f"unknown model type {kind!r}")


def build_config(section: dict, model: ConstraintModel) -> SamplerConfig:
    known = {
        "epsilon", "sigma_prp", "sigma_tan", "sigma_on", "sigma_hrd", "sigma_sft",
        "lambda11", "lambda12", "lambda21", "lambda22", "k1", "k2", "newton", "seed",
    }
    unknown = set(section) - known
    if unknown:
        raise SpecError(f"sampler.{sorted(unknown)[0]}", "unknown field")
    epsilon = _require(section, "epsilon", "sampler")
    newton_section = section.get("newton", {})
    try:
        newton = NewtonSettings(**newton_section)
    except (TypeError, ValueError) as exc:
        raise SpecError("sampler.newton", str(exc)) from exc
    lambda11 = section.get("lambda11", 0.2)
    lambda21 = section.get("lambda21", 0.2)
    if "lambda12" in section and abs(section["lambda12"] + lambda11 - 1.0) > 1e-12:
        raise SpecError("sampler.lambda12", "lambda11 + lambda12 must equal 1")
    if "lambda22" in section and abs(section["lambda22"] + lambda21 - 1.0) > 1e-12:
        raise SpecError("sampler.lambda22", "lambda21 + lambda22 must equal 1")
    try:
        base = SamplerConfig.defaults(
            epsilon=float(epsilon),
            num_constraints=model.num_constraints,
            sigma_hrd=section.get("sigma_hrd", 1.0),
            sigma_on=section.get("sigma_on"),
            sigma_sft=section.get("sigma_sft"),
            lambda11=lambda11,
            lambda21=lambda21,
            k1=section.get("k1", 1.0),
            newton=newton,
            seed=int(section.get("seed", 0)),
        )
        overrides = {
            k: float(section[k])
            for k in ("sigma_prp", "sigma_tan", "k2")
            if k in section
        }
        if overrides:
            from dataclasses import replace

            base = replace(base, **overrides)
    except ValueError as exc:
        raise SpecError("sampler", str(exc)) from exc
    return base


def load_runspec(path: str | Path) -> RunSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise SpecError("spec", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError("spec", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecError("spec", "top level must be an object")
    model = build_model(_require(raw, "model", "spec"))
    config = build_config(_require(raw, "sampler", "spec"), model)
    run_section = raw.get("run", {})
    n_steps = int(run_section.get("n_steps", 100_000))
    burn_in = int(run_section.get("burn_in", 10_000))
    thin = int(run_section.get("thin", 1))
    n_chains = int(run_section.get("n_chains", 1))
    if n_steps < 0:
        raise SpecError("run.n_steps", "must be nonnegative")
    if burn_in < 0:
        raise SpecError("run.burn_in", "must be nonnegative")
    if thin < 1:
        raise SpecError("run.thin", "must be at least 1")
    if n_chains < 1:
        raise SpecError("run.n_chains", "must be at least 1")
    if "init" in raw:
        init = np.asarray(raw["init"], dtype=float)
        if init.shape != (model.ambient_dim,):
            raise SpecError("init", f"must be a point in R^{model.ambient_dim}")
    else:
        init = np.asarray(getattr(model, "feasible_point"), dtype=float)
    analysis = raw.get("analysis", {})
    grid = None
    if "quadrature" in analysis:
        gsec = analysis["quadrature"]
        try:
            grid = QuadratureGrid(
                tuple(_require(gsec, "lo", "analysis.quadrature")),
                tuple(_require(gsec, "hi", "analysis.quadrature")),
                tuple(_require(gsec, "n", "analysis.quadrature")),
            )
        except ValueError as exc:
            raise SpecError("analysis.quadrature", str(exc)) from exc
    return RunSpec(
        model=model,
        config=config,
        n_steps=n_steps,
        burn_in=burn_in,
        thin=thin,
        n_chains=n_chains,
        init=init,
        observable=int(analysis.get("observable", 0)),
        window_constant=float(analysis.get("window_constant", 5.0)),
        bins=int(analysis.get("bins", 10)),
        grid=grid,
        output=Path(raw.get("output", ".")),
    )


def write_samples_csv(path: Path, log: SampleLog) -> None:
    da = log.coords.shape[1]
    header = "step,label," + ",".join(f"x{i + 1}" for i in range(da))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(log)):
            coords = ",".join(FLOAT_FMT % v for v in log.coords[i])
            fh.write(f"{i},{log.labels[i]},{coords}\n")


def read_samples_csv(path: Path):
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[:2] != ["step", "label"] or len(header) < 3:
                raise ValueError(f"unexpected header {header}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.size == 0 or data.shape[1] != len(header):
            raise ValueError("no data rows or column mismatch")
        labels = data[:, 1].astype(int)
        coords = data[:, 2:]
        return coords, labels
    except (OSError, ValueError) as exc:
        raise ValueError(f"malformed samples file {path}: {exc}") from exc


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def _format_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return FLOAT_FMT % v


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    spec = load_runspec(args.spec)
    out = Path(args.out) if args.out else spec.output
    out.mkdir(parents=True, exist_ok=True)
    config = spec.config if args.seed is None else spec.config.with_seed(args.seed)
    n_steps = args.steps if args.steps is not None else spec.n_steps
    try:
        log, diag = run_chains(
            spec.model, config, spec.init, n_steps,
            thin=spec.thin, burn_in=spec.burn_in, n_chains=spec.n_chains,
        )
    except InitializationFailure as exc:
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_INIT_FAILURE
    write_samples_csv(out / "samples.csv", log)
    payload = diag.to_dict()
    payload["n_steps"] = n_steps
    payload["n_chains"] = spec.n_chains
    payload["thin"] = spec.thin
    payload["seed"] = config.seed
    write_json(out / "diagnostics.json", payload)
    print(f"wrote {out / 'samples.csv'} and {out / 'diagnostics.json'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        coords, labels = read_samples_csv(Path(args.samples))
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_BAD_SAMPLES
    spec = load_runspec(args.spec) if args.spec else None
    observable = args.observable if args.observable is not None else (
        spec.observable if spec else 0
    )
    if not 0 <= observable < coords.shape[1]:
        print(
            f"observable index {observable} out of range for {coords.shape[1]} coordinates",
            file=sys.stderr,
        )
        return EXIT_BAD_SAMPLES
    soft = coords[labels == OFF_SURFACE]
    if len(soft) < 100:
        print(
            f"only {len(soft)} off-surface samples; need at least 100 for analysis",
            file=sys.stderr,
        )
        return EXIT_BAD_SAMPLES
    series = soft[:, observable]
    window_constant = spec.window_constant if spec else 5.0
    try:
        iact = integrated_autocorrelation_time(series, window_constant)
        window = iact.window
        tau = iact.tau
        n_eff = iact.n_eff
    except WindowNotFound as exc:
        print(f"warning: {exc}", file=sys.stderr)
        window, tau, n_eff = len(series) // 2 - 1, math.nan, math.nan
    max_lag = min(len(series) - 1, max(10 * window, 100))
    acov = autocovariance(series, max_lag=max_lag)
    write_csv(
        out / "autocov.csv",
        ["lag", "autocovariance", "normalized"],
        (
            (t, acov.covariances[t], acov.normalized[t])
            for t in range(len(acov.covariances))
        ),
    )
    write_json(
        out / "iact.json",
        {
            "tau": tau,
            "window": window,
            "n_eff": n_eff,
            "n_samples": len(series),
            "observable": int(observable),
        },
    )
    written = ["autocov.csv", "iact.json"]

    if spec is not None and isinstance(spec.model, TwoSpheresModel):
        thetas = np.array([theta_coordinate(spec.model, x) for x in soft])
        n_bins = 36
        counts, edges = np.histogram(thetas, bins=n_bins, range=(-math.pi, math.pi))
        write_csv(
            out / "theta_hist.csv",
            ["bin", "lo", "hi", "count"],
            ((i, edges[i], edges[i + 1], counts[i]) for i in range(n_bins)),
        )
        written.append("theta_hist.csv")

    if spec is not None:
        if len(soft) >= 10_000:
            report = bin_ratio_report(
                soft[:, 0], spec.bins, spec.model, spec.config, grid=spec.grid
            )
            write_csv(
                out / "binratio.csv",
                ["bin", "center", "count", "pdf", "ratio"],
                (
                    (i, report.centers[i], report.counts[i], report.pdf[i], report.ratio[i])
                    for i in range(len(report))
                ),
            )
            written.append("binratio.csv")
        else:
            print(
                f"skipping binratio.csv: {len(soft)} off-surface samples < 10000",
                file=sys.stderr,
            )
    print(f"wrote {', '.join(written)} in {out}")
    return EXIT_OK


def cmd_table1(args) -> int:
    spec = load_runspec(args.spec)
    out = Path(args.out) if args.out else spec.output
    out.mkdir(parents=True, exist_ok=True)
    try:
        epsilons = [float(tok) for tok in args.epsilons.split(",") if tok.strip()]
    except ValueError:
        print(f"cannot parse epsilon list {args.epsilons!r}", file=sys.stderr)
        return EXIT_BAD_SPEC
    if not epsilons:
        print("empty epsilon list", file=sys.stderr)
        return EXIT_BAD_SPEC
    n_steps = args.steps if args.steps is not None else spec.n_steps
    rows = []
    for eps in epsilons:
        config = SamplerConfig.defaults(
            epsilon=eps,
            num_constraints=spec.model.num_constraints,
            sigma_hrd=spec.config.sigma_hrd,
            lambda11=spec.config.lambda11,
            lambda21=spec.config.lambda21,
            newton=spec.config.newton,
            seed=spec.config.seed,
        )
        try:
            _, diag = run_chains(
                spec.model, config, spec.init, n_steps,
                thin=max(n_steps, 1), burn_in=spec.burn_in, n_chains=spec.n_chains,
            )
        except InitializationFailure as exc:
            print(f"initialization failed at epsilon={eps}: {exc}", file=sys.stderr)
            return EXIT_INIT_FAILURE
        off = diag.moves["off"]
        on = diag.moves["on"]
        rows.append(
            (
                eps,
                off.accepted / off.proposed if off.proposed else math.nan,
                on.accepted / on.proposed if on.proposed else math.nan,
                off.proposed,
                on.proposed,
            )
        )
        print(
            f"epsilon={eps:g}: off {rows[-1][1]:.6f} ({off.proposed} proposed), "
            f"on {rows[-1][2]:.6f} ({on.proposed} proposed)"
        )
    write_csv(
        out / "table1.csv",
        ["epsilon", "off_acc", "on_acc", "n_off_proposed", "n_on_proposed"],
        rows,
    )
    print(f"wrote {out / 'table1.csv'}")
    return EXIT_OK


def tune_soft_scale(
    model, config, init, target: float = 0.40, pilots: int = 20, pilot_steps: int = 10_000
):
    """Bisection on the log of the soft step scale toward a target acceptance.

    Acceptance decreases monotonically in the scale, so ordinary bisection on
    log(sigma) works; the bracket is widened first if needed.  Returns the
    tuned config and the acceptance measured at the returned scale.
    """
    from dataclasses import replace

    from .sampler import run as run_one

    def measure(sigma: float) -> float:
        cfg = replace(config, sigma_sft=sigma)
        _, diag = run_one(
            model, cfg, init, pilot_steps, burn_in=1_000, init_label=OFF_SURFACE
        )
        stats = diag.moves[SOFT]
        return stats.accepted / stats.proposed if stats.proposed else math.nan

    lo = math.log(config.sigma_sft / 64.0)
    hi = math.log(config.sigma_sft * 64.0)
    acc = math.nan
    sigma = config.sigma_sft
    for _ in range(pilots):
        mid = 0.5 * (lo + hi)
        sigma = math.exp(mid)
        acc = measure(sigma)
        if abs(acc - target) <= 0.02:
            break
        if acc > target:
            lo = mid
        else:
            hi = mid
    return replace(config, sigma_sft=sigma), acc


def cmd_baseline(args) -> int:
    spec = load_runspec(args.spec)
    out = Path(args.out) if args.out else spec.output
    out.mkdir(parents=True, exist_ok=True)
    from dataclasses import replace

    base = replace(
        spec.config,
        lambda11=1.0,
        lambda12=0.0,
        lambda21=0.0,
        lambda22=1.0,
    )
    if args.seed is not None:
        base = base.with_seed(args.seed)
    tuned, pilot_acc = tune_soft_scale(
        spec.model, base, spec.init,
        target=args.target, pilots=args.pilots, pilot_steps=args.pilot_steps,
    )
    n_steps = args.steps if args.steps is not None else spec.n_steps
    try:
        log, diag = run_chains(
            spec.model, tuned, spec.init, n_steps,
            thin=spec.thin, burn_in=spec.burn_in, n_chains=spec.n_chains,
            init_label=OFF_SURFACE,
        )
    except InitializationFailure as exc:
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_INIT_FAILURE
    write_samples_csv(out / "samples.csv", log)
    payload = diag.to_dict()
    payload["n_steps"] = n_steps
    payload["seed"] = tuned.seed
    payload["tuning"] = {
        "sigma_sft": tuned.sigma_sft,
        "pilot_acceptance": pilot_acc,
        "target": args.target,
    }
    write_json(out / "diagnostics.json", payload)
    soft_stats = diag.moves[SOFT]
    rate = soft_stats.accepted / soft_stats.proposed if soft_stats.proposed else math.nan
    print(
        f"tuned sigma_sft={tuned.sigma_sft:.6g} "
        f"(pilot acceptance {pilot_acc:.3f}, final {rate:.3f})"
    )
    print(f"wrote {out / 'samples.csv'} and {out / 'diagnostics.json'}")
    return EXIT_OK


def cmd_check_flat(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    dims = [(3, 1), (3, 2), (5, 2), (5, 4), (10, 4)]
    for k in range(args.models):
        da, m = dims[k % len(dims)]
        A = rng.standard_normal((da, m))
        model = LinearModel(A)
        config = SamplerConfig.defaults(
            epsilon=0.05, num_constraints=m, seed=int(rng.integers(2**31))
        )
        dev = flat_exactness_deviation(model, config, np.zeros(da), args.steps)
        worst = max(worst, dev)
        print(f"model {k} (da={da}, m={m}): max |acceptance - 1| = {dev:.3e}")
    print(f"overall max |acceptance - 1| = {worst:.3e}")
    return EXIT_OK if worst < 1e-8 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="surfmc",
        description="MCMC for targets concentrated near an implicit constraint surface",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run chains and write samples + diagnostics")
    p_run.add_argument("spec", help="JSON run spec")
    p_run.add_argument("--out", help="output directory (overrides spec)")
    p_run.add_argument("--steps", type=int, help="override run.n_steps")
    p_run.add_argument("--seed", type=int, help="override sampler.seed")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze", help="post-run statistics from samples.csv")
    p_an.add_argument("samples", help="samples.csv from a previous run")
    p_an.add_argument("--spec", help="run spec (enables theta and bin-ratio outputs)")
    p_an.add_argument("--out", help="output directory")
    p_an.add_argument("--observable", type=int, help="coordinate index for the series")
    p_an.set_defaults(func=cmd_analyze)

    p_t1 = sub.add_parser("table1", help="off/on acceptance over an epsilon grid")
    p_t1.add_argument("spec", help="JSON run spec")
    p_t1.add_argument(
        "--epsilons",
        default="0.223,0.070,0.022,0.007,0.002",
        help="comma-separated epsilon values",
    )
    p_t1.add_argument("--steps", type=int, help="steps per epsilon (overrides spec)")
    p_t1.add_argument("--out", help="output directory")
    p_t1.set_defaults(func=cmd_table1)

    p_bl = sub.add_parser("baseline", help="tuned pure soft-move chain for comparison")
    p_bl.add_argument("spec", help="JSON run spec")
    p_bl.add_argument("--target", type=float, default=0.40, help="target acceptance")
    p_bl.add_argument("--pilots", type=int, default=20, help="max tuning iterations")
    p_bl.add_argument("--pilot-steps", type=int, default=10_000, help="steps per pilot run")
    p_bl.add_argument("--steps", type=int, help="override run.n_steps")
    p_bl.add_argument("--seed", type=int, help="override sampler.seed")
    p_bl.add_argument("--out", help="output directory")
    p_bl.set_defaults(func=cmd_baseline)

    p_cf = sub.add_parser("check-flat", help="exactness scan on random linear models")
    p_cf.add_argument("--models", type=int, default=10)
    p_cf.add_argument("--steps", type=int, default=10_000)
    p_cf.add_argument("--seed", type=int, default=20240801)
    p_cf.set_defaults(func=cmd_check_flat)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_BAD_SPEC


if __name__ == "__main__":
    sys.exit(main())
