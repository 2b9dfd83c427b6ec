"""Command-line entry point: run, train, gradcheck, sweep, make-suite.

Paths inside a config file (suite entries, params files, training scenarios)
resolve relative to the config file's directory; the output directory
resolves relative to the working directory.  Exit codes: 0 ok, 1 config
error, 2 scenario error, 3 training divergence, 4 gradcheck failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    apply_override,
    apply_overrides,
    harm_from_config,
    load_config,
    planner_from_config,
    resolve_suite_paths,
    substream,
    variant_configs,
    write_effective_config,
)
from .prediction import (
    NetConfig,
    NetworkParams,
    TrainConfig,
    TrainingDivergence,
    check_gradients,
    load_params,
    random_check_point,
    save_params,
    train,
)
from .prediction.training import dataset_from_scenarios
from .report import (
    save_comparison_figure,
    save_loss_figure,
    save_sweep_figure,
    save_trajectory_figure,
    write_comparison_csv,
    write_planner_log_csv,
    write_result_json,
    write_sweep_csv,
    write_trace_csv,
)
from .scenario import Scenario, ScenarioError, load_scenario
from .simulation import (
    ConstantVelocityPredictor,
    NetworkPredictor,
    run_scenario,
    suite_metrics,
)
from .suite import build_training_scenario, toy_training_samples, write_suite
from riskplan import scenario as scenario_mod

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SCENARIO = 2
EXIT_TRAINING = 3
EXIT_GRADCHECK = 4

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_POINTS = 5


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _build_predictor(config: dict, config_dir: Path):
    section = config["predictor"]
    kind = section["type"]
    if kind == "constant-velocity":
        return ConstantVelocityPredictor(
            h_p=section["h_p"], h_f=section["h_f"],
            sigma0=section["sigma0"], sigma_growth=section["sigma_growth"])
    if kind == "attention-lstm":
        params_file = section["params_file"]
        if not params_file:
            raise ConfigError(
                "predictor.params_file is required for the attention-lstm predictor")
        path = Path(params_file)
        if not path.is_absolute():
            path = config_dir / path
        if not path.exists():
            raise ConfigError(f"predictor.params_file '{params_file}' does not exist")
        return NetworkPredictor(load_params(path))
    raise ConfigError(f"unknown predictor type '{kind}'")


def _run_variant_scenario(args):
    """Worker for one (variant, scenario) pair; must stay module-level for
    process pools."""
    scenario_path, var_config, config_dir_str, seed, collect_log = args
    config_dir = Path(config_dir_str)
    scenario = load_scenario(scenario_path)
    predictor = _build_predictor(var_config, config_dir)
    planner_cfg = planner_from_config(var_config["planner"])
    harm_model = harm_from_config(var_config["harm"])
    log: list | None = [] if collect_log else None
    result = run_scenario(scenario, predictor, planner_cfg, harm_model,
                          seed=seed, candidate_log=log)
    return result, log


def _evaluate_suite(config: dict, config_dir: Path, scenario_paths: list[Path],
                    out_dir: Path | None):
    """All variants over all scenarios; returns {variant: SuiteMetrics}."""
    variants = variant_configs(config)
    root_seed = config["seed"]
    jobs = max(1, int(config["jobs"]))
    collect_log = bool(config["log_candidates"])

    tasks = []
    for name, var_config in variants:
        for path in scenario_paths:
            scen_seed = int(substream(root_seed, "scenario", path.stem)
                            .integers(0, 2 ** 31))
            tasks.append((name, path,
                          (str(path), var_config, str(config_dir), scen_seed,
                           collect_log)))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_variant_scenario,
                                     [t[2] for t in tasks]))
    else:
        outcomes = [_run_variant_scenario(t[2]) for t in tasks]

    metrics: dict = {}
    results_by_variant: dict[str, list] = {name: [] for name, _ in variants}
    for (name, path, _), (result, log) in zip(tasks, outcomes):
        results_by_variant[name].append((path, result, log))

    for name, _ in variants:
        results = [r for _, r, _ in results_by_variant[name]]
        metrics[name] = suite_metrics(results)
        if out_dir is not None:
            vdir = out_dir / "variants" / name
            (vdir / "results").mkdir(parents=True, exist_ok=True)
            (vdir / "traces").mkdir(parents=True, exist_ok=True)
            if collect_log:
                (vdir / "planner_log").mkdir(parents=True, exist_ok=True)
            if config["trajectory_figures"]:
                (vdir / "figures").mkdir(parents=True, exist_ok=True)
            for path, result, log in results_by_variant[name]:
                scenario = load_scenario(path)
                write_result_json(vdir / "results" / f"{scenario.id}.json", result)
                write_trace_csv(vdir / "traces" / f"{scenario.id}.csv",
                                scenario, result)
                if collect_log and log is not None:
                    write_planner_log_csv(
                        vdir / "planner_log" / f"{scenario.id}.csv", log)
                if config["trajectory_figures"]:
                    save_trajectory_figure(
                        vdir / "figures" / f"{scenario.id}.png", scenario, result)
    return metrics


def cmd_run(config: dict, config_dir: Path, out_dir: Path) -> int:
    scenario_paths = resolve_suite_paths(config["suite"], config_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(config, out_dir / "effective_config.json")
    metrics = _evaluate_suite(config, config_dir, scenario_paths, out_dir)
    write_comparison_csv(out_dir / "comparison.csv", metrics)
    if config["figures"]:
        save_comparison_figure(out_dir / "comparison.png", metrics)
    for name, m in metrics.items():
        print(f"{name}: completed_rate={m.completed_rate:.2f}% "
              f"total_harm={m.total_harm:.4f}")
    return EXIT_OK


def cmd_train(config: dict, config_dir: Path, out_dir: Path) -> int:
    tcfg = config["train"]
    net_cfg = NetConfig(**tcfg["network"])
    scenario_paths = [Path(p) if Path(p).is_absolute() else config_dir / Path(p)
                      for p in tcfg["scenarios"]]
    if not scenario_paths:
        raise ConfigError("train.scenarios is empty")
    scenarios = [load_scenario(p) for p in scenario_paths]

    samples = tcfg["samples"]
    if not samples and tcfg["anchors"]:
        lo, hi = tcfg["anchors"]
        samples = [[i, agent.id, anchor]
                   for i, scen in enumerate(scenarios)
                   for agent in scen.agents
                   for anchor in range(lo, hi)]
    if not samples:
        raise ConfigError("training dataset is empty (no samples or anchors)")

    dataset = dataset_from_scenarios(scenarios, samples, net_cfg)
    rng = substream(config["seed"], "train")
    params = NetworkParams.init(net_cfg, rng, scale=tcfg["init_scale"])
    trained, losses = train(params, dataset,
                            TrainConfig(lr=tcfg["lr"], steps=tcfg["steps"],
                                        seed=config["seed"]))

    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(config, out_dir / "effective_config.json")
    save_params(trained, out_dir / tcfg["params_out"])
    with open(out_dir / "loss_trace.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{loss!r}\n")
    if config["figures"]:
        save_loss_figure(out_dir / "loss_trace.png", losses)
    print(f"trained {tcfg['steps']} steps: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return EXIT_OK


def cmd_gradcheck(config: dict, config_dir: Path, out_dir: Path,
                  eps: float) -> int:
    net_cfg = NetConfig(**config["train"]["network"])
    errors = []
    for i in range(GRADCHECK_POINTS):
        rng = substream(config["seed"], "gradcheck", i)
        params, scene, truth = random_check_point(
            rng, net_cfg, n_neighbors=3, scale=config["train"]["init_scale"])
        errors.append(check_gradients(params, scene, truth, eps=eps))
    worst = max(errors)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(config, out_dir / "effective_config.json")
    report = {"eps": eps, "per_point": errors, "max_relative_error": worst,
              "tolerance": GRADCHECK_TOLERANCE,
              "passed": worst <= GRADCHECK_TOLERANCE}
    with open(out_dir / "gradcheck.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    print(f"gradcheck eps={eps:g}: max relative error {worst:.3e} "
          f"({'pass' if report['passed'] else 'FAIL'})")
    return EXIT_OK if report["passed"] else EXIT_GRADCHECK


def cmd_sweep(config: dict, config_dir: Path, out_dir: Path) -> int:
    grid = config["sweep"]["grid"]
    if not grid:
        raise ConfigError("sweep.grid is empty")
    for key in grid:
        apply_override(copy.deepcopy(config), key, None)  # key existence check
    scenario_paths = resolve_suite_paths(config["suite"], config_dir)

    keys = list(grid)
    rows = []
    for values in product(*(grid[k] for k in keys)):
        point = copy.deepcopy(config)
        point["variants"] = None
        for key, value in zip(keys, values):
            apply_override(point, key, value)
        metrics = _evaluate_suite(point, config_dir, scenario_paths, None)
        (_, m), = metrics.items()
        rows.append({
            "omega_u": point["planner"]["omega_u"],
            "omega_o": point["planner"]["omega_o"],
            "completed_rate": m.completed_rate,
            "total_harm": m.total_harm,
            "harm_ego": m.harm_ego,
            "harm_third_party": m.harm_third_party,
            "harm_vru": m.harm_vru,
        })

    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective_config(config, out_dir / "effective_config.json")
    write_sweep_csv(out_dir / "sweep.csv", rows)
    if config["figures"]:
        save_sweep_figure(out_dir / "sweep.png", rows)
    print(f"sweep finished: {len(rows)} grid points")
    return EXIT_OK


def cmd_make_suite(out_dir: Path, n: int, seed: int,
                   with_train_fixture: bool) -> int:
    paths = write_suite(out_dir, n=n, seed=seed)
    print(f"wrote {len(paths)} scenarios to {out_dir}")
    if with_train_fixture:
        scen = build_training_scenario(seed)
        scenario_mod.write_scenario(scen, out_dir / "train_toy.json")
        print(f"wrote training scenario to {out_dir / 'train_toy.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskplan",
        description="Risk-aware ethical trajectory planning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="root seed")
        p.add_argument("--jobs", type=int, default=None,
                       help="parallel scenario workers")

    add_common(sub.add_parser("run", help="evaluate the scenario suite"))
    add_common(sub.add_parser("train", help="train the forecasting network"))
    grad = sub.add_parser("gradcheck", help="verify analytic gradients")
    add_common(grad)
    grad.add_argument("--eps", type=float, default=1e-5,
                      help="finite difference step")
    add_common(sub.add_parser("sweep", help="evaluate a config grid"))

    mk = sub.add_parser("make-suite", help="write the bundled synthetic suite")
    mk.add_argument("--out", required=True)
    mk.add_argument("--n", type=int, default=50)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--with-train-fixture", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "make-suite":
        return cmd_make_suite(Path(args.out), args.n, args.seed,
                              args.with_train_fixture)

    try:
        config = load_config(args.config)
        apply_overrides(config, args.set)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.jobs is not None:
            config["jobs"] = args.jobs
        if args.out is not None:
            config["out_dir"] = args.out
        config_dir = Path(args.config).resolve().parent
        out_dir = Path(config["out_dir"])

        if args.command == "run":
            return cmd_run(config, config_dir, out_dir)
        if args.command == "train":
            return cmd_train(config, config_dir, out_dir)
        if args.command == "gradcheck":
            return cmd_gradcheck(config, config_dir, out_dir, args.eps)
        if args.command == "sweep":
            return cmd_sweep(config, config_dir, out_dir)
        raise ConfigError(f"unknown command '{args.command}'")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except ScenarioError as exc:
        return _fail(EXIT_SCENARIO, str(exc))
    except TrainingDivergence as exc:
        return _fail(EXIT_TRAINING, str(exc))


if __name__ == "__main__":
    sys.exit(main())
