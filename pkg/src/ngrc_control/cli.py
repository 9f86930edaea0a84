"""Command-line interface emitting the experiment CSV artifacts.

Commands map one-to-one to the experiment suites: ``train`` (model fit +
report), ``predict-sweep`` (prediction robustness), ``control-trace``
(single closed-loop run), ``sweep-k`` (control robustness under noise),
and ``sweep-k-modelerror`` (same with matched weight perturbations).

Configuration precedence is defaults < ``--config`` JSON file < flags, and
every output embeds its resolved configuration in ``#`` header lines so a
run can be reproduced byte-for-byte from its own artifact.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigurationError
from .harness import (
    DEFAULT_ALPHA_GRID,
    K_SWEEP_GRID,
    NOISE_LEVELS,
    ControlTask,
    DataGenSpec,
    SweepResult,
    child_rng,
    fit_model,
    run_control_task,
    run_prediction_sweep,
    standard_task,
)
from .control import ControllerConfig, run_closed_loop
from .ngrc import FeatureConfig, feature_names, model_to_json, perturb_weights
from .plant import HenonParams, HenonPlant, NoiseSpec, PlantState

COMMANDS = ("train", "predict-sweep", "control-trace", "sweep-k", "sweep-k-modelerror")

# Keys echoed in output headers, per command. Execution details (output
# path, config path, thread count) never influence the emitted bytes and
# stay out of the header.
_COMMON_KEYS = (
    "seed", "a", "b", "g", "sigma_u", "m_train", "m_test",
    "alpha_grid", "burn_in", "max_retries",
)
_COMMAND_KEYS = {
    "train": _COMMON_KEYS + ("sigma_d",),
    "predict-sweep": _COMMON_KEYS + ("sigma_d_levels", "m_train_grid", "trials"),
    "control-trace": _COMMON_KEYS
    + ("sigma_d", "sigma_dw", "task", "k", "x0", "y0", "n_iters"),
    "sweep-k": _COMMON_KEYS
    + ("sigma_d_levels", "k_grid", "task", "n_iters", "trials"),
    "sweep-k-modelerror": _COMMON_KEYS
    + ("sigma_d_levels", "k_grid", "task", "n_iters", "trials"),
}

_DEFAULTS = {
    "seed": 1,
    "a": 1.4,
    "b": 0.3,
    "g": 1.0,
    "sigma_u": 0.1,
    "sigma_d": 0.0,
    "sigma_dw": 0.0,
    "sigma_d_levels": list(NOISE_LEVELS),
    "m_train": 10,
    "m_test": 50,
    "m_train_grid": list(range(2, 21)),
    "alpha_grid": list(DEFAULT_ALPHA_GRID),
    "burn_in": 100,
    "max_retries": 1000,
    "task": "pu1-pu2",
    "k": 0.0,
    "k_grid": list(K_SWEEP_GRID),
    "x0": None,
    "y0": None,
    "n_iters": None,
    "trials": 100,
}


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngrc-control",
        description="Learn a chaotic map from a handful of samples and "
        "control it via feedback linearization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--seed", type=int, help="master seed (64-bit)")
        p.add_argument("--out", type=str, default=None, help="output path (default stdout)")
        p.add_argument("--config", type=str, default=None, help="flat JSON config file")
        p.add_argument("--threads", type=int, default=None,
                       help="max concurrent trials (default: machine parallelism)")
        p.add_argument("--a", type=float, dest="a")
        p.add_argument("--b", type=float, dest="b")
        p.add_argument("--g", type=float, dest="g")
        p.add_argument("--sigma-u", type=float, dest="sigma_u")
        p.add_argument("--sigma-d", type=_parse_floats, dest="sigma_d",
                       help="noise level (comma list for sweeps)")
        p.add_argument("--sigma-dw", type=float, dest="sigma_dw")
        p.add_argument("--m-train", type=int, dest="m_train")
        p.add_argument("--m-test", type=int, dest="m_test")
        p.add_argument("--m-train-grid", type=_parse_ints, dest="m_train_grid")
        p.add_argument("--alpha-grid", type=_parse_floats, dest="alpha_grid")
        p.add_argument("--burn-in", type=int, dest="burn_in")
        p.add_argument("--max-retries", type=int, dest="max_retries")
        p.add_argument("--task", choices=("pu1-pu2", "period4", "arbitrary"))
        p.add_argument("--k", type=_parse_floats, dest="k",
                       help="gain (comma list for sweeps)")
        p.add_argument("--x0", type=float, dest="x0")
        p.add_argument("--y0", type=float, dest="y0")
        p.add_argument("--n-iters", type=int, dest="n_iters")
        p.add_argument("--trials", type=int, dest="trials")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Layer defaults, config-file values, and flags into one flat dict."""
    cfg = dict(_DEFAULTS)
    cfg["n_iters"] = 60 if command == "control-trace" else 150
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ConfigurationError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        cfg.update(file_cfg)
    keys = _COMMAND_KEYS[command]
    overrides = {
        "seed": args.seed, "a": args.a, "b": args.b, "g": args.g,
        "sigma_u": args.sigma_u, "sigma_dw": args.sigma_dw,
        "m_train": args.m_train, "m_test": args.m_test,
        "m_train_grid": args.m_train_grid, "alpha_grid": args.alpha_grid,
        "burn_in": args.burn_in, "max_retries": args.max_retries,
        "task": args.task, "x0": args.x0, "y0": args.y0,
        "n_iters": args.n_iters, "trials": args.trials,
    }
    if args.sigma_d is not None:
        if command in ("train", "control-trace"):
            if len(args.sigma_d) != 1:
                raise ConfigurationError(f"{command} takes a single --sigma-d value")
            overrides["sigma_d"] = args.sigma_d[0]
        else:
            overrides["sigma_d_levels"] = args.sigma_d
    if args.k is not None:
        if command == "control-trace":
            if len(args.k) != 1:
                raise ConfigurationError("control-trace takes a single --k value")
            overrides["k"] = args.k[0]
        else:
            overrides["k_grid"] = args.k
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in keys:
            raise ConfigurationError(f"{command} does not accept --{key.replace('_', '-')}")
        cfg[key] = value
    # Canonicalize to the keys this command echoes (and later replays).
    return {key: cfg[key] for key in keys}


def _header(command: str, cfg: dict) -> str:
    body = json.dumps(cfg, sort_keys=True)
    return f"# command: {command}\n# config: {body}\n"


def parse_header(text: str) -> tuple[str, dict]:
    """Recover (command, config) from an artifact's comment header."""
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("# command: ") or not lines[
        1
    ].startswith("# config: "):
        raise ConfigurationError("missing run header")
    return lines[0][len("# command: "):], json.loads(lines[1][len("# config: "):])


def _gen_spec(cfg: dict, sigma_d: float = 0.0) -> DataGenSpec:
    return DataGenSpec(
        m_train=cfg["m_train"],
        m_test=cfg["m_test"],
        sigma_u=cfg["sigma_u"],
        sigma_d=sigma_d,
        burn_in=cfg["burn_in"],
        max_retries=cfg["max_retries"],
    )


def _params(cfg: dict) -> HenonParams:
    return HenonParams(a=cfg["a"], b=cfg["b"], g=cfg["g"])


def _task(cfg: dict, params: HenonParams) -> ControlTask:
    task = standard_task(cfg["task"], params)
    x0 = cfg.get("x0")
    y0 = cfg.get("y0")
    if x0 is not None or y0 is not None:
        s0 = PlantState(
            task.s0.x if x0 is None else float(x0),
            task.s0.y if y0 is None else float(y0),
        )
        task = ControlTask(task.name, task.target, s0)
    return task


def render_train(cfg: dict) -> tuple[str, str]:
    """Returns (report text, model JSON)."""
    params = _params(cfg)
    config = FeatureConfig()
    rng = child_rng(cfg["seed"], "train")
    model, alpha, test_rmse = fit_model(
        rng, params, _gen_spec(cfg, cfg["sigma_d"]), cfg["alpha_grid"], config
    )
    lines = [_header("train", cfg).rstrip("\n")]
    lines.append(f"alpha = {alpha:.17g}")
    lines.append(f"test_rmse = {test_rmse:.17g}")
    lines.append(f"condition_number = {model.cond:.17g}")
    lines.append("feature  weight")
    names = feature_names(config)
    weights = list(model.w_u[0]) + list(model.w_x[0])
    for name, w in zip(names, weights):
        lines.append(f"{name:<8} {w:.17g}")
    return "\n".join(lines) + "\n", model_to_json(model) + "\n"


def render_predict_sweep(cfg: dict, threads: int) -> str:
    result = run_prediction_sweep(
        cfg["m_train_grid"],
        cfg["sigma_d_levels"],
        cfg["trials"],
        cfg["seed"],
        gen_spec=_gen_spec(cfg),
        params=_params(cfg),
        alpha_grid=cfg["alpha_grid"],
        threads=threads,
    )
    return _header("predict-sweep", cfg) + result.to_csv()


def render_control_trace(cfg: dict) -> str:
    params = _params(cfg)
    task = _task(cfg, params)
    rng = child_rng(cfg["seed"], "control-trace")
    model, _, _ = fit_model(rng, params, _gen_spec(cfg), cfg["alpha_grid"])
    if cfg["sigma_dw"] > 0:
        model = perturb_weights(model, cfg["sigma_dw"], rng)
    plant = HenonPlant(params, NoiseSpec(cfg["sigma_d"]))
    controller = ControllerConfig(k=cfg["k"], target=task.target, model=model)
    trace = run_closed_loop(plant, controller, task.s0, cfg["n_iters"], rng)
    return _header("control-trace", cfg) + trace.to_csv()


def render_sweep_k(cfg: dict, threads: int, command: str) -> str:
    params = _params(cfg)
    task = _task(cfg, params)
    parts = []
    for level_idx, sigma_d in enumerate(cfg["sigma_d_levels"]):
        sigma_dw = sigma_d if command == "sweep-k-modelerror" else 0.0
        _, sweep = run_control_task(
            task,
            cfg["k_grid"],
            sigma_d,
            sigma_dw,
            cfg["n_iters"],
            cfg["trials"],
            cfg["seed"],
            gen_spec=_gen_spec(cfg),
            params=params,
            alpha_grid=cfg["alpha_grid"],
            threads=threads,
            seed_key=(command, level_idx),
            sweep_label=command,
        )
        parts.append(sweep)
    return _header(command, cfg) + SweepResult.concat(parts).to_csv()


def render_command(command: str, cfg: dict, threads: int = 1) -> str:
    """Produce the full artifact text for a resolved configuration."""
    if command == "train":
        report, _ = render_train(cfg)
        return report
    if command == "predict-sweep":
        return render_predict_sweep(cfg, threads)
    if command == "control-trace":
        return render_control_trace(cfg)
    if command in ("sweep-k", "sweep-k-modelerror"):
        return render_sweep_k(cfg, threads, command)
    raise ConfigurationError(f"unknown command {command!r}")


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    try:
        cfg = resolve_config(args.command, args)
        if args.command == "train":
            if args.out is None:
                raise ConfigurationError("train requires --out for the model file")
            report, model_json = render_train(cfg)
            _write(model_json, args.out)
            sys.stdout.write(report)
        else:
            _write(render_command(args.command, cfg, threads), args.out)
    except Exception as exc:  # surface a diagnostic, exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
