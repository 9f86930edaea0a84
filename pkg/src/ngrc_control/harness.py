"""Experiment harness: data generation, ridge-parameter search, and sweeps.

Every trial inside a sweep draws its randomness from a child stream keyed
by (master seed, cell index, trial index), so results are independent of
execution order and eligible for process-level parallelism.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .control import (
    ConstantTarget,
    ControllerConfig,
    ControlTrace,
    PeriodicTarget,
    PiecewiseTarget,
    TargetTrajectory,
    run_closed_loop,
)
from .errors import ConfigurationError, DomainError, GenerationError, TrainingError
from .ngrc import (
    FeatureConfig,
    NgrcModel,
    TrainingDataset,
    feature_matrix,
    perturb_weights,
    train_ridge,
)
from .plant import (
    HenonParams,
    HenonPlant,
    NoiseSpec,
    PlantState,
    fixed_points,
    has_escaped,
    henon_step,
    period4_orbit,
)

# Ridge-parameter candidates: 0 plus a log grid over [1e-12, 1].
DEFAULT_ALPHA_GRID = (0.0,) + tuple(10.0**k for k in range(-12, 1))

# Noise levels driving the robustness figures.
NOISE_LEVELS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)

# Gains for trajectory plots and the dense gain grid for robustness sweeps.
K_TRACE_VALUES = (0.0, 0.3, 0.6, 0.9)
K_SWEEP_GRID = tuple((-120 + 3 * i) / 100 for i in range(81))

# Steady-state window (inclusive) for control RMSE aggregation.
RMSE_WINDOW = (50, 150)


def _name_entropy(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


def child_seed_seq(master_seed: int, *key) -> np.random.SeedSequence:
    """Named, order-independent child seed: ints index cells/trials, strings
    name purposes."""
    entropy = [int(master_seed)]
    for k in key:
        if isinstance(k, str):
            entropy.append(_name_entropy(k))
        else:
            k = int(k)
            if k < 0:
                raise ConfigurationError("seed key integers must be non-negative")
            entropy.append(k)
    return np.random.SeedSequence(entropy)


def child_rng(master_seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(child_seed_seq(master_seed, *key))


@dataclass(frozen=True)
class DataGenSpec:
    """How to produce one training/testing dataset.

    An initial condition is drawn uniformly from ``ic_box``, iterated
    ``burn_in`` uncontrolled noiseless steps to land on the attractor, then
    recorded for m_train + m_test steps under N(0, sigma_u^2) perturbations
    and N(0, sigma_d^2) per-step noise. Any escape discards the attempt and
    a fresh initial condition is drawn.
    """

    m_train: int = 10
    m_test: int = 50
    sigma_u: float = 0.1
    sigma_d: float = 0.0
    burn_in: int = 100
    ic_box: tuple[tuple[float, float], tuple[float, float]] = (
        (-1.2, 1.2),
        (-0.36, 0.36),
    )
    max_retries: int = 1000

    def __post_init__(self):
        if self.m_train < 1 or self.m_test < 0:
            raise ConfigurationError("m_train must be >= 1 and m_test >= 0")
        if self.sigma_u < 0 or self.sigma_d < 0:
            raise ConfigurationError("noise levels must be non-negative")
        if self.burn_in < 0 or self.max_retries < 1:
            raise ConfigurationError("burn_in must be >= 0 and max_retries >= 1")


def generate_dataset(
    spec: DataGenSpec, params: HenonParams, rng: np.random.Generator
) -> TrainingDataset:
    """Record (state, perturbation, next-x) rows from one non-escaping run."""
    m = spec.m_train + spec.m_test
    noise = NoiseSpec(spec.sigma_d)
    (x_lo, x_hi), (y_lo, y_hi) = spec.ic_box
    for _ in range(spec.max_retries):
        s = PlantState(rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi))
        ok = True
        for _ in range(spec.burn_in):
            s = henon_step(s, 0.0, params)
            if has_escaped(s):
                ok = False
                break
        if not ok:
            continue
        states = np.empty((m, 2))
        perts = np.empty(m)
        targets = np.empty(m)
        for i in range(m):
            u = rng.normal(0.0, spec.sigma_u) if spec.sigma_u > 0 else 0.0
            states[i] = s
            perts[i] = u
            s = henon_step(s, u, params, noise, rng)
            if has_escaped(s):
                ok = False
                break
            targets[i] = s.x
        if ok:
            return TrainingDataset(states, perts, targets, spec.m_train)
    raise GenerationError(
        f"no escape-free trajectory found in {spec.max_retries} attempts"
    )


def rmse(truth, estimate) -> float:
    """Root-mean-square error between two equal-length sequences."""
    t = np.asarray(truth, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    if t.size == 0:
        raise DomainError("rmse of empty sequences is undefined")
    if t.size != e.size:
        raise DomainError(f"length mismatch: {t.size} != {e.size}")
    return float(np.sqrt(np.mean((t - e) ** 2)))


def _alpha_rmse_table(
    data: TrainingDataset, grid: tuple[float, ...], config: FeatureConfig
) -> list[tuple[float, float]]:
    """One-step test RMSE per ridge candidate; failed fits score inf."""
    te_states, te_perts, te_targets = data.test_rows()
    te_feats = feature_matrix(te_states, te_perts, config)
    out = []
    for alpha in grid:
        try:
            model = train_ridge(data, alpha, config)
        except TrainingError:
            out.append((alpha, float("inf")))
            continue
        w_full = np.hstack([model.w_u, model.w_x])
        preds = te_feats @ w_full.T
        out.append((alpha, rmse(te_targets[:, 0], preds[:, 0])))
    return out


def grid_search_alpha(
    data: TrainingDataset,
    grid=DEFAULT_ALPHA_GRID,
    config: FeatureConfig = FeatureConfig(),
) -> tuple[float, float]:
    """Ridge parameter minimizing one-step prediction RMSE on the test split.

    Ties resolve to the smallest candidate.
    """
    cand = sorted(float(a) for a in grid)
    if not cand:
        raise ConfigurationError("alpha grid must not be empty")
    if cand[0] < 0.0 or cand[-1] > 1.0:
        raise ConfigurationError("alpha grid values must lie in [0, 1]")
    if data.m_test < 1:
        raise ConfigurationError("alpha search needs a non-empty test split")
    table = _alpha_rmse_table(data, tuple(cand), config)
    best_alpha, best_rmse = None, float("inf")
    for alpha, r in table:
        if r < best_rmse:
            best_alpha, best_rmse = alpha, r
    if best_alpha is None or not np.isfinite(best_rmse):
        raise TrainingError("every ridge candidate failed to train")
    return best_alpha, best_rmse


def fit_model(
    rng: np.random.Generator,
    params: HenonParams,
    gen_spec: DataGenSpec,
    alpha_grid=DEFAULT_ALPHA_GRID,
    config: FeatureConfig = FeatureConfig(),
) -> tuple[NgrcModel, float, float]:
    """Generate one dataset, pick alpha by grid search, train on the train split.

    Returns (model, alpha, test_rmse).
    """
    data = generate_dataset(gen_spec, params, rng)
    alpha, test_rmse = grid_search_alpha(data, alpha_grid, config)
    return train_ridge(data, alpha, config), alpha, test_rmse


@dataclass(frozen=True)
class ControlTask:
    """A named control objective: target trajectory plus initial state."""

    name: str
    target: TargetTrajectory
    s0: PlantState


def standard_task(name: str, params: HenonParams = HenonParams()) -> ControlTask:
    """The three benchmark tasks: fixed-point swap, 4-cycle, arbitrary levels.

    ``pu1-pu2`` starts on the in-region fixed point and targets the outer
    one; ``period4`` tracks the 4-cycle x sequence from (-1, 0);
    ``arbitrary`` steps between -1.5 and +1.5 (switching at iteration 100)
    from the origin.
    """
    if name == "pu1-pu2":
        p_u1, p_u2 = fixed_points(params)
        return ControlTask(name, ConstantTarget(p_u2.x), p_u1)
    if name == "period4":
        orbit = period4_orbit()
        return ControlTask(
            name, PeriodicTarget(tuple(p.x for p in orbit)), PlantState(-1.0, 0.0)
        )
    if name == "arbitrary":
        return ControlTask(
            name, PiecewiseTarget(((0, -1.5), (100, 1.5))), PlantState(0.0, 0.0)
        )
    raise ConfigurationError(f"unknown task {name!r}")


def iterations_to_tolerance(trace: ControlTrace, rel_tol: float) -> int | None:
    """Smallest i with relative error < rel_tol for every row from i onward.

    Returns None when the tolerance is never reached within the trace.
    """
    if len(trace) == 0:
        raise DomainError("empty trace")
    if np.any(trace.x_des == 0):
        raise DomainError("relative error is undefined where x_des = 0")
    rel = np.abs(trace.x - trace.x_des) / np.abs(trace.x_des)
    bad = np.nonzero(~(rel < rel_tol))[0]
    if bad.size == 0:
        return 0
    first = int(bad[-1]) + 1
    return first if first < len(trace) else None


@dataclass
class SweepResult:
    """Flat per-cell aggregates matching the sweep CSV schema."""

    sweep: list[str]
    cell_param: np.ndarray
    sigma_d: np.ndarray
    sigma_dw: np.ndarray
    mean_rmse: np.ndarray
    std_rmse: np.ndarray
    trials: np.ndarray
    escaped: np.ndarray
    alpha: np.ndarray

    def __len__(self) -> int:
        return len(self.sweep)

    def to_csv(self) -> str:
        lines = ["sweep,cell_param,sigma_d,sigma_dw,mean_rmse,std_rmse,trials,escaped,alpha"]
        for i in range(len(self)):
            lines.append(
                "%s,%s,%s,%s,%s,%s,%d,%d,%s"
                % (
                    self.sweep[i],
                    format(self.cell_param[i], ".17g"),
                    format(self.sigma_d[i], ".17g"),
                    format(self.sigma_dw[i], ".17g"),
                    format(self.mean_rmse[i], ".17g"),
                    format(self.std_rmse[i], ".17g"),
                    self.trials[i],
                    self.escaped[i],
                    format(self.alpha[i], ".17g"),
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def concat(parts: list["SweepResult"]) -> "SweepResult":
        return SweepResult(
            sweep=[s for p in parts for s in p.sweep],
            cell_param=np.concatenate([p.cell_param for p in parts]),
            sigma_d=np.concatenate([p.sigma_d for p in parts]),
            sigma_dw=np.concatenate([p.sigma_dw for p in parts]),
            mean_rmse=np.concatenate([p.mean_rmse for p in parts]),
            std_rmse=np.concatenate([p.std_rmse for p in parts]),
            trials=np.concatenate([p.trials for p in parts]),
            escaped=np.concatenate([p.escaped for p in parts]),
            alpha=np.concatenate([p.alpha for p in parts]),
        )


def _modal_smallest(values) -> float:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def _run_jobs(worker, jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def _prediction_cell(job):
    (cell_idx, seed, seed_key, m_train, sigma_d, trials, gen_spec, params, grid, config) = job
    spec = replace(gen_spec, m_train=m_train, sigma_d=sigma_d)
    n_alpha = len(grid)
    per_alpha = np.empty((trials, n_alpha))
    best_rmse = np.empty(trials)
    best_alpha = np.empty(trials)
    for t in range(trials):
        rng = child_rng(seed, *seed_key, cell_idx, t)
        data = generate_dataset(spec, params, rng)
        table = _alpha_rmse_table(data, grid, config)
        per_alpha[t] = [r for _, r in table]
        idx = int(np.argmin(per_alpha[t]))  # grid ascending: ties pick smallest
        best_alpha[t] = grid[idx]
        best_rmse[t] = per_alpha[t][idx]
    curve_means = per_alpha.mean(axis=0)
    curve_idx = int(np.argmin(curve_means))
    mean, std = _mean_std(list(best_rmse))
    curve_mean, curve_std = _mean_std(list(per_alpha[:, curve_idx]))
    return {
        "mean": mean,
        "std": std,
        "alpha": _modal_smallest(best_alpha.tolist()),
        "curve_alpha": grid[curve_idx],
        "curve_mean": curve_mean,
        "curve_std": curve_std,
    }


def run_prediction_sweep(
    m_train_grid,
    noise_levels,
    trials: int,
    seed: int,
    *,
    gen_spec: DataGenSpec = DataGenSpec(),
    params: HenonParams = HenonParams(),
    alpha_grid=DEFAULT_ALPHA_GRID,
    config: FeatureConfig = FeatureConfig(),
    threads: int = 1,
    seed_key=(),
) -> SweepResult:
    """One-step prediction RMSE over (training size, noise level) cells.

    Each trial gets a fresh dataset and its own ridge-parameter search; the
    per-cell choice reported is the modal per-trial alpha. A second row
    group (label suffix ``-curve``) reports, for the same trials, the single
    alpha that minimizes the cell-mean RMSE, resolving the per-trial versus
    per-curve ambiguity by emitting both.
    """
    m_train_grid = [int(m) for m in m_train_grid]
    noise_levels = [float(s) for s in noise_levels]
    grid = tuple(sorted(float(a) for a in alpha_grid))
    jobs = []
    cells = []
    for sigma_d in noise_levels:
        for m_train in m_train_grid:
            cell_idx = len(jobs)
            jobs.append(
                (cell_idx, seed, tuple(seed_key), m_train, sigma_d, trials,
                 gen_spec, params, grid, config)
            )
            cells.append((m_train, sigma_d))
    results = _run_jobs(_prediction_cell, jobs, threads)
    n = len(cells)
    label = "predict-sweep"
    out = SweepResult(
        sweep=[label] * n + [label + "-curve"] * n,
        cell_param=np.array([c[0] for c in cells] * 2, dtype=float),
        sigma_d=np.array([c[1] for c in cells] * 2),
        sigma_dw=np.zeros(2 * n),
        mean_rmse=np.array(
            [r["mean"] for r in results] + [r["curve_mean"] for r in results]
        ),
        std_rmse=np.array(
            [r["std"] for r in results] + [r["curve_std"] for r in results]
        ),
        trials=np.full(2 * n, trials, dtype=int),
        escaped=np.zeros(2 * n, dtype=int),
        alpha=np.array(
            [r["alpha"] for r in results] + [r["curve_alpha"] for r in results]
        ),
    )
    return out


def _control_cell(job):
    (cell_idx, seed, seed_key, k, sigma_d, sigma_dw, n_iters, trials,
     task, gen_spec, params, grid, config, window) = job
    train_spec = replace(gen_spec, sigma_d=0.0)
    lo, hi = window
    values: list[float] = []
    alphas: list[float] = []
    escaped = 0
    first_trace = None
    for t in range(trials):
        rng = child_rng(seed, *seed_key, cell_idx, t)
        model, alpha, _ = fit_model(rng, params, train_spec, grid, config)
        alphas.append(alpha)
        if sigma_dw > 0.0:
            model = perturb_weights(model, sigma_dw, rng)
        plant = HenonPlant(params, NoiseSpec(sigma_d))
        controller = ControllerConfig(k=k, target=task.target, model=model)
        trace = run_closed_loop(plant, controller, task.s0, n_iters, rng)
        if t == 0:
            first_trace = trace
        if trace.escaped:
            escaped += 1
            continue
        values.append(rmse(trace.x[lo : hi + 1], trace.x_des[lo : hi + 1]))
    mean, std = _mean_std(values)
    return {
        "mean": mean,
        "std": std,
        "escaped": escaped,
        "alpha": _modal_smallest(alphas),
        "trace": first_trace,
    }


def run_control_task(
    task: ControlTask,
    k_values,
    sigma_d: float,
    sigma_dw: float,
    n_iters: int,
    trials: int,
    seed: int,
    *,
    gen_spec: DataGenSpec = DataGenSpec(),
    params: HenonParams = HenonParams(),
    alpha_grid=DEFAULT_ALPHA_GRID,
    config: FeatureConfig = FeatureConfig(),
    threads: int = 1,
    seed_key=(),
    sweep_label: str = "sweep-k",
    window: tuple[int, int] = RMSE_WINDOW,
) -> tuple[dict[float, ControlTrace], SweepResult]:
    """Closed-loop robustness cells over a gain grid at one noise level.

    Every trial trains a fresh model on noiseless data with its own ridge
    search (adding a fresh weight perturbation when sigma_dw > 0), then runs
    the loop under noise sigma_d. The cell RMSE is taken between x and its
    target over the steady-state window; escaped runs are counted and left
    out of the aggregate. Returns the first trial's trace for each gain
    alongside the aggregates.
    """
    if n_iters < window[1]:
        raise ConfigurationError(
            f"n_iters={n_iters} too short for the RMSE window {window}"
        )
    k_values = [float(k) for k in k_values]
    grid = tuple(sorted(float(a) for a in alpha_grid))
    jobs = [
        (idx, seed, tuple(seed_key), k, float(sigma_d), float(sigma_dw), n_iters,
         trials, task, gen_spec, params, grid, config, window)
        for idx, k in enumerate(k_values)
    ]
    results = _run_jobs(_control_cell, jobs, threads)
    n = len(k_values)
    sweep = SweepResult(
        sweep=[sweep_label] * n,
        cell_param=np.array(k_values),
        sigma_d=np.full(n, float(sigma_d)),
        sigma_dw=np.full(n, float(sigma_dw)),
        mean_rmse=np.array([r["mean"] for r in results]),
        std_rmse=np.array([r["std"] for r in results]),
        trials=np.full(n, trials, dtype=int),
        escaped=np.array([r["escaped"] for r in results], dtype=int),
        alpha=np.array([r["alpha"] for r in results]),
    )
    traces = {k: r["trace"] for k, r in zip(k_values, results)}
    return traces, sweep
