"""Polynomial-feature readout: feature construction, ridge training, prediction.

The model output is a linear readout over a feature vector built from the
control input, a constant, the observables, and their unique low-order
monomials:

    features = [u | c | x_1..x_dlin | monomials of degree 2..p]

Training solves a Tikhonov-regularized least-squares problem for the full
readout matrix, which is then partitioned into a control-effectiveness
block ``w_u`` (first d columns) and a state block ``w_x`` (the rest).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigurationError, TrainingError

# Condition-number ceiling for the normal-equations solve; beyond it the
# training falls back to a singular-value solve.
COND_LIMIT = 1e12

# Below this magnitude the learned control effectiveness is treated as
# non-invertible: training rejects it and the control law refuses to run.
MIN_CONTROL_EFFECTIVENESS = 1e-12


@lru_cache(maxsize=None)
def _monomial_exponents(d_lin: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Index tuples for all unique monomials of degree 2..p, graded lex order."""
    out: list[tuple[int, ...]] = []
    for degree in range(2, p + 1):
        out.extend(combinations_with_replacement(range(d_lin), degree))
    return tuple(out)


@dataclass(frozen=True)
class FeatureConfig:
    """Feature-vector layout: d_lin observables, d control inputs, constant c,
    monomials up to degree p."""

    d_lin: int = 2
    d: int = 1
    c: float = 1.0
    p: int = 2

    def __post_init__(self):
        if self.d_lin < 1:
            raise ConfigurationError(f"d_lin must be >= 1, got {self.d_lin}")
        if self.d < 1:
            raise ConfigurationError(f"d must be >= 1, got {self.d}")
        if self.p < 1:
            raise ConfigurationError(f"monomial order must be >= 1, got {self.p}")

    @property
    def d_nonlin(self) -> int:
        return sum(comb(self.d_lin + k - 1, k) for k in range(2, self.p + 1))

    @property
    def d_state(self) -> int:
        """Length of the state block [c | lin | nonlin]."""
        return 1 + self.d_lin + self.d_nonlin

    @property
    def d_tot(self) -> int:
        return self.d + self.d_state

    def monomials(self) -> tuple[tuple[int, ...], ...]:
        return _monomial_exponents(self.d_lin, self.p)


def build_linear_features(x_obs, d_lin: int | None = None) -> np.ndarray:
    """The observables themselves, unchanged."""
    x = np.asarray(x_obs, dtype=float).ravel()
    if d_lin is not None and x.size != d_lin:
        raise ConfigurationError(f"expected {d_lin} observables, got {x.size}")
    return x


def build_nonlinear_features(x_obs, p: int) -> np.ndarray:
    """All unique monomials of the observables with total degree 2..p.

    Ordered by degree, then lexicographically; for p=2 and two observables
    this is exactly [x^2, x*y, y^2].
    """
    if p < 2:
        raise ConfigurationError(f"nonlinear features need order >= 2, got {p}")
    x = np.asarray(x_obs, dtype=float).ravel()
    exps = _monomial_exponents(x.size, p)
    out = np.empty(len(exps))
    for j, idx in enumerate(exps):
        v = 1.0
        for i in idx:
            v *= x[i]
        out[j] = v
    return out


def state_features(x_obs, c: float, p: int) -> np.ndarray:
    """The control-free feature block [c | lin | nonlin]."""
    x = np.asarray(x_obs, dtype=float).ravel()
    parts = [np.array([c]), x]
    if p >= 2:
        parts.append(build_nonlinear_features(x, p))
    return np.concatenate(parts)


def assemble_features(
    u, c: float, x_obs, p: int, config: FeatureConfig | None = None
) -> np.ndarray:
    """Full feature vector [u | c | lin | nonlin].

    The control block always comes first; with ``config`` given, all
    dimensions are validated against it.
    """
    u_vec = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    x = np.asarray(x_obs, dtype=float).ravel()
    if config is not None:
        if u_vec.size != config.d:
            raise ConfigurationError(
                f"expected {config.d} control entries, got {u_vec.size}"
            )
        if x.size != config.d_lin:
            raise ConfigurationError(
                f"expected {config.d_lin} observables, got {x.size}"
            )
        if p != config.p:
            raise ConfigurationError(f"order mismatch: {p} != configured {config.p}")
    return np.concatenate([u_vec, state_features(x, c, p)])


def feature_names(config: FeatureConfig, var_names: tuple[str, ...] | None = None) -> list[str]:
    """Column labels matching the feature layout (for reports)."""
    if var_names is None:
        var_names = ("x", "y") if config.d_lin == 2 else tuple(
            f"x{i + 1}" for i in range(config.d_lin)
        )
    if len(var_names) != config.d_lin:
        raise ConfigurationError("one name per observable is required")
    names = ["u"] if config.d == 1 else [f"u{i + 1}" for i in range(config.d)]
    names.append("c")
    names.extend(var_names)
    for idx in config.monomials():
        counts: dict[int, int] = {}
        for i in idx:
            counts[i] = counts.get(i, 0) + 1
        names.append(
            "*".join(
                v if n == 1 else f"{v}^{n}"
                for v, n in ((var_names[i], counts[i]) for i in sorted(counts))
            )
        )
    return names


@dataclass(frozen=True)
class TrainingDataset:
    """Aligned (state, perturbation, next-output) rows with a train/test split.

    ``targets[i]`` is the controlled output one step after applying
    ``perturbations[i]`` at ``states[i]``.
    """

    states: np.ndarray
    perturbations: np.ndarray
    targets: np.ndarray
    m_train: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise ConfigurationError("states must be a 2-D (rows, d_lin) array")
        n = states.shape[0]
        perts = np.asarray(self.perturbations, dtype=float).reshape(n, -1)
        targets = np.asarray(self.targets, dtype=float).reshape(n, -1)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "perturbations", perts)
        object.__setattr__(self, "targets", targets)
        if not 1 <= self.m_train <= n:
            raise ConfigurationError(
                f"m_train must be in [1, {n}], got {self.m_train}"
            )

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def m_test(self) -> int:
        return len(self) - self.m_train

    def train_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.m_train
        return self.states[:k], self.perturbations[:k], self.targets[:k]

    def test_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.m_train
        return self.states[k:], self.perturbations[k:], self.targets[k:]


@dataclass(frozen=True)
class NgrcModel:
    """Trained readout, partitioned into control and state blocks.

    ``w_u`` is d x d (control effectiveness), ``w_x`` is d x (1+d_lin+d_nonlin)
    over [c | lin | nonlin]. ``cond`` records the condition number of the
    regularized normal matrix seen at training time.
    """

    w_u: np.ndarray
    w_x: np.ndarray
    config: FeatureConfig
    alpha: float
    cond: float = float("nan")

    def __post_init__(self):
        w_u = np.asarray(self.w_u, dtype=float).reshape(self.config.d, self.config.d)
        w_x = np.asarray(self.w_x, dtype=float).reshape(
            self.config.d, self.config.d_state
        )
        w_u.setflags(write=False)
        w_x.setflags(write=False)
        object.__setattr__(self, "w_u", w_u)
        object.__setattr__(self, "w_x", w_x)


def feature_matrix(states, perturbations, config: FeatureConfig) -> np.ndarray:
    """Stack one feature row per (state, perturbation) pair."""
    states = np.asarray(states, dtype=float)
    perturbations = np.asarray(perturbations, dtype=float).reshape(states.shape[0], -1)
    rows = np.empty((states.shape[0], config.d_tot))
    for i in range(states.shape[0]):
        rows[i] = assemble_features(
            perturbations[i], config.c, states[i], config.p, config
        )
    return rows


def _svd_solve(feats: np.ndarray, targets: np.ndarray, alpha: float) -> np.ndarray:
    """Rank-revealing ridge solve via SVD; minimum-norm least squares at alpha=0."""
    u_mat, s, vt = np.linalg.svd(feats, full_matrices=False)
    if alpha > 0.0:
        gain = s / (s * s + alpha)
    else:
        cutoff = np.finfo(float).eps * max(feats.shape) * (s[0] if s.size else 0.0)
        gain = np.divide(1.0, s, out=np.zeros_like(s), where=s > cutoff)
    return (vt.T * gain) @ (u_mat.T @ targets)


def train_ridge(
    data: TrainingDataset, alpha: float, config: FeatureConfig
) -> NgrcModel:
    """Fit the readout on the training split by Tikhonov-regularized least squares.

    Solves the regularized normal equations through a Cholesky factorization;
    when alpha is 0 or the system is ill-conditioned (cond > 1e12) it falls
    back to a singular-value solve and the resulting condition number is
    recorded on the model.
    """
    if alpha < 0:
        raise ConfigurationError(f"ridge parameter must be >= 0, got {alpha}")
    states, perts, targets = data.train_rows()
    if states.shape[1] != config.d_lin or perts.shape[1] != config.d:
        raise ConfigurationError("dataset dimensions do not match the feature config")
    feats = feature_matrix(states, perts, config)
    gram = feats.T @ feats + alpha * np.eye(config.d_tot)
    cond = float(np.linalg.cond(gram))
    if alpha == 0.0 or cond > COND_LIMIT:
        weights = _svd_solve(feats, targets, alpha)
    else:
        try:
            weights = cho_solve(cho_factor(gram, lower=True), feats.T @ targets)
        except LinAlgError:
            weights = _svd_solve(feats, targets, alpha)
    w = weights.T  # (d_out, d_tot), outputs == control dim d
    w_u, w_x = w[:, : config.d], w[:, config.d :]
    if config.d == 1:
        invertible = abs(float(w_u[0, 0])) > MIN_CONTROL_EFFECTIVENESS
    else:
        invertible = (
            np.all(np.isfinite(w_u))
            and np.linalg.cond(w_u) < 1.0 / MIN_CONTROL_EFFECTIVENESS
        )
    if not invertible:
        raise TrainingError(
            "learned control effectiveness is not invertible; control impossible"
        )
    return NgrcModel(w_u=w_u, w_x=w_x, config=config, alpha=float(alpha), cond=cond)


def predict_unforced(model: NgrcModel, x_obs) -> np.ndarray:
    """Next-step prediction of the uncontrolled output: w_x @ [c | lin | nonlin]."""
    x = np.asarray(x_obs, dtype=float).ravel()
    if x.size != model.config.d_lin:
        raise ConfigurationError(
            f"expected {model.config.d_lin} observables, got {x.size}"
        )
    return model.w_x @ state_features(x, model.config.c, model.config.p)


def predict(model: NgrcModel, x_obs, u) -> np.ndarray:
    """Next-step prediction under control input u."""
    u_vec = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    if u_vec.size != model.config.d:
        raise ConfigurationError(
            f"expected {model.config.d} control entries, got {u_vec.size}"
        )
    return predict_unforced(model, x_obs) + model.w_u @ u_vec


def perturb_weights(
    model: NgrcModel, sigma_dw: float, rng: np.random.Generator
) -> NgrcModel:
    """Copy of the model with i.i.d. N(0, sigma_dw^2) added to every weight.

    The draw happens once, in feature-layout order [w_u | w_x], and the
    perturbed weights stay constant afterwards.
    """
    if sigma_dw < 0:
        raise ConfigurationError(f"sigma_dw must be >= 0, got {sigma_dw}")
    if sigma_dw == 0.0:
        return replace(model)
    delta = rng.normal(0.0, sigma_dw, size=(model.config.d, model.config.d_tot))
    return replace(
        model,
        w_u=model.w_u + delta[:, : model.config.d],
        w_x=model.w_x + delta[:, model.config.d :],
    )


def model_to_json(model: NgrcModel) -> str:
    """Serialize to the flat JSON wire format."""
    return json.dumps(
        {
            "alpha": model.alpha,
            "w_u": model.w_u.tolist(),
            "w_x": model.w_x.tolist(),
            "config": {
                "d_lin": model.config.d_lin,
                "d": model.config.d,
                "c": model.config.c,
                "p": model.config.p,
            },
        }
    )


def model_from_json(text: str) -> NgrcModel:
    """Inverse of :func:`model_to_json`."""
    obj = json.loads(text)
    cfg = obj["config"]
    config = FeatureConfig(
        d_lin=int(cfg["d_lin"]), d=int(cfg["d"]), c=float(cfg["c"]), p=int(cfg["p"])
    )
    return NgrcModel(
        w_u=np.array(obj["w_u"], dtype=float),
        w_x=np.array(obj["w_x"], dtype=float),
        config=config,
        alpha=float(obj["alpha"]),
    )
