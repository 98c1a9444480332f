"""Readout training: ridge regression for the observed rows, physics-residual
gradient descent (Adam) for the hidden rows.

The physics loss is the mean squared mismatch between the output's exact
time-derivative and the governing equations evaluated at the output:

    L = 1/(n_t * n_y) * sum_j || ydot_hat(t_j) - f(yhat(t_j)) ||^2

Only the hidden readout rows are optimized; the observed rows stay exactly
as ridge regression produced them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import ode
from .ode import LorenzParams, StateSplit
from .reservoir import HyperParams, ReservoirRun


@dataclass
class ReadoutPartition:
    """Readout matrix split into frozen observed rows and trainable hidden rows."""

    observed_rows: np.ndarray  # (n_x, n_r + n_x + 1)
    hidden_rows: np.ndarray    # (n_h, n_r + n_x + 1)

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.observed_rows, self.hidden_rows], axis=0)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings for hidden-row training.

    The learning rate starts at ``initial_lr`` and is multiplied by
    ``lr_decay_factor`` whenever the best loss fails to improve by a
    relative ``improvement_tol`` for ``plateau_patience`` consecutive steps;
    training stops when the rate would drop below ``min_lr`` or after
    ``max_steps``. ``hbar`` is the prior estimate of the hidden-state mean
    used to initialize the hidden rows.
    """

    initial_lr: float = 0.1
    lr_decay_factor: float = 0.1
    plateau_patience: int = 200
    improvement_tol: float = 1e-3
    min_lr: float = 1e-4
    max_steps: int = 30000
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    hbar: float = 10.0

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class AdamState:
    """First/second moment accumulators and step counter."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, cfg: TrainConfig) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params),
                   beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray,
              lr: float) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def ridge_solve(r_matrix: np.ndarray, targets: np.ndarray, gamma: float) -> np.ndarray:
    """Solve (R R^T + gamma I) W^T = R T^T for the readout W.

    ``r_matrix`` holds feature columns (one per sample), ``targets`` the
    matching target columns. Uses a symmetric positive-definite (Cholesky)
    factorization; raises RuntimeError with a condition-number diagnostic
    when the regularized normal matrix is not factorizable.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    a = r_matrix @ r_matrix.T
    a[np.diag_indices_from(a)] += gamma
    b = r_matrix @ targets.T
    try:
        factor = scipy.linalg.cho_factor(a)
    except scipy.linalg.LinAlgError as err:
        cond = np.linalg.cond(a)
        raise RuntimeError(
            f"normal matrix not positive definite (cond ~ {cond:.3e}); "
            "increase gamma") from err
    return scipy.linalg.cho_solve(factor, b).T


def init_output_matrix(run: ReservoirRun, x_targets: np.ndarray, split: StateSplit,
                       hp: HyperParams, cfg: TrainConfig) -> ReadoutPartition:
    """Initial readout: ridge fit of the observed targets, hidden rows fit
    against a constant series equal to the hidden-mean estimate ``cfg.hbar``.

    Both fits share one factorization of the same regularized normal matrix.
    """
    if x_targets.shape != (split.n_observed, run.n_columns):
        raise ValueError("x_targets shape does not match run/split")
    hbar_rows = np.full((split.n_hidden, run.n_columns), cfg.hbar)
    stacked = np.concatenate([x_targets, hbar_rows], axis=0)
    w = ridge_solve(run.aug_states, stacked, hp.tikhonov)
    return ReadoutPartition(observed_rows=w[:split.n_observed],
                            hidden_rows=w[split.n_observed:])


def _f_split(y_split: np.ndarray, p: LorenzParams, split: StateSplit) -> np.ndarray:
    """Governing rhs evaluated on outputs ordered [observed; hidden]."""
    perm = split.split_to_state
    y_state = np.empty_like(y_split)
    y_state[perm] = y_split
    return ode.rhs(y_state, p)[perm]


def _jacobian_split(y_split: np.ndarray, p: LorenzParams, split: StateSplit) -> np.ndarray:
    perm = split.split_to_state
    y_state = np.empty_like(y_split)
    y_state[perm] = y_split
    jac = ode.jacobian(y_state, p)
    return jac[perm][:, perm]


def physics_residuals(w_out: np.ndarray, run: ReservoirRun, p: LorenzParams,
                      split: StateSplit) -> np.ndarray:
    """Residual columns ydot_hat(t_j) - f(yhat(t_j)), in [observed; hidden] order."""
    yhat = w_out @ run.aug_states
    ydot = w_out @ run.aug_tangents
    return ydot - _f_split(yhat, p, split)


def physics_loss(residuals: np.ndarray) -> float:
    """Mean squared residual: sum of squares over 1/(n_t * n_y)."""
    if residuals.size == 0:
        raise ValueError("residuals must be nonempty")
    return float(np.sum(residuals * residuals) / residuals.size)


class PhysicsProblem:
    """Physics loss and hidden-row gradient for a fixed reservoir run.

    The observed readout rows are frozen, so their contribution to the
    outputs is precomputed once; each evaluation only multiplies the hidden
    rows through. The gradient restricted to the hidden rows is

        dL/dW_h = 2/(n_t n_y) * sum_j [ e_j d_j^T - (J_f(yhat_j)^T e_j) z_j^T ]_h

    with z_j / d_j the augmented state/tangent columns and J_f the system
    Jacobian at the output.
    """

    def __init__(self, observed_rows: np.ndarray, aug_states: np.ndarray,
                 aug_tangents: np.ndarray, p: LorenzParams, split: StateSplit):
        self.z = aug_states
        self.d = aug_tangents
        self.p = p
        self.split = split
        self.n_obs = split.n_observed
        self.y_obs = observed_rows @ self.z
        self.ydot_obs = observed_rows @ self.d
        self._norm = 1.0 / (self.z.shape[1] * split.n_states)

    @classmethod
    def exact(cls, observed_rows: np.ndarray, run: ReservoirRun, p: LorenzParams,
              split: StateSplit) -> "PhysicsProblem":
        """Residuals use the exact tangent-propagated output derivative."""
        return cls(observed_rows, run.aug_states, run.aug_tangents, p, split)

    @classmethod
    def forward_euler(cls, observed_rows: np.ndarray, run: ReservoirRun,
                      p: LorenzParams, split: StateSplit, dt: float) -> "PhysicsProblem":
        """Residuals use the first-order forward-difference output derivative.

        The last column is dropped to align the differenced series with the
        states.
        """
        d = np.diff(run.aug_states, axis=1) / dt
        return cls(observed_rows, run.aug_states[:, :-1], d, p, split)

    def outputs(self, hidden_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        yhat = np.concatenate([self.y_obs, hidden_rows @ self.z], axis=0)
        ydot = np.concatenate([self.ydot_obs, hidden_rows @ self.d], axis=0)
        return yhat, ydot

    def residuals(self, hidden_rows: np.ndarray) -> np.ndarray:
        yhat, ydot = self.outputs(hidden_rows)
        return ydot - _f_split(yhat, self.p, self.split)

    def loss(self, hidden_rows: np.ndarray) -> float:
        return physics_loss(self.residuals(hidden_rows))

    def loss_and_grad(self, hidden_rows: np.ndarray) -> tuple[float, np.ndarray]:
        yhat, ydot = self.outputs(hidden_rows)
        err = ydot - _f_split(yhat, self.p, self.split)
        loss = float(np.sum(err * err) * self._norm)
        jac = _jacobian_split(yhat, self.p, self.split)
        # (J^T e) restricted to hidden output rows
        jte_hidden = np.einsum("iht,it->ht", jac[:, self.n_obs:, :], err)
        grad = (2.0 * self._norm) * (err[self.n_obs:] @ self.d.T - jte_hidden @ self.z.T)
        return loss, grad


def physics_loss_grad(w_out_partition: ReadoutPartition, run: ReservoirRun,
                      p: LorenzParams, split: StateSplit) -> np.ndarray:
    """Gradient of the physics loss with respect to the hidden rows only."""
    problem = PhysicsProblem.exact(w_out_partition.observed_rows, run, p, split)
    return problem.loss_and_grad(w_out_partition.hidden_rows)[1]


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; carries the history so far."""

    def __init__(self, message: str, history: np.ndarray):
        super().__init__(message)
        self.history = history


@dataclass
class TrainResult:
    partition: ReadoutPartition
    history: np.ndarray = field(repr=False)  # rows of (step, lr, loss)
    best_loss: float = np.inf
    stop_reason: str = ""


def train_hidden_rows(partition: ReadoutPartition, run: ReservoirRun,
                      p: LorenzParams, cfg: TrainConfig, split: StateSplit,
                      scheme: str = "exact", dt: float | None = None) -> TrainResult:
    """Full-batch Adam on the hidden readout rows.

    ``scheme`` selects how the output derivative in the residual is obtained:
    "exact" uses the propagated tangents, "fe" the forward-difference
    baseline (``dt`` required). Returns the best-loss snapshot, not the last
    iterate, together with the (step, lr, loss) history.
    """
    if split.n_hidden == 0:
        return TrainResult(partition=partition, history=np.empty((0, 3)),
                           best_loss=np.nan, stop_reason="no hidden rows")
    if scheme == "exact":
        problem = PhysicsProblem.exact(partition.observed_rows, run, p, split)
    elif scheme == "fe":
        if dt is None:
            raise ValueError("the fe scheme needs the sampling step dt")
        problem = PhysicsProblem.forward_euler(partition.observed_rows, run, p, split, dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    w = partition.hidden_rows.copy()
    state = AdamState.zeros_like(w, cfg)
    lr = cfg.initial_lr

    best_loss = np.inf
    best_w = w.copy()
    plateau_best = np.inf
    since_improvement = 0
    history = []
    stop_reason = "max_steps"

    for step_i in range(cfg.max_steps):
        loss, grad = problem.loss_and_grad(w)
        history.append((step_i, lr, loss))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at step {step_i}",
                                   np.array(history))
        if loss < best_loss:
            best_loss = loss
            best_w = w.copy()
        if loss < plateau_best * (1.0 - cfg.improvement_tol):
            plateau_best = loss
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= cfg.plateau_patience:
                new_lr = lr * cfg.lr_decay_factor
                if new_lr < cfg.min_lr:
                    stop_reason = "min_lr"
                    break
                lr = new_lr
                since_improvement = 0
        w = adam_step(state, w, grad, lr)

    trained = ReadoutPartition(observed_rows=partition.observed_rows,
                               hidden_rows=best_w)
    return TrainResult(partition=trained, history=np.array(history),
                       best_loss=float(best_loss), stop_reason=stop_reason)
