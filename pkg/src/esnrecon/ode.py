"""Lorenz system, trajectory generation with exact derivatives, and
Lyapunov-exponent estimation used to calibrate the sampling step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_LIMIT = 1e8


@dataclass(frozen=True)
class LorenzParams:
    """Parameters of the Lorenz convection model (chaotic at the defaults)."""

    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    rho: float = 28.0


def rhs(y, p: LorenzParams):
    """Right-hand side of the Lorenz equations.

    Accepts a single state of shape (3,) or a batch of columns (3, n);
    the result has the same shape.
    """
    y = np.asarray(y, dtype=float)
    y1, y2, y3 = y[0], y[1], y[2]
    return np.stack([
        p.sigma * (y2 - y1),
        y1 * (p.rho - y3) - y2,
        y1 * y2 - p.beta * y3,
    ])


def jacobian(y, p: LorenzParams):
    """Jacobian of ``rhs`` at state ``y``.

    Shape (3, 3) for a single state, (3, 3, n) for a batch of columns.
    """
    y = np.asarray(y, dtype=float)
    y1, y2, y3 = y[0], y[1], y[2]
    zero = np.zeros_like(y1)
    one = np.ones_like(y1)
    return np.stack([
        np.stack([-p.sigma * one, p.sigma * one, zero]),
        np.stack([p.rho - y3, -one, -y1]),
        np.stack([y2, y1, -p.beta * one]),
    ])


@dataclass
class Trajectory:
    """Uniformly sampled states with the exact derivative at every sample.

    ``derivs[:, j]`` is the governing rhs evaluated at ``states[:, j]``,
    recomputed at output time (never interpolated).
    """

    dt: float
    states: np.ndarray  # (n_vars, n_samples)
    derivs: np.ndarray  # same shape

    @property
    def n_samples(self) -> int:
        return self.states.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)


@dataclass(frozen=True)
class StateSplit:
    """Partition of the state vector into observed and hidden components.

    The network works in "split order": observed components first, hidden
    components after, each in ascending index order.
    """

    observed_indices: tuple[int, ...]
    n_states: int = 3

    def __post_init__(self):
        idx = tuple(int(i) for i in self.observed_indices)
        if len(idx) == 0:
            raise ValueError("at least one observed component is required")
        if len(set(idx)) != len(idx):
            raise ValueError(f"observed indices must be unique, got {idx}")
        if any(i < 0 or i >= self.n_states for i in idx):
            raise ValueError(f"observed indices {idx} out of bounds for {self.n_states} states")
        object.__setattr__(self, "observed_indices", idx)

    @property
    def hidden_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_states) if i not in self.observed_indices)

    @property
    def n_observed(self) -> int:
        return len(self.observed_indices)

    @property
    def n_hidden(self) -> int:
        return self.n_states - self.n_observed

    @property
    def split_to_state(self) -> np.ndarray:
        """State-vector index of each row in split order."""
        return np.array(self.observed_indices + self.hidden_indices)

    def observed(self, m: np.ndarray) -> np.ndarray:
        return m[list(self.observed_indices)]

    def hidden(self, m: np.ndarray) -> np.ndarray:
        return m[list(self.hidden_indices)]

    def to_state_order(self, m_split: np.ndarray) -> np.ndarray:
        """Reorder rows from split order back to state-vector order."""
        out = np.empty_like(m_split)
        out[self.split_to_state] = m_split
        return out


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(p: LorenzParams, y0, dt: float, n_steps: int, substeps: int = 10,
              discard_steps: int = 0, rhs_fn=None) -> Trajectory:
    """Integrate with fixed-step classical Runge-Kutta (order 4).

    Produces ``n_steps + 1`` samples spaced ``dt`` apart, after skipping
    ``discard_steps`` output steps (transient removal so the recorded data
    lies on the attractor). ``substeps`` internal RK4 steps are taken per
    output sample. ``rhs_fn`` overrides the Lorenz rhs for other systems.

    Raises ValueError on a non-finite initial state and RuntimeError if the
    integration diverges.
    """
    y = np.asarray(y0, dtype=float).copy()
    if not np.all(np.isfinite(y)):
        raise ValueError(f"initial state must be finite, got {y0}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")

    f = (lambda v: rhs(v, p)) if rhs_fn is None else rhs_fn
    h = dt / substeps

    for _ in range(discard_steps * substeps):
        y = _rk4_step(f, y, h)

    states = np.empty((y.size, n_steps + 1))
    states[:, 0] = y
    for i in range(1, n_steps + 1):
        for _ in range(substeps):
            y = _rk4_step(f, y, h)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            raise RuntimeError(f"integration diverged at output step {i}")
        states[:, i] = y

    derivs = f(states)
    return Trajectory(dt=dt, states=states, derivs=derivs)


def exact_input_derivative(traj: Trajectory, split: StateSplit) -> np.ndarray:
    """Observed rows of the exact state derivative.

    The derivative comes from evaluating the governing equations on the full
    state, not from differencing the observed series.
    """
    if split.n_states != traj.states.shape[0]:
        raise ValueError("split and trajectory disagree on state dimension")
    return split.observed(traj.derivs)


@dataclass
class LyapunovEstimate:
    """Leading Lyapunov exponent with its running-mean history."""

    value: float
    converged: bool
    history: np.ndarray = field(repr=False)

    @property
    def lyapunov_time(self) -> float:
        return 1.0 / self.value


def estimate_lyapunov(p: LorenzParams, run_time: float = 5000.0,
                      renorm_interval: float = 1.0, separation: float = 1e-8,
                      step: float = 0.01, discard_fraction: float = 0.1,
                      transient_time: float = 50.0, conv_tol: float = 0.02,
                      y0=(1.0, 1.0, 1.0), rhs_fn=None) -> LyapunovEstimate:
    """Leading Lyapunov exponent by two-trajectory renormalization.

    A reference and a perturbed trajectory (initial distance ``separation``)
    evolve together; after every ``renorm_interval`` time units the log
    stretching factor is recorded and the perturbation is rescaled back to
    ``separation``. The exponent is the mean log growth rate over the kept
    intervals (the first ``discard_fraction`` is dropped). Convergence means
    the running mean moved by less than ``conv_tol`` over its final tenth.
    """
    f = (lambda v: rhs(v, p)) if rhs_fn is None else rhs_fn

    y = np.asarray(y0, dtype=float).copy()
    for _ in range(int(round(transient_time / step))):
        y = _rk4_step(f, y, step)

    rng = np.random.default_rng(0)
    offset = rng.standard_normal(y.size)
    offset *= separation / np.linalg.norm(offset)

    pair = np.stack([y, y + offset], axis=1)  # (n_vars, 2), advanced together
    steps_per_interval = int(round(renorm_interval / step))
    n_intervals = int(round(run_time / renorm_interval))

    log_growth = np.empty(n_intervals)
    for k in range(n_intervals):
        for _ in range(steps_per_interval):
            pair = _rk4_step(f, pair, step)
        if not np.all(np.isfinite(pair)):
            raise RuntimeError(f"lyapunov run diverged in interval {k}")
        delta = pair[:, 1] - pair[:, 0]
        dist = np.linalg.norm(delta)
        log_growth[k] = np.log(dist / separation)
        pair[:, 1] = pair[:, 0] + delta * (separation / dist)

    kept = log_growth[int(n_intervals * discard_fraction):]
    running = np.cumsum(kept) / (renorm_interval * np.arange(1, kept.size + 1))
    tail = running[-max(1, kept.size // 10):]
    converged = bool(np.max(tail) - np.min(tail) < conv_tol)
    return LyapunovEstimate(value=float(running[-1]), converged=converged, history=running)
