"""Echo state network construction and teacher-forced evolution.

The reservoir update is r(i) = tanh(W_in [x(i); b_in] + W r(i-1)) and the
readout is W_out [r; x; 1]. Alongside the state, the exact time-derivative
of the reservoir is propagated in closed form: differentiating the update
gives rdot(i) = (1 - r(i)^2) * (W_in^x xdot(i) + W rdot(i-1)), with W_in^x
the input matrix without its bias column (the bias is constant in time).
Both recursions start from zero at the beginning of the washout interval.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse

# The reservoir matrix is scaled by rho / estimate, so re-estimating with the
# same protocol returns rho exactly (the estimator is scale-equivariant).
# Construction uses a higher iteration cap than the estimator default because
# random sparse matrices have slowly separating leading eigenvalues.
CONSTRUCTION_RADIUS_ITERS = 1600


@dataclass(frozen=True)
class HyperParams:
    """Reservoir hyperparameters (defaults reproduce the reference setup)."""

    n_reservoir: int = 1000
    sigma_in: float = 0.1
    b_in: float = 10.0
    avg_degree: float = 20.0
    spectral_radius: float = 0.9
    tikhonov: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ValueError("n_reservoir must be >= 1")
        if self.sigma_in <= 0:
            raise ValueError("sigma_in must be positive")
        if self.avg_degree > self.n_reservoir:
            raise ValueError("avg_degree cannot exceed n_reservoir")
        if self.spectral_radius <= 0:
            raise ValueError("spectral_radius must be positive")
        if self.tikhonov < 0:
            raise ValueError("tikhonov must be >= 0")


@dataclass
class EsnWeights:
    """Fixed random input/state matrices plus the trainable readout.

    ``w_in`` has one nonzero per row over n_x + 1 columns (the last column
    multiplies the constant input bias ``b_in``); ``w`` is a sparse random
    matrix rescaled to the target spectral radius. Both are frozen after
    construction. ``w_out`` is dense, filled in by training.
    """

    w_in: sparse.csr_matrix
    w: sparse.csr_matrix
    b_in: float
    w_out: np.ndarray | None = None

    @property
    def n_reservoir(self) -> int:
        return self.w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w_in.shape[1] - 1

    @property
    def w_in_no_bias(self) -> sparse.csr_matrix:
        wx = getattr(self, "_w_in_no_bias", None)
        if wx is None:
            wx = self.w_in[:, :-1].tocsr()
            self._w_in_no_bias = wx
        return wx


def _freeze(m: sparse.csr_matrix) -> sparse.csr_matrix:
    for arr in (m.data, m.indices, m.indptr):
        arr.flags.writeable = False
    return m


def build_input_matrix(hp: HyperParams, n_x: int, rng: np.random.Generator) -> sparse.csr_matrix:
    """Sparse input matrix: one nonzero per row, uniform in [-sigma_in, sigma_in].

    The nonzero column is chosen uniformly among all n_x + 1 input-plus-bias
    columns.
    """
    if n_x < 1:
        raise ValueError("n_x must be >= 1")
    rows = np.arange(hp.n_reservoir)
    cols = rng.integers(0, n_x + 1, size=hp.n_reservoir)
    vals = rng.uniform(-hp.sigma_in, hp.sigma_in, size=hp.n_reservoir)
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(hp.n_reservoir, n_x + 1))
    return _freeze(m)


def build_state_matrix(hp: HyperParams, rng: np.random.Generator) -> sparse.csr_matrix:
    """Sparse random reservoir matrix rescaled to the target spectral radius.

    Each entry is independently nonzero with probability avg_degree/n_r
    (so rows have avg_degree connections on average), with values uniform
    in [-1, 1]. The whole matrix is then multiplied by one factor so that
    its spectral radius estimate equals ``hp.spectral_radius``. A degenerate
    draw with zero radius is redrawn from the same generator.
    """
    n = hp.n_reservoir
    p = hp.avg_degree / n
    for _ in range(5):
        mask = rng.random((n, n)) < p
        rows, cols = np.nonzero(mask)
        vals = rng.uniform(-1.0, 1.0, size=rows.size)
        m = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        estimate, _ = spectral_radius_estimate(m, max_iters=CONSTRUCTION_RADIUS_ITERS)
        if estimate > 0.0:
            return _freeze(m * (hp.spectral_radius / estimate))
    raise RuntimeError("could not draw a state matrix with nonzero spectral radius")


def spectral_radius_estimate(m, tol: float = 1e-8, max_iters: int = 200,
                             window: int = 50) -> tuple[float, bool]:
    """Largest eigenvalue magnitude from the iterated growth rate of ||A^k v||.

    The estimate is the geometric mean growth over the trailing ``window``
    iterations, which stays well defined when the leading eigenvalues are a
    complex pair (plain power iteration would oscillate). Returns
    (estimate, converged); converged means the windowed estimate's relative
    change stayed below ``tol`` for ``window // 5`` consecutive iterations.
    The starting vector comes from a fixed internal seed so repeated calls
    are reproducible.
    """
    n, n2 = m.shape
    if n != n2:
        raise ValueError("matrix must be square")
    rng = np.random.default_rng(528147)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)

    log_norms = np.zeros(max_iters + 1)
    estimate = 0.0
    prev = None
    stable = 0
    needed = max(1, window // 5)
    for k in range(1, max_iters + 1):
        v = m @ v
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 0.0, True  # A^k v vanished: nilpotent, radius 0
        log_norms[k] = log_norms[k - 1] + np.log(norm)
        v /= norm
        if k < window:
            continue
        estimate = float(np.exp((log_norms[k] - log_norms[k - window]) / window))
        if prev is not None:
            stable = stable + 1 if abs(estimate - prev) <= tol * max(estimate, 1e-300) else 0
            if stable >= needed:
                return estimate, True
        prev = estimate
    return estimate, False


def build_weights(hp: HyperParams, n_x: int) -> EsnWeights:
    """Construct the fixed ESN matrices from the seed.

    Uses PCG64 generators on independent spawned substreams, one per matrix,
    so (seed, hyperparameters, n_x) fully determines the result.
    """
    seq_in, seq_state = np.random.SeedSequence(hp.seed).spawn(2)
    w_in = build_input_matrix(hp, n_x, np.random.default_rng(seq_in))
    w = build_state_matrix(hp, np.random.default_rng(seq_state))
    return EsnWeights(w_in=w_in, w=w, b_in=hp.b_in)


def step(weights: EsnWeights, r_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One reservoir update: tanh(W_in [x; b_in] + W r_prev)."""
    xb = np.concatenate([x, [weights.b_in]])
    return np.tanh(weights.w_in @ xb + weights.w @ r_prev)


def step_tangent(weights: EsnWeights, r_new: np.ndarray, rdot_prev: np.ndarray,
                 xdot: np.ndarray) -> np.ndarray:
    """Exact time-derivative of the reservoir state produced by ``step``.

    ``r_new`` must be the state ``step`` returned for the same inputs; the
    tangent is driven by the input derivative and the previous tangent.
    """
    drive = weights.w_in_no_bias @ xdot + weights.w @ rdot_prev
    return (1.0 - r_new * r_new) * drive


@dataclass
class ReservoirRun:
    """Teacher-forced reservoir trajectory in augmented form.

    Columns of ``aug_states`` are [r; x; 1] and columns of ``aug_tangents``
    are [rdot; xdot; 0], one per recorded (post-washout) time step.
    """

    aug_states: np.ndarray
    aug_tangents: np.ndarray
    n_reservoir: int
    n_inputs: int

    @property
    def n_columns(self) -> int:
        return self.aug_states.shape[1]

    def sliced(self, start: int, stop: int) -> "ReservoirRun":
        return ReservoirRun(self.aug_states[:, start:stop],
                            self.aug_tangents[:, start:stop],
                            self.n_reservoir, self.n_inputs)


def run_teacher_forced(weights: EsnWeights, x_seq: np.ndarray, xdot_seq: np.ndarray,
                       n_washout: int, r0: np.ndarray | None = None,
                       rdot0: np.ndarray | None = None) -> ReservoirRun:
    """Evolve state and tangent over an input sequence, teacher forced.

    ``x_seq`` and ``xdot_seq`` are n_x-by-n_columns, ordered in time. Both
    recursions start from zero (overridable for echo-state-property checks);
    the first ``n_washout`` outputs are discarded.
    """
    if x_seq.shape != xdot_seq.shape:
        raise ValueError("x_seq and xdot_seq must have the same shape")
    n_x, n_cols = x_seq.shape
    if not 0 <= n_washout <= n_cols:
        raise ValueError("n_washout must be between 0 and the number of columns")
    n_r = weights.n_reservoir

    r = np.zeros(n_r) if r0 is None else np.asarray(r0, dtype=float).copy()
    rdot = np.zeros(n_r) if rdot0 is None else np.asarray(rdot0, dtype=float).copy()

    n_recorded = n_cols - n_washout
    aug_states = np.empty((n_r + n_x + 1, n_recorded))
    aug_tangents = np.empty_like(aug_states)

    for i in range(n_cols):
        r = step(weights, r, x_seq[:, i])
        rdot = step_tangent(weights, r, rdot, xdot_seq[:, i])
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(rdot))):
            raise RuntimeError(f"non-finite reservoir state at input column {i}")
        if i >= n_washout:
            j = i - n_washout
            aug_states[:n_r, j] = r
            aug_states[n_r:-1, j] = x_seq[:, i]
            aug_states[-1, j] = 1.0
            aug_tangents[:n_r, j] = rdot
            aug_tangents[n_r:-1, j] = xdot_seq[:, i]
            aug_tangents[-1, j] = 0.0

    return ReservoirRun(aug_states=aug_states, aug_tangents=aug_tangents,
                        n_reservoir=n_r, n_inputs=n_x)


def readout(w_out: np.ndarray, aug_state: np.ndarray) -> np.ndarray:
    """Linear readout W_out [r; x; 1]; accepts a column or a matrix of columns."""
    return w_out @ aug_state


def readout_derivative(w_out: np.ndarray, aug_tangent: np.ndarray) -> np.ndarray:
    """Exact output time-derivative W_out [rdot; xdot; 0].

    The tangent column carries 0 in the constant slot, so the bias
    contributes nothing.
    """
    return w_out @ aug_tangent


def fe_output_derivative(yhat_series: np.ndarray, dt: float) -> np.ndarray:
    """First-order forward-difference derivative of an output series.

    Column i is (yhat(i+1) - yhat(i)) / dt; the result has one column fewer
    than the input.
    """
    if yhat_series.shape[-1] < 2:
        raise ValueError("need at least two columns to difference")
    return np.diff(yhat_series, axis=-1) / dt


def dump_weights(weights: EsnWeights, out_dir: str) -> None:
    """Write w_in.csv / w.csv as row,col,value triplets and w_out.csv dense."""
    os.makedirs(out_dir, exist_ok=True)
    for name, m in (("w_in", weights.w_in), ("w", weights.w)):
        coo = m.tocoo()
        with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
            fh.write("row,col,value\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r},{c},{v:.17g}\n")
    if weights.w_out is not None:
        with open(os.path.join(out_dir, "w_out.csv"), "w") as fh:
            for row in weights.w_out:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
