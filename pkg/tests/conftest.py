"""Shared fixtures and oracle helpers.

Full-scale experiment cells are expensive, so a session-scoped cache computes
each (size, seed, scheme, testcase) combination once and shares it between
the unit suites and the acceptance gate.
"""

import numpy as np
import pytest

from esnrecon.cli import _derivative_cell, make_trajectory, reconstruct_cell
from esnrecon.config import ExperimentConfig, with_overrides
from esnrecon.dual import Dual, reservoir_step_dual
from esnrecon.ode import StateSplit, integrate
from esnrecon.reservoir import (HyperParams, build_weights, fe_output_derivative,
                                readout, run_teacher_forced, step, step_tangent)
from esnrecon.training import PhysicsProblem, init_output_matrix


def small_hp(n_reservoir, seed, **kwargs):
    """Hyperparameters for desk-scale reservoirs (degree capped to fit)."""
    kwargs.setdefault("avg_degree", min(20.0, n_reservoir / 2))
    return HyperParams(n_reservoir=n_reservoir, seed=seed, **kwargs)


class ExperimentCache:
    """Computes and memoizes full-scale experiment results."""

    def __init__(self):
        self.cfg = ExperimentConfig()
        self._trajectories = {}
        self._derivative = {}
        self._cells = {}

    def trajectory(self, n_samples):
        if n_samples not in self._trajectories:
            self._trajectories[n_samples] = make_trajectory(self.cfg, n_samples)
        return self._trajectories[n_samples]

    def derivative_means(self, n_r, seed):
        """Seed/size cell of the derivative-accuracy study: mean squared
        errors of the fe and exact derivative schemes plus the output error."""
        key = (n_r, seed)
        if key not in self._derivative:
            traj = self.trajectory(self.cfg.washout + self.cfg.n_train + 1)
            err_fe, err_exact, err_output = _derivative_cell(self.cfg, traj, n_r, seed)
            self._derivative[key] = {"fe": float(np.mean(err_fe)),
                                     "exact": float(np.mean(err_exact)),
                                     "output": float(np.mean(err_output))}
        return self._derivative[key]

    def reconstruction(self, testcase, n_r, seed, scheme):
        key = (testcase, n_r, seed, scheme)
        if key not in self._cells:
            cfg = with_overrides(self.cfg, testcase=testcase)
            traj = self.trajectory(cfg.washout + cfg.n_train + cfg.n_test + 1)
            self._cells[key] = reconstruct_cell(cfg, traj, n_r, seed, scheme)
        return self._cells[key]

    @staticmethod
    def metric(cell, metric, variable, dataset):
        for row in cell.metric_rows:
            if row[:3] == (metric, variable, dataset):
                return row[5]
        raise KeyError((metric, variable, dataset))


@pytest.fixture(scope="session")
def cache():
    return ExperimentCache()


# ---------------------------------------------------------------------------
# oracle helpers shared by the unit suites and the acceptance gate


def tangent_oracle_max_deviation(n_cases=100, sizes=(10, 50, 200), seed=42):
    """Closed-form tangent vs dual-number oracle over random step instances.

    Returns the worst relative deviation (vector-norm scaled) observed.
    """
    rng = np.random.default_rng(seed)
    per_size = [n_cases // len(sizes)] * len(sizes)
    per_size[-1] += n_cases - sum(per_size)
    worst = 0.0
    for n_r, count in zip(sizes, per_size):
        for _ in range(count):
            weights = build_weights(small_hp(n_r, int(rng.integers(0, 2**31))), 3)
            r_prev = rng.uniform(-0.9, 0.9, n_r)
            rdot_prev = rng.normal(size=n_r)
            x = rng.uniform(-20.0, 20.0, 3)
            xdot = 50.0 * rng.normal(size=3)
            r_new = step(weights, r_prev, x)
            rdot = step_tangent(weights, r_new, rdot_prev, xdot)
            oracle = reservoir_step_dual(weights, Dual(r_prev, rdot_prev), Dual(x, xdot))
            deviation = (np.linalg.norm(oracle.tangent - rdot)
                         / np.linalg.norm(oracle.tangent))
            worst = max(worst, deviation)
    return worst


def gradient_fd_worst_rel(n_coords=20, fd_step=1e-6, seed=0):
    """Analytic physics-loss gradient vs central finite differences.

    Builds a desk-scale problem with a perturbed hidden row and compares the
    analytic hidden-row gradient against central differences of the loss at
    ``n_coords`` random coordinates; returns the worst relative error.
    """
    rng = np.random.default_rng(seed)
    cfg = ExperimentConfig()
    split = StateSplit((0, 2))
    traj = integrate(cfg.system, cfg.y0, cfg.dt, n_steps=160, substeps=4,
                     discard_steps=1000)
    hp = small_hp(30, 3)
    weights = build_weights(hp, split.n_observed)
    x = split.observed(traj.states)[:, :150]
    xdot = split.observed(traj.derivs)[:, :150]
    run = run_teacher_forced(weights, x, xdot, 20)
    x_targets = split.observed(traj.states)[:, 21:151]
    part = init_output_matrix(run, x_targets, split, hp, cfg.train_config)
    problem = PhysicsProblem.exact(part.observed_rows, run, cfg.system, split)

    w_h = part.hidden_rows + 0.1 * rng.normal(size=part.hidden_rows.shape)
    _, grad = problem.loss_and_grad(w_h)
    worst = 0.0
    for flat in rng.integers(0, w_h.size, size=n_coords):
        k, j = np.unravel_index(int(flat), w_h.shape)
        w_plus = w_h.copy()
        w_plus[k, j] += fd_step
        w_minus = w_h.copy()
        w_minus[k, j] -= fd_step
        fd = (problem.loss(w_plus) - problem.loss(w_minus)) / (2.0 * fd_step)
        worst = max(worst, abs(grad[k, j] - fd) / max(abs(fd), 1e-12))
    return worst


def fe_halving_ratio(seed=0):
    """Forward-difference derivative error at step 2*dt vs step dt.

    One reservoir run provides the output series and its exact tangent
    derivative; the forward difference is evaluated on the same series at
    stride two and stride one. Holding the run fixed isolates the scheme's
    truncation error (resampling the data at dt/2 would also change the
    reservoir's own discrete dynamics), so the error ratio approaches 2.
    """
    cfg = with_overrides(ExperimentConfig(), n_train=2000, n_test=0)
    split = StateSplit((0, 1, 2))
    hp = cfg.hyper_params(100, seed)
    traj = integrate(cfg.system, cfg.y0, cfg.dt, n_steps=cfg.washout + cfg.n_train,
                     substeps=cfg.substeps, discard_steps=cfg.discard_steps)
    weights = build_weights(hp, 3)
    x = traj.states[:, :-1]
    xdot = traj.derivs[:, :-1]
    run = run_teacher_forced(weights, x, xdot, cfg.washout)
    targets = traj.states[:, cfg.washout + 1:]
    part = init_output_matrix(run, targets, split, hp, cfg.train_config)
    yhat = readout(part.full, run.aug_states)
    ydot_exact = readout(part.full, run.aug_tangents)

    fe_fine = fe_output_derivative(yhat, traj.dt)
    err_fine = np.linalg.norm(fe_fine[:, ::2] - ydot_exact[:, :-1:2], axis=0)
    fe_coarse = fe_output_derivative(yhat[:, ::2], 2.0 * traj.dt)
    err_coarse = np.linalg.norm(fe_coarse - ydot_exact[:, :-2:2], axis=0)
    n = min(err_fine.size, err_coarse.size)
    return float(np.mean(err_coarse[:n]) / np.mean(err_fine[:n]))


def integrator_convergence_order():
    """Observed RK4 self-convergence order from substep refinement."""
    cfg = ExperimentConfig()
    y0 = np.array([1.0, 1.0, 1.0])
    reference = integrate(cfg.system, y0, 1.0, 1, substeps=1600).states[:, -1]
    errs = []
    for substeps in (50, 100):
        end = integrate(cfg.system, y0, 1.0, 1, substeps=substeps).states[:, -1]
        errs.append(np.linalg.norm(end - reference))
    return float(np.log2(errs[0] / errs[1]))
