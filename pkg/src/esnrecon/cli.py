"""Experiment runner: generates reference data, measures derivative accuracy
of the two output-derivative schemes, reconstructs hidden states, and
calibrates the Lyapunov time. Every command writes CSV artifacts (plus
rendered figures unless disabled) into the output directory.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import figures as figs
from .config import (STATE_NAMES, ExperimentConfig, config_hash, load_config,
                     with_overrides)
from .metrics import MetricsReport, compare_histograms, nrmse, squared_error_series
from .ode import StateSplit, Trajectory, estimate_lyapunov, exact_input_derivative, integrate, rhs
from .reservoir import build_weights, dump_weights, fe_output_derivative, readout, run_teacher_forced
from .training import TrainResult, init_output_matrix, train_hidden_rows

METRICS_HEADER = ("metric", "variable", "set", "reservoir_size", "scheme", "value")
HISTOGRAM_HEADER = ("variable", "set", "bin_left", "bin_right", "density")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path: str, header, rows, cfg: ExperimentConfig, seed) -> None:
    """CSV with a provenance comment line (config hash + seed) above the header."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash(cfg)} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def make_trajectory(cfg: ExperimentConfig, n_samples: int) -> Trajectory:
    """Reference data: integrate onto the attractor, then record n_samples."""
    return integrate(cfg.system, cfg.y0, cfg.dt, n_steps=n_samples - 1,
                     substeps=cfg.substeps, discard_steps=cfg.discard_steps)


def cmd_generate(cfg: ExperimentConfig) -> int:
    """Write the washout + train + test trajectory with exact derivatives."""
    n_samples = cfg.washout + cfg.n_train + cfg.n_test + 1
    traj = make_trajectory(cfg, n_samples)

    path = os.path.join(cfg.out_dir, "trajectory.csv")
    header = ["t"] + list(STATE_NAMES) + [f"d{name}" for name in STATE_NAMES]
    rows = np.column_stack([traj.t, traj.states.T, traj.derivs.T])
    _write_csv(path, header, rows, cfg, seed="-")
    print(f"wrote {n_samples} samples (dt={traj.dt:.12g}) to {path}")

    if cfg.figures:
        fig_path = os.path.join(cfg.out_dir, "figures", "trajectory.png")
        figs.save_trajectory(fig_path, traj.t, traj.states, STATE_NAMES)
        print(f"wrote {fig_path}")
    return 0


def _derivative_cell(cfg: ExperimentConfig, traj: Trajectory, n_r: int, seed: int):
    """Ridge-train a full-state network and score both derivative schemes."""
    split = StateSplit(observed_indices=(0, 1, 2))
    wash, n_t = cfg.washout, cfg.n_train
    x = traj.states[:, :wash + n_t]
    xdot = traj.derivs[:, :wash + n_t]
    targets = traj.states[:, wash + 1:wash + n_t + 1]

    hp = cfg.hyper_params(n_r, seed)
    weights = build_weights(hp, n_x=3)
    run = run_teacher_forced(weights, x, xdot, wash)
    part = init_output_matrix(run, targets, split, hp, cfg.train_config)
    w_out = part.full

    yhat = readout(w_out, run.aug_states)
    ydot_exact = readout(w_out, run.aug_tangents)
    ydot_fe = fe_output_derivative(yhat, traj.dt)
    f_yhat = rhs(yhat, cfg.system)

    err_exact = squared_error_series(ydot_exact, f_yhat)
    err_fe = squared_error_series(ydot_fe, f_yhat[:, :-1])
    err_output = squared_error_series(yhat, targets)
    return err_fe, err_exact, err_output


def cmd_derivative_accuracy(cfg: ExperimentConfig) -> int:
    """Compare the exact and forward-difference output-derivative errors
    across reservoir sizes on the fully observed system."""
    n_samples = cfg.washout + cfg.n_train + 1
    traj = make_trajectory(cfg, n_samples)
    t_rec = traj.t[cfg.washout + 1:]

    per_size = {}
    first_cell_series = None
    for seed in cfg.seeds:
        mean_rows = []
        series_rows = []
        for n_r in cfg.sizes:
            err_fe, err_exact, err_output = _derivative_cell(cfg, traj, n_r, seed)
            means = {"fe": float(np.mean(err_fe)),
                     "exact": float(np.mean(err_exact)),
                     "output": float(np.mean(err_output))}
            per_size.setdefault(n_r, []).append(means)
            mean_rows.append(("mean_sq_deriv_err", "all", "train", n_r, "fe", means["fe"]))
            mean_rows.append(("mean_sq_deriv_err", "all", "train", n_r, "exact", means["exact"]))
            mean_rows.append(("mean_sq_output_err", "all", "train", n_r, "-", means["output"]))
            for j in range(err_fe.size):
                series_rows.append((n_r, j, t_rec[j], err_fe[j], err_exact[j], err_output[j]))
            if first_cell_series is None:
                first_cell_series = (err_fe, err_exact, err_output)
            print(f"n_r={n_r} seed={seed}: deriv err fe={means['fe']:.3e} "
                  f"exact={means['exact']:.3e} output err={means['output']:.3e}")

        suffix = "" if len(cfg.seeds) == 1 else f"_seed{seed}"
        _write_csv(os.path.join(cfg.out_dir, f"derivative_accuracy{suffix}.csv"),
                   METRICS_HEADER, mean_rows, cfg, seed)
        _write_csv(os.path.join(cfg.out_dir, f"derivative_error_series{suffix}.csv"),
                   ("reservoir_size", "step", "t", "sq_err_fe", "sq_err_exact", "sq_err_output"),
                   series_rows, cfg, seed)

    if cfg.figures:
        sizes = list(cfg.sizes)
        seed_mean = {key: [float(np.mean([m[key] for m in per_size[n]])) for n in sizes]
                     for key in ("fe", "exact", "output")}
        figs.save_derivative_accuracy(
            os.path.join(cfg.out_dir, "figures", "derivative_accuracy.png"),
            sizes, seed_mean["fe"], seed_mean["exact"], seed_mean["output"])
        err_fe, err_exact, err_output = first_cell_series
        figs.save_error_series(
            os.path.join(cfg.out_dir, "figures", "derivative_error_series.png"),
            t_rec[:err_fe.size], {"forward difference": err_fe,
                                  "exact tangent": err_exact[:err_fe.size],
                                  "output": err_output[:err_fe.size]},
            cfg.sizes[0])
    return 0


@dataclass
class ReconstructionCell:
    """Trained network plus its reconstruction scores for one grid cell."""

    n_r: int
    seed: int
    scheme: str
    names: list[str]
    t_out: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)       # hidden truth, (n_h, n_train+n_test)
    estimates: np.ndarray = field(repr=False)   # hidden readout, same shape
    n_train: int = 0
    train_result: TrainResult | None = None
    report: MetricsReport | None = None
    metric_rows: list = field(default_factory=list)
    weights: object = None

    @property
    def histograms(self):
        return self.report.histograms


def reconstruct_cell(cfg: ExperimentConfig, traj: Trajectory, n_r: int,
                     seed: int, scheme: str) -> ReconstructionCell:
    """Train one network and score its hidden-state reconstruction."""
    split = cfg.split
    wash, n_train, n_test = cfg.washout, cfg.n_train, cfg.n_test
    n_cols = n_train + n_test

    x_all = split.observed(traj.states)[:, :wash + n_cols]
    xdot_all = exact_input_derivative(traj, split)[:, :wash + n_cols]
    hp = cfg.hyper_params(n_r, seed)

    weights = build_weights(hp, n_x=split.n_observed)
    run_full = run_teacher_forced(weights, x_all, xdot_all, wash)
    run_train = run_full.sliced(0, n_train)

    x_targets = split.observed(traj.states)[:, wash + 1:wash + n_train + 1]
    part0 = init_output_matrix(run_train, x_targets, split, hp, cfg.train_config)
    result = train_hidden_rows(part0, run_train, cfg.system, cfg.train_config,
                               split, scheme=scheme, dt=traj.dt)
    weights.w_out = result.partition.full

    # outputs at run column j predict sample wash + j + 1
    estimates = readout(weights.w_out, run_full.aug_states)[split.n_observed:]
    truth = split.hidden(traj.states)[:, wash + 1:wash + n_cols + 1]
    t_out = traj.t[wash + 1:wash + n_cols + 1]

    report = MetricsReport()
    report.mean_losses["physics_initial"] = float(result.history[0, 2])
    report.mean_losses["physics_final"] = result.best_loss
    rows = []
    names = [STATE_NAMES[i] for i in split.hidden_indices]
    for k, name in enumerate(names):
        for dataset, sl in (("train", slice(0, n_train)), ("test", slice(n_train, n_cols))):
            score = nrmse(estimates[k, sl], truth[k, sl])
            scores = report.nrmse_train if dataset == "train" else report.nrmse_test
            scores[name] = score
            rows.append(("nrmse", name, dataset, n_r, scheme, score))
            hist = compare_histograms(name, dataset, truth[k, sl], estimates[k, sl],
                                      cfg.hist_bins)
            report.histograms.append(hist)
            rows.append(("pdf_l1", name, dataset, n_r, scheme, hist.l1_distance))
    rows.append(("physics_loss_initial", "all", "train", n_r, scheme,
                 report.mean_losses["physics_initial"]))
    rows.append(("physics_loss_final", "all", "train", n_r, scheme,
                 report.mean_losses["physics_final"]))
    rows.append(("train_steps", "all", "train", n_r, scheme, result.history.shape[0]))

    return ReconstructionCell(n_r=n_r, seed=seed, scheme=scheme, names=names,
                              t_out=t_out, truth=truth, estimates=estimates,
                              n_train=n_train, train_result=result,
                              report=report, metric_rows=rows, weights=weights)


def _write_reconstruct_cell(cfg: ExperimentConfig, cell: ReconstructionCell) -> None:
    cell_dir = os.path.join(cfg.out_dir, "reconstruct", cfg.testcase,
                            f"nr{cell.n_r}_seed{cell.seed}_{cell.scheme}")
    _write_csv(os.path.join(cell_dir, "metrics.csv"), METRICS_HEADER,
               cell.metric_rows, cfg, cell.seed)

    hist_rows = []
    for hist in cell.histograms:
        for tag, dens in (("truth", hist.truth_density), ("recon", hist.estimate_density)):
            for b in range(dens.size):
                hist_rows.append((f"{hist.variable}_{tag}", hist.dataset,
                                  hist.edges[b], hist.edges[b + 1], dens[b]))
    _write_csv(os.path.join(cell_dir, "histograms.csv"), HISTOGRAM_HEADER,
               hist_rows, cfg, cell.seed)

    series_header = ["set", "t"]
    for name in cell.names:
        series_header += [f"{name}_truth", f"{name}_recon"]
    series_rows = []
    n_cols = cell.truth.shape[1]
    for j in range(n_cols):
        row = ["train" if j < cell.n_train else "test", cell.t_out[j]]
        for k in range(len(cell.names)):
            row += [cell.truth[k, j], cell.estimates[k, j]]
        series_rows.append(row)
    _write_csv(os.path.join(cell_dir, "series.csv"), series_header, series_rows,
               cfg, cell.seed)

    _write_csv(os.path.join(cell_dir, "loss_history.csv"), ("step", "lr", "loss"),
               cell.train_result.history, cfg, cell.seed)
    if cfg.dump_weights:
        dump_weights(cell.weights, cell_dir)

    if cell.train_result.stop_reason == "max_steps":
        print(f"warning: nr{cell.n_r}_seed{cell.seed}_{cell.scheme}: training hit "
              "max_steps before the learning-rate floor", file=sys.stderr)


def _reconstruct_cell_worker(args):
    cfg, n_r, seed, scheme = args
    n_samples = cfg.washout + cfg.n_train + cfg.n_test + 1
    traj = make_trajectory(cfg, n_samples)
    cell = reconstruct_cell(cfg, traj, n_r, seed, scheme)
    _write_reconstruct_cell(cfg, cell)
    return cell


def cmd_reconstruct(cfg: ExperimentConfig) -> int:
    """Full hidden-state reconstruction over the sizes x seeds x schemes grid."""
    split = cfg.split
    if split.n_hidden == 0:
        raise ValueError("reconstruct needs a testcase with at least one hidden component")

    grid = [(n_r, seed, scheme) for n_r in cfg.sizes for seed in cfg.seeds
            for scheme in cfg.schemes]
    if cfg.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            cells = list(pool.map(_reconstruct_cell_worker,
                                  [(cfg,) + key for key in grid]))
    else:
        n_samples = cfg.washout + cfg.n_train + cfg.n_test + 1
        traj = make_trajectory(cfg, n_samples)
        cells = []
        for n_r, seed, scheme in grid:
            cell = reconstruct_cell(cfg, traj, n_r, seed, scheme)
            _write_reconstruct_cell(cfg, cell)
            cells.append(cell)
            for row in cell.metric_rows:
                if row[0] == "nrmse":
                    print(f"n_r={row[3]} seed={seed} scheme={row[4]}: "
                          f"nrmse[{row[1]},{row[2]}]={row[5]:.4g}")

    all_rows = [row for cell in cells for row in cell.metric_rows]
    showcase = next((c for c in cells
                     if c.scheme == cfg.schemes[0] and c.seed == cfg.seeds[0]
                     and c.n_r == max(cfg.sizes)), None)

    # aggregate: seed mean per (metric, variable, set, size, scheme)
    grouped = {}
    for metric, var, dataset, n_r, scheme, value in all_rows:
        grouped.setdefault((metric, var, dataset, n_r, scheme), []).append(value)
    agg_rows = [key + (float(np.mean(vals)),) for key, vals in grouped.items()]
    _write_csv(os.path.join(cfg.out_dir, "reconstruct_metrics.csv"),
               METRICS_HEADER, agg_rows, cfg,
               seed=";".join(str(s) for s in cfg.seeds))

    bad = [r for r in agg_rows if not np.isfinite(r[-1])]
    if bad:
        print(f"error: {len(bad)} non-finite metric values", file=sys.stderr)
        return 1

    if cfg.figures:
        fig_dir = os.path.join(cfg.out_dir, "figures")
        nrmse_curves = {}
        for metric, var, dataset, n_r, scheme, value in agg_rows:
            if metric == "nrmse":
                nrmse_curves.setdefault((var, dataset, scheme), {})[n_r] = value
        figs.save_nrmse_vs_size(os.path.join(fig_dir, f"nrmse_vs_size_{cfg.testcase}.png"),
                                sorted(cfg.sizes), nrmse_curves)
        if showcase is not None:
            figs.save_reconstruction_series(
                os.path.join(fig_dir, f"series_{cfg.testcase}.png"),
                showcase.t_out, showcase.truth, showcase.estimates,
                showcase.names, window=min(2000, cfg.n_train))
            figs.save_pdf_comparison(
                os.path.join(fig_dir, f"pdf_{cfg.testcase}.png"), showcase.histograms)
    return 0


def cmd_lyapunov(cfg: ExperimentConfig) -> int:
    """Estimate the leading Lyapunov exponent and the implied sampling step."""
    est = estimate_lyapunov(cfg.system)
    print(f"lyapunov_exponent = {est.value:.6f}")
    rows = [("lyapunov_exponent", est.value)]
    if est.value > 0:
        print(f"lyapunov_time = {1.0 / est.value:.6f}")
        print(f"lt_scaled_dt = {cfg.base_step / est.value:.12g}")
        rows.append(("lyapunov_time", 1.0 / est.value))
        rows.append(("lt_scaled_dt", cfg.base_step / est.value))
    else:
        print("lyapunov_time = n/a (non-positive exponent)")
    _write_csv(os.path.join(cfg.out_dir, "lyapunov.csv"), ("metric", "value"),
               rows, cfg, seed="-")
    if cfg.figures:
        figs.save_lyapunov(os.path.join(cfg.out_dir, "figures", "lyapunov.png"),
                           est.history)
    if not est.converged:
        print("warning: running estimate did not settle; increase the run length",
              file=sys.stderr)
        return 2
    return 0


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes = {}
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.sizes is not None:
        changes["sizes"] = tuple(int(tok) for tok in args.sizes.replace(",", " ").split())
    if args.testcase is not None:
        changes["testcase"] = args.testcase
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    if args.dt_mode is not None:
        changes["dt_mode"] = args.dt_mode
    if args.no_figures:
        changes["figures"] = False
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "dump_weights", False):
        changes["dump_weights"] = True
    return with_overrides(cfg, **changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key-value config file")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="single network seed")
    common.add_argument("--sizes", help="comma-separated reservoir sizes")
    common.add_argument("--testcase", choices=["full", "i", "ii", "iii"],
                        help="observed/hidden split")
    common.add_argument("--scheme", choices=["exact", "fe", "both"],
                        help="output-derivative scheme(s)")
    common.add_argument("--dt-mode", dest="dt_mode", choices=["lt", "raw"],
                        help="sampling step: Lyapunov-time scaled or raw")
    common.add_argument("--no-figures", action="store_true",
                        help="skip rendering figures")
    common.add_argument("--jobs", type=int, help="parallel grid cells")

    parser = argparse.ArgumentParser(
        prog="esnrecon",
        description="Hidden-state reconstruction with a physics-constrained "
                    "echo state network")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common],
                   help="write the reference trajectory CSV")
    sub.add_parser("derivative-accuracy", parents=[common],
                   help="score exact vs forward-difference output derivatives")
    rec = sub.add_parser("reconstruct", parents=[common],
                         help="train networks and reconstruct hidden states")
    rec.add_argument("--dump-weights", action="store_true",
                     help="also write w_in/w/w_out CSV dumps per cell")
    sub.add_parser("lyapunov", parents=[common],
                   help="estimate the leading Lyapunov exponent")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "derivative-accuracy": cmd_derivative_accuracy,
    "reconstruct": cmd_reconstruct,
    "lyapunov": cmd_lyapunov,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
