"""Experiment configuration: defaults, the flat key-value config file format,
and the config hash recorded in every CSV artifact.

Config files are plain text, one ``section.key = value`` per line, with
``#`` comments. Every key has a default reproducing the reference setup, so
an empty file is a valid config.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .ode import LorenzParams, StateSplit
from .reservoir import HyperParams
from .training import TrainConfig

TESTCASES = {
    "full": (0, 1, 2),
    "i": (0, 2),
    "ii": (0, 1),
    "iii": (0,),
}

STATE_NAMES = ("phi1", "phi2", "phi3")


@dataclass(frozen=True)
class ExperimentConfig:
    # system
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    rho: float = 28.0
    y0: tuple[float, ...] = (1.0, 1.0, 1.0)
    discard_steps: int = 1000
    substeps: int = 10
    # sampling
    dt_mode: str = "lt"        # "lt": step = base_step / lt_exponent; "raw": base_step
    base_step: float = 0.01
    lt_exponent: float = 0.906  # leading Lyapunov exponent used for the lt scaling
    n_train: int = 10000
    n_test: int = 10000
    washout: int = 100
    # split
    testcase: str = "i"        # full | i | ii | iii | custom
    observed: tuple[int, ...] = ()   # used when testcase = custom (0-based indices)
    # esn
    sizes: tuple[int, ...] = (100, 200, 400, 600, 800, 1000)
    seeds: tuple[int, ...] = (0,)
    sigma_in: float = 0.1
    b_in: float = 10.0
    avg_degree: float = 20.0
    spectral_radius: float = 0.9
    tikhonov: float = 1e-6
    # training
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
    # run
    scheme: str = "both"       # exact | fe | both
    hist_bins: int = 50
    out_dir: str = "out"
    figures: bool = True
    dump_weights: bool = False
    jobs: int = 1

    @property
    def dt(self) -> float:
        if self.dt_mode == "lt":
            return self.base_step / self.lt_exponent
        if self.dt_mode == "raw":
            return self.base_step
        raise ValueError(f"unknown dt_mode {self.dt_mode!r}")

    @property
    def system(self) -> LorenzParams:
        return LorenzParams(sigma=self.sigma, beta=self.beta, rho=self.rho)

    @property
    def split(self) -> StateSplit:
        if self.testcase == "custom":
            if not self.observed:
                raise ValueError("testcase 'custom' needs split.observed indices")
            return StateSplit(self.observed, 3)
        try:
            return StateSplit(TESTCASES[self.testcase], 3)
        except KeyError:
            raise ValueError(f"unknown testcase {self.testcase!r}") from None

    def hyper_params(self, n_reservoir: int, seed: int) -> HyperParams:
        return HyperParams(n_reservoir=n_reservoir, sigma_in=self.sigma_in,
                           b_in=self.b_in, avg_degree=self.avg_degree,
                           spectral_radius=self.spectral_radius,
                           tikhonov=self.tikhonov, seed=seed)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(initial_lr=self.initial_lr,
                           lr_decay_factor=self.lr_decay_factor,
                           plateau_patience=self.plateau_patience,
                           improvement_tol=self.improvement_tol,
                           min_lr=self.min_lr, max_steps=self.max_steps,
                           beta1=self.beta1, beta2=self.beta2,
                           epsilon=self.epsilon, hbar=self.hbar)

    @property
    def schemes(self) -> tuple[str, ...]:
        if self.scheme == "both":
            return ("exact", "fe")
        if self.scheme in ("exact", "fe"):
            return (self.scheme,)
        raise ValueError(f"unknown scheme {self.scheme!r}")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


# config-file key -> (attribute, parser)
SCHEMA = {
    "system.sigma": ("sigma", float),
    "system.beta": ("beta", float),
    "system.rho": ("rho", float),
    "system.y0": ("y0", _parse_float_tuple),
    "system.discard_steps": ("discard_steps", int),
    "system.substeps": ("substeps", int),
    "sampling.dt_mode": ("dt_mode", str),
    "sampling.base_step": ("base_step", float),
    "sampling.lt_exponent": ("lt_exponent", float),
    "sampling.n_train": ("n_train", int),
    "sampling.n_test": ("n_test", int),
    "sampling.washout": ("washout", int),
    "split.testcase": ("testcase", str),
    "split.observed": ("observed", _parse_int_tuple),
    "esn.sizes": ("sizes", _parse_int_tuple),
    "esn.seeds": ("seeds", _parse_int_tuple),
    "esn.sigma_in": ("sigma_in", float),
    "esn.b_in": ("b_in", float),
    "esn.avg_degree": ("avg_degree", float),
    "esn.spectral_radius": ("spectral_radius", float),
    "esn.tikhonov": ("tikhonov", float),
    "train.initial_lr": ("initial_lr", float),
    "train.lr_decay_factor": ("lr_decay_factor", float),
    "train.plateau_patience": ("plateau_patience", int),
    "train.improvement_tol": ("improvement_tol", float),
    "train.min_lr": ("min_lr", float),
    "train.max_steps": ("max_steps", int),
    "train.beta1": ("beta1", float),
    "train.beta2": ("beta2", float),
    "train.epsilon": ("epsilon", float),
    "train.hbar": ("hbar", float),
    "run.scheme": ("scheme", str),
    "run.hist_bins": ("hist_bins", int),
    "run.out_dir": ("out_dir", str),
    "run.figures": ("figures", _parse_bool),
    "run.dump_weights": ("dump_weights", _parse_bool),
    "run.jobs": ("jobs", int),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in SCHEMA.items()}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key-value format into a config, applying defaults."""
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        attr, parser = SCHEMA[key]
        try:
            overrides[attr] = parser(value)
        except ValueError as err:
            raise ValueError(f"line {lineno}: bad value for {key}: {err}") from None
    return ExperimentConfig(**overrides)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def canonical_text(cfg: ExperimentConfig) -> str:
    """Deterministic serialization of every config field (defaults included)."""
    lines = []
    for f in sorted(fields(cfg), key=lambda f: _ATTR_TO_KEY[f.name]):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            rendered = ",".join(repr(v) for v in value)
        else:
            rendered = repr(value)
        lines.append(f"{_ATTR_TO_KEY[f.name]} = {rendered}")
    return "\n".join(lines) + "\n"


# run plumbing that does not change any computed number
_HASH_EXCLUDED = ("run.out_dir", "run.figures", "run.jobs", "run.dump_weights")


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the experiment-defining fields (output plumbing excluded)."""
    lines = [line for line in canonical_text(cfg).splitlines()
             if line.split(" = ")[0] not in _HASH_EXCLUDED]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)
