"""Monotonicity-preserving stochastic training.

Each iteration takes one mini-batch gradient-ascent step on the weighted
log-likelihood and then rescales the network weights so that the
sufficient monotonicity condition holds again.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .core import N3pomModel, cell_index
from .datagen import Dataset
from .errors import ConfigError, DataError, DomainError, TrainingError
from .gradients import grad_loglik, loglik_terms
from .monotonicity import MonotonicityReport, project

log = logging.getLogger(__name__)

WEIGHT_MODES = ("uniform", "inv_sqrt_cell")

# learning-rate schedules: (decay, every)
LR_PRESETS = {"default": (0.95, 50), "slow": (0.97, 100)}


@dataclass
class TrainConfig:
    batch_size: int = 16
    iterations: int = 5000
    lr_init: float = 0.01
    lr_decay: float = 0.95
    lr_every: int = 50
    weight_mode: str = "inv_sqrt_cell"
    seed: int = 0
    eta_margin: float = 1e-2
    clip_norm: float = 1e3
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if not self.lr_init > 0:
            raise ConfigError("learning rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr decay must lie in (0, 1]")
        if self.lr_every < 1:
            raise ConfigError("lr_every must be positive")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"unknown weight mode {self.weight_mode!r}; expected {WEIGHT_MODES}")
        if not self.eta_margin > 0:
            raise ConfigError("eta margin must be positive")

    @classmethod
    def preset(cls, name: str, **kw) -> "TrainConfig":
        try:
            decay, every = LR_PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown schedule preset {name!r}; expected {list(LR_PRESETS)}") from None
        return cls(lr_decay=decay, lr_every=every, **kw)


def learning_rate(cfg: TrainConfig, t: int) -> float:
    return cfg.lr_init * cfg.lr_decay ** (t // cfg.lr_every)


@dataclass
class Checkpoint:
    iteration: int
    batch_loglik: float
    loglik: float
    c: float
    lr: float


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)

    def append(self, rec: Checkpoint) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "batch_loglik", "loglik", "c", "lr"])
            for r in self.records:
                w.writerow([r.iteration, repr(r.batch_loglik), repr(r.loglik), repr(r.c), repr(r.lr)])

    @classmethod
    def from_csv(cls, path) -> "TrainTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.append(
                    Checkpoint(
                        int(row["iteration"]),
                        float(row["batch_loglik"]),
                        float(row["loglik"]),
                        float(row["c"]),
                        float(row["lr"]),
                    )
                )
        return trace


def compute_zeta(h, knots, mode: str = "inv_sqrt_cell") -> np.ndarray:
    """Sample weights summing to one.

    ``inv_sqrt_cell`` gives each sample weight proportional to
    ``n_r ** -0.5`` where ``n_r`` counts responses in its knot cell.
    """
    h = np.asarray(h, dtype=float)
    if h.size == 0:
        raise DataError("cannot weight an empty dataset")
    if mode == "uniform":
        return np.full(h.size, 1.0 / h.size)
    if mode != "inv_sqrt_cell":
        raise ConfigError(f"unknown weight mode {mode!r}")
    knots = np.asarray(knots, dtype=float)
    cell = cell_index(knots, h)
    counts = np.bincount(cell, minlength=knots.size - 1)
    z = 1.0 / np.sqrt(counts[cell])
    return z / z.sum()


def minibatch_schedule(n: int, batch_size: int, iterations: int, seed) -> Iterator[np.ndarray]:
    """Index batches drawn without replacement from epoch-wise permutations.

    When fewer than ``batch_size`` unused indices remain, they start the next
    batch and a fresh permutation of all indices (minus those) fills it, so
    no index repeats within a batch.
    """
    if batch_size > n:
        raise ConfigError(f"batch size {batch_size} exceeds sample size {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pool = rng.permutation(n)
    pos = 0
    for _ in range(iterations):
        if pos + batch_size <= n:
            batch = pool[pos : pos + batch_size]
            pos += batch_size
        else:
            head = pool[pos:]
            pool = rng.permutation(n)
            if head.size:
                pool = np.concatenate((head, pool[~np.isin(pool, head)]))
            batch = pool[:batch_size]
            pos = batch_size
        yield batch


def full_loglik(model: N3pomModel, data: Dataset, zeta) -> float:
    return float(np.dot(zeta, loglik_terms(model, data.h, data.x)))


def default_eta(x, margin: float = 1e-2) -> float:
    return float(np.max(np.linalg.norm(np.atleast_2d(x), axis=1))) + margin


def fit(
    data: Dataset,
    model_init: N3pomModel,
    cfg: TrainConfig,
    callback: Callable[[int, N3pomModel, MonotonicityReport], None] | None = None,
) -> tuple[N3pomModel, TrainTrace]:
    """Train a copy of ``model_init``; the input model is not modified.

    The mini-batch gradient is rescaled by ``n / batch_size`` so that it is
    an unbiased estimate of the full weighted-likelihood gradient.
    ``callback(t, model, report)`` is invoked after every projection.
    """
    if data.dim != model_init.dim:
        raise ConfigError(f"data has {data.dim} covariates, model expects {model_init.dim}")
    if data.j_max != model_init.j_max:
        raise ConfigError(f"data J={data.j_max} but model J={model_init.j_max}")
    max_norm = float(np.max(np.linalg.norm(data.x, axis=1)))
    if not model_init.eta > max_norm:
        raise ConfigError(
            f"eta={model_init.eta:.6g} must exceed the largest covariate norm {max_norm:.6g}"
        )
    if np.any((data.h < 1) | (data.h > model_init.j_max)):
        raise DomainError("responses must lie in [1, J]")

    model = model_init.copy()
    report = project(model)
    zeta = compute_zeta(data.h, model.intercept.knots, cfg.weight_mode)
    trace = TrainTrace()
    ll0 = full_loglik(model, data, zeta)
    trace.append(Checkpoint(0, math.nan, ll0, report.c, learning_rate(cfg, 0)))
    if cfg.iterations == 0:
        return model, trace

    n, B = data.n, cfg.batch_size
    scale = n / B
    batches = minibatch_schedule(n, B, cfg.iterations, np.random.default_rng(cfg.seed))
    for t, idx in enumerate(batches):
        lr = learning_rate(cfg, t)
        try:
            g = grad_loglik(model, data.h[idx], data.x[idx], scale * zeta[idx]).ravel()
        except TrainingError as exc:
            raise TrainingError(f"iteration {t + 1}: {exc}") from None
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at iteration {t + 1}")
        gnorm = float(np.linalg.norm(g))
        if gnorm > cfg.clip_norm:
            g *= cfg.clip_norm / gnorm
        theta = model.param_vector() + lr * g
        model.set_param_vector(theta)
        report = project(model)
        if callback is not None:
            callback(t + 1, model, report)
        it = t + 1
        if it % cfg.checkpoint_every == 0 or it == cfg.iterations:
            bl = float(np.dot(zeta[idx], loglik_terms(model, data.h[idx], data.x[idx])) * scale)
            ll = full_loglik(model, data, zeta)
            trace.append(Checkpoint(it, bl, ll, report.c, lr))
            log.debug("iter %d loglik %.6f c %.4g lr %.3g", it, ll, report.c, lr)
    return model, trace
