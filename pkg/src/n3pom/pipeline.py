"""End-to-end fitting: discrete baseline, distillation, projection, training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baseline import DiscreteFit, fit_discrete, init_from_discrete, random_init
from .core import ACTIVATIONS, N3pomModel
from .datagen import Dataset, discretize
from .errors import ConfigError
from .monotonicity import projected
from .trainer import TrainConfig, TrainTrace, default_eta, fit

INIT_MODES = ("distill", "random")


@dataclass
class ModelConfig:
    n_knots: int = 24
    hidden: int = 50
    activation: str = "sigmoid"
    init: str = "distill"
    penalty: float = 1.0
    sharpness: float = 10.0
    w2_noise_scale: float = 1.0
    pseudo_count: float = 0.5

    def __post_init__(self):
        if self.init not in INIT_MODES:
            raise ConfigError(f"unknown init {self.init!r}; expected {INIT_MODES}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected {ACTIVATIONS}")
        # the closed-form distillation relies on rho(0) = 1/2 and rho(-T) ~ 0
        if self.init == "distill" and self.activation != "sigmoid":
            raise ConfigError("distillation init requires the sigmoid activation")
        if self.n_knots < 2:
            raise ConfigError("need at least two knots")
        if self.hidden < 1:
            raise ConfigError("need at least one hidden unit")


def discrete_baseline(data: Dataset, mcfg: ModelConfig, proportional=False) -> DiscreteFit:
    rounded = data.with_response(discretize(data.h, data.j_max))
    return fit_discrete(
        rounded, proportional=proportional, lam=mcfg.penalty, pseudo_count=mcfg.pseudo_count
    )


def initial_model(
    data: Dataset,
    mcfg: ModelConfig,
    eta: float,
    seed: int = 0,
    discrete: DiscreteFit | None = None,
) -> N3pomModel:
    """Unprojected starting model for :func:`n3pom.trainer.fit`."""
    knots = np.linspace(1.0, data.j_max, mcfg.n_knots)
    if mcfg.init == "random":
        return random_init(data, mcfg.hidden, knots, eta, seed, activation=mcfg.activation)
    if discrete is None:
        discrete = discrete_baseline(data, mcfg)
    return init_from_discrete(
        discrete,
        mcfg.hidden,
        knots,
        eta,
        sharpness=mcfg.sharpness,
        seed=seed,
        w2_noise_scale=mcfg.w2_noise_scale,
    )


def train_model(
    data: Dataset,
    mcfg: ModelConfig,
    cfg: TrainConfig,
    discrete: DiscreteFit | None = None,
    eta: float | None = None,
) -> tuple[N3pomModel, TrainTrace]:
    if eta is None:
        eta = default_eta(data.x, cfg.eta_margin)
    init = projected(initial_model(data, mcfg, eta, cfg.seed, discrete))
    return fit(data, init, cfg)
