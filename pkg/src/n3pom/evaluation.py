"""Coefficient-function accuracy, monotonicity audits and the synthetic benchmark."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import N3pomModel, eval_b, eval_ccp
from .datagen import SyntheticSpec, simulate, true_coefficients
from .pipeline import ModelConfig, discrete_baseline, train_model
from .trainer import TrainConfig

log = logging.getLogger(__name__)

VARIANTS = ("continuous", "perturbed", "rounded")
VIOLATION_TOL = 1e-10


def evaluation_grid(j_max: float, step: float = 0.05) -> np.ndarray:
    if not step > 0:
        raise ValueError("grid step must be positive")
    n = int(round((j_max - 1.0) / step))
    return 1.0 + step * np.arange(n + 1)


def grid_mse(est, truth, grid) -> np.ndarray:
    """Per-coordinate mean squared difference of two coefficient functions.

    ``est`` and ``truth`` map an array of ``u`` to an ``(n, d)`` array.
    """
    grid = np.asarray(grid, dtype=float)
    diff = np.atleast_2d(est(grid)) - np.atleast_2d(truth(grid))
    return np.mean(diff**2, axis=0)


def aggregate_replicates(values) -> tuple[float, float]:
    """Median of all values and the sample sd after dropping one min and one max."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 3:
        raise ValueError("need at least three replicates for the trimmed sd")
    kept = v[1:-1]
    sd = float(np.std(kept, ddof=1)) if kept.size > 1 else 0.0
    return float(np.median(v)), sd


@dataclass
class AuditReport:
    n_samples: int
    u_step: float
    n_violations: int
    worst_difference: float
    min_differences: list = field(repr=False, default_factory=list)

    def to_json(self) -> str:
        doc = asdict(self)
        doc.pop("min_differences")
        return json.dumps(doc)


def audit_monotonicity(model: N3pomModel, x_samples, u_step: float = 0.01) -> AuditReport:
    """Scan CCP differences along a ``u`` grid for each covariate row."""
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    n = int(np.floor((model.j_max - 1.0) / u_step + 1e-9))
    grid = np.append(1.0 + u_step * np.arange(n + 1), model.j_max)
    grid = np.unique(np.clip(grid, 1.0, model.j_max))
    worst = np.empty(xs.shape[0])
    for i, x in enumerate(xs):
        ccp = eval_ccp(model, grid, np.broadcast_to(x, (grid.size, x.size)))
        worst[i] = np.min(np.diff(ccp))
    return AuditReport(
        n_samples=xs.shape[0],
        u_step=u_step,
        n_violations=int(np.sum(worst < -VIOLATION_TOL)),
        worst_difference=float(worst.min()),
        min_differences=worst.tolist(),
    )


def model_coefficients(model: N3pomModel):
    return lambda u: eval_b(model.net, u)


def truth_coefficients(spec: SyntheticSpec):
    return lambda u: true_coefficients(u, spec.m1, spec.m2)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


@dataclass
class MseReport:
    method: str
    grid_step: float
    mse: np.ndarray  # (replicates, d)

    def summary(self):
        """(median, trimmed sd) per coordinate; sd is NaN with < 3 replicates."""
        out = []
        for col in self.mse.T:
            if col.size >= 3:
                out.append(aggregate_replicates(col))
            else:
                out.append((float(np.median(col)), float("nan")))
        return out

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "grid": {"start": 1.0, "step": self.grid_step},
            "mse": self.mse.tolist(),
            "summary": [{"median": m, "trimmed_sd": s} for m, s in self.summary()],
        }


def _replicate(args):
    spec, rep, variants, cfg, mcfg, grid_step, baselines = args
    rspec = replace(spec, seed=spec.seed + rep)
    data = simulate(rspec)
    grid = evaluation_grid(spec.j_max, grid_step)
    truth = truth_coefficients(spec)
    base = data.dataset("continuous")
    discrete = discrete_baseline(base, mcfg)
    out = {}
    if baselines:
        out["npom_discrete"] = grid_mse(discrete.coefficient_curve, truth, grid)
        pom = discrete_baseline(base, mcfg, proportional=True)
        out["pom_discrete"] = grid_mse(pom.coefficient_curve, truth, grid)
    for variant in variants:
        rcfg = replace(cfg, seed=cfg.seed + rep)
        model, _ = train_model(data.dataset(variant), mcfg, rcfg, discrete=discrete)
        out[variant] = grid_mse(model_coefficients(model), truth, grid)
        log.info("replicate %d %s mse %s", rep, variant, out[variant])
    return out


def run_benchmark(
    spec: SyntheticSpec,
    replicates: int = 20,
    variants=VARIANTS,
    cfg: TrainConfig | None = None,
    mcfg: ModelConfig | None = None,
    grid_step: float = 0.05,
    jobs: int = 1,
    baselines: bool = True,
) -> dict[str, MseReport]:
    """Grid MSE of the fitted coefficient functions over simulated replicates.

    Replicate ``r`` simulates with ``spec.seed + r`` and trains with
    ``cfg.seed + r``.  Results are merged in replicate order.
    """
    cfg = cfg or TrainConfig()
    mcfg = mcfg or ModelConfig()
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected {VARIANTS}")
    tasks = [(spec, r, tuple(variants), cfg, mcfg, grid_step, baselines) for r in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate, tasks))
    else:
        results = [_replicate(t) for t in tasks]
    methods = list(variants) + (["npom_discrete", "pom_discrete"] if baselines else [])
    return {
        m: MseReport(m, grid_step, np.array([res[m] for res in results])) for m in methods
    }


def format_table(reports: dict[str, MseReport]) -> str:
    d = next(iter(reports.values())).mse.shape[1]
    head = f"{'method':<16}" + "".join(f"{'MSE(b' + str(k + 1) + ')':>22}" for k in range(d))
    lines = [head, "-" * len(head)]
    for name, rep in reports.items():
        cells = "".join(f"{m:>12.3f} ({s:6.3f})  " for m, s in rep.summary())
        lines.append(f"{name:<16}{cells}")
    return "\n".join(lines)


def write_reports(reports: dict[str, MseReport], csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            d = next(iter(reports.values())).mse.shape[1]
            w.writerow(["method", "replicate"] + [f"mse_b{k + 1}" for k in range(d)])
            for name, rep in reports.items():
                for r, row in enumerate(rep.mse):
                    w.writerow([name, r] + [repr(float(v)) for v in row])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump({k: v.to_dict() for k, v in reports.items()}, fh, indent=1)
            fh.write("\n")
