"""Synthetic data, response discretisation/perturbation and CSV ingestion."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import logit
from .errors import ConfigError, DataError

COVARIATE_LAWS = ("disk_uniform", "beta_half")

# (m1, m2) pairs for the synthetic coefficient functions
SETTINGS = {
    "opposite": (0.05, -0.05),
    "same": (0.05, 0.05),
    "b2-const": (0.05, 0.0),
    "both-const": (0.0, 0.0),
}


@dataclass
class SyntheticSpec:
    n: int = 1000
    j_max: float = 7.0
    m1: float = 0.05
    m2: float = -0.05
    covariate_law: str = "disk_uniform"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if not self.j_max > 1:
            raise ConfigError("J must exceed 1")
        if self.covariate_law not in COVARIATE_LAWS:
            raise ConfigError(
                f"unknown covariate law {self.covariate_law!r}; expected one of {COVARIATE_LAWS}"
            )

    @classmethod
    def from_setting(cls, name: str, **kw) -> "SyntheticSpec":
        try:
            m1, m2 = SETTINGS[name]
        except KeyError:
            raise ConfigError(
                f"unknown setting {name!r}; valid settings: {', '.join(SETTINGS)}"
            ) from None
        return cls(m1=m1, m2=m2, **kw)


def true_intercept(u):
    return 2.0 * np.asarray(u, dtype=float) - 9.0


def true_coefficients(u, m1: float, m2: float) -> np.ndarray:
    """``b_*(u) = (-1 + m1 u^2, 1 + m2 u^2)``, shape ``(..., 2)``."""
    u2 = np.asarray(u, dtype=float) ** 2
    return np.stack((-1.0 + m1 * u2, 1.0 + m2 * u2), axis=-1)


def true_logit(u, x, m1, m2):
    x = np.asarray(x, dtype=float)
    return true_intercept(u) + np.sum(true_coefficients(u, m1, m2) * x, axis=-1)


@dataclass
class Dataset:
    x: np.ndarray
    h: np.ndarray
    j_max: float
    # h_scaled = offset + scale * h_raw
    rescale: tuple = (0.0, 1.0)
    # per-column (mean, sd); empty when covariates were not standardised
    standardize: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.h = np.asarray(self.h, dtype=float)
        if self.x.shape[0] != self.h.size:
            raise DataError(f"{self.x.shape[0]} covariate rows but {self.h.size} responses")
        if self.h.size == 0:
            raise DataError("empty dataset")
        if np.any((self.h < 1) | (self.h > self.j_max)):
            raise DataError(f"responses must lie in [1, {self.j_max}]")
        if not self.rescale[1] > 0:
            raise DataError("rescale factor must be positive")
        if not self.names:
            self.names = [f"x{k + 1}" for k in range(self.x.shape[1])]

    @property
    def n(self) -> int:
        return self.h.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def with_response(self, h) -> "Dataset":
        return Dataset(self.x, h, self.j_max, self.rescale, self.standardize, self.names)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.h[idx], self.j_max, self.rescale, self.standardize, self.names)

    def raw_response(self, h=None) -> np.ndarray:
        h = self.h if h is None else np.asarray(h, dtype=float)
        offset, scale = self.rescale
        return (h - offset) / scale


def make_rng(seed: int) -> np.random.Generator:
    # counter-based bit generator: streams are reproducible and jumpable
    return np.random.Generator(np.random.Philox(seed))


def sample_covariates(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    rng = make_rng(spec.seed) if rng is None else rng
    if spec.covariate_law == "disk_uniform":
        r = rng.uniform(0.0, 1.0, spec.n)
        theta = rng.uniform(0.0, 2 * math.pi, spec.n)
        return np.column_stack((r * np.cos(theta), r * np.sin(theta)))
    return rng.beta(0.5, 0.5, size=(spec.n, 2))


def solve_response(target, x, m1, m2, j_max, tol=1e-10, max_doublings=200):
    """Root ``h`` of ``f_*(h; x) = target`` by bisection, before truncation.

    ``target`` has shape ``(n,)`` and ``x`` shape ``(n, 2)``.
    """
    target = np.asarray(target, dtype=float)
    x = np.atleast_2d(x)
    lo = np.full(target.shape, 1.0 - 2.0)
    hi = np.full(target.shape, j_max + 2.0)
    width = 2.0
    for _ in range(max_doublings):
        low_bad = true_logit(lo, x, m1, m2) > target
        high_bad = true_logit(hi, x, m1, m2) < target
        if not (low_bad.any() or high_bad.any()):
            break
        width *= 2.0
        lo = np.where(low_bad, 1.0 - width, lo)
        hi = np.where(high_bad, j_max + width, hi)
    else:
        raise ArithmeticError("could not bracket the response root")
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = true_logit(mid, x, m1, m2) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def sample_response(x, m1, m2, j_max, rng, uniforms=None):
    """Inverse-CDF draw of ``H | x`` truncated to ``[1, J]``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if uniforms is None:
        uniforms = rng.uniform(0.0, 1.0, x.shape[0])
    target = logit(np.asarray(uniforms, dtype=float))
    # f_* is monotone on [1, J] only; outside it the quadratic terms can turn
    # it around, so targets beyond the end values are settled by the clamp
    low = target <= true_logit(1.0, x, m1, m2)
    high = target >= true_logit(j_max, x, m1, m2)
    h = np.where(low, 1.0, j_max)
    inner = ~(low | high)
    if inner.any():
        h[inner] = solve_response(target[inner], x[inner], m1, m2, j_max)
    return np.clip(h, 1.0, j_max)


def discretize(h, j_max):
    """Nearest integer in ``{1..J}``; halves round up."""
    g = np.floor(np.asarray(h, dtype=float) + 0.5)
    return np.clip(g, 1, math.floor(j_max))


def perturb(g, j_max, rng):
    """``g + e`` with ``e ~ U[-1/2, 1/2]``, truncated to ``[1, J]``."""
    g = np.asarray(g, dtype=float)
    e = rng.uniform(-0.5, 0.5, g.shape)
    return np.clip(g + e, 1.0, j_max)


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    x: np.ndarray
    h: np.ndarray
    h_rounded: np.ndarray
    h_perturbed: np.ndarray

    def dataset(self, variant: str = "continuous") -> Dataset:
        h = {
            "continuous": self.h,
            "rounded": self.h_rounded,
            "perturbed": self.h_perturbed,
        }[variant]
        return Dataset(self.x, h, self.spec.j_max)


def simulate(spec: SyntheticSpec) -> SyntheticData:
    """Covariates, continuous responses and both discretised variants.

    Independent Philox streams per stage keep each stage reproducible on its
    own.
    """
    ss = np.random.SeedSequence(spec.seed)
    cov_ss, resp_ss, pert_ss = ss.spawn(3)
    x = sample_covariates(spec, np.random.Generator(np.random.Philox(cov_ss)))
    h = sample_response(x, spec.m1, spec.m2, spec.j_max, np.random.Generator(np.random.Philox(resp_ss)))
    g = discretize(h, spec.j_max)
    hp = perturb(g, spec.j_max, np.random.Generator(np.random.Philox(pert_ss)))
    return SyntheticData(spec, x, h, g, hp)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_synthetic_csv(data: SyntheticData, path, manifest_path=None) -> None:
    path = Path(path)
    d = data.x.shape[1]
    header = [f"x{k + 1}" for k in range(d)] + ["h", "h_rounded", "h_perturbed"]
    cols = np.column_stack((data.x, data.h, data.h_rounded, data.h_perturbed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in cols:
            w.writerow([repr(float(v)) for v in row])
    if manifest_path is not None:
        Path(manifest_path).write_text(json.dumps({"spec": asdict(data.spec)}, indent=1) + "\n")


def read_manifest(path) -> SyntheticSpec:
    try:
        doc = json.loads(Path(path).read_text())
        return SyntheticSpec(**doc["spec"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"bad manifest {path}: {exc}") from exc


def read_table(path):
    """Header and float matrix of a comma-separated file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    body = [r for r in rows[1:] if r]
    out = np.empty((len(body), len(header)))
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} fields, expected {len(header)}")
        for j, cell in enumerate(r):
            try:
                out[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {i}, column {header[j]!r}"
                ) from None
    return header, out


def load_csv(
    path,
    response_column: str = "h",
    rescale: bool = False,
    standardize: bool = False,
    j_max: float | None = None,
    covariates: list | None = None,
) -> Dataset:
    """Load a dataset from CSV.

    With ``rescale`` the response is mapped affinely onto ``[1, J]``; without
    it ``J`` defaults to ``ceil(max h)``. Columns named ``h``, ``h_rounded``
    and ``h_perturbed`` other than the response are not used as covariates.
    """
    header, table = read_table(path)
    if response_column not in header:
        raise DataError(f"{path}: response column {response_column!r} not found in {header}")
    ridx = header.index(response_column)
    reserved = {"h", "h_rounded", "h_perturbed", response_column}
    if covariates is None:
        covariates = [c for c in header if c not in reserved]
    missing = [c for c in covariates if c not in header]
    if missing:
        raise DataError(f"{path}: covariate columns {missing} not found")
    x = table[:, [header.index(c) for c in covariates]]
    h = table[:, ridx]
    if h.size == 0:
        raise DataError(f"{path}: no data rows")

    stats = []
    if standardize:
        mean = x.mean(axis=0)
        sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
        for name, s in zip(covariates, sd):
            if not s > 0:
                raise DataError(f"{path}: covariate column {name!r} is constant")
        x = (x - mean) / sd
        stats = [(float(m), float(s)) for m, s in zip(mean, sd)]

    if rescale:
        j_max = 10.0 if j_max is None else float(j_max)
        lo, hi = h.min(), h.max()
        if not hi > lo:
            raise DataError(f"{path}: response column {response_column!r} is constant")
        scale = (j_max - 1.0) / (hi - lo)
        offset = 1.0 - scale * lo
        if scale == 1.0 and offset == 0.0:
            h_scaled = h
        else:
            h_scaled = np.clip(offset + scale * h, 1.0, j_max)
        return Dataset(x, h_scaled, j_max, (float(offset), float(scale)), stats, list(covariates))

    if j_max is None:
        j_max = float(math.ceil(h.max()))
    bad = np.flatnonzero((h < 1) | (h > j_max))
    if bad.size:
        raise DataError(
            f"{path}: response {h[bad[0]]!r} at row {bad[0] + 2} outside [1, {j_max}]; use rescaling"
        )
    return Dataset(x, h, float(j_max), (0.0, 1.0), stats, list(covariates))
