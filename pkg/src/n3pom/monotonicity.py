"""Sufficient condition for monotonicity in ``u`` and the rescaling projection.

If the smallest intercept slope dominates
``eta * sup|rho'| * sqrt(sum_k (sum_l |w2_kl w1_kl|)^2)`` then ``f_u(x)`` is
non-decreasing in ``u`` for every ``x`` with ``||x||_2 <= eta``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import N3pomModel

TOL = 1e-12


@dataclass(frozen=True)
class MonotonicityReport:
    lhs: float
    rhs: float
    satisfied: bool
    c: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def weight_bound(model: N3pomModel) -> float:
    """Right-hand side of the sufficient condition."""
    net = model.net
    per_cov = np.sum(np.abs(net.w2 * net.w1), axis=1)
    return model.eta * net.slope_bound * float(np.sqrt(np.sum(per_cov**2)))


def check_condition(model: N3pomModel) -> MonotonicityReport:
    lhs = float(np.min(model.intercept.slopes))
    rhs = weight_bound(model)
    c = 1.0 if rhs == 0.0 else min(1.0, lhs / rhs)
    return MonotonicityReport(lhs=lhs, rhs=rhs, satisfied=lhs >= rhs - TOL, c=c)


def project(model: N3pomModel) -> MonotonicityReport:
    """Scale ``w1`` and ``w2`` in place by ``sqrt(c)``.

    Returns the report computed *before* scaling, so ``report.c`` is the
    factor that was applied.
    """
    report = check_condition(model)
    if report.c < 1.0:
        s = math.sqrt(report.c)
        model.net.w1 *= s
        model.net.w2 *= s
    return report


def projected(model: N3pomModel) -> N3pomModel:
    """Projected copy; the input is left untouched."""
    out = model.copy()
    project(out)
    return out
