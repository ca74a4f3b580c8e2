"""Spectral radius estimation, the recurrence/transience rule, and the
critical-case series probe."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .groups import DEFAULT_DEPTH_CAP, StepLaw, log_return_probabilities

__all__ = [
    "DegenerateLawError",
    "RhoEstimate",
    "Regime",
    "RegimeClassification",
    "SeriesVerdict",
    "Verdict",
    "estimate_rho",
    "classify",
    "series_condition",
]


class DegenerateLawError(ValueError):
    """The walk (almost) never returns to the identity."""


@dataclass
class RhoEstimate:
    estimate: float
    lower_bounds: np.ndarray  # running max of p^(2n)(e,e)^(1/2n), n = 1..N
    roots: np.ndarray  # raw p^(2n)(e,e)^(1/2n)
    fit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "lower_bounds": [float(x) for x in self.lower_bounds],
            "fit": dict(self.fit),
        }


def estimate_rho(law: StepLaw, n_max: int = 200, depth_cap: int = DEFAULT_DEPTH_CAP) -> RhoEstimate:
    """Estimate rho(P) = limsup p^(n)(e,e)^(1/n) from even-step return probabilities.

    The point estimate comes from the least-squares fit
    ``log p^(2n) ~ 2n log(rho) - lam log(n) + c`` over the upper three
    quarters of the available range; raw roots converge like n^(-lam/2n),
    far too slowly to be useful on their own.  The point estimate is clamped
    to ``[lower_bounds[-1], 1]``.
    """
    if n_max < 10:
        raise ValueError(f"n_max must be >= 10, got {n_max}")
    lp = log_return_probabilities(law, n_max, depth_cap)
    half = np.arange(1, n_max // 2 + 1)
    y = lp[2 * half]
    finite = np.isfinite(y)
    if finite.sum() < 3:
        raise DegenerateLawError(
            f"walk on {law.family} returns to the identity at fewer than 3 even times up to {n_max}"
        )
    with np.errstate(invalid="ignore"):
        roots = np.where(finite, np.exp(y / (2 * half)), 0.0)
    lower = np.maximum.accumulate(roots)

    n_lo = max(2, half[-1] // 4)
    sel = finite & (half >= n_lo)
    if sel.sum() < 3:
        sel = finite
    h = half[sel].astype(float)
    A = np.column_stack([2 * h, np.log(h), np.ones_like(h)])
    coef, *_ = np.linalg.lstsq(A, y[sel], rcond=None)
    resid = y[sel] - A @ coef
    rho_fit = float(math.exp(coef[0]))
    estimate = min(max(rho_fit, float(lower[-1])), 1.0)
    fit = {
        "slope": float(coef[0]),
        "rho_fit": rho_fit,
        "lam": float(-coef[1]),
        "intercept": float(coef[2]),
        "residual": float(np.sqrt(np.mean(resid**2))),
        "n_from": int(h[0]),
        "n_to": int(h[-1]),
        "clamped": estimate != rho_fit,
    }
    return RhoEstimate(estimate, lower, roots, fit)


class Regime(str, enum.Enum):
    TRANSIENT = "Transient"
    RECURRENT = "Recurrent"


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    m: float
    rho: float
    margin: float  # m - 1/rho
    near_boundary: bool = False

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "m": self.m,
            "rho": self.rho,
            "margin": self.margin,
            "near_boundary": self.near_boundary,
        }


def classify(m: float, rho: float, tolerance: float = 0.0) -> RegimeClassification:
    """Transient iff m <= 1/rho, decided by the sign of the rounded product m*rho - 1.

    Rounding never pushes (1/rho)*rho above 1, so m given as 1/rho lands on
    the transient side.  ``tolerance`` only sets the ``near_boundary`` flag;
    the verdict itself is never fuzzy.
    """
    if not m > 1:
        raise ValueError(f"mean offspring m must exceed 1, got {m}")
    if not 0 < rho <= 1:
        raise ValueError(f"spectral radius must lie in (0, 1], got {rho}")
    transient = float(m) * float(rho) <= 1.0
    margin = m - 1.0 / rho
    return RegimeClassification(
        Regime.TRANSIENT if transient else Regime.RECURRENT,
        float(m),
        float(rho),
        margin,
        abs(margin) <= tolerance,
    )


class Verdict(str, enum.Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class SeriesVerdict:
    verdict: Verdict
    partial_sum: float
    log_partial_sum: float
    n_max: int
    ratios: dict

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "partial_sum": self.partial_sum,
            "log_partial_sum": self.log_partial_sum,
            "n_max": self.n_max,
            "ratios": dict(self.ratios),
        }


def series_condition(
    law: StepLaw, m: float, n_max: int, delta: float = 0.1, depth_cap: int = DEFAULT_DEPTH_CAP
) -> SeriesVerdict:
    """Probe convergence of sum_n n p^(n)(e,e) m^n.

    Ratios a_(n+2)/a_n over even n in the last quartile decide: all below
    1-delta converges, all above 1+delta diverges, anything else is
    inconclusive.  The partial sum runs over every n <= n_max.
    """
    if not m > 1:
        raise ValueError(f"mean offspring m must exceed 1, got {m}")
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta}")
    lp = log_return_probabilities(law, n_max, depth_cap)
    n = np.arange(n_max + 1)
    with np.errstate(divide="ignore"):
        log_terms = np.log(n) + lp + n * math.log(m)
    log_terms[0] = -np.inf
    log_sum = float(logsumexp(log_terms)) if np.isfinite(log_terms).any() else -math.inf
    with np.errstate(over="ignore"):
        partial = float(math.exp(log_sum)) if log_sum < 709 else math.inf

    even = n[(n % 2 == 0) & (n >= 2) & (n >= 0.75 * n_max)]
    even = even[even + 2 <= n_max]
    lr = log_terms[even + 2] - log_terms[even]
    lr = lr[np.isfinite(lr)]
    if lr.size == 0:
        verdict = Verdict.INCONCLUSIVE
        stats = {"count": 0}
    else:
        r = np.exp(lr)
        if np.all(r < 1 - delta):
            verdict = Verdict.CONVERGES
        elif np.all(r > 1 + delta):
            verdict = Verdict.DIVERGES
        else:
            verdict = Verdict.INCONCLUSIVE
        stats = {"count": int(r.size), "min": float(r.min()), "max": float(r.max()), "last": float(r[-1])}
    return SeriesVerdict(verdict, partial, log_sum, n_max, stats)
