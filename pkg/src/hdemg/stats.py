"""Channel-level statistics and the two-sample t-test used for grid comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError
from .signals import Recording

__all__ = [
    "ChannelStats",
    "TTestResult",
    "rms_per_channel",
    "overall_rms",
    "zscore_outliers",
    "two_sample_ttest",
    "regularized_incomplete_beta",
    "student_t_two_sided_p",
]


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Per-channel RMS values with standardized scores and an outlier mask."""

    rms: np.ndarray
    zscore: np.ndarray
    outlier: np.ndarray
    threshold: float


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    dof: float
    variant: str


def rms_per_channel(rec: Recording) -> np.ndarray:
    """Root-mean-square of every channel, in the recording's amplitude units.

    Masked-out channels are included; callers decide what to do with them.
    """
    if rec.num_samples < 1:
        raise InvalidInputError("recording has no samples")
    return np.sqrt(np.mean(np.square(rec.samples), axis=0))


def overall_rms(rec: Recording, use_mask: bool = True) -> float:
    """Mean of the per-channel RMS values over active channels."""
    rms = rms_per_channel(rec)
    if use_mask:
        if not rec.channel_mask.any():
            raise InvalidInputError("no active channels to average over")
        rms = rms[rec.channel_mask]
    return float(rms.mean())


def zscore_outliers(values, threshold: float = 3.0) -> ChannelStats:
    """Standardize ``values`` and flag entries with |z| > ``threshold``.

    Uses the sample (n-1) standard deviation. Raises
    :class:`DegenerateDataError` when all values are equal.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise InvalidInputError("need a 1-D vector with at least 2 values")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("values must be finite")
    std = v.std(ddof=1)
    if std == 0.0:
        raise DegenerateDataError("zero standard deviation; z-scores undefined")
    z = (v - v.mean()) / std
    return ChannelStats(rms=v, zscore=z, outlier=np.abs(z) > threshold,
                        threshold=float(threshold))


def _betacf(a: float, b: float, x: float, tol: float = 1e-12,
            max_iters: int = 300) -> float:
    # Continued fraction for the incomplete beta (modified Lentz method).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iters + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) evaluated by continued fraction, absolute accuracy ~1e-10."""
    if a <= 0 or b <= 0:
        raise InvalidInputError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # Use the symmetry relation where the continued fraction converges fastest.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    """Two-sided p-value of Student's t via the regularized incomplete beta."""
    if dof <= 0:
        raise InvalidInputError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    x = dof / (dof + t * t)
    return regularized_incomplete_beta(dof / 2.0, 0.5, x)


def two_sample_ttest(a, b, variant: str = "pooled") -> TTestResult:
    """Two-sample t-test of mean(a) - mean(b).

    ``variant`` selects the classical pooled-variance test or Welch's
    unequal-variance form. The two-sided p-value comes from
    :func:`student_t_two_sided_p`.
    """
    if variant not in ("pooled", "welch"):
        raise InvalidInputError(f"unknown t-test variant: {variant!r}")
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if xa.size < 2 or xb.size < 2:
        raise InvalidInputError("each group needs at least 2 values")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(xb))):
        raise InvalidInputError("group values must be finite")
    na, nb = xa.size, xb.size
    va, vb = xa.var(ddof=1), xb.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise DegenerateDataError("both groups have zero variance")
    if variant == "pooled":
        dof = float(na + nb - 2)
        sp2 = ((na - 1) * va + (nb - 1) * vb) / dof
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    else:
        sa, sb = va / na, vb / nb
        se = math.sqrt(sa + sb)
        dof = (sa + sb) ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
    t = float((xa.mean() - xb.mean()) / se)
    return TTestResult(t_statistic=t, p_value=student_t_two_sided_p(t, dof),
                       dof=dof, variant=variant)
