"""Spike-train statistics, cleaning thresholds, duplicates, agreement scoring."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSpikesError, InvalidInputError

__all__ = ["MotorUnit", "DecompositionReport", "cov_isi", "firing_rate",
           "clean_units", "rate_of_agreement", "dedup_units",
           "match_spikes", "best_alignment", "aligned_rate_of_agreement",
           "motor_unit_from_estimate", "build_report",
           "COV_ISI_MAX_PCT", "FIRING_RATE_MAX_HZ"]

COV_ISI_MAX_PCT = 30.0
FIRING_RATE_MAX_HZ = 35.0


@dataclass(frozen=True, eq=False)
class MotorUnit:
    """An estimated motor unit: spike train plus its quality metrics."""

    spikes: np.ndarray          # sample indices, strictly increasing
    sample_rate: float
    sil: float
    cov_isi: float              # percent
    firing_rate: float          # Hz

    def __post_init__(self):
        spikes = np.asarray(self.spikes, dtype=np.int64)
        if spikes.size and np.any(np.diff(spikes) <= 0):
            raise InvalidInputError("spike indices must be strictly increasing")
        if self.cov_isi < 0 or self.firing_rate < 0:
            raise InvalidInputError("cov_isi and firing_rate must be non-negative")
        object.__setattr__(self, "spikes", spikes)

    @property
    def num_spikes(self) -> int:
        return self.spikes.size


def _spike_indices(unit) -> np.ndarray:
    return np.asarray(getattr(unit, "spikes", getattr(unit, "spike_samples", unit)),
                      dtype=np.int64)


def cov_isi(unit) -> float:
    """Coefficient of variation of the inter-spike intervals, in percent.

    Sample (n-1) standard deviation over mean, intervals in seconds.
    """
    spikes = _spike_indices(unit)
    if spikes.size < 3:
        raise InsufficientSpikesError(
            f"need at least 3 spikes for a CoV, got {spikes.size}")
    isi = np.diff(spikes) / unit.sample_rate
    return 100.0 * float(isi.std(ddof=1) / isi.mean())


def firing_rate(unit) -> float:
    """Mean discharge rate in Hz: (N - 1) over the first-to-last spike span."""
    spikes = _spike_indices(unit)
    if spikes.size < 2:
        raise InsufficientSpikesError(
            f"need at least 2 spikes for a firing rate, got {spikes.size}")
    span_s = (spikes[-1] - spikes[0]) / unit.sample_rate
    return float((spikes.size - 1) / span_s)


def clean_units(units) -> list:
    """Keep units with CoV of ISI < 30% and firing rate < 35 Hz, order preserved."""
    return [u for u in units
            if u.cov_isi < COV_ISI_MAX_PCT and u.firing_rate < FIRING_RATE_MAX_HZ]


def match_spikes(a: np.ndarray, b: np.ndarray, tol_samples: int) -> int:
    """Count of greedy one-to-one matches between two ascending index arrays."""
    i = j = matched = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        d = int(a[i]) - int(b[j])
        if abs(d) <= tol_samples:
            matched += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return matched


def rate_of_agreement(est, truth, tol_ms: float = 0.5) -> float:
    """matched / (matched + missed + false positives) within a +-tol window."""
    if est.sample_rate != truth.sample_rate:
        raise InvalidInputError("units must share a sample rate to be compared")
    tol = int(round(tol_ms / 1000.0 * est.sample_rate))
    a = _spike_indices(est)
    b = _spike_indices(truth)
    if a.size == 0 and b.size == 0:
        return 1.0
    matched = match_spikes(a, b, tol)
    return matched / (a.size + b.size - matched)


def best_alignment(est_spikes: np.ndarray, truth_spikes: np.ndarray,
                   tol_samples: int, max_shift_samples: int) -> tuple:
    """Constant offset of ``est`` maximizing matches against ``truth``.

    Convolutive decomposition recovers each source only up to a delay, so
    ground-truth scoring scans integer shifts. Returns (offset, matched).
    """
    best_shift, best_matched = 0, -1
    for shift in range(-max_shift_samples, max_shift_samples + 1):
        matched = match_spikes(est_spikes + shift, truth_spikes, tol_samples)
        if matched > best_matched:
            best_shift, best_matched = shift, matched
    return best_shift, best_matched


def aligned_rate_of_agreement(est, truth, tol_ms: float = 0.5,
                              max_shift_ms: float = 25.0) -> float:
    """Rate of agreement at the best constant time offset."""
    if est.sample_rate != truth.sample_rate:
        raise InvalidInputError("units must share a sample rate to be compared")
    fs = est.sample_rate
    a = _spike_indices(est)
    b = _spike_indices(truth)
    if a.size == 0 and b.size == 0:
        return 1.0
    tol = int(round(tol_ms / 1000.0 * fs))
    max_shift = int(round(max_shift_ms / 1000.0 * fs))
    _, matched = best_alignment(a, b, tol, max_shift)
    return matched / (a.size + b.size - matched)


def dedup_units(units, share_threshold: float = 0.3, tol_ms: float = 0.5) -> list:
    """Drop lower-silhouette duplicates of the same physiological unit.

    Two units are duplicates when more than ``share_threshold`` of the
    smaller unit's spikes match within +-tol. Processing in descending
    silhouette order keeps the globally best representative. Input order is
    preserved among survivors.
    """
    units = list(units)
    if not units:
        return []
    fs = units[0].sample_rate
    if any(u.sample_rate != fs for u in units):
        raise InvalidInputError("units must share a sample rate to deduplicate")
    tol = int(round(tol_ms / 1000.0 * fs))
    order = sorted(range(len(units)), key=lambda i: (-units[i].sil, i))
    alive = [True] * len(units)
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        for j in order[pos + 1:]:
            if not alive[j]:
                continue
            a, b = units[i].spikes, units[j].spikes
            smaller = min(a.size, b.size)
            if smaller == 0:
                continue
            if match_spikes(a, b, tol) / smaller > share_threshold:
                alive[j] = False
    return [u for u, keep in zip(units, alive) if keep]


def motor_unit_from_estimate(est, sample_rate: float) -> MotorUnit:
    """Wrap a decomposition SourceEstimate with its computed metrics."""
    spikes = np.asarray(est.spikes, dtype=np.int64)
    isi = np.diff(spikes) / sample_rate
    cov = 100.0 * float(isi.std(ddof=1) / isi.mean()) if spikes.size >= 3 else 0.0
    span = (spikes[-1] - spikes[0]) / sample_rate if spikes.size >= 2 else 0.0
    rate = (spikes.size - 1) / span if span > 0 else 0.0
    return MotorUnit(spikes=spikes, sample_rate=sample_rate, sil=float(est.sil),
                     cov_isi=cov, firing_rate=float(rate))


@dataclass(frozen=True)
class DecompositionReport:
    """Summary of one decomposition run after cleaning."""

    units: tuple                 # retained MotorUnits
    config_hash: str
    count_before_cleaning: int
    count_after_cleaning: int
    mean_sil: float | None
    mean_cov_isi: float | None
    mean_firing_rate: float | None


def _params_hash(params) -> str:
    payload = json.dumps(
        {k: getattr(params, k) for k in sorted(vars(params))}, sort_keys=True,
        default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_report(raw_units, cleaned_units, params) -> DecompositionReport:
    """Aggregate retained units into a report; aggregates are None when empty."""
    cleaned = list(cleaned_units)
    if cleaned:
        mean_sil = float(np.mean([u.sil for u in cleaned]))
        mean_cov = float(np.mean([u.cov_isi for u in cleaned]))
        mean_rate = float(np.mean([u.firing_rate for u in cleaned]))
    else:
        mean_sil = mean_cov = mean_rate = None
    return DecompositionReport(units=tuple(cleaned), config_hash=_params_hash(params),
                               count_before_cleaning=len(list(raw_units)),
                               count_after_cleaning=len(cleaned),
                               mean_sil=mean_sil, mean_cov_isi=mean_cov,
                               mean_firing_rate=mean_rate)
