"""Core recording type and digital filtering.

Signals are stored time-major (samples x channels) in double precision.
Amplitudes are treated as microvolts throughout, although nothing below
depends on the unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import signal as sps

from .errors import InvalidInputError

__all__ = ["Recording", "FilterSpec", "apply_filter",
           "preprocess_baseline", "preprocess_gesture"]


@dataclass(frozen=True, eq=False)
class Recording:
    """A multichannel sampled signal.

    Treat instances as immutable: operations return new recordings and never
    write into ``samples``.
    """

    samples: np.ndarray            # (num_samples, num_channels) float64
    sample_rate: float
    channel_mask: np.ndarray = None  # (num_channels,) bool, True = active
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InvalidInputError(
                f"samples must be a (T, m) matrix with T, m >= 1, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("samples contain non-finite values")
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidInputError(f"sample_rate must be positive and finite, got {self.sample_rate}")
        mask = self.channel_mask
        if mask is None:
            mask = np.ones(samples.shape[1], dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (samples.shape[1],):
            raise InvalidInputError(
                f"channel_mask length {mask.shape} does not match {samples.shape[1]} channels")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "channel_mask", mask)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate

    def with_samples(self, samples: np.ndarray, extra_meta: dict | None = None) -> "Recording":
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        return Recording(samples=samples, sample_rate=self.sample_rate,
                         channel_mask=self.channel_mask.copy(), meta=meta)


@dataclass(frozen=True)
class FilterSpec:
    """One stage of an IIR filter chain.

    ``center_or_band`` is the notch center (Hz) or the (low, high) bandpass
    edges; ``quality_or_order`` is the notch Q or the Butterworth order.
    """

    kind: str                       # "notch" | "bandpass"
    center_or_band: Any
    quality_or_order: float
    zero_phase: bool = True

    @classmethod
    def notch(cls, center_hz: float, q: float = 30.0, zero_phase: bool = True) -> "FilterSpec":
        return cls(kind="notch", center_or_band=float(center_hz),
                   quality_or_order=float(q), zero_phase=zero_phase)

    @classmethod
    def bandpass(cls, lo_hz: float, hi_hz: float, order: int = 4,
                 zero_phase: bool = True) -> "FilterSpec":
        return cls(kind="bandpass", center_or_band=(float(lo_hz), float(hi_hz)),
                   quality_or_order=int(order), zero_phase=zero_phase)

    def validate(self, sample_rate: float) -> None:
        nyq = sample_rate / 2.0
        if self.kind == "notch":
            f0 = self.center_or_band
            if not 0.0 < f0 < nyq:
                raise InvalidInputError(
                    f"notch center {f0} Hz outside (0, {nyq}) for fs={sample_rate}")
            if self.quality_or_order <= 0:
                raise InvalidInputError(f"notch Q must be positive, got {self.quality_or_order}")
        elif self.kind == "bandpass":
            lo, hi = self.center_or_band
            if not 0.0 < lo < hi < nyq:
                raise InvalidInputError(
                    f"bandpass edges ({lo}, {hi}) must satisfy 0 < lo < hi < {nyq}")
            if int(self.quality_or_order) < 1:
                raise InvalidInputError(f"bandpass order must be >= 1, got {self.quality_or_order}")
        else:
            raise InvalidInputError(f"unknown filter kind: {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "notch":
            label = f"notch({self.center_or_band:g} Hz, Q={self.quality_or_order:g})"
        else:
            lo, hi = self.center_or_band
            label = f"bandpass({lo:g}-{hi:g} Hz, order={int(self.quality_or_order)})"
        return label + ("" if self.zero_phase else " causal")


def apply_filter(rec: Recording, spec: FilterSpec) -> Recording:
    """Filter every channel independently, preserving length.

    Zero-phase specs run the filter forward then backward (squared magnitude
    response, no group delay); scipy's default reflected padding keeps
    startup transients out of short windows.
    """
    spec.validate(rec.sample_rate)
    x = rec.samples
    if spec.kind == "notch":
        b, a = sps.iirnotch(w0=spec.center_or_band, Q=spec.quality_or_order,
                            fs=rec.sample_rate)
        if spec.zero_phase:
            y = sps.filtfilt(b, a, x, axis=0)
        else:
            y = sps.lfilter(b, a, x, axis=0)
    else:
        lo, hi = spec.center_or_band
        nyq = rec.sample_rate / 2.0
        sos = sps.butter(int(spec.quality_or_order), [lo / nyq, hi / nyq],
                         btype="bandpass", output="sos")
        if spec.zero_phase:
            y = sps.sosfiltfilt(sos, x, axis=0)
        else:
            y = sps.sosfilt(sos, x, axis=0)
    chain = list(rec.meta.get("filter_chain", [])) + [spec.describe()]
    return rec.with_samples(y, extra_meta={"filter_chain": chain})


def preprocess_baseline(rec: Recording) -> Recording:
    """Baseline-noise chain: 50 Hz notch, then 10-500 Hz bandpass."""
    rec = apply_filter(rec, FilterSpec.notch(50.0))
    return apply_filter(rec, FilterSpec.bandpass(10.0, 500.0))


def preprocess_gesture(rec: Recording) -> Recording:
    """Gesture chain: 50/100/150 Hz notches, then 20-500 Hz bandpass."""
    for f0 in (50.0, 100.0, 150.0):
        rec = apply_filter(rec, FilterSpec.notch(f0))
    return apply_filter(rec, FilterSpec.bandpass(20.0, 500.0))
