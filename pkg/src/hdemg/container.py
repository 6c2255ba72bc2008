"""Persistent formats: binary recording container, model blobs, JSON reports.

Recording layout (little-endian), magic "HDMG", version 1:

    offset 0   magic           4 bytes
           4   format version  u16
           6   num_channels    u16
           8   sample_rate     f64
          16   sample_count    u64
          24   dtype code      u8   (0 = float32)
          25   channel mask    ceil(m/8) bytes, LSB-first
           .   samples         float32 LE, time-major
           .   meta length     u32
           .   meta            UTF-8 JSON, canonical key order

Samples are stored in single precision (matching the dynamic range of a
24-bit front end); in-memory computation stays double precision. Reads and
writes round-trip bit-exactly for float32-representable data.
"""

from __future__ import annotations

import json
import math
import struct

import numpy as np

from .errors import CorruptFileError, FormatError, InvalidInputError
from .gesture import EvalReport, NetworkParams, WindowedDataset
from .metrics import DecompositionReport, MotorUnit
from .signals import Recording
from .stats import ChannelStats, TTestResult
from .synth import GroundTruth, MuapTemplate, SpikeTrain

__all__ = ["write_recording", "read_recording", "write_model", "read_model",
           "write_gesture_dataset", "read_gesture_dataset", "write_json_doc",
           "read_json_doc", "ground_truth_sidecar_doc", "parse_ground_truth_sidecar",
           "decomposition_report_doc", "parse_decomposition_report",
           "eval_report_doc", "crossval_doc", "channel_stats_doc", "ttest_doc"]

RECORDING_MAGIC = b"HDMG"
MODEL_MAGIC = b"HDNN"
FORMAT_VERSION = 1
SCHEMA_VERSION = 1
_DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sHHdQB")          # magic, version, channels, fs, samples, dtype


def _pack_mask(mask: np.ndarray) -> bytes:
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()


def _unpack_mask(raw: bytes, m: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    return bits[:m].astype(bool)


def write_recording(path, rec: Recording) -> None:
    """Serialize a recording; samples are cast to float32."""
    try:
        meta_json = json.dumps(rec.meta, sort_keys=True, separators=(",", ":"))
    except TypeError as exc:
        raise InvalidInputError(f"recording meta is not JSON-serializable: {exc}") from exc
    meta_bytes = meta_json.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RECORDING_MAGIC, FORMAT_VERSION, rec.num_channels,
                              rec.sample_rate, rec.num_samples, _DTYPE_FLOAT32))
        fh.write(_pack_mask(rec.channel_mask))
        fh.write(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)


def _read_exact(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise CorruptFileError(
            f"file truncated while reading {what}: need {size} bytes, have "
            f"{len(data) - offset}", offset)
    return data[offset:offset + size]


def read_recording(path) -> Recording:
    """Read a recording written by :func:`write_recording`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != RECORDING_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {RECORDING_MAGIC!r}", 0)
    header = _read_exact(data, 0, _HEADER.size, "header")
    _, version, m, sample_rate, t, dtype_code = _HEADER.unpack(header)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    if dtype_code != _DTYPE_FLOAT32:
        raise FormatError(f"unknown dtype code {dtype_code}", 24)
    offset = _HEADER.size
    mask_bytes = (m + 7) // 8
    mask = _unpack_mask(_read_exact(data, offset, mask_bytes, "channel mask"), m)
    offset += mask_bytes
    payload = _read_exact(data, offset, t * m * 4, "samples")
    samples = np.frombuffer(payload, dtype="<f4").reshape(t, m).astype(np.float64)
    offset += t * m * 4
    (meta_len,) = struct.unpack("<I", _read_exact(data, offset, 4, "meta length"))
    offset += 4
    meta_raw = _read_exact(data, offset, meta_len, "meta block")
    try:
        meta = json.loads(meta_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"meta block is not valid JSON: {exc}", offset) from exc
    return Recording(samples=samples, sample_rate=sample_rate,
                     channel_mask=mask, meta=meta)


def write_model(path, params: NetworkParams) -> None:
    """Model blob: header, architecture, shape table, raw float64 payloads."""
    tensors = params.tensors()
    arch = (*params.conv_w.shape[:2], *params.conv_stride,
            *params.pool_size, *params.pool_stride)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHH", MODEL_MAGIC, FORMAT_VERSION, len(tensors)))
        fh.write(struct.pack("<8H", *arch))
        for name, tensor in tensors.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        for tensor in tensors.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def read_model(path) -> NetworkParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MODEL_MAGIC!r}", 0)
    _, version, n_tensors = struct.unpack("<4sHH", _read_exact(data, 0, 8, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model version {version}", 4)
    arch = struct.unpack("<8H", _read_exact(data, 8, 16, "architecture"))
    offset = 24
    shapes = []
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<H", _read_exact(data, offset, 2, "tensor name length"))
        offset += 2
        name = _read_exact(data, offset, name_len, "tensor name").decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack("<B", _read_exact(data, offset, 1, "tensor rank"))
        offset += 1
        dims = struct.unpack(f"<{ndim}I", _read_exact(data, offset, 4 * ndim, "tensor shape"))
        offset += 4 * ndim
        shapes.append((name, dims))
    tensors = {}
    for name, dims in shapes:
        count = int(np.prod(dims)) if dims else 1
        raw = _read_exact(data, offset, count * 8, f"tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
        offset += count * 8
    return NetworkParams(**tensors, conv_stride=(arch[2], arch[3]),
                         pool_size=(arch[4], arch[5]), pool_stride=(arch[6], arch[7]))


def write_gesture_dataset(path, ds: WindowedDataset, sample_rate: float) -> None:
    """Store a windowed dataset as one concatenated recording plus label meta."""
    samples = ds.windows.reshape(-1, ds.num_channels)
    meta = {"gesture_dataset": {
        "window_samples": ds.window_samples,
        "num_classes": ds.num_classes,
        "class_names": list(ds.class_names),
        "labels": [int(v) for v in ds.labels],
    }}
    write_recording(path, Recording(samples=samples, sample_rate=sample_rate, meta=meta))


def read_gesture_dataset(path) -> tuple:
    """Returns ``(dataset, sample_rate)`` for a file from :func:`write_gesture_dataset`."""
    rec = read_recording(path)
    info = rec.meta.get("gesture_dataset")
    if info is None:
        raise InvalidInputError(f"{path} does not contain a gesture dataset")
    w = int(info["window_samples"])
    labels = np.asarray(info["labels"], dtype=np.int64)
    windows = rec.samples.reshape(labels.size, w, rec.num_channels)
    ds = WindowedDataset(windows=windows, labels=labels, window_samples=w,
                         num_classes=int(info["num_classes"]),
                         class_names=tuple(info["class_names"]))
    return ds, rec.sample_rate


def write_json_doc(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json_doc(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not a valid JSON document: {exc}", exc.pos) from exc


def ground_truth_sidecar_doc(gt: GroundTruth) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "ground_truth",
        "sample_rate": gt.recording.sample_rate,
        "duration_samples": gt.recording.num_samples,
        "trains": [[int(s) for s in tr.spike_samples] for tr in gt.trains],
        "templates": [{"center_channel": tp.center_channel,
                       "waveforms": tp.waveforms.tolist()} for tp in gt.templates],
        "config": {"num_channels": gt.config.num_channels,
                   "num_units": gt.config.num_units,
                   "sample_rate": gt.config.sample_rate,
                   "duration_s": gt.config.duration_s,
                   "firing_rate_range": list(gt.config.firing_rate_range),
                   "isi_cov_pct": gt.config.isi_cov_pct,
                   "muap_length_ms": gt.config.muap_length_ms,
                   "spatial_spread": gt.config.spatial_spread,
                   "snr_db": gt.config.snr_db if math.isfinite(gt.config.snr_db) else None,
                   "base_amplitude": gt.config.base_amplitude,
                   "seed": gt.config.seed},
    }


def parse_ground_truth_sidecar(doc: dict) -> tuple:
    """Returns ``(trains, templates, sample_rate)`` from a sidecar document."""
    if doc.get("kind") != "ground_truth":
        raise InvalidInputError(f"expected a ground_truth document, got {doc.get('kind')!r}")
    fs = float(doc["sample_rate"])
    duration = int(doc["duration_samples"])
    trains = [SpikeTrain(spike_samples=np.asarray(t, dtype=np.int64),
                         sample_rate=fs, duration_samples=duration)
              for t in doc["trains"]]
    templates = [MuapTemplate(waveforms=np.asarray(tp["waveforms"], dtype=np.float64),
                              center_channel=int(tp["center_channel"]))
                 for tp in doc["templates"]]
    return trains, templates, fs


def decomposition_report_doc(report: DecompositionReport, sample_rate: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "decomposition_report",
        "sample_rate": sample_rate,
        "config_hash": report.config_hash,
        "count_before_cleaning": report.count_before_cleaning,
        "count_after_cleaning": report.count_after_cleaning,
        "mean_sil": report.mean_sil,
        "mean_cov_isi": report.mean_cov_isi,
        "mean_firing_rate": report.mean_firing_rate,
        "units": [{"spikes": [int(s) for s in u.spikes],
                   "sil": u.sil, "cov_isi": u.cov_isi,
                   "firing_rate": u.firing_rate} for u in report.units],
    }


def parse_decomposition_report(doc: dict) -> tuple:
    """Returns ``(units, sample_rate)`` from a report document."""
    if doc.get("kind") != "decomposition_report":
        raise InvalidInputError(
            f"expected a decomposition_report document, got {doc.get('kind')!r}")
    fs = float(doc["sample_rate"])
    units = [MotorUnit(spikes=np.asarray(u["spikes"], dtype=np.int64),
                       sample_rate=fs, sil=float(u["sil"]),
                       cov_isi=float(u["cov_isi"]),
                       firing_rate=float(u["firing_rate"]))
             for u in doc["units"]]
    return units, fs


def eval_report_doc(report: EvalReport, class_names=()) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "eval_report",
        "accuracy": report.accuracy,
        "fold_accuracies": list(report.fold_accuracies),
        "confusion_matrix": report.confusion_matrix.tolist(),
        "class_names": list(class_names),
    }


def crossval_doc(reports, mean: float, std: float, class_names=()) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "crossval_report",
        "mean_accuracy": mean,
        "std_accuracy": std,
        "folds": [eval_report_doc(r, class_names) for r in reports],
    }


def channel_stats_doc(stats: ChannelStats) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "channel_stats",
        "rms": stats.rms.tolist(),
        "zscore": stats.zscore.tolist(),
        "outlier": stats.outlier.astype(bool).tolist(),
        "threshold": stats.threshold,
    }


def ttest_doc(result: TTestResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "ttest",
        "t_statistic": result.t_statistic,
        "p_value": result.p_value,
        "dof": result.dof,
        "variant": result.variant,
    }
