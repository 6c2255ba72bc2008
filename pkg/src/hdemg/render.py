"""Deterministic CSV and SVG renderings of signals and confusion matrices."""

from __future__ import annotations

import csv
from xml.sax.saxutils import escape

import numpy as np

from .signals import Recording

__all__ = ["signal_csv", "signal_svg", "confusion_csv", "confusion_svg"]

_SVG_HEADER = '<?xml version="1.0" encoding="UTF-8"?>\n'


def signal_csv(path, rec: Recording, channels=None) -> None:
    """Columns: sample, time_s, then one column per selected channel."""
    chans = list(channels) if channels is not None else list(range(rec.num_channels))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "time_s"] + [f"ch{c}" for c in chans])
        for i in range(rec.num_samples):
            row = [i, f"{i / rec.sample_rate:.9g}"]
            row += [f"{rec.samples[i, c]:.9g}" for c in chans]
            writer.writerow(row)


def signal_svg(path, rec: Recording, channels=None, width: int = 960,
               row_height: int = 80, max_points: int = 4000) -> None:
    """Stacked line traces, one row per channel, decimated to ``max_points``."""
    chans = list(channels) if channels is not None else list(range(rec.num_channels))
    step = max(1, rec.num_samples // max_points)
    idx = np.arange(0, rec.num_samples, step)
    height = row_height * len(chans)
    parts = [_SVG_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">\n',
             f'<rect width="{width}" height="{height}" fill="white"/>\n']
    xs = idx / max(1, rec.num_samples - 1) * (width - 20) + 10
    for row, c in enumerate(chans):
        y = rec.samples[idx, c]
        span = np.max(np.abs(y)) or 1.0
        mid = row_height * (row + 0.5)
        ys = mid - y / span * (row_height * 0.42)
        points = " ".join(f"{x:.2f},{v:.2f}" for x, v in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="#1f6f8b" stroke-width="1" '
                     f'points="{points}"/>\n')
        parts.append(f'<text x="4" y="{row * row_height + 14}" font-size="11" '
                     f'font-family="monospace">ch{c}</text>\n')
    parts.append("</svg>\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(parts))


def confusion_csv(path, matrix: np.ndarray, class_names=None) -> None:
    """Header row lists predicted classes; one row per true class."""
    k = matrix.shape[0]
    names = list(class_names) if class_names else [f"class {i}" for i in range(k)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\predicted"] + names)
        for i in range(k):
            writer.writerow([names[i]] + [int(v) for v in matrix[i]])


def confusion_svg(path, matrix: np.ndarray, class_names=None,
                  cell: int = 48, margin: int = 110) -> None:
    """Heatmap of counts, darker = larger, with count labels."""
    k = matrix.shape[0]
    names = list(class_names) if class_names else [f"class {i}" for i in range(k)]
    size = margin + k * cell + 10
    top = matrix.max() or 1
    parts = [_SVG_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">\n',
             f'<rect width="{size}" height="{size}" fill="white"/>\n']
    for i in range(k):
        for j in range(k):
            v = int(matrix[i, j])
            shade = 255 - int(200 * v / top)
            x = margin + j * cell
            y = margin + i * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="rgb({shade},{shade},255)" stroke="#888"/>\n')
            color = "black" if shade > 120 else "white"
            parts.append(f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" '
                         f'font-size="12" text-anchor="middle" fill="{color}" '
                         f'font-family="monospace">{v}</text>\n')
    for i, name in enumerate(names):
        label = escape(name)
        parts.append(f'<text x="{margin - 6}" y="{margin + i * cell + cell // 2 + 4}" '
                     f'font-size="11" text-anchor="end" font-family="monospace">'
                     f'{label}</text>\n')
        parts.append(f'<text x="{margin + i * cell + cell // 2}" y="{margin - 8}" '
                     f'font-size="11" text-anchor="middle" font-family="monospace" '
                     f'transform="rotate(-45 {margin + i * cell + cell // 2} {margin - 8})">'
                     f'{label}</text>\n')
    parts.append("</svg>\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(parts))
