"""Static report artifacts: attribution heatmap, normalized-score tables, variable plots.

Everything is hand-written SVG 1.1 or CSV with fixed number formatting, so
identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from ._io import atomic_write
from .analysis import DEFAULT_K, top_k

DEFAULT_THRESHOLD = 0.5
METHOD_COLUMNS = (("IG", "A"), ("SHAP", "B"))

# lightest and darkest heatmap colors; the ramp is linear in each channel
_LIGHT = np.array([255, 255, 255])
_DARK = np.array([8, 48, 107])


@dataclass
class ReportBundle:
    """Normalized scores for every fault: ``scores[method][f, m]`` for fault ``f``, feature ``m``."""

    faults: list[str]
    features: list[str]
    scores: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.faults or not self.features:
            raise ValueError("report bundle needs at least one fault and one feature")
        shape = (len(self.faults), len(self.features))
        for method, mat in list(self.scores.items()):
            mat = np.asarray(mat, dtype=np.float64).reshape(shape)
            self.scores[method] = mat
        if not self.scores:
            raise ValueError("report bundle has no methods")


def darkness(scores, vmax: float | None = None) -> np.ndarray:
    """Map scores to [0, 1]: negatives clip to 0, ``vmax`` (default: the largest score) to 1."""
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, None)
    top = float(s.max()) if vmax is None else float(vmax)
    if top <= 0:
        return np.zeros_like(s)
    return np.clip(s / top, 0.0, 1.0)


def fill_color(d: float) -> str:
    rgb = np.rint(_LIGHT + (_DARK - _LIGHT) * float(d)).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _svg(width, height, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def emit_heatmap(bundle: ReportBundle, path, threshold: float | None = DEFAULT_THRESHOLD) -> Path:
    """Faults x features heatmap, an A (IG) / B (SHAP) column pair per fault.

    Features whose largest score over all faults and methods is below
    ``threshold`` are left out; ``None`` keeps every feature.
    """
    methods = [(m, tag) for m, tag in METHOD_COLUMNS if m in bundle.scores]
    methods += [(m, m[:1]) for m in sorted(bundle.scores) if m not in dict(METHOD_COLUMNS)]
    stacked = np.stack([bundle.scores[m] for m, _ in methods])  # [methods, faults, features]
    keep = list(range(len(bundle.features)))
    if threshold is not None:
        keep = [j for j in keep if stacked[:, :, j].max() >= threshold]
    dark = darkness(stacked)

    cell, label_w, top = 22, 90, 44
    ncols = len(bundle.faults) * len(methods)
    width = label_w + ncols * cell + 10
    height = top + max(len(keep), 1) * cell + 10
    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    for fi, fault in enumerate(bundle.faults):
        x0 = label_w + fi * len(methods) * cell
        body.append(f'<text x="{x0 + len(methods) * cell / 2:.1f}" y="14" text-anchor="middle">{escape(fault)}</text>')
        for mi, (_, tag) in enumerate(methods):
            body.append(f'<text x="{x0 + mi * cell + cell / 2:.1f}" y="32" text-anchor="middle">{tag}</text>')
    for row, j in enumerate(keep):
        y = top + row * cell
        body.append(f'<text x="{label_w - 4}" y="{y + cell * 0.7:.1f}" text-anchor="end">{escape(bundle.features[j])}</text>')
        for fi, fault in enumerate(bundle.faults):
            for mi, (method, _) in enumerate(methods):
                x = label_w + (fi * len(methods) + mi) * cell
                d = dark[mi, fi, j]
                body.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill_color(d)}" '
                    f'stroke="#cccccc" data-fault={quoteattr(fault)} data-method="{method}" '
                    f'data-feature={quoteattr(bundle.features[j])} '
                    f'data-score="{stacked[mi, fi, j]:.6f}" data-darkness="{d:.6f}"/>'
                )
    return atomic_write(path, _svg(width, height, body))


def score_table_csv(names: Sequence[str], ig, shap, k: int = DEFAULT_K, decimals: int = 2) -> str:
    ig = np.asarray(ig, dtype=np.float64)
    shap = np.asarray(shap, dtype=np.float64)
    top_ig, top_shap = set(top_k(ig, k)), set(top_k(shap, k))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "IG", "SHAP", "IG_top_k", "SHAP_top_k"])
    for i, name in enumerate(names):
        w.writerow([name, f"{ig[i]:.{decimals}f}", f"{shap[i]:.{decimals}f}",
                    "*" if i in top_ig else "", "*" if i in top_shap else ""])
    return buf.getvalue()


def emit_score_table(names: Sequence[str], ig, shap, path, k: int = DEFAULT_K, decimals: int = 2) -> Path:
    """CSV with one row per feature; ``*`` in the top-k columns marks the k largest scores."""
    return atomic_write(path, score_table_csv(names, ig, shap, k, decimals))


def read_score_table(path):
    """Inverse of :func:`emit_score_table`: ``(names, ig, shap, ig_marked, shap_marked)``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    names = [r["feature"] for r in rows]
    ig = np.array([float(r["IG"]) for r in rows])
    shap = np.array([float(r["SHAP"]) for r in rows])
    return (names, ig, shap, [n for n, r in zip(names, rows) if r["IG_top_k"]],
            [n for n, r in zip(names, rows) if r["SHAP_top_k"]])


# -- variable plots ----------------------------------------------------------


def _polyline(values, x0, y0, w, h, lo, hi, color, dash=None):
    n = len(values)
    xs = x0 + np.arange(n) * (w / max(n - 1, 1))
    span = hi - lo if hi > lo else 1.0
    ys = y0 + h - (np.asarray(values) - lo) / span * h
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{extra} points="{pts}"/>'


def _panel(body, title, series, x0, y0, w, h, onset, n):
    lo = min(float(np.min(s)) for s, _, _ in series)
    hi = max(float(np.max(s)) for s, _, _ in series)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    lo, hi = lo - pad, hi + pad
    body.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444444"/>')
    body.append(f'<text x="{x0}" y="{y0 - 6}">{escape(title)}</text>')
    body.append(f'<text x="{x0 - 4}" y="{y0 + 10}" text-anchor="end">{hi:.4g}</text>')
    body.append(f'<text x="{x0 - 4}" y="{y0 + h}" text-anchor="end">{lo:.4g}</text>')
    for values, color, dash in series:
        body.append(_polyline(values, x0, y0, w, h, lo, hi, color, dash))
    if onset is not None:
        xo = x0 + onset * (w / max(n - 1, 1))
        body.append(f'<line x1="{xo:.2f}" y1="{y0}" x2="{xo:.2f}" y2="{y0 + h}" stroke="#d62728" '
                    f'stroke-dasharray="4,3" data-onset="{onset}"/>')


def variable_plot_svg(name, faulty, normal, onset=None, deviation=True, label="faulty") -> str:
    faulty = np.asarray(faulty, dtype=np.float64)
    normal = None if normal is None else np.asarray(normal, dtype=np.float64)
    n = len(faulty)
    w, h, left = 560, 160, 70
    panels = 2 if deviation and normal is not None else 1
    height = 40 + panels * (h + 40)
    body = [f'<rect x="0" y="0" width="{left + w + 20}" height="{height}" fill="#ffffff"/>']
    series = [(faulty, "#1f77b4", None)]
    if normal is not None:
        series.append((normal[:n], "#7f7f7f", "5,3"))
    _panel(body, f"{name}: {label} (solid) vs normal (dashed)", series, left, 30, w, h, onset, n)
    if panels == 2:
        dev = np.abs(faulty - normal[:n])
        _panel(body, f"{name}: |{label} - normal|", [(dev, "#ff7f0e", None)], left, 30 + h + 40, w, h, onset, n)
    return _svg(left + w + 20, height, body)


def emit_variable_plots(dataset, run: int, channels: Sequence[str], out_dir, normal_run: int | None = None,
                        onset: int | None = None, deviation: bool = True, prefix: str = "") -> list[Path]:
    """One SVG per channel: the faulty run over a normal run, onset marker, deviation panel.

    ``normal_run`` defaults to the first normal-labelled run; without one the
    reference trace is the faulty run's own pre-onset mean.
    """
    schema = list(dataset.schema)
    unknown = [c for c in channels if c not in schema]
    if unknown:
        raise ValueError(f"unknown channels {unknown}; schema is {schema}")
    r = dataset.runs[run]
    onset = r.onset_index if onset is None else onset
    if normal_run is None:
        normal_run = next((i for i, x in enumerate(dataset.runs) if not x.is_faulty and x.label == dataset.class_labels[0]), None)
    if normal_run is not None:
        ref = dataset.runs[normal_run].data
        if len(ref) < len(r.data):
            ref = np.concatenate([ref, np.repeat(ref[-1:], len(r.data) - len(ref), axis=0)])
    else:
        pre = r.data[: onset] if onset else r.data
        ref = np.repeat(pre.mean(axis=0, keepdims=True), len(r.data), axis=0)
    out = []
    for c in channels:
        j = schema.index(c)
        svg = variable_plot_svg(c, r.data[:, j], ref[:, j], onset, deviation, label=r.label)
        out.append(atomic_write(Path(out_dir) / f"{prefix}{c}.svg", svg))
    return out
