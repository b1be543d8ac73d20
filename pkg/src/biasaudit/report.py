"""Report artifacts: rounded CSV tables, SVG heatmaps and bar charts, run manifest.

All emitters are pure functions of their inputs (fixed float formatting, no
timestamps), so identical inputs give byte-identical files.  Timestamps only
appear in the manifest.
"""

from __future__ import annotations

import csv
import io
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .extract import FEATURES
from .fsutil import atomic_write_text, sha256_file
from .stats import CorrelationResult, TTestResult


def fmt2(x: float) -> str:
    """Two decimals (round-half-even on the stored binary value); ``NaN`` if undefined."""
    if x is None or math.isnan(x):
        return "NaN"
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def emit_correlation_table(diagonals: Mapping[str, Sequence[CorrelationResult]],
                           features: Sequence[str] = FEATURES) -> str:
    models = list(diagonals)
    for model, cells in diagonals.items():
        got = [c.feature_a for c in cells]
        if got != list(features):
            raise ValueError(f"model {model!r}: features do not match the schema order")
    rows = [["LIWC", *models]]
    for i, feature in enumerate(features):
        rows.append([feature, *(fmt2(diagonals[m][i].r) for m in models)])
    return _csv(rows)


def emit_ttest_table(results: Mapping[str, Sequence[TTestResult]], alpha: float | None = None,
                     features: Sequence[str] = FEATURES) -> str:
    """t values per variant with a ``*`` marker column (CSV cannot carry bold).

    With ``alpha`` the marker is ``p < alpha``; without it, each result's own
    significance flag (which may be Bonferroni-adjusted) is used.
    """
    variants = list(results)
    header = ["LIWC"]
    for v in variants:
        header += [v, f"{v}_sig"]
    rows = [header]
    for i, feature in enumerate(features):
        row = [feature]
        for v in variants:
            r = results[v][i]
            if r.feature != feature:
                raise ValueError(f"variant {v!r}: features do not match the schema order")
            sig = r.significant if alpha is None else (r.defined and r.p < alpha)
            row += [fmt2(r.t), "*" if r.defined and sig else ""]
        rows.append(row)
    return _csv(rows)


# ---------------------------------------------------------------------------
# SVG

_CELL = 14
_HATCH = (
    '<defs><pattern id="hatch" width="4" height="4" patternUnits="userSpaceOnUse" '
    'patternTransform="rotate(45)"><rect width="4" height="4" fill="#ffffff"/>'
    '<line x1="0" y1="0" x2="0" y2="4" stroke="#888888" stroke-width="1.5"/></pattern></defs>'
)


def _lerp(c0: tuple[int, int, int], c1: tuple[int, int, int], t: float) -> str:
    return "#" + "".join(f"{round(a + (b - a) * t):02x}" for a, b in zip(c0, c1))


_BLUE, _WHITE, _RED, _NAVY = (33, 102, 172), (255, 255, 255), (178, 24, 43), (8, 48, 107)


def diverging_color(r: float) -> str:
    """-1 blue, 0 white, +1 red."""
    r = max(-1.0, min(1.0, r))
    return _lerp(_WHITE, _RED, r) if r >= 0 else _lerp(_WHITE, _BLUE, -r)


def sequential_color(p: float) -> str:
    """0 navy, 1 white."""
    return _lerp(_NAVY, _WHITE, max(0.0, min(1.0, p)))


def _num(x: float) -> str:
    return "NaN" if math.isnan(x) else f"{x:.4f}"


def emit_heatmap(
    matrix: Sequence[Sequence[float]],
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    scale: str = "diverging",
    path: str | Path | None = None,
    title: str = "",
    alpha: float = 0.05,
) -> str:
    """Standalone SVG heatmap.

    ``scale="diverging"`` maps r in [-1, 1]; ``"sequential"`` maps p in [0, 1]
    and outlines cells with p < alpha.  Undefined cells are hatched.
    """
    nrows, ncols = len(matrix), len(matrix[0]) if matrix else 0
    if any(len(row) != ncols for row in matrix):
        raise ValueError("heatmap matrix must be rectangular")
    if len(row_labels) != nrows or len(col_labels) != ncols:
        raise ValueError("label count does not match matrix shape")
    if scale not in ("diverging", "sequential"):
        raise ValueError(f"unknown scale {scale!r}")
    left = 8 + 7 * max((len(s) for s in row_labels), default=0)
    top = 30 + 7 * max((len(s) for s in col_labels), default=0)
    legend_h = 40
    width = left + ncols * _CELL + 20
    height = top + nrows * _CELL + legend_h
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        _HATCH,
        f'<text x="{left}" y="14" font-size="12">{escape(title)}</text>',
    ]
    for j, label in enumerate(col_labels):
        x = left + j * _CELL + _CELL // 2 + 3
        out.append(f'<text x="{x}" y="{top - 4}" transform="rotate(-90 {x} {top - 4})">{escape(label)}</text>')
    for i, label in enumerate(row_labels):
        y = top + i * _CELL + _CELL - 3
        out.append(f'<text x="{left - 4}" y="{y}" text-anchor="end">{escape(label)}</text>')
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            x, y = left + j * _CELL, top + i * _CELL
            v = math.nan if v is None else float(v)
            cls = "cell"
            extra = ""
            if math.isnan(v):
                fill = "url(#hatch)"
                cls += " undefined"
            elif scale == "diverging":
                fill = diverging_color(v)
            else:
                fill = sequential_color(v)
                if v < alpha:
                    cls += " below-alpha"
                    extra = ' stroke="#000000" stroke-width="1.5"'
            out.append(
                f'<rect class="{cls}" x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" fill="{fill}"{extra}>'
                f"<title>{escape(row_labels[i])} / {escape(col_labels[j])}: {_num(v)}</title></rect>"
            )
    out.extend(_legend(scale, left, top + nrows * _CELL + 10, alpha))
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        _write(path, text)
    return text


def _legend(scale: str, x0: int, y0: int, alpha: float) -> list[str]:
    steps = 10
    out = []
    lo, hi = (-1.0, 1.0) if scale == "diverging" else (0.0, 1.0)
    for k in range(steps + 1):
        v = lo + (hi - lo) * k / steps
        fill = diverging_color(v) if scale == "diverging" else sequential_color(v)
        out.append(f'<rect class="legend" x="{x0 + k * 12}" y="{y0}" width="12" height="8" fill="{fill}"/>')
    out.append(f'<text x="{x0}" y="{y0 + 20}">{lo:g}</text>')
    out.append(f'<text x="{x0 + steps * 12}" y="{y0 + 20}">{hi:g}</text>')
    if scale == "sequential":
        out.append(f'<text x="{x0 + steps * 12 + 20}" y="{y0 + 8}">outlined: p &lt; {alpha:g}</text>')
    return out


_PALETTE = ("#4d4d4d", "#e08214", "#1b7837", "#762a83", "#2166ac", "#b2182b")


def significant_features(results: Mapping[str, Sequence[TTestResult]], features: Sequence[str] = FEATURES) -> list[str]:
    """Features significant in at least one variant, in schema order."""
    keep = set()
    for rows in results.values():
        keep.update(r.feature for r in rows if r.defined and r.significant)
    return [f for f in features if f in keep]


def emit_significant_t_barchart(
    results: Mapping[str, Sequence[TTestResult]],
    alpha: float = 0.05,
    path: str | Path | None = None,
    features: Sequence[str] = FEATURES,
) -> str:
    """Grouped bars of t for every feature significant in any variant.

    All variants are drawn for each selected feature, significant or not;
    significant bars get a solid outline.
    """
    variants = list(results)
    chosen = significant_features(results, features)
    lookup = {v: {r.feature: r for r in rows} for v, rows in results.items()}
    bar_w, gap = 12, 16
    group_w = bar_w * max(1, len(variants)) + gap
    plot_h = 240
    left, top = 50, 40
    width = left + max(1, len(chosen)) * group_w + 140
    height = top + plot_h + 110
    tvals = [abs(lookup[v][f].t) for v in variants for f in chosen if lookup[v][f].defined]
    ymax = max([1.0, *tvals])
    ymax = math.ceil(ymax)
    zero_y = top + plot_h / 2

    def ypos(t: float) -> float:
        return zero_y - (t / ymax) * (plot_h / 2)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<text x="{left}" y="16" font-size="12">t statistics of significant features (p &lt; {alpha:g})</text>',
    ]
    for tick in (-ymax, -ymax / 2, 0.0, ymax / 2, ymax):
        y = ypos(tick)
        out.append(f'<text x="{left - 6}" y="{y + 3:.2f}" text-anchor="end">{tick:g}</text>')
    for gi, feature in enumerate(chosen):
        gx = left + gi * group_w + gap // 2
        for vi, variant in enumerate(variants):
            r = lookup[variant][feature]
            if not r.defined:
                continue
            y0, y1 = sorted((ypos(0.0), ypos(r.t)))
            extra = ' stroke="#000000" stroke-width="1"' if r.significant else ""
            out.append(
                f'<rect class="bar" x="{gx + vi * bar_w}" y="{y0:.2f}" width="{bar_w - 1}" height="{y1 - y0:.2f}" '
                f'fill="{_PALETTE[vi % len(_PALETTE)]}"{extra}><title>{escape(variant)} {escape(feature)}: '
                f"t={r.t:.4f}</title></rect>"
            )
        lx = gx + (bar_w * len(variants)) // 2
        ly = top + plot_h + 8
        out.append(f'<text x="{lx}" y="{ly}" transform="rotate(45 {lx} {ly})">{escape(feature)}</text>')
    out.append(
        f'<line class="zero" x1="{left}" y1="{zero_y:.2f}" x2="{left + max(1, len(chosen)) * group_w}" '
        f'y2="{zero_y:.2f}" stroke="#000000" stroke-width="1"/>'
    )
    if not chosen:
        out.append(f'<text class="caption" x="{left + 10}" y="{zero_y - 10:.2f}">No statistically significant features</text>')
    lx = left + max(1, len(chosen)) * group_w + 20
    for vi, variant in enumerate(variants):
        y = top + vi * 16
        out.append(f'<rect class="legend" x="{lx}" y="{y}" width="10" height="10" fill="{_PALETTE[vi % len(_PALETTE)]}"/>')
        out.append(f'<text x="{lx + 14}" y="{y + 9}">{escape(variant)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        _write(path, text)
    return text


# ---------------------------------------------------------------------------
# manifest


def build_manifest(
    out_dir: str | Path,
    outputs: Sequence[str | Path],
    inputs: Mapping[str, str | Path] | None = None,
    config_hash: str = "",
    dictionary_hash: str = "",
    counts: Mapping | None = None,
    n_per_cell: Mapping | None = None,
) -> dict:
    out_dir = Path(out_dir)
    return {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "config_hash": config_hash,
        "dictionary_hash": dictionary_hash,
        "inputs": {name: {"path": str(p), "sha256": sha256_file(p)} for name, p in sorted((inputs or {}).items())},
        "outputs": [
            {"path": str(Path(p).relative_to(out_dir)) if Path(p).is_relative_to(out_dir) else str(p),
             "sha256": sha256_file(p)}
            for p in outputs
        ],
        "counts": dict(counts or {}),
        "n_per_cell": dict(n_per_cell or {}),
    }


def _write(path: str | Path, text: str) -> None:
    atomic_write_text(path, text)
