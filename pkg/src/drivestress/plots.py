"""Minimal SVG emission for the two report figures.

Both heatmaps use a white-to-black ramp where darker means larger, matching
how the similarity matrices and kernel-weight grids are read. Output is
plain hand-assembled SVG so reports stay dependency-free and byte-stable.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CELL = 22
MARGIN_LEFT = 110
MARGIN_TOP = 40
FONT = "font-family=\"monospace\" font-size=\"11\""


def _shade(value: float, vmin: float, vmax: float) -> str:
    if vmax <= vmin:
        frac = 0.0
    else:
        frac = (value - vmin) / (vmax - vmin)
    frac = min(max(frac, 0.0), 1.0)
    level = int(round(255 * (1.0 - frac)))
    return f"#{level:02x}{level:02x}{level:02x}"


def _svg_document(width: int, height: int, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def heatmap_svg(
    matrix: np.ndarray,
    row_labels: list[str],
    col_labels: list[str],
    title: str = "",
    vmin: float | None = None,
    vmax: float | None = None,
    outlines: list[tuple[int, int]] | None = None,
) -> str:
    """Render a matrix as an SVG heatmap string.

    ``outlines`` lists (start, size) runs of rows/columns to frame in red,
    used to mark cluster blocks on the similarity matrix.
    """
    matrix = np.asarray(matrix, dtype=float)
    n_rows, n_cols = matrix.shape
    vmin = float(np.min(matrix)) if vmin is None else vmin
    vmax = float(np.max(matrix)) if vmax is None else vmax
    width = MARGIN_LEFT + n_cols * CELL + 20
    height = MARGIN_TOP + n_rows * CELL + 30

    body = []
    if title:
        body.append(f'<text x="{MARGIN_LEFT}" y="18" {FONT}>{escape(title)}</text>')
    for j, label in enumerate(col_labels):
        x = MARGIN_LEFT + j * CELL + CELL // 2
        body.append(
            f'<text x="{x}" y="{MARGIN_TOP - 6}" text-anchor="middle" {FONT}>'
            f"{escape(str(label))}</text>"
        )
    for i, label in enumerate(row_labels):
        ytext = MARGIN_TOP + i * CELL + CELL // 2 + 4
        body.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{ytext}" text-anchor="end" {FONT}>'
            f"{escape(str(label))}</text>"
        )
        for j in range(n_cols):
            x = MARGIN_LEFT + j * CELL
            yrect = MARGIN_TOP + i * CELL
            color = _shade(matrix[i, j], vmin, vmax)
            body.append(
                f'<rect x="{x}" y="{yrect}" width="{CELL}" height="{CELL}" '
                f'fill="{color}" stroke="#dddddd" stroke-width="0.5"/>'
            )
    for start, size in outlines or []:
        x = MARGIN_LEFT + start * CELL
        yrect = MARGIN_TOP + start * CELL
        body.append(
            f'<rect x="{x}" y="{yrect}" width="{size * CELL}" height="{size * CELL}" '
            'fill="none" stroke="#cc0000" stroke-width="2"/>'
        )
    return _svg_document(width, height, body)


def similarity_heatmap(
    W: np.ndarray,
    drive_ids: list[str],
    cluster_of: dict[str, int],
    title: str = "drive similarity",
) -> str:
    """Similarity heatmap with drives ordered by cluster and blocks outlined."""
    order = sorted(range(len(drive_ids)), key=lambda i: (cluster_of[drive_ids[i]], drive_ids[i]))
    W_ord = np.asarray(W)[np.ix_(order, order)]
    labels = [drive_ids[i] for i in order]
    outlines = []
    start = 0
    while start < len(order):
        cluster = cluster_of[labels[start]]
        size = 1
        while start + size < len(order) and cluster_of[labels[start + size]] == cluster:
            size += 1
        outlines.append((start, size))
        start += size
    return heatmap_svg(
        W_ord, labels, labels, title=title, vmin=0.0, vmax=1.0, outlines=outlines
    )


def eta_heatmap(rows: list[tuple[str, list[float]]], view_names: tuple[str, ...]) -> str:
    """Kernel-weight heatmap: one row per (fold, task), darker = larger."""
    if not rows:
        matrix = np.zeros((1, len(view_names)))
        labels = ["(none)"]
    else:
        matrix = np.array([weights for _, weights in rows], dtype=float)
        labels = [label for label, _ in rows]
    return heatmap_svg(
        matrix,
        labels,
        list(view_names),
        title="kernel weights",
        vmin=0.0,
        vmax=1.0,
    )


def write_svg(text: str, path: str | Path) -> None:
    Path(path).write_text(text, encoding="utf-8")
