"""Dependency-free raster output: ASCII portable pixmaps with a fixed ramp.

One pixel per grid node, 256-entry color table interpolated from fixed
anchors, NaN nodes in neutral gray; plain-text P3 files diff cleanly.
"""

from __future__ import annotations

import numpy as np

from .grid import ScalarField

__all__ = ["color_table", "write_heatmap", "write_mask_heatmap"]

_ANCHORS = (
    (13, 8, 89),
    (34, 90, 166),
    (66, 166, 160),
    (176, 213, 111),
    (252, 216, 66),
    (220, 87, 36),
)

NAN_COLOR = (72, 72, 72)


def color_table() -> list[tuple[int, int, int]]:
    """Fixed 256-entry RGB ramp, linear between the module anchors."""
    table = []
    segs = len(_ANCHORS) - 1
    for i in range(256):
        t = i / 255.0 * segs
        k = min(int(t), segs - 1)
        frac = t - k
        a, b = _ANCHORS[k], _ANCHORS[k + 1]
        table.append(tuple(int(round(a[c] + frac * (b[c] - a[c]))) for c in range(3)))
    return table


_TABLE = color_table()


def _write_ppm(rgb: np.ndarray, path: str) -> None:
    h, w = rgb.shape[:2]
    with open(path, "w") as fh:
        fh.write(f"P3\n{w} {h}\n255\n")
        for row in rgb:
            fh.write(" ".join(f"{r} {g} {b}" for r, g, b in row))
            fh.write("\n")


def write_heatmap(
    field: ScalarField,
    path: str,
    vmin: float | None = None,
    vmax: float | None = None,
) -> None:
    """Render a scalar field to P3; range defaults to the finite min/max."""
    vals = field.values
    finite = np.isfinite(vals)
    if vmin is None:
        vmin = float(vals[finite].min()) if finite.any() else 0.0
    if vmax is None:
        vmax = float(vals[finite].max()) if finite.any() else 1.0
    span = vmax - vmin
    if span <= 0:
        idx = np.full(vals.shape, 128, dtype=int)
    else:
        idx = np.clip((vals - vmin) / span * 255.0, 0, 255)
        idx = np.where(finite, idx, 0).astype(int)
    table = np.array(_TABLE, dtype=np.uint8)
    rgb = table[idx]
    rgb[~finite] = NAN_COLOR
    _write_ppm(rgb, path)


def write_mask_heatmap(masks: list, base_mask, path: str) -> None:
    """Render nested region masks: level k colored along the ramp, the
    deepest drawn last; nodes outside base_mask are gray."""
    n = base_mask.shape[0]
    levels = np.full((n, n), -1, dtype=int)
    levels[base_mask] = 0
    for k, m in enumerate(masks, start=1):
        levels[m] = k
    top = max(len(masks), 1)
    idx = np.clip((levels.astype(float) / top) * 255.0, 0, 255).astype(int)
    table = np.array(_TABLE, dtype=np.uint8)
    rgb = table[idx]
    rgb[levels < 0] = NAN_COLOR
    _write_ppm(rgb, path)
