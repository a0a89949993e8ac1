"""Glyph atlas and bitmap plumbing for the grid domain.

Boards render onto a (grid * CELL_PX) square float bitmap, background 0.0 and
ink 1.0. Every glyph is drawn procedurally at import time into a fixed 16x16
cell, so rasterization is bit-reproducible across runs and platforms: no font
files, no anti-aliasing.

Atlas requirements (asserted by the test suite, relied on elsewhere):
  - each glyph is a single 8-connected ink component;
  - at least one blank pixel of margin on every side, so components of
    adjacent cells can never merge;
  - glyphs are pairwise distinct, making rasterization injective.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

CELL_PX = 16

# Shape inventory: 10 polygon-ish glyphs, then 10 block letters. The first
# four are the conversion targets and must stay in this order.
SHAPE_NAMES = (
    "square", "triangle", "circle", "delta", "diamond",
    "pentagon", "hexagon", "star", "cross", "ring",
    "a", "b", "c", "e", "f", "h", "k", "m", "t", "y",
)

_FONT_5X7 = {
    "a": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "b": ("11110", "10001", "11110", "10001", "10001", "10001", "11110"),
    "c": ("01111", "10000", "10000", "10000", "10000", "10000", "01111"),
    "e": ("11111", "10000", "11110", "10000", "10000", "10000", "11111"),
    "f": ("11111", "10000", "11110", "10000", "10000", "10000", "10000"),
    "h": ("10001", "10001", "11111", "10001", "10001", "10001", "10001"),
    "k": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "m": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "t": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "y": ("10001", "01010", "00100", "00100", "00100", "00100", "00100"),
}


def _coords():
    # pixel-center coordinates of a 16x16 cell
    y, x = np.mgrid[0:CELL_PX, 0:CELL_PX]
    return x.astype(np.float64), y.astype(np.float64)


def _disk(r_outer, r_inner=0.0):
    x, y = _coords()
    d2 = (x - 7.5) ** 2 + (y - 7.5) ** 2
    return ((d2 <= r_outer**2) & (d2 >= r_inner**2)).astype(np.float64)


def _convex_polygon(n_sides, radius, phase):
    # regular polygon as intersection of half-planes
    x, y = _coords()
    inside = np.ones((CELL_PX, CELL_PX), dtype=bool)
    apothem = radius * np.cos(np.pi / n_sides)
    for i in range(n_sides):
        ang = phase + (2 * np.pi * i) / n_sides
        nx, ny = np.cos(ang), np.sin(ang)
        inside &= (x - 7.5) * nx + (y - 7.5) * ny <= apothem
    return inside.astype(np.float64)


def _triangle(point_up):
    # isoceles triangle spanning rows 2..13
    x, y = _coords()
    rows = y - 2.0 if point_up else 13.0 - y
    half = 0.5 + rows * 5.5 / 11.0
    band = (y >= 2) & (y <= 13)
    return (band & (np.abs(x - 7.5) <= half)).astype(np.float64)


def _letter(ch):
    bits = np.array([[int(c) for c in row] for row in _FONT_5X7[ch]], dtype=np.float64)
    big = np.kron(bits, np.ones((2, 2)))  # 10x14
    out = np.zeros((CELL_PX, CELL_PX), dtype=np.float64)
    out[1:15, 3:13] = big
    return out


def _build_glyphs():
    x, y = _coords()
    g = {}
    g["square"] = ((x >= 3) & (x <= 12) & (y >= 3) & (y <= 12)).astype(np.float64)
    g["triangle"] = _triangle(point_up=True)
    g["circle"] = _disk(5.8)
    g["delta"] = _triangle(point_up=False)
    g["diamond"] = (np.abs(x - 7.5) + np.abs(y - 7.5) <= 5.9).astype(np.float64)
    g["pentagon"] = _convex_polygon(5, 6.4, -np.pi / 2)
    g["hexagon"] = _convex_polygon(6, 6.2, 0.0)
    g["star"] = np.maximum(_triangle(True), _triangle(False))
    g["cross"] = (((np.abs(x - 7.5) <= 1.6) | (np.abs(y - 7.5) <= 1.6))
                  & (x >= 2) & (x <= 13) & (y >= 2) & (y <= 13)).astype(np.float64)
    g["ring"] = _disk(5.8, 3.2)
    for ch in _FONT_5X7:
        g[ch] = _letter(ch)
    for arr in g.values():
        arr.flags.writeable = False
    return g

GLYPHS = _build_glyphs()

_EIGHT_CONN = np.ones((3, 3), dtype=int)


def glyph(name: str) -> np.ndarray:
    """The 16x16 atlas bitmap for a shape name."""
    return GLYPHS[name]


def blank_board(grid: int = 3) -> np.ndarray:
    return np.zeros((grid * CELL_PX, grid * CELL_PX), dtype=np.float64)


def compose_raster(entries, grid: int = 3) -> np.ndarray:
    """Paste (glyph_bitmap, cell_x, cell_y) entries onto a blank board.

    Overlaps combine by max, keeping ink binary.
    """
    img = blank_board(grid)
    for bitmap, cx, cy in entries:
        r0, c0 = cy * CELL_PX, cx * CELL_PX
        block = img[r0:r0 + CELL_PX, c0:c0 + CELL_PX]
        np.maximum(block, bitmap, out=block)
    return img


def cell_crop(img: np.ndarray, cell_x: int, cell_y: int) -> np.ndarray:
    r0, c0 = cell_y * CELL_PX, cell_x * CELL_PX
    return img[r0:r0 + CELL_PX, c0:c0 + CELL_PX].copy()


def connected_components(img: np.ndarray) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Split a board bitmap into single-component bitmaps.

    Returns (full-size bitmap containing only that component, owning grid
    cell) per 8-connected ink component, ordered row-major by component
    top-left pixel. Empty image yields [].
    """
    mask = img > 0
    labels, n = ndimage.label(mask, structure=_EIGHT_CONN)
    comps = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        single = np.where(labels == k, img, 0.0)
        cy = int((rows.min() + rows.max()) // 2) // CELL_PX
        cx = int((cols.min() + cols.max()) // 2) // CELL_PX
        comps.append((int(rows.min()), int(cols.min()), single, (cx, cy)))
    comps.sort(key=lambda t: (t[0], t[1]))
    return [(single, cell) for _, _, single, cell in comps]


def write_pgm(path, img: np.ndarray) -> None:
    """Binary PGM (P5) dump, ink scaled to 255. Debugging aid."""
    h, w = img.shape
    data = (np.clip(img, 0.0, 1.0) * 255).round().astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    header, _, rest = raw.partition(b"255\n")
    magic, dims = header.split(None, 1)
    if magic != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = (int(v) for v in dims.split())
    data = np.frombuffer(rest[: w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(np.float64) / 255.0
