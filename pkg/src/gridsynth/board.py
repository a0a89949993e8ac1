"""Board domain: shapes on a small grid, multi-hot codec, oracle transforms.

A board is a set of symbolic descriptions (shape label + grid cell), at most
one shape per cell, optionally paired with its rasterization. Descriptions
encode to a multi-hot vector laid out as three concatenated one-hot segments
[shape | column | row]; the shape segment may include one extra slot for
shapes outside the configured vocabulary ("unseen").
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import raster

DEFAULT_GRID = 3

SHIFT_IDS = ("shift-up", "shift-down", "shift-left", "shift-right")
CONVERSION_TARGETS = ("square", "triangle", "circle", "delta")
CONVERSION_IDS = tuple("to-" + name for name in CONVERSION_TARGETS)
TRANSFORM_IDS = SHIFT_IDS + CONVERSION_IDS

_SHIFT_DELTA = {
    "shift-up": (0, -1),
    "shift-down": (0, 1),
    "shift-left": (-1, 0),
    "shift-right": (1, 0),
}


@dataclass(frozen=True, slots=True)
class GridPos:
    x: int
    y: int


@dataclass(frozen=True, slots=True)
class SymbolicDesc:
    """One shape: vocabulary index (possibly the unseen slot) + position."""
    shape: int
    pos: GridPos


@dataclass(frozen=True)
class ShapeVocab:
    """Shape name inventory and multi-hot geometry.

    `names` lists the shapes that get their own one-hot slot; anything else
    maps to the trailing `unseen` slot when `include_unseen` is set.
    `position_only` drops the shape segment entirely (positions still encode).
    """
    names: tuple[str, ...] = raster.SHAPE_NAMES
    include_unseen: bool = True
    grid: int = DEFAULT_GRID
    position_only: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate shape names")
        if self.vocab_len < 1 and not self.position_only:
            raise ValueError("empty vocabulary needs the unseen slot")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @property
    def vocab_len(self) -> int:
        return len(self.names) + (1 if self.include_unseen else 0)

    @property
    def unseen_index(self) -> int:
        if not self.include_unseen:
            raise ValueError("vocabulary has no unseen slot")
        return len(self.names)

    @property
    def segments(self) -> tuple[int, ...]:
        pos = (self.grid, self.grid)
        return pos if self.position_only else (self.vocab_len, *pos)

    @property
    def multihot_len(self) -> int:
        return sum(self.segments)

    def shape_index(self, name: str) -> int:
        """Index for a shape name; names outside the vocabulary map to unseen."""
        idx = self._index.get(name)
        if idx is None:
            return self.unseen_index
        return idx

    def shape_name(self, index: int) -> str:
        if self.include_unseen and index == self.unseen_index:
            return "unseen"
        return self.names[index]

    def is_unseen(self, index: int) -> bool:
        return self.include_unseen and index == self.unseen_index


FULL_VOCAB = ShapeVocab()


@dataclass(frozen=True, eq=False)
class BoardState:
    """descs is None only for raster-only boards (pure pixel pipelines)."""
    descs: Optional[frozenset[SymbolicDesc]]
    raster: Optional[np.ndarray] = None


class BoardError(ValueError):
    pass


def make_board(descs: Iterable[SymbolicDesc], raster_img: np.ndarray | None = None,
               grid: int = DEFAULT_GRID) -> BoardState:
    descs = frozenset(descs)
    cells = {d.pos for d in descs}
    if len(cells) != len(descs):
        raise BoardError("more than one shape in a cell")
    for d in descs:
        if not (0 <= d.pos.x < grid and 0 <= d.pos.y < grid):
            raise BoardError(f"position {d.pos} outside the {grid}x{grid} grid")
    return BoardState(descs=descs, raster=raster_img)


def encode_multihot(desc: SymbolicDesc, vocab: ShapeVocab) -> np.ndarray:
    """Multi-hot vector [shape one-hot | x one-hot | y one-hot]."""
    v = np.zeros(vocab.multihot_len, dtype=np.float64)
    offset = 0
    if not vocab.position_only:
        if not 0 <= desc.shape < vocab.vocab_len:
            raise BoardError(f"shape index {desc.shape} outside vocabulary")
        v[desc.shape] = 1.0
        offset = vocab.vocab_len
    v[offset + desc.pos.x] = 1.0
    v[offset + vocab.grid + desc.pos.y] = 1.0
    return v


def decode_multihot(v: np.ndarray, vocab: ShapeVocab) -> SymbolicDesc:
    """Per-segment argmax; works on arbitrary real vectors, not just one-hots.

    Ties break toward the lowest index (np.argmax contract).
    """
    v = np.asarray(v)
    if v.shape != (vocab.multihot_len,):
        raise BoardError(f"expected length {vocab.multihot_len}, got {v.shape}")
    offset = 0
    shape = 0
    if not vocab.position_only:
        shape = int(np.argmax(v[: vocab.vocab_len]))
        offset = vocab.vocab_len
    x = int(np.argmax(v[offset: offset + vocab.grid]))
    y = int(np.argmax(v[offset + vocab.grid: offset + 2 * vocab.grid]))
    return SymbolicDesc(shape, GridPos(x, y))


def transform_desc(name: str, desc: SymbolicDesc, vocab: ShapeVocab) -> SymbolicDesc:
    """Oracle semantics for one description; transforms are total functions."""
    if name in _SHIFT_DELTA:
        dx, dy = _SHIFT_DELTA[name]
        g = vocab.grid
        return SymbolicDesc(desc.shape, GridPos((desc.pos.x + dx) % g, (desc.pos.y + dy) % g))
    if name in CONVERSION_IDS:
        target = name[3:]
        return SymbolicDesc(vocab.shape_index(target), desc.pos)
    raise BoardError(f"unknown transform {name!r}")


def ground_truth_transform(name: str, b: BoardState, vocab: ShapeVocab = FULL_VOCAB) -> BoardState:
    """Symbolic oracle: shifts wrap toroidally, conversions relabel in place."""
    if b.descs is None:
        raise BoardError("oracle transform needs symbolic descriptions")
    return make_board(transform_desc(name, d, vocab) for d in b.descs)


def rasterize(descs: Iterable[SymbolicDesc], vocab: ShapeVocab) -> np.ndarray:
    """Render seen shapes from the atlas. Unseen labels carry no glyph here;
    rendering those goes through provenance (see latent.decode_latents)."""
    entries = []
    for d in descs:
        if vocab.is_unseen(d.shape):
            raise BoardError("cannot rasterize an unseen label without provenance")
        entries.append((raster.glyph(vocab.shape_name(d.shape)), d.pos.x, d.pos.y))
    return raster.compose_raster(entries, grid=vocab.grid)


def with_raster(b: BoardState, vocab: ShapeVocab = FULL_VOCAB) -> BoardState:
    if b.raster is not None:
        return b
    return BoardState(descs=b.descs, raster=rasterize(b.descs, vocab))


def relabel_board(b: BoardState, src: ShapeVocab, dst: ShapeVocab) -> BoardState:
    """Reindex a board's descriptions from one vocabulary into another.

    Shapes without a slot in `dst` become `unseen`; a raster is attached in
    that case (rendered with `src`, which must know every shape) so pixel
    provenance survives the relabeling.
    """
    if b.descs is None:
        raise BoardError("relabeling needs symbolic descriptions")
    descs = []
    any_unseen = False
    for d in b.descs:
        name = src.shape_name(d.shape)
        idx = dst.shape_index(name)
        any_unseen = any_unseen or dst.is_unseen(idx)
        descs.append(SymbolicDesc(idx, d.pos))
    img = b.raster
    if img is None and any_unseen:
        img = rasterize(b.descs, src)
    return BoardState(descs=frozenset(descs), raster=img)


def _element_key(d: SymbolicDesc, b: BoardState, vocab: ShapeVocab):
    # identity = rendered glyph + position, so an unseen-labelled element
    # equals a seen one exactly when their pixels agree
    if vocab.is_unseen(d.shape):
        if b.raster is None:
            raise BoardError("unseen element without raster provenance")
        bitmap = raster.cell_crop(b.raster, d.pos.x, d.pos.y)
    else:
        bitmap = raster.glyph(vocab.shape_name(d.shape))
    return (bitmap.tobytes(), d.pos.x, d.pos.y)


def element_keys(b: BoardState, vocab: ShapeVocab = FULL_VOCAB) -> frozenset:
    """Comparable identity per element: (glyph bytes, x, y). Unseen labels
    resolve through the board raster; search match-counting keys into this
    same space."""
    if b.descs is None:
        raise BoardError("raster-only board has no element keys")
    return frozenset(_element_key(d, b, vocab) for d in b.descs)


def board_equal(a: BoardState, b: BoardState, vocab: ShapeVocab = FULL_VOCAB) -> bool:
    """Set equality over (glyph, position) elements; raster-only boards
    compare pixel-exact."""
    if a.descs is None or b.descs is None:
        if a.raster is None or b.raster is None:
            raise BoardError("raster-only comparison needs both rasters")
        return a.raster.shape == b.raster.shape and bool(np.array_equal(a.raster, b.raster))
    return element_keys(a, vocab) == element_keys(b, vocab)


def board_to_json(b: BoardState, vocab: ShapeVocab = FULL_VOCAB) -> str:
    if b.descs is None:
        raise BoardError("raster-only board has no symbolic serialization")
    shapes = sorted(
        ({"shape": vocab.shape_name(d.shape), "x": d.pos.x, "y": d.pos.y} for d in b.descs),
        key=lambda s: (s["y"], s["x"]),
    )
    return json.dumps({"shapes": shapes})


def board_from_json(text: str, vocab: ShapeVocab = FULL_VOCAB) -> BoardState:
    data = json.loads(text)
    descs = [
        SymbolicDesc(vocab.shape_index(s["shape"]), GridPos(int(s["x"]), int(s["y"])))
        for s in data["shapes"]
    ]
    return make_board(descs, grid=vocab.grid)


def all_descs(vocab: ShapeVocab, include_unseen: bool = True) -> list[SymbolicDesc]:
    """Every description in the vocabulary cross positions, a tiny exhaustive
    universe used all over training and testing."""
    n = vocab.vocab_len if (include_unseen and vocab.include_unseen) else len(vocab.names)
    if vocab.position_only:
        n = min(n, 1)
    return [
        SymbolicDesc(s, GridPos(x, y))
        for s in range(n)
        for y in range(vocab.grid)
        for x in range(vocab.grid)
    ]
