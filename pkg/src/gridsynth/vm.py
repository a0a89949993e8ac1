"""Linear program execution over (input, memory, output) element buffers.

A program is a sequence of tokens: transform ids plus the special ops `out`
(append every memory element to the output) and `reset` (memory back to the
input). Memory starts as a copy of the input; an `empty_memory` flag gives
the start-empty variant for A/B comparison.

Elements are (payload, provenance) pairs. The payload is a latent vector in
neural execution or a SymbolicDesc in the reference interpreter; provenance
carries the source glyph so shapes labelled `unseen` can be re-rendered and
compared after execution. Transforms rewrite payloads; shape conversions also
overwrite the provenance glyph with the target's atlas entry.

Well-formedness (the exact generator semantics, validated empirically by the
enumeration counts in datagen):
  - programs are non-empty and end with `out`;
  - `out` never immediately follows `out`;
  - `reset` appears only at the start or immediately after `out`/`reset`;
  - transforms never immediately follow `reset`.
So: after a transform {transforms, out}; after `out` {transforms, reset};
after `reset` {out, reset}; at the start, anything.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import raster
from .board import (
    BoardState,
    BoardError,
    FULL_VOCAB,
    ShapeVocab,
    SymbolicDesc,
    TRANSFORM_IDS,
    CONVERSION_IDS,
    make_board,
    transform_desc,
)

OUT = "out"
RESET = "reset"
SPECIAL_OPS = (OUT, RESET)

_ATLAS_BYTES = {name: g.tobytes() for name, g in raster.GLYPHS.items()}


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class Provenance:
    """Source pixels of one element; `key` is the precomputed byte identity."""
    glyph: np.ndarray
    key: bytes

    @staticmethod
    def from_atlas(name: str) -> "Provenance":
        return Provenance(raster.glyph(name), _ATLAS_BYTES[name])

    @staticmethod
    def from_bitmap(bitmap: np.ndarray) -> "Provenance":
        return Provenance(bitmap, bitmap.tobytes())


Element = tuple[object, Optional[Provenance]]  # (payload, provenance)
ApplyFn = Callable[[str, Element], Element]


# ------------------------------------------------------------ program text

def allowed_next(prev: str | None, transform_ids: Sequence[str] = TRANSFORM_IDS) -> tuple[str, ...]:
    """Tokens that may legally follow `prev` (None = program start).

    This single definition drives the validator, the dataset generator, and
    the expansion filters of every searcher.
    """
    toks = list(transform_ids) if prev != RESET else []
    if prev != OUT:
        toks.append(OUT)
    if prev is None or prev in SPECIAL_OPS:
        toks.append(RESET)
    return tuple(toks)


def well_formed(prims: Sequence[str], transform_ids: Sequence[str] = TRANSFORM_IDS) -> bool:
    if not prims or prims[-1] != OUT:
        return False
    prev = None
    for p in prims:
        if p not in allowed_next(prev, transform_ids):
            return False
        prev = p
    return True


def validate_program(prims: Sequence[str], transform_ids: Sequence[str] = TRANSFORM_IDS) -> None:
    known = set(transform_ids) | set(SPECIAL_OPS)
    for p in prims:
        if p not in known:
            raise ProgramError(f"unknown primitive {p!r}")
    if not well_formed(prims, transform_ids):
        raise ProgramError(f"ill-formed program {' '.join(prims)!r}")


def parse_program(text: str) -> tuple[str, ...]:
    """Whitespace-separated token text -> program; round-trips losslessly."""
    prims = tuple(text.split())
    if not prims:
        raise ProgramError("empty program text")
    return prims


def format_program(prims: Sequence[str]) -> str:
    return " ".join(prims)


# -------------------------------------------------------------- execution

@dataclass(frozen=True)
class ProgramState:
    input: tuple[Element, ...]
    memory: tuple[Element, ...]
    output: tuple[Element, ...]


def init_state(elems: Iterable[Element], empty_memory: bool = False) -> ProgramState:
    elems = tuple(elems)
    return ProgramState(input=elems, memory=() if empty_memory else elems, output=())


def step(state: ProgramState, prim: str, apply_fn: ApplyFn) -> ProgramState:
    """One primitive. Pure: returns a new state, never mutates (this is what
    makes search-node caching sound)."""
    if prim == OUT:
        return ProgramState(state.input, state.memory, state.output + state.memory)
    if prim == RESET:
        return ProgramState(state.input, state.input, state.output)
    return ProgramState(state.input, tuple(apply_fn(prim, e) for e in state.memory), state.output)


def run(prims: Sequence[str], state: ProgramState, apply_fn: ApplyFn) -> ProgramState:
    for p in prims:
        state = step(state, p, apply_fn)
    return state


# -------------------------------------------- symbolic reference executor

class SymbolicExecutor:
    """Runs programs on SymbolicDesc payloads with the oracle transforms.

    This is the ground-truth interpreter: datagen builds task targets with it
    and every neural run is graded against it.
    """

    def __init__(self, vocab: ShapeVocab = FULL_VOCAB,
                 transform_ids: Sequence[str] = TRANSFORM_IDS):
        self.vocab = vocab
        self.transform_ids = tuple(transform_ids)

    def encode_board(self, b: BoardState) -> tuple[Element, ...]:
        if b.descs is None:
            raise BoardError("symbolic execution needs descriptions")
        elems = []
        for d in sorted(b.descs, key=lambda d: (d.shape, d.pos.y, d.pos.x)):
            if self.vocab.is_unseen(d.shape):
                if b.raster is None:
                    raise BoardError("unseen shape without raster provenance")
                prov = Provenance.from_bitmap(raster.cell_crop(b.raster, d.pos.x, d.pos.y))
            else:
                prov = Provenance.from_atlas(self.vocab.shape_name(d.shape))
            elems.append((d, prov))
        return tuple(elems)

    def apply(self, prim: str, elem: Element) -> Element:
        d, prov = elem
        nd = transform_desc(prim, d, self.vocab)
        if prim in CONVERSION_IDS:
            prov = Provenance.from_atlas(prim[3:])
        return (nd, prov)

    def decode_element(self, elem: Element):
        d, prov = elem
        return (prov.key, d.pos.x, d.pos.y)

    def element_desc(self, elem: Element) -> SymbolicDesc:
        return elem[0]

    def elements_to_board(self, elems: Sequence[Element]) -> BoardState:
        return collapse_elements(((e[0], e[1]) for e in elems), self.vocab)


def collapse_elements(pairs: Iterable[tuple[SymbolicDesc, Optional[Provenance]]],
                      vocab: ShapeVocab) -> BoardState:
    """Set-collapse decoded (desc, provenance) pairs into a board.

    Duplicates (same glyph identity at the same cell) merge. A raster is
    attached only when unseen labels are present, since those boards cannot
    be re-rendered from descriptions alone.
    """
    seen = {}
    for d, prov in pairs:
        if vocab.is_unseen(d.shape):
            if prov is None:
                raise BoardError("decoded unseen element without provenance")
            key = (prov.key, d.pos.x, d.pos.y)
        else:
            key = (_ATLAS_BYTES[vocab.shape_name(d.shape)], d.pos.x, d.pos.y)
        seen.setdefault(key, (d, prov))
    descs = [d for d, _ in seen.values()]
    any_unseen = any(vocab.is_unseen(d.shape) for d in descs)
    img = None
    if any_unseen:
        img = raster.compose_raster(
            ((prov.glyph if vocab.is_unseen(d.shape) else raster.glyph(vocab.shape_name(d.shape)),
              d.pos.x, d.pos.y) for d, prov in seen.values()),
            grid=vocab.grid,
        )
    # duplicate positions may legitimately survive collapse when two distinct
    # glyphs land on one cell, so bypass make_board's one-per-cell check
    return BoardState(descs=frozenset(descs), raster=img)


def apply_program_symbolic(p: Sequence[str], q: BoardState,
                           vocab: ShapeVocab = FULL_VOCAB,
                           empty_memory: bool = False) -> BoardState:
    """Reference semantics; the oracle for program-level behavior."""
    ex = SymbolicExecutor(vocab)
    state = run(p, init_state(ex.encode_board(q), empty_memory), ex.apply)
    return ex.elements_to_board(state.output)


def apply_program(p: Sequence[str], q: BoardState, space, tset,
                  empty_memory: bool = False) -> BoardState:
    """Neural semantics: encode with `space`, manipulate latents with `tset`,
    decode the output buffer."""
    from .transforms import NeuralExecutor  # runtime import: executor binds both

    ex = NeuralExecutor(space, tset)
    state = run(p, init_state(ex.encode_board(q), empty_memory), ex.apply)
    return ex.elements_to_board(state.output)


def apply_program_vectors(p: Sequence[str], tset, q: BoardState, space,
                          empty_memory: bool = False) -> BoardState:
    """Vector-conditioned variant; `tset` holds the shared net + vectors."""
    if tset.mode != "vector-conditioned":
        raise ProgramError("apply_program_vectors needs a vector-conditioned set")
    return apply_program(p, q, space, tset, empty_memory)
