"""Random program generation under the well-formedness constraints, named
program datasets, and task synthesis via the symbolic reference interpreter.

Program counts per length are fully determined by vm.allowed_next; with the
default 8 transforms the totals for lengths 1..4 are 1, 9, 74, 659. The two
shipped dataset presets follow the same composition rule: exhaustive where
the requested count equals everything available, a unique uniform sample
otherwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .board import (
    FULL_VOCAB,
    GridPos,
    ShapeVocab,
    SymbolicDesc,
    TRANSFORM_IDS,
    SHIFT_IDS,
    BoardState,
    make_board,
)
from .search import Task
from .vm import OUT, RESET, allowed_next, apply_program_symbolic, well_formed

R20ALL = "R20ALL"
R20SHIFT = "R20SHIFT"
_PER_LENGTH_CAP = 1000
_MAX_LENGTH = 20
# The shift-only preset ships 485 of the 517 possible length-5 programs;
# every other length is exhaustive below the cap and capped at 1000 above it.
_R20SHIFT_LENGTH5 = 485


class DatagenError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    per_length: dict[int, int]
    transform_ids: tuple[str, ...] = TRANSFORM_IDS


@dataclass
class ProgramDataset:
    name: str
    programs: list[tuple[str, ...]]
    length_histogram: dict[int, int]

    def of_length(self, length: int) -> list[tuple[str, ...]]:
        return [p for p in self.programs if len(p) == length]


# ------------------------------------------------------------- counting

def _category(tok: Optional[str]) -> str:
    if tok is None:
        return "start"
    if tok == OUT:
        return OUT
    if tok == RESET:
        return RESET
    return "transform"


def _suffix_counts(max_len: int, n_transforms: int) -> list[dict[str, int]]:
    """f[m][cat] = number of valid length-m suffixes after a token of the
    given category, counting only suffixes that end the program with `out`.

    Driven by vm.allowed_next (with a single stand-in transform token, since
    adjacency only sees categories), so counting, enumeration, sampling, and
    search all share one rule definition.
    """
    stand_in = "transform"  # _category maps it to itself
    probe = {"start": None, "transform": stand_in, OUT: OUT, RESET: RESET}
    f = [{cat: 0 for cat in probe} for _ in range(max_len + 1)]
    f[0][OUT] = 1
    for m in range(1, max_len + 1):
        for cat, prev_tok in probe.items():
            f[m][cat] = sum(
                (n_transforms if tok == stand_in else 1) * f[m - 1][_category(tok)]
                for tok in allowed_next(prev_tok, (stand_in,))
            )
    return f


def count_programs(length: int, transform_ids: Sequence[str] = TRANSFORM_IDS) -> int:
    """Number of well-formed programs of exactly this length."""
    if length < 1:
        raise DatagenError("length must be >= 1")
    return _suffix_counts(length, len(transform_ids))[length]["start"]


def enumerate_programs(length: int, transform_ids: Sequence[str] = TRANSFORM_IDS
                       ) -> list[tuple[str, ...]]:
    """All well-formed programs of the given length, lexicographic in the
    token order (transforms as declared, then out, then reset)."""
    if length < 1:
        raise DatagenError("length must be >= 1")
    out: list[tuple[str, ...]] = []

    def extend(prefix: tuple[str, ...]):
        if len(prefix) == length:
            if prefix[-1] == OUT:
                out.append(prefix)
            return
        for tok in allowed_next(prefix[-1] if prefix else None, transform_ids):
            extend(prefix + (tok,))

    extend(())
    return out


def random_program(length: int, transform_ids: Sequence[str] = TRANSFORM_IDS,
                   rng: np.random.Generator | None = None) -> tuple[str, ...]:
    """Uniform sample over well-formed programs of exactly `length`.

    Sequential choice weighted by completion counts gives exact uniformity
    without rejection.
    """
    rng = rng if rng is not None else np.random.default_rng()
    counts = _suffix_counts(length, len(transform_ids))
    if counts[length]["start"] == 0:
        raise DatagenError(f"no valid programs of length {length}")
    prims: list[str] = []
    prev = None
    for remaining in range(length, 0, -1):
        toks = allowed_next(prev, transform_ids)
        weights = np.array([counts[remaining - 1][_category(t)] for t in toks], dtype=np.float64)
        tok = toks[rng.choice(len(toks), p=weights / weights.sum())]
        prims.append(tok)
        prev = tok
    assert well_formed(prims, transform_ids)
    return tuple(prims)


# -------------------------------------------------------------- datasets

def r20all_spec() -> DatasetSpec:
    per_length = {
        L: min(_PER_LENGTH_CAP, count_programs(L, TRANSFORM_IDS))
        for L in range(1, _MAX_LENGTH + 1)
    }
    return DatasetSpec(R20ALL, per_length, TRANSFORM_IDS)


def r20shift_spec() -> DatasetSpec:
    per_length = {
        L: min(_PER_LENGTH_CAP, count_programs(L, SHIFT_IDS))
        for L in range(1, _MAX_LENGTH + 1)
    }
    per_length[5] = _R20SHIFT_LENGTH5
    return DatasetSpec(R20SHIFT, per_length, SHIFT_IDS)


def build_dataset(spec: DatasetSpec, seed: int = 0) -> ProgramDataset:
    """Materialize a dataset: per length, either the full enumeration (when
    the request equals everything available) or a unique uniform sample."""
    programs: list[tuple[str, ...]] = []
    histogram: dict[int, int] = {}
    for length in sorted(spec.per_length):
        want = spec.per_length[length]
        if want == 0:
            continue
        have = count_programs(length, spec.transform_ids)
        if want > have:
            raise DatagenError(
                f"requested {want} programs of length {length}, only {have} exist")
        if want == have:
            chunk = enumerate_programs(length, spec.transform_ids)
        else:
            rng = np.random.default_rng([seed, length])
            picked: set[tuple[str, ...]] = set()
            while len(picked) < want:
                picked.add(random_program(length, spec.transform_ids, rng))
            chunk = sorted(picked)
        programs.extend(chunk)
        histogram[length] = len(chunk)
    return ProgramDataset(spec.name, programs, histogram)


def save_dataset(ds: ProgramDataset, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "programs.txt", "w") as f:
        for p in ds.programs:
            f.write(" ".join(p) + "\n")
    manifest = {
        "name": ds.name,
        "total": len(ds.programs),
        "length_histogram": {str(k): v for k, v in sorted(ds.length_histogram.items())},
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def load_dataset(in_dir) -> ProgramDataset:
    in_dir = Path(in_dir)
    with open(in_dir / "manifest.json") as f:
        manifest = json.load(f)
    with open(in_dir / "programs.txt") as f:
        programs = [tuple(line.split()) for line in f if line.strip()]
    histogram = {int(k): v for k, v in manifest["length_histogram"].items()}
    return ProgramDataset(manifest["name"], programs, histogram)


# ----------------------------------------------------------------- tasks

def random_board(rng: np.random.Generator, vocab: ShapeVocab = FULL_VOCAB,
                 shape_names: Sequence[str] | None = None,
                 max_shapes: int = 3) -> BoardState:
    """1..max_shapes shapes (uniform) on distinct cells, drawn from the
    given name pool (default: the full vocabulary)."""
    names = tuple(shape_names) if shape_names is not None else vocab.names
    if not names:
        raise DatagenError("empty shape pool")
    n = int(rng.integers(1, max_shapes + 1))
    g = vocab.grid
    cells = rng.choice(g * g, size=n, replace=False)
    descs = [
        SymbolicDesc(vocab.shape_index(names[int(rng.integers(len(names)))]),
                     GridPos(int(c) % g, int(c) // g))
        for c in cells
    ]
    return make_board(descs, grid=g)


def make_task(p: Sequence[str], n_examples: int = 3,
              rng: np.random.Generator | None = None,
              vocab: ShapeVocab = FULL_VOCAB,
              shape_names: Sequence[str] | None = None,
              max_shapes: int = 3) -> Task:
    """Distinct random inputs run through the reference interpreter, plus a
    fresh query board."""
    if n_examples < 1:
        raise DatagenError("need at least one example")
    rng = rng if rng is not None else np.random.default_rng()
    examples = []
    seen_inputs: set[frozenset] = set()
    attempts = 0
    while len(examples) < n_examples:
        b_in = random_board(rng, vocab, shape_names, max_shapes)
        attempts += 1
        if attempts > 1000 * n_examples:
            raise DatagenError("board space exhausted while sampling examples")
        if b_in.descs in seen_inputs:
            continue
        seen_inputs.add(b_in.descs)
        examples.append((b_in, apply_program_symbolic(p, b_in, vocab)))
    query = random_board(rng, vocab, shape_names, max_shapes)
    return Task(examples=tuple(examples), query=query, source=tuple(p))


def task_to_json(task: Task, vocab: ShapeVocab = FULL_VOCAB) -> str:
    from .board import board_to_json

    payload = {
        "examples": [
            {"input": json.loads(board_to_json(i, vocab)),
             "output": json.loads(board_to_json(o, vocab))}
            for i, o in task.examples
        ],
        "query": json.loads(board_to_json(task.query, vocab)),
        "source": " ".join(task.source) if task.source else None,
    }
    return json.dumps(payload)


def task_from_json(text: str, vocab: ShapeVocab = FULL_VOCAB) -> Task:
    from .board import board_from_json

    data = json.loads(text)
    examples = tuple(
        (board_from_json(json.dumps(e["input"]), vocab),
         board_from_json(json.dumps(e["output"]), vocab))
        for e in data["examples"]
    )
    query = board_from_json(json.dumps(data["query"]), vocab)
    source = tuple(data["source"].split()) if data.get("source") else None
    return Task(examples=examples, query=query, source=source)
