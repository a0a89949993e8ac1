"""Program synthesis over example pairs: exhaustive BFS, pruned BFS with
cached partial execution, and score-guided beam search.

All searchers take an executor (symbolic reference or neural, same duck
type) and share the expansion filters of vm.allowed_next, so the searched
space is exactly the space datagen samples from. Budgets are cooperative
wall-clock deadlines checked between expansions.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .board import BoardState, board_equal, element_keys
from .vm import OUT, allowed_next, init_state, run, step

CONVERSION_BONUS = 0.5  # score bump per conversion aimed at a target shape


@dataclass(frozen=True)
class Task:
    """Example (input, output) pairs plus the query board to answer."""
    examples: tuple[tuple[BoardState, BoardState], ...]
    query: BoardState
    source: Optional[tuple[str, ...]] = None  # generating program, if known


@dataclass
class SearchStats:
    algorithm: str = ""
    nodes_expanded: int = 0
    candidates_checked: int = 0
    pruned_wrong_element: int = 0
    pruned_fewer_matches: int = 0
    wall_time: float = 0.0
    timed_out: bool = False
    found_length: Optional[int] = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class Budget:
    """Soft wall-clock limit; running out is an outcome, not an error."""

    def __init__(self, seconds: float | None):
        self.deadline = None if seconds is None else time.monotonic() + seconds

    def exceeded(self) -> bool:
        return self.deadline is not None and time.monotonic() > self.deadline


def satisfies(examples, p: Sequence[str], executor) -> bool:
    """True iff running p maps every example input to its output exactly."""
    for b_in, b_out in examples:
        state = run(p, init_state(executor.encode_board(b_in)), executor.apply)
        if not board_equal(executor.elements_to_board(state.output), b_out, executor.vocab):
            return False
    return True


def _targets(examples, vocab):
    return [element_keys(b_out, vocab) for _, b_out in examples]


def naive_bfs(max_depth: int, examples, executor, budget: Budget | None = None,
              lifo: bool = False, stats: SearchStats | None = None):
    """Exhaustive search; every generated candidate re-executes from scratch.

    Each child produced by the expansion filter is immediately tested by a
    full run over all examples — nothing is cached, nothing is pruned, and
    prefixes that cannot possibly match (no trailing `out`) are paid for all
    the same. That per-candidate cost is the point of this baseline; the
    cached searchers below exist to beat it. FIFO frontier gives true
    breadth-first order (shortest satisfying program wins); the lifo flag
    flips to stack order for comparison runs.
    """
    stats = stats if stats is not None else SearchStats()
    stats.algorithm = "naive-lifo" if lifo else "naive"
    budget = budget or Budget(None)
    t0 = time.monotonic()
    try:
        ids = executor.transform_ids
        frontier = deque([()])
        while frontier:
            prefix = frontier.pop() if lifo else frontier.popleft()
            stats.nodes_expanded += 1
            prev = prefix[-1] if prefix else None
            for tok in allowed_next(prev, ids):
                if budget.exceeded():
                    stats.timed_out = True
                    return None
                child = prefix + (tok,)
                stats.candidates_checked += 1
                if satisfies(examples, child, executor):
                    stats.found_length = len(child)
                    return child
                if len(child) < max_depth:
                    frontier.append(child)
        return None
    finally:
        stats.wall_time = time.monotonic() - t0


@dataclass
class _Node:
    program: tuple[str, ...]
    memories: list  # per example: tuple of elements
    out_keys: list  # per example: frozenset of decoded output element keys
    matches: int
    score: float = 0.0
    order: tuple = field(default=())  # lexicographic rank for tie-breaks


def _expand(node: _Node, tok: str, executor, inputs, tok_rank):
    """One child node; decoding happens only when tok is `out`."""
    if tok == OUT:
        new_keys = [
            ok | frozenset(executor.decode_element(e) for e in mem)
            for ok, mem in zip(node.out_keys, node.memories)
        ]
        return _Node(node.program + (tok,), node.memories, new_keys, 0,
                     order=node.order + (tok_rank,))
    if tok == "reset":
        mems = [tuple(inp) for inp in inputs]
    else:
        mems = [tuple(executor.apply(tok, e) for e in mem) for mem in node.memories]
    return _Node(node.program + (tok,), mems, node.out_keys, node.matches,
                 order=node.order + (tok_rank,))


def _finish(node: _Node, targets) -> bool:
    return all(ok == tg for ok, tg in zip(node.out_keys, targets))


def _from_scratch(node: _Node, executor, inputs) -> _Node:
    """Replace a node's cached buffers with ones re-executed from the start;
    used by the cross-check flag to certify incremental expansion."""
    mems, keys = [], []
    for inp in inputs:
        st = run(node.program, init_state(inp), executor.apply)
        mems.append(tuple(st.memory))
        keys.append(frozenset(executor.decode_element(e) for e in st.output))
    return _Node(node.program, mems, keys, node.matches, node.score, node.order)


def pruned_bfs(max_depth: int, examples, executor, budget: Budget | None = None,
               stats: SearchStats | None = None, verify_candidates: bool = True,
               recompute_states: bool = False):
    """BFS with partial-state caching and the two output prunes.

    Each node keeps its per-example memory buffers and the decoded output
    key set, so expanding by a transform costs one net application per
    memory element and nothing is ever re-executed; decoding happens only at
    `out`. Prunes: (1) branch emitted an element absent from the target;
    (2) branch has fewer matches than the best seen anywhere so far.

    recompute_states discards the cache and rebuilds every child by full
    re-execution — same answers, naive's cost — so tests can certify the
    incremental bookkeeping.
    """
    stats = stats if stats is not None else SearchStats()
    stats.algorithm = "pruned"
    budget = budget or Budget(None)
    t0 = time.monotonic()
    try:
        ids = executor.transform_ids
        ranks = {tok: i for i, tok in enumerate(tuple(ids) + (OUT, "reset"))}
        targets = _targets(examples, executor.vocab)
        inputs = [executor.encode_board(b_in) for b_in, _ in examples]
        root = _Node((), [tuple(i) for i in inputs], [frozenset() for _ in inputs], 0)
        best_matches = 0
        frontier = deque([root])
        while frontier:
            node = frontier.popleft()
            stats.nodes_expanded += 1
            if budget.exceeded():
                stats.timed_out = True
                return None
            prev = node.program[-1] if node.program else None
            for tok in allowed_next(prev, ids):
                if len(node.program) + 1 > max_depth:
                    break
                child = _expand(node, tok, executor, inputs, ranks[tok])
                if recompute_states:
                    child = _from_scratch(child, executor, inputs)
                if tok == OUT:
                    if any(not ok <= tg for ok, tg in zip(child.out_keys, targets)):
                        stats.pruned_wrong_element += 1
                        continue
                    child.matches = sum(len(ok) for ok in child.out_keys)
                    stats.candidates_checked += 1
                    if _finish(child, targets):
                        if not verify_candidates or satisfies(examples, child.program, executor):
                            stats.found_length = len(child.program)
                            return child.program
                if child.matches < best_matches:
                    stats.pruned_fewer_matches += 1
                    continue
                best_matches = max(best_matches, child.matches)
                if len(child.program) < max_depth:
                    frontier.append(child)
        return None
    finally:
        stats.wall_time = time.monotonic() - t0


def rule_score(node: _Node, target_shapes: frozenset[str],
               beta: float = CONVERSION_BONUS) -> float:
    """Matches with the targets plus a bonus per conversion already aimed at
    a shape the targets actually contain."""
    bonus = sum(1 for tok in node.program if tok.startswith("to-") and tok[3:] in target_shapes)
    return node.matches + beta * bonus


def _target_shape_names(examples, vocab) -> frozenset[str]:
    names = set()
    for _, b_out in examples:
        if b_out.descs is None:
            continue
        for d in b_out.descs:
            if not vocab.is_unseen(d.shape):
                names.add(vocab.shape_name(d.shape))
    return frozenset(names)


def beam_search(max_depth: int, beam_width: int, examples, executor,
                budget: Budget | None = None, stats: SearchStats | None = None,
                beta: float = CONVERSION_BONUS, verify_candidates: bool = True):
    """Depth-synchronous beam: expand every member by every legal token, keep
    the top beam_width by score (ties by lexicographic program order)."""
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    stats = stats if stats is not None else SearchStats()
    stats.algorithm = f"beam-{beam_width}"
    budget = budget or Budget(None)
    t0 = time.monotonic()
    try:
        ids = executor.transform_ids
        ranks = {tok: i for i, tok in enumerate(tuple(ids) + (OUT, "reset"))}
        targets = _targets(examples, executor.vocab)
        target_shapes = _target_shape_names(examples, executor.vocab)
        inputs = [executor.encode_board(b_in) for b_in, _ in examples]
        beam = [_Node((), [tuple(i) for i in inputs], [frozenset() for _ in inputs], 0)]
        for _ in range(max_depth):
            children = []
            for node in beam:
                stats.nodes_expanded += 1
                if budget.exceeded():
                    stats.timed_out = True
                    return None
                prev = node.program[-1] if node.program else None
                for tok in allowed_next(prev, ids):
                    child = _expand(node, tok, executor, inputs, ranks[tok])
                    if tok == OUT:
                        child.matches = sum(
                            len(ok & tg) for ok, tg in zip(child.out_keys, targets))
                        stats.candidates_checked += 1
                        if _finish(child, targets):
                            if not verify_candidates or satisfies(
                                    examples, child.program, executor):
                                stats.found_length = len(child.program)
                                return child.program
                    child.score = rule_score(child, target_shapes, beta)
                    children.append(child)
            children.sort(key=lambda c: (-c.score, c.order))
            beam = children[:beam_width]
        return None
    finally:
        stats.wall_time = time.monotonic() - t0


@dataclass
class SolveResult:
    program: Optional[tuple[str, ...]]
    prediction: Optional[BoardState]
    stats: SearchStats


def solve_task(task: Task, search_fn: Callable, executor) -> SolveResult:
    """Search the examples; on success, run the found program on the query."""
    stats = SearchStats()
    program = search_fn(task.examples, executor, stats)
    if program is None:
        return SolveResult(None, None, stats)
    state = run(program, init_state(executor.encode_board(task.query)), executor.apply)
    return SolveResult(program, executor.elements_to_board(state.output), stats)
