"""Program counting/enumeration/sampling and task generation."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridsynth.board import FULL_VOCAB, SHIFT_IDS, TRANSFORM_IDS, board_equal
from gridsynth.datagen import (
    DatagenError,
    build_dataset,
    count_programs,
    enumerate_programs,
    load_dataset,
    make_task,
    r20all_spec,
    r20shift_spec,
    random_board,
    random_program,
    save_dataset,
)
from gridsynth.search import satisfies
from gridsynth.vm import SymbolicExecutor, well_formed


def test_counts_match_published_totals():
    assert [count_programs(L) for L in (1, 2, 3, 4)] == [1, 9, 74, 659]


def test_enumeration_agrees_with_counts_and_validator():
    for L in (1, 2, 3, 4):
        programs = enumerate_programs(L)
        assert len(programs) == count_programs(L)
        assert len(set(programs)) == len(programs)
        assert all(well_formed(p) for p in programs)


def test_enumeration_is_exhaustive_at_length_3():
    # independent brute force over all token triples
    tokens = TRANSFORM_IDS + ("out", "reset")
    brute = {(a, b, c) for a in tokens for b in tokens for c in tokens
             if well_formed((a, b, c))}
    assert brute == set(enumerate_programs(3))


def test_shift_only_counts():
    assert count_programs(1, SHIFT_IDS) == 1
    assert count_programs(2, SHIFT_IDS) == 5   # four shifts + reset, then out
    assert len(enumerate_programs(3, SHIFT_IDS)) == count_programs(3, SHIFT_IDS)


def test_zero_length_rejected():
    with pytest.raises(DatagenError):
        count_programs(0)
    with pytest.raises(DatagenError):
        enumerate_programs(0)


@given(st.integers(1, 8), st.integers(0, 10_000))
@settings(max_examples=60)
def test_random_program_wellformed_and_exact_length(length, seed):
    p = random_program(length, rng=np.random.default_rng(seed))
    assert len(p) == length and well_formed(p)


def test_random_program_deterministic_per_seed():
    a = [random_program(5, rng=np.random.default_rng(3)) for _ in range(10)]
    b = [random_program(5, rng=np.random.default_rng(3)) for _ in range(10)]
    assert a == b


def test_random_program_covers_support_uniformly_enough():
    # length 2 has 9 programs; a uniform sampler should see them all quickly
    rng = np.random.default_rng(0)
    seen = {random_program(2, rng=rng) for _ in range(400)}
    assert seen == set(enumerate_programs(2))


def test_dataset_sizes_match_published_totals():
    r20all = build_dataset(r20all_spec())
    assert len(r20all.programs) == 16743
    r20shift = build_dataset(r20shift_spec())
    assert len(r20shift.programs) == 15620
    assert sum(r20all.length_histogram.values()) == 16743
    assert sum(r20shift.length_histogram.values()) == 15620


def test_dataset_programs_unique_and_valid():
    ds = build_dataset(r20shift_spec())
    assert len(set(ds.programs)) == len(ds.programs)
    assert all(well_formed(p, SHIFT_IDS) for p in ds.programs)
    assert ds.of_length(5) == [p for p in ds.programs if len(p) == 5]


def test_dataset_build_deterministic_per_seed():
    one = build_dataset(r20all_spec(), seed=4)
    two = build_dataset(r20all_spec(), seed=4)
    other = build_dataset(r20all_spec(), seed=5)
    assert one.programs == two.programs
    assert one.programs != other.programs


def test_dataset_save_load_roundtrip(tmp_path):
    ds = build_dataset(r20shift_spec())
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.name == ds.name
    assert back.programs == ds.programs
    assert back.length_histogram == ds.length_histogram


def test_random_board_shapes_and_cells():
    rng = np.random.default_rng(1)
    for _ in range(50):
        b = random_board(rng, max_shapes=3)
        assert 1 <= len(b.descs) <= 3
        cells = [(d.pos.x, d.pos.y) for d in b.descs]
        assert len(set(cells)) == len(cells)


def test_random_board_honors_shape_pool():
    rng = np.random.default_rng(2)
    b = random_board(rng, shape_names=("star",), max_shapes=3)
    assert {d.shape for d in b.descs} == {FULL_VOCAB.shape_index("star")}


def test_make_task_examples_satisfy_their_program():
    rng = np.random.default_rng(7)
    ex = SymbolicExecutor(FULL_VOCAB)
    for seed in range(10):
        p = random_program(int(rng.integers(1, 6)), rng=rng)
        task = make_task(p, 3, rng)
        assert task.source == p
        assert len(task.examples) == 3
        assert satisfies(task.examples, p, ex)


def test_make_task_inputs_pairwise_distinct():
    rng = np.random.default_rng(8)
    task = make_task(("shift-up", "out"), 5, rng)
    inputs = [b_in.descs for b_in, _ in task.examples]
    assert len(set(inputs)) == len(inputs)


def test_shift_program_preserves_shape_multiset_on_examples():
    rng = np.random.default_rng(9)
    p = tuple(SHIFT_IDS[int(rng.integers(4))] for _ in range(3)) + ("out",)
    task = make_task(p, 3, rng)
    for b_in, b_out in task.examples:
        assert sorted(d.shape for d in b_out.descs) == sorted(d.shape for d in b_in.descs)


def test_make_task_needs_an_example():
    with pytest.raises(DatagenError):
        make_task(("out",), 0)
