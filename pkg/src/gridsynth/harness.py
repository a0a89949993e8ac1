"""Experiment driver: trains artifacts from a config, runs the evaluation
suites (hit-ratio tables, transform/encoder generalisation sweeps, search
benchmarks), and emits JSON reports plus CSV tables.

Reports embed the full config and seeds, so any number in them can be
regenerated bit-exactly. Training artifacts are cached on disk keyed by a
hash of every training-relevant field: sweeping one axis retrains only the
stage that axis touches.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import raster
from .board import (
    FULL_VOCAB,
    BoardState,
    GridPos,
    ShapeVocab,
    board_equal,
    relabel_board,
    with_raster,
)
from .datagen import (
    R20ALL,
    R20SHIFT,
    build_dataset,
    make_task,
    r20all_spec,
    r20shift_spec,
    random_program,
)
from .latent import (
    KIND_IMAGE_TO_SYMBOLIC,
    KIND_SYMBOLIC,
    LatentSpace,
    TrainDataSpec,
    encoder_training_pairs,
    full_data_spec,
    load_latent_space,
    save_latent_space,
    singleton_embeddings,
    train_image_encoder,
    train_symbolic_autoencoder,
)
from .nn.net import TrainConfig
from .search import Budget, SearchStats, Task, beam_search, naive_bfs, pruned_bfs, solve_task
from .transforms import (
    MODE_INDEPENDENT,
    MODE_VECTOR,
    NeuralExecutor,
    TransformSet,
    load_transform_set,
    save_transform_set,
    train_transforms,
    train_vector_transforms,
)
from .vm import SymbolicExecutor, apply_program_symbolic

ALGORITHMS = ("naive", "pruned", "beam")
EXECUTORS = ("neural", "symbolic")
LATENT_KINDS = (KIND_SYMBOLIC, KIND_IMAGE_TO_SYMBOLIC)

# Per-task search budgets: beam runs deeper than the BFS variants, so it
# gets more rope.
DEFAULT_TIMEOUT_S = 60.0
BEAM_TIMEOUT_S = 120.0


class HarnessError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Everything a run depends on, JSON-serializable for reports and reruns.

    The four shape subsets live in `data`; model fields pick the latent space
    and transform flavor plus architecture overrides; search fields pick the
    algorithm and budgets; dataset fields control task sampling; the two
    seeds keep task sampling independent of training randomness.
    """
    # data
    data: TrainDataSpec = field(default_factory=full_data_spec)
    transform_positions: Optional[tuple[tuple[int, int], ...]] = None  # None: all 9
    # model
    latent_kind: str = KIND_SYMBOLIC
    transform_mode: str = MODE_INDEPENDENT
    executor: str = "neural"
    latent_dim: int = 16
    ae_hidden: int = 64
    net_hidden: int = 256
    vec_hidden: int = 64
    cond_dim: int = 8
    img_hidden: tuple[int, int] = (256, 64)
    loss_kind: str = "mse"
    ae_lr: float = 0.05
    ae_epochs: int = 2000
    tr_lr: float = 0.02
    tr_epochs: int = 2000
    vec_lr: float = 0.02
    vec_epochs: int = 600
    enc_lr: float = 0.05
    enc_epochs: int = 800
    # search
    algorithm: str = "pruned"
    max_depth: Optional[int] = None  # None: search as deep as the task's length
    beam_width: int = 500
    timeout_s: Optional[float] = DEFAULT_TIMEOUT_S
    # tasks
    dataset: str = R20SHIFT
    lengths: tuple[int, ...] = (2, 3, 4, 5, 6)
    tasks_per_length: int = 100
    n_examples: int = 3
    max_shapes: int = 1
    # seeds and output
    train_seed: int = 0
    task_seed: int = 1000
    out_dir: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise HarnessError(f"algorithm must be one of {ALGORITHMS}")
        if self.executor not in EXECUTORS:
            raise HarnessError(f"executor must be one of {EXECUTORS}")
        if self.latent_kind not in LATENT_KINDS:
            raise HarnessError(f"latent_kind must be one of {LATENT_KINDS}")
        if self.transform_mode not in (MODE_INDEPENDENT, MODE_VECTOR):
            raise HarnessError("transform_mode must be independent or vector-conditioned")
        if self.dataset not in (R20ALL, R20SHIFT):
            raise HarnessError(f"unknown dataset {self.dataset!r}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["data"] = json.loads(self.data.to_json())
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        d = json.loads(text)
        if "data" in d:
            d["data"] = TrainDataSpec.from_json(json.dumps(d["data"]))
        for key in ("lengths", "img_hidden"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        if d.get("transform_positions") is not None:
            d["transform_positions"] = tuple(tuple(p) for p in d["transform_positions"])
        return ExperimentConfig(**d)


def vector_recipe(cfg: ExperimentConfig) -> ExperimentConfig:
    """The shared-net configuration: one net serves every transform, steered
    by a learned conditioning vector per transform.

    Trained to convergence under the likelihood loss it fits every single
    step exactly yet still drifts when iterated — unlike the squared-error
    recipe, whose iteration errors stay on paths the searcher can route
    around. The capacity and rate below land that drift where the hit-ratio
    trend over program length is measurable without collapsing it.
    """
    return replace(cfg, transform_mode=MODE_VECTOR, loss_kind="segmented-nll",
                   ae_epochs=600, vec_hidden=128, vec_lr=0.005, vec_epochs=4000)


@dataclass
class EvalReport:
    """One evaluation table: totals, per-length cells, search statistics, and
    the config echo that makes the run repeatable."""
    label: str
    hit_ratio: float
    tasks: int
    hits: int
    misses: int
    timeouts: int
    per_length: dict[int, dict]
    search: dict[str, float]
    config: dict

    def __post_init__(self):
        if self.hits + self.misses + self.timeouts != self.tasks:
            raise HarnessError("hit/miss/timeout accounting does not add up")

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "hit_ratio": self.hit_ratio,
            "tasks": self.tasks,
            "hits": self.hits,
            "misses": self.misses,
            "timeouts": self.timeouts,
            "per_length": {str(k): v for k, v in sorted(self.per_length.items())},
            "search": self.search,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


# ------------------------------------------------------ artifact training

def _cache_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _cache_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir) / "artifacts"


def _train_positions(cfg: ExperimentConfig) -> Optional[list[GridPos]]:
    if cfg.transform_positions is None:
        return None
    return [GridPos(x, y) for x, y in cfg.transform_positions]


def ensure_symbolic_space(cfg: ExperimentConfig) -> LatentSpace:
    """The multi-hot autoencoder for cfg's vocabulary, trained or loaded."""
    key = _cache_key({
        "stage": "sym-space",
        "vocab": sorted(cfg.data.shapes_for_vocab),
        "latent_dim": cfg.latent_dim, "hidden": cfg.ae_hidden,
        "lr": cfg.ae_lr, "epochs": cfg.ae_epochs, "loss": cfg.loss_kind,
        "seed": cfg.train_seed,
    })
    where = _cache_dir(cfg) / f"space-{key}"
    if (where / "space.json").exists():
        return load_latent_space(where)
    vocab = cfg.data.vocab()
    train_cfg = TrainConfig(learning_rate=cfg.ae_lr, epochs=cfg.ae_epochs,
                            seed=cfg.train_seed, loss_kind=cfg.loss_kind,
                            segments=vocab.segments if cfg.loss_kind == "segmented-nll" else None)
    space = train_symbolic_autoencoder(vocab=vocab, cfg=train_cfg,
                                       latent_dim=cfg.latent_dim, hidden=cfg.ae_hidden)
    save_latent_space(where, space)
    return space


def ensure_transform_set(cfg: ExperimentConfig, space: LatentSpace) -> TransformSet:
    """The transform nets for cfg's transform-shape subset and mode, trained or loaded."""
    key = _cache_key({
        "stage": "transforms",
        "vocab": sorted(cfg.data.shapes_for_vocab),
        "transforms": sorted(cfg.data.shapes_for_transforms),
        "positions": cfg.transform_positions,
        "mode": cfg.transform_mode,
        "hidden": cfg.net_hidden if cfg.transform_mode == MODE_INDEPENDENT else cfg.vec_hidden,
        "cond_dim": cfg.cond_dim,
        "lr": cfg.tr_lr if cfg.transform_mode == MODE_INDEPENDENT else cfg.vec_lr,
        "epochs": cfg.tr_epochs if cfg.transform_mode == MODE_INDEPENDENT else cfg.vec_epochs,
        "loss": cfg.loss_kind,
        "ae": {"latent_dim": cfg.latent_dim, "hidden": cfg.ae_hidden,
               "lr": cfg.ae_lr, "epochs": cfg.ae_epochs},
        "seed": cfg.train_seed,
    })
    where = _cache_dir(cfg) / f"tset-{key}"
    if (where / "transforms.json").exists():
        return load_transform_set(where)
    shapes = sorted(cfg.data.shapes_for_transforms)
    positions = _train_positions(cfg)
    if cfg.transform_mode == MODE_INDEPENDENT:
        train_cfg = TrainConfig(learning_rate=cfg.tr_lr, epochs=cfg.tr_epochs,
                                seed=cfg.train_seed, loss_kind=cfg.loss_kind)
        tset = train_transforms(space, shapes, cfg=train_cfg,
                                hidden=cfg.net_hidden, positions=positions)
    else:
        train_cfg = TrainConfig(learning_rate=cfg.vec_lr, epochs=cfg.vec_epochs,
                                seed=cfg.train_seed, loss_kind=cfg.loss_kind)
        tset = train_vector_transforms(space, shapes, cfg=train_cfg,
                                       cond_dim=cfg.cond_dim, hidden=cfg.vec_hidden,
                                       positions=positions)
    save_transform_set(where, tset)
    return tset


def ensure_image_space(cfg: ExperimentConfig, sym_space: LatentSpace) -> LatentSpace:
    """The pixel encoder fitted to the symbolic space for cfg's encoder-shape subset."""
    key = _cache_key({
        "stage": "img-space",
        "vocab": sorted(cfg.data.shapes_for_vocab),
        "encoder": sorted(cfg.data.shapes_for_encoder),
        "hidden": list(cfg.img_hidden),
        "lr": cfg.enc_lr, "epochs": cfg.enc_epochs,
        "ae": {"latent_dim": cfg.latent_dim, "hidden": cfg.ae_hidden,
               "lr": cfg.ae_lr, "epochs": cfg.ae_epochs, "loss": cfg.loss_kind},
        "seed": cfg.train_seed,
    })
    where = _cache_dir(cfg) / f"imgspace-{key}"
    if (where / "space.json").exists():
        return load_latent_space(where)
    pairs = encoder_training_pairs(cfg.data, sym_space.vocab)
    train_cfg = TrainConfig(learning_rate=cfg.enc_lr, epochs=cfg.enc_epochs,
                            seed=cfg.train_seed, loss_kind="mse")
    space = train_image_encoder(sym_space, pairs, cfg=train_cfg, hidden=cfg.img_hidden)
    save_latent_space(where, space)
    return space


def train_artifacts(cfg: ExperimentConfig) -> tuple[LatentSpace, Optional[TransformSet]]:
    """(latent space, transform set) per cfg's model spec, cached on disk.

    For the image-to-symbolic kind the transforms are trained on the
    symbolic space and reused: both spaces share the decoder, so the same
    nets drive both.
    """
    if cfg.executor == "symbolic":
        return ensure_symbolic_space(cfg), None
    sym = ensure_symbolic_space(cfg)
    tset = ensure_transform_set(cfg, sym)
    if cfg.latent_kind == KIND_SYMBOLIC:
        return sym, tset
    return ensure_image_space(cfg, sym), tset


def build_executor(cfg: ExperimentConfig):
    space, tset = train_artifacts(cfg)
    if cfg.executor == "symbolic":
        return SymbolicExecutor(space.vocab)
    return NeuralExecutor(space, tset)


# ------------------------------------------------------------- evaluation

def _dataset_pool(name: str):
    spec = r20shift_spec() if name == R20SHIFT else r20all_spec()
    ds = build_dataset(spec)
    by_length: dict[int, list] = {}
    for p in ds.programs:
        by_length.setdefault(len(p), []).append(p)
    return by_length, spec.transform_ids


_POOL_CACHE: dict[str, tuple] = {}


def _pool(name: str):
    if name not in _POOL_CACHE:
        _POOL_CACHE[name] = _dataset_pool(name)
    return _POOL_CACHE[name]


def _present_board(b: BoardState, vocab: ShapeVocab, need_raster: bool) -> BoardState:
    """Ground-truth boards are full-vocabulary; re-express one for an
    executor that labels fewer shapes (and render pixels when the executor
    consumes images)."""
    out = b
    if need_raster and out.raster is None:
        out = with_raster(out, FULL_VOCAB)
    if vocab != FULL_VOCAB:
        out = relabel_board(out, FULL_VOCAB, vocab)
    return out


def prediction_matches(pred: Optional[BoardState], truth: BoardState,
                       vocab: ShapeVocab) -> bool:
    """Grade a predicted board against the full-vocabulary ground truth.

    Equality is element-key based, so unseen-labelled predictions match via
    their rendered glyphs rather than their (collapsed) labels.
    """
    if pred is None:
        return False
    return board_equal(pred, relabel_board(truth, FULL_VOCAB, vocab), vocab)


def _search_fn(cfg: ExperimentConfig, depth: int):
    budget_s = cfg.timeout_s
    if cfg.algorithm == "naive":
        return lambda ex, executor, stats: naive_bfs(
            depth, ex, executor, budget=Budget(budget_s), stats=stats)
    if cfg.algorithm == "beam":
        return lambda ex, executor, stats: beam_search(
            depth, cfg.beam_width, ex, executor, budget=Budget(budget_s), stats=stats)
    return lambda ex, executor, stats: pruned_bfs(
        depth, ex, executor, budget=Budget(budget_s), stats=stats)


_CELL_COUNTERS = ("nodes_expanded", "candidates_checked", "pruned_wrong_element",
                  "pruned_fewer_matches", "wall_time")


def _run_cell(cfg: ExperimentConfig, executor, length: int) -> dict:
    """Evaluate one (algorithm, length) cell: fixed-size task sample, fully
    determined by (task_seed, length, dataset)."""
    pool, pool_ids = _pool(cfg.dataset)
    vocab = executor.vocab
    need_raster = getattr(executor, "space", None) is not None \
        and executor.space.encodes_images
    rng = np.random.default_rng([cfg.task_seed, length])
    test_shapes = tuple(n for n in raster.SHAPE_NAMES if n in cfg.data.shapes_for_test)
    cell = {"length": length, "tasks": cfg.tasks_per_length,
            "hits": 0, "misses": 0, "timeouts": 0}
    cell.update({k: 0.0 for k in _CELL_COUNTERS})
    depth = cfg.max_depth if cfg.max_depth is not None else length
    search = _search_fn(cfg, depth)
    candidates = pool.get(length)
    for _ in range(cfg.tasks_per_length):
        if candidates:
            p = candidates[int(rng.integers(len(candidates)))]
        else:
            p = random_program(length, transform_ids=pool_ids, rng=rng)
        raw = make_task(p, cfg.n_examples, rng, shape_names=test_shapes,
                        max_shapes=cfg.max_shapes)
        truth = apply_program_symbolic(p, raw.query)
        task = Task(
            examples=tuple((_present_board(bi, vocab, need_raster),
                            _present_board(bo, vocab, False))
                           for bi, bo in raw.examples),
            query=_present_board(raw.query, vocab, need_raster),
            source=p,
        )
        result = solve_task(task, search, executor)
        for k in _CELL_COUNTERS:
            cell[k] += getattr(result.stats, k)
        if prediction_matches(result.prediction, truth, vocab):
            cell["hits"] += 1
        elif result.stats.timed_out:
            cell["timeouts"] += 1
        else:
            cell["misses"] += 1
    cell["hit_ratio"] = cell["hits"] / cell["tasks"]
    return cell


def _evaluate(cfg: ExperimentConfig, executor, label: str) -> EvalReport:
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            cells = list(pool.map(_run_cell, *zip(*[(cfg, executor, L)
                                                    for L in cfg.lengths])))
    else:
        cells = [_run_cell(cfg, executor, L) for L in cfg.lengths]
    per_length = {c["length"]: c for c in cells}
    tasks = sum(c["tasks"] for c in cells)
    hits = sum(c["hits"] for c in cells)
    misses = sum(c["misses"] for c in cells)
    timeouts = sum(c["timeouts"] for c in cells)
    search = {k: float(sum(c[k] for c in cells)) for k in _CELL_COUNTERS}
    return EvalReport(label=label, hit_ratio=hits / tasks if tasks else 0.0,
                      tasks=tasks, hits=hits, misses=misses, timeouts=timeouts,
                      per_length=per_length, search=search, config=cfg.as_dict())


def run_hit_ratio(cfg: ExperimentConfig, label: str = "hit-ratio") -> EvalReport:
    """Per-length hit-ratio table for one trained configuration."""
    executor = build_executor(cfg)
    return _evaluate(cfg, executor, label)


def _shape_prefix(k: int, first: Sequence[str] = ()) -> tuple[str, ...]:
    """Deterministic size-k subset: the given shapes first, the rest in
    inventory order."""
    ordered = list(first) + [n for n in raster.SHAPE_NAMES if n not in set(first)]
    return tuple(ordered[:k])


DEFAULT_SHAPE_COUNTS = (1, 2, 4, 8, 14, 20)
DEFAULT_POSITION_COUNTS = (3, 5, 7, 9)


def run_transform_generalisation(cfg: ExperimentConfig,
                                 sizes: Sequence[int] | None = None,
                                 axis: str = "shapes") -> list[EvalReport]:
    """Hit-ratio sweep holding data out of transform training.

    axis="shapes": the transform-training subset grows over the shape
    inventory while the autoencoder
    (trained once, on everything in the vocabulary) and the task sets stay fixed. axis="positions": transforms see only the first k grid cells.
    """
    sym = ensure_symbolic_space(cfg)
    reports = []
    if axis == "shapes":
        for k in (sizes or DEFAULT_SHAPE_COUNTS):
            sub = replace(cfg, data=replace_data(cfg.data, transforms=frozenset(_shape_prefix(k))))
            tset = ensure_transform_set(sub, sym)
            reports.append(_evaluate(sub, NeuralExecutor(sym, tset), label=f"shapes={k}"))
    elif axis == "positions":
        grid = [(x, y) for y in range(sym.vocab.grid) for x in range(sym.vocab.grid)]
        for k in (sizes or DEFAULT_POSITION_COUNTS):
            sub = replace(cfg, transform_positions=tuple(grid[:k]))
            tset = ensure_transform_set(sub, sym)
            reports.append(_evaluate(sub, NeuralExecutor(sym, tset), label=f"positions={k}"))
    else:
        raise HarnessError("axis must be 'shapes' or 'positions'")
    return reports


def replace_data(data: TrainDataSpec, vocab=None, transforms=None,
                 encoder=None, test=None) -> TrainDataSpec:
    return TrainDataSpec(
        shapes_for_vocab=vocab if vocab is not None else data.shapes_for_vocab,
        shapes_for_transforms=transforms if transforms is not None else data.shapes_for_transforms,
        shapes_for_encoder=encoder if encoder is not None else data.shapes_for_encoder,
        shapes_for_test=test if test is not None else data.shapes_for_test,
    )


ENCODER_EXPERIMENTS = (1, 2, 3, 4)
DEFAULT_SHOWN_COUNTS = (1, 2, 4, 8, 12, 16, 20)
FOUR_SHAPES = raster.SHAPE_NAMES[:4]


def run_encoder_generalisation(cfg: ExperimentConfig, experiment: int,
                               sizes: Sequence[int] | None = None) -> list[EvalReport]:
    """Image-encoder generalisation sweeps.

    Experiments 1 and 2 label nothing (every shape is `unseen`); 3 and 4
    label four shapes. The set of shapes shown to the encoder grows along
    the sweep;
    evaluation covers every shape (1, 3) or exactly the shapes the encoder
    never saw (2, 4). Transforms ride along unchanged: they are trained on
    the shared symbolic space once per experiment.
    """
    if experiment not in ENCODER_EXPERIMENTS:
        raise HarnessError(f"experiment must be in {ENCODER_EXPERIMENTS}")
    labelled = frozenset() if experiment in (1, 2) else frozenset(FOUR_SHAPES)
    sizes = tuple(sizes or DEFAULT_SHOWN_COUNTS)
    if experiment in (2, 4):
        sizes = tuple(min(k, len(raster.SHAPE_NAMES) - 1) for k in sizes)
    base = replace(cfg, latent_kind=KIND_IMAGE_TO_SYMBOLIC,
                   data=replace_data(cfg.data, vocab=labelled, transforms=labelled))
    sym = ensure_symbolic_space(base)
    tset = ensure_transform_set(base, sym)
    reports = []
    for k in sizes:
        shown = frozenset(_shape_prefix(k, first=sorted(labelled)))
        test = frozenset(raster.SHAPE_NAMES) if experiment in (1, 3) \
            else frozenset(raster.SHAPE_NAMES) - shown
        sub = replace(base, data=replace_data(base.data, encoder=shown, test=test))
        img = ensure_image_space(sub, sym)
        reports.append(_evaluate(sub, NeuralExecutor(img, tset),
                                 label=f"exp{experiment} shown={k}"))
    return reports


# -------------------------------------------------------------- benchmarks

def run_search_benchmark(cfg: ExperimentConfig,
                         algorithms: Sequence[str] = ("naive", "pruned"),
                         lengths: Sequence[int] | None = None) -> list[dict]:
    """Wall time and node counts per (algorithm, length) on paired task
    sets; timeouts are recorded, never fatal."""
    lengths = tuple(lengths or cfg.lengths)
    rows = []
    for algorithm in algorithms:
        sub = replace(cfg, algorithm=algorithm,
                      timeout_s=BEAM_TIMEOUT_S if algorithm == "beam" else cfg.timeout_s)
        executor = build_executor(sub)
        for L in lengths:
            cell = _run_cell(sub, executor, L)
            n = cell["tasks"]
            rows.append({
                "algorithm": algorithm, "length": L, "tasks": n,
                "hits": cell["hits"], "timeouts": cell["timeouts"],
                "hit_ratio": cell["hit_ratio"],
                "mean_wall_time": cell["wall_time"] / n,
                "mean_nodes_expanded": cell["nodes_expanded"] / n,
                "mean_candidates_checked": cell["candidates_checked"] / n,
                "mean_pruned_wrong_element": cell["pruned_wrong_element"] / n,
                "mean_pruned_fewer_matches": cell["pruned_fewer_matches"] / n,
            })
    return rows


def write_csv(rows: Sequence[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def export_embeddings(cfg: ExperimentConfig, path) -> int:
    """One CSV row per seen single-shape board: labels plus latent
    components. Returns the row count."""
    space, _ = train_artifacts(cfg)
    rows = []
    for name, x, y, z in singleton_embeddings(space):
        row = {"shape": name, "x": x, "y": y}
        row.update({f"z{i}": float(v) for i, v in enumerate(z)})
        rows.append(row)
    write_csv(rows, path)
    return len(rows)


def write_report(report: EvalReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json() + "\n")
