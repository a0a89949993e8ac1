"""Neural transforms over latent vectors: one independent net per primitive,
or one shared net conditioned on a learned per-primitive vector.

Training always goes through the frozen latent decoder (segmented NLL against
the oracle-transformed multi-hot by default, MSE against oracle-transformed
pixels for pure-pixel spaces); encoders and decoders are never updated here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import raster
from .board import (
    CONVERSION_IDS,
    GridPos,
    SHIFT_IDS,
    TRANSFORM_IDS,
    ShapeVocab,
    SymbolicDesc,
    encode_multihot,
    transform_desc,
)
from .latent import KIND_SYMBOLIC, LatentSpace, decode_desc, decode_latents
from .latent import encode_board as space_encode_board
from .nn.net import (
    DenseNet,
    SgdState,
    TrainConfig,
    TrainingDiverged,
    batch_loss,
    chain_backward,
    chain_forward,
    init_dense,
    load_net,
    save_net,
    train_chain,
)
from .vm import _ATLAS_BYTES, Element, Provenance, collapse_elements

MODE_INDEPENDENT = "independent"
MODE_VECTOR = "vector-conditioned"
COND_DIM = 8
# Wide enough to memorize the full 189-description permutation per shift;
# 64 hidden units plateau at chance on the shape segment.
NET_HIDDEN = 256


class TransformError(ValueError):
    pass


@dataclass
class TransformSet:
    """Trained latent-space transforms, immutable once built.

    independent mode: one `nets[id]` per transform, each latent -> latent.
    vector mode: one `shared` net over latent ++ vectors[id].
    """
    mode: str
    ids: tuple[str, ...]
    nets: dict[str, DenseNet] | None = None
    shared: DenseNet | None = None
    vectors: dict[str, np.ndarray] | None = None
    latent_dim: int = 16
    cond_dim: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (MODE_INDEPENDENT, MODE_VECTOR):
            raise TransformError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_INDEPENDENT and self.nets is None:
            raise TransformError("independent mode needs per-transform nets")
        if self.mode == MODE_VECTOR and (self.shared is None or self.vectors is None):
            raise TransformError("vector mode needs a shared net and vectors")


def trainable_transform_ids(vocab: ShapeVocab) -> tuple[str, ...]:
    """Shifts always; conversions only to shapes the vocabulary can name."""
    keep = set(SHIFT_IDS) | {t for t in CONVERSION_IDS if t[3:] in vocab.names}
    return tuple(t for t in TRANSFORM_IDS if t in keep)


def apply_transform(tset: TransformSet, tid: str, z: np.ndarray) -> np.ndarray:
    if tid not in tset.ids:
        raise TransformError(f"unknown transform {tid!r}")
    if tset.mode == MODE_INDEPENDENT:
        return tset.nets[tid].forward(z)
    return tset.shared.forward(np.concatenate([np.asarray(z, dtype=np.float64),
                                               tset.vectors[tid]]))


# ---------------------------------------------------------- training data

def training_descs(vocab: ShapeVocab, shape_names: Sequence[str],
                   positions: Sequence[GridPos] | None = None) -> list[SymbolicDesc]:
    """Exhaustive singleton descriptions transforms train on: every label the
    given shapes map to, plus the unseen slot, at every position (or the
    given position subset)."""
    labels: list[int] = []
    for n in raster.SHAPE_NAMES:
        if n in set(shape_names):
            idx = vocab.shape_index(n)
            if idx not in labels:
                labels.append(idx)
    if vocab.include_unseen and vocab.unseen_index not in labels:
        labels.append(vocab.unseen_index)
    if vocab.position_only:
        labels = [0]
    if positions is None:
        positions = [GridPos(x, y) for y in range(vocab.grid) for x in range(vocab.grid)]
    return [SymbolicDesc(l, p) for l in labels for p in positions]


def _singleton_bitmap(name: str, pos: GridPos, grid: int) -> np.ndarray:
    return raster.compose_raster([(raster.glyph(name), pos.x, pos.y)], grid=grid)


def _oracle_bitmap(tid: str, name: str, pos: GridPos, grid: int) -> np.ndarray:
    """Pixel-level oracle: shifts move the glyph, conversions swap it."""
    if tid in CONVERSION_IDS:
        return _singleton_bitmap(tid[3:], pos, grid)
    moved = transform_desc(tid, SymbolicDesc(0, pos),
                           ShapeVocab(names=(), include_unseen=True, grid=grid))
    return _singleton_bitmap(name, moved.pos, grid)


def _default_cfg(space: LatentSpace, seed: int = 0) -> TrainConfig:
    if space.decodes_symbolically:
        # follow the space's own training loss: NLL decoders emit unbounded
        # logits that an MSE objective can never reach, and vice versa an
        # MSE decoder gives NLL nothing to sharpen
        kind = space.meta.get("loss_kind", "segmented-nll")
        segments = space.vocab.segments if kind == "segmented-nll" else None
        return TrainConfig(learning_rate=0.02, epochs=2000, seed=seed,
                           loss_kind=kind, segments=segments)
    return TrainConfig(learning_rate=0.02, epochs=400, seed=seed, loss_kind="mse")


def _symbolic_training_arrays(space, descs, ids):
    if space.kind != KIND_SYMBOLIC:
        # image-fitted spaces share the symbolic decoder, so transforms are
        # trained once on the symbolic space and reused
        raise TransformError("train transforms on the symbolic space")
    vocab = space.vocab
    X = np.stack([encode_multihot(d, vocab) for d in descs])
    Z = space.encoder.forward_batch(X)
    targets = {t: np.stack([encode_multihot(transform_desc(t, d, vocab), vocab)
                            for d in descs]) for t in ids}
    return Z, targets


def _pixel_training_arrays(space, shape_names, ids):
    grid = space.vocab.grid
    names = [n for n in raster.SHAPE_NAMES if n in set(shape_names)]
    if not names:
        raise TransformError("pixel-space training needs at least one shape")
    items = [(n, GridPos(x, y)) for n in names for y in range(grid) for x in range(grid)]
    X = np.stack([_singleton_bitmap(n, p, grid).ravel() for n, p in items])
    Z = space.encoder.forward_batch(X)
    targets = {t: np.stack([_oracle_bitmap(t, n, p, grid).ravel() for n, p in items])
               for t in ids}
    return Z, targets


# ----------------------------------------------------------- independent

def train_transforms(space: LatentSpace, shape_names: Sequence[str],
                     cfg: TrainConfig | None = None,
                     transform_ids: Sequence[str] | None = None,
                     hidden: int = NET_HIDDEN,
                     positions: Sequence[GridPos] | None = None) -> TransformSet:
    """One net per transform, trained through the frozen decoder.

    For symbolic-decoder spaces the data is the exhaustive singleton
    description set over the given shapes' labels (plus unseen); for pixel
    spaces it is the corresponding bitmaps with pixel-level oracle targets.
    """
    ids = tuple(transform_ids) if transform_ids is not None \
        else trainable_transform_ids(space.vocab)
    bad = [t for t in ids if t not in TRANSFORM_IDS]
    if bad:
        raise TransformError(f"unknown transform ids {bad}")
    cfg = cfg or _default_cfg(space)
    if space.decodes_symbolically:
        if cfg.loss_kind == "segmented-nll" and cfg.segments is None:
            cfg = replace(cfg, segments=space.vocab.segments)
        descs = training_descs(space.vocab, shape_names, positions)
        Z, targets = _symbolic_training_arrays(space, descs, ids)
    else:
        cfg = replace(cfg, loss_kind="mse", segments=None)
        Z, targets = _pixel_training_arrays(space, shape_names, ids)
    n = space.latent_dim
    nets: dict[str, DenseNet] = {}
    curves: dict[str, float] = {}
    dec_before = space.decoder.copy()
    for i, t in enumerate(ids):
        net_cfg = replace(cfg, seed=cfg.seed + 7919 * (i + 1))
        net, final = _fit_past_plateaus(net_cfg, space.decoder, Z, targets[t], hidden)
        nets[t] = net
        curves[t] = final
    if not dec_before.params_equal(space.decoder):
        raise TransformError("decoder drifted during transform training")
    return TransformSet(mode=MODE_INDEPENDENT, ids=ids, nets=nets,
                        latent_dim=n, meta={"final_loss": curves,
                                            "trained_on": sorted(set(shape_names))})


# Occasional (seed, lr) pairs stall on a plateau an order of magnitude above
# the usual optimum; retrying with a nudged seed and then a halved rate is
# deterministic and escapes every case seen in practice.
_PLATEAU = {"mse": 1e-3, "segmented-nll": 1e-2}
_MAX_FITS = 4


def _fit_past_plateaus(cfg: TrainConfig, decoder: DenseNet, Z: np.ndarray,
                       T: np.ndarray, hidden: int = NET_HIDDEN) -> tuple[DenseNet, float]:
    n = Z.shape[1]
    best: tuple[DenseNet, float] | None = None
    for attempt in range(_MAX_FITS):
        a_cfg = replace(cfg, seed=cfg.seed + attempt,
                        learning_rate=cfg.learning_rate * (0.5 ** (attempt // 2)))
        net = init_dense((n, hidden, n), np.random.default_rng([a_cfg.seed, 11]))
        try:
            curve = train_chain([net, decoder], [True, False], Z, T, a_cfg)
        except TrainingDiverged:
            continue
        final = float(curve[-1])
        if best is None or final < best[1]:
            best = (net, final)
        if final <= _PLATEAU.get(cfg.loss_kind, 1e-3):
            return net, final
    if best is None:
        raise TrainingDiverged("every fit attempt diverged")
    return best


# ---------------------------------------------------------------- vector

def train_vector_transforms(space: LatentSpace, shape_names: Sequence[str],
                            cfg: TrainConfig | None = None,
                            transform_ids: Sequence[str] | None = None,
                            cond_dim: int = COND_DIM,
                            hidden: int = NET_HIDDEN,
                            positions: Sequence[GridPos] | None = None) -> TransformSet:
    """Shared net over latent ++ conditioning vector, vectors learned jointly.

    The conditioning-vector gradient is the input-gradient slice behind the
    latent, accumulated per transform id over the minibatch.
    """
    if not space.decodes_symbolically:
        raise TransformError("vector mode is defined for symbolic-decoder spaces")
    ids = tuple(transform_ids) if transform_ids is not None \
        else trainable_transform_ids(space.vocab)
    cfg = cfg or _default_cfg(space)
    if cfg.loss_kind == "segmented-nll" and cfg.segments is None:
        cfg = replace(cfg, segments=space.vocab.segments)
    vocab = space.vocab
    descs = training_descs(vocab, shape_names, positions)
    Z, targets = _symbolic_training_arrays(space, descs, ids)
    n = space.latent_dim
    rng = np.random.default_rng([cfg.seed, 13])
    shared = init_dense((n + cond_dim, hidden, n), rng)
    V = rng.standard_normal((len(ids), cond_dim)) * 0.5
    T_all = np.stack([targets[t] for t in ids])          # [K, m, out]
    m = Z.shape[0]
    K = len(ids)
    flat_t = np.repeat(np.arange(K), m)                  # transform id per sample
    flat_j = np.tile(np.arange(m), K)                    # desc index per sample
    state = SgdState(shared.Ws + shared.bs + [V])
    order_rng = np.random.default_rng(cfg.seed)
    curve = []
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(m * K)
        total = 0.0
        for start in range(0, m * K, cfg.batch_size):
            idx = perm[start: start + cfg.batch_size]
            kb, jb = flat_t[idx], flat_j[idx]
            Xb = np.concatenate([Z[jb], V[kb]], axis=1)
            Tb = T_all[kb, jb]
            Y, caches = chain_forward([shared, space.decoder], Xb)
            loss, dY = batch_loss(cfg.loss_kind, Y, Tb, cfg.segments)
            total += loss
            grads, dX = chain_backward([shared, space.decoder], caches, dY,
                                       [True, False])
            dWs, dbs = grads[0]
            dV = np.zeros_like(V)
            np.add.at(dV, kb, dX[:, n:])
            state.step(shared.Ws + shared.bs + [V], dWs + dbs + [dV],
                       cfg.learning_rate, cfg.momentum, scale=1.0 / len(idx))
        mean = total / (m * K)
        if not np.isfinite(mean):
            raise TrainingDiverged(f"non-finite loss {mean} (lr too high?)")
        curve.append(mean)
    vectors = {t: V[i].copy() for i, t in enumerate(ids)}
    return TransformSet(mode=MODE_VECTOR, ids=ids, shared=shared, vectors=vectors,
                        latent_dim=n, cond_dim=cond_dim,
                        meta={"final_loss": curve[-1],
                              "trained_on": sorted(set(shape_names))})


# -------------------------------------------------------------- executor

class NeuralExecutor:
    """VM executor over neural latents: encode with a latent space, step with
    a transform set, decode through the space's decoder.

    `transform_ids` may restrict the search alphabet to a subset of the
    trained transforms (e.g. shifts only).
    """

    def __init__(self, space: LatentSpace, tset: TransformSet,
                 transform_ids: Sequence[str] | None = None):
        if transform_ids is None:
            transform_ids = tset.ids
        missing = [t for t in transform_ids if t not in tset.ids]
        if missing:
            raise TransformError(f"transforms not in the trained set: {missing}")
        self.space = space
        self.tset = tset
        self.vocab = space.vocab
        self.transform_ids = tuple(transform_ids)

    def encode_board(self, b) -> tuple[Element, ...]:
        return space_encode_board(self.space, b)

    def apply(self, prim: str, elem: Element) -> Element:
        z, prov = elem
        nz = apply_transform(self.tset, prim, z)
        if prim in CONVERSION_IDS:
            prov = Provenance.from_atlas(prim[3:])
        return (nz, prov)

    def decode_element(self, elem: Element):
        z, prov = elem
        d = decode_desc(self.space, z)
        if self.vocab.is_unseen(d.shape):
            if prov is None:
                raise TransformError("unseen element without provenance")
            return (prov.key, d.pos.x, d.pos.y)
        return (_ATLAS_BYTES[self.vocab.shape_name(d.shape)], d.pos.x, d.pos.y)

    def element_desc(self, elem: Element) -> SymbolicDesc:
        return decode_desc(self.space, elem[0])

    def elements_to_board(self, elems: Sequence[Element]):
        if self.space.decodes_symbolically:
            return collapse_elements(
                ((decode_desc(self.space, z), prov) for z, prov in elems), self.vocab)
        return decode_latents(self.space, elems)


# ------------------------------------------------------------ checkpoints

def save_transform_set(out_dir, tset: TransformSet) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "mode": tset.mode,
        "ids": list(tset.ids),
        "latent_dim": tset.latent_dim,
        "cond_dim": tset.cond_dim,
        "meta": tset.meta,
    }
    if tset.mode == MODE_INDEPENDENT:
        for t, net in tset.nets.items():
            save_net(out_dir / f"{t}.bin", net)
    else:
        save_net(out_dir / "shared.bin", tset.shared)
        meta["vectors"] = {t: v.tolist() for t, v in tset.vectors.items()}
    with open(out_dir / "transforms.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_transform_set(in_dir) -> TransformSet:
    in_dir = Path(in_dir)
    with open(in_dir / "transforms.json") as f:
        meta = json.load(f)
    ids = tuple(meta["ids"])
    if meta["mode"] == MODE_INDEPENDENT:
        nets = {t: load_net(in_dir / f"{t}.bin")[0] for t in ids}
        return TransformSet(mode=MODE_INDEPENDENT, ids=ids, nets=nets,
                            latent_dim=meta["latent_dim"], meta=meta["meta"])
    shared, _ = load_net(in_dir / "shared.bin")
    vectors = {t: np.asarray(v, dtype=np.float64) for t, v in meta["vectors"].items()}
    return TransformSet(mode=MODE_VECTOR, ids=ids, shared=shared, vectors=vectors,
                        latent_dim=meta["latent_dim"], cond_dim=meta["cond_dim"],
                        meta=meta["meta"])
