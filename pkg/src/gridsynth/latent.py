"""Latent spaces over boards: the symbolic autoencoder, image encoders fitted
to it, reconstruction/cycle-trained pixel decoders, and the pure image
autoencoder baseline.

Every space is an (encoder, decoder) pair applied element-wise: a board
encodes to one latent vector per shape (via its multi-hot, or via its
connected-component bitmap for image kinds). Shapes without their own
vocabulary slot ride the `unseen` label, with the source pixels carried as
provenance so outputs can be re-rendered and compared.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import raster
from .board import (
    BoardState,
    BoardError,
    FULL_VOCAB,
    GridPos,
    ShapeVocab,
    SymbolicDesc,
    all_descs,
    decode_multihot,
    encode_multihot,
    rasterize,
    with_raster,
)
from .nn.net import DenseNet, TrainConfig, init_dense, load_net, save_net, train_chain
from .vm import Element, Provenance, collapse_elements

KIND_SYMBOLIC = "symbolic"
KIND_IMAGE_TO_SYMBOLIC = "image-to-symbolic"
KIND_IMAGE_RECON = "image-recon"
KIND_IMAGE_SANDWICH = "image-sandwich"
KIND_IMAGE_AUTO = "image-auto"

_SYMBOLIC_DECODER_KINDS = (KIND_SYMBOLIC, KIND_IMAGE_TO_SYMBOLIC)

LATENT_DIM = 16
SYM_HIDDEN = 64
IMG_HIDDEN = (256, 64)


@dataclass
class LatentSpace:
    kind: str
    encoder: DenseNet
    decoder: DenseNet
    vocab: ShapeVocab
    latent_dim: int = LATENT_DIM
    meta: dict = field(default_factory=dict)

    @property
    def decodes_symbolically(self) -> bool:
        return self.kind in _SYMBOLIC_DECODER_KINDS

    @property
    def encodes_images(self) -> bool:
        return self.kind != KIND_SYMBOLIC


@dataclass(frozen=True)
class TrainDataSpec:
    """Shape subsets steering the generalisation experiments.

    Four subsets of the full shape inventory: the shapes with their own
    vocabulary slot, the shapes transforms train on, the shapes the image
    encoder is shown, and the shapes evaluation boards draw from. Anything
    outside shapes_for_vocab encodes as `unseen`.
    """
    shapes_for_vocab: frozenset[str]
    shapes_for_transforms: frozenset[str]
    shapes_for_encoder: frozenset[str]
    shapes_for_test: frozenset[str]

    def __post_init__(self):
        full = set(raster.SHAPE_NAMES)
        for part in (self.shapes_for_vocab, self.shapes_for_transforms,
                     self.shapes_for_encoder, self.shapes_for_test):
            unknown = set(part) - full
            if unknown:
                raise ValueError(f"unknown shape names {sorted(unknown)}")

    def vocab(self) -> ShapeVocab:
        names = tuple(n for n in raster.SHAPE_NAMES if n in self.shapes_for_vocab)
        return ShapeVocab(names=names, include_unseen=True)

    def to_json(self) -> str:
        return json.dumps({
            "vocab": sorted(self.shapes_for_vocab),
            "transforms": sorted(self.shapes_for_transforms),
            "encoder": sorted(self.shapes_for_encoder),
            "test": sorted(self.shapes_for_test),
        })

    @staticmethod
    def from_json(text: str) -> "TrainDataSpec":
        d = json.loads(text)
        return TrainDataSpec(frozenset(d["vocab"]), frozenset(d["transforms"]),
                             frozenset(d["encoder"]), frozenset(d["test"]))


def full_data_spec() -> TrainDataSpec:
    q = frozenset(raster.SHAPE_NAMES)
    return TrainDataSpec(q, q, q, q)


# --------------------------------------------------------------- training

def _seeded(cfg: TrainConfig, salt: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, salt])


def roundtrip_accuracy(space: LatentSpace, descs: Sequence[SymbolicDesc]) -> float:
    """Fraction of descriptions surviving encode -> decode exactly."""
    hits = 0
    for d in descs:
        v = encode_multihot(d, space.vocab)
        z = space.encoder.forward(v)
        if decode_multihot(space.decoder.forward(z), space.vocab) == d:
            hits += 1
    return hits / max(len(descs), 1)


def train_symbolic_autoencoder(vocab: ShapeVocab = FULL_VOCAB,
                               cfg: TrainConfig | None = None,
                               latent_dim: int = LATENT_DIM,
                               hidden: int = SYM_HIDDEN) -> LatentSpace:
    """Autoencoder over the exhaustive multi-hot alphabet (every label,
    including unseen, at every position)."""
    cfg = cfg or TrainConfig(learning_rate=0.05, epochs=600, seed=0,
                             loss_kind="segmented-nll", segments=vocab.segments)
    if cfg.segments is None:
        cfg = replace(cfg, segments=vocab.segments)
    descs = all_descs(vocab)
    X = np.stack([encode_multihot(d, vocab) for d in descs])
    m = vocab.multihot_len
    enc = init_dense((m, hidden, latent_dim), _seeded(cfg, 1))
    dec = init_dense((latent_dim, hidden, m), _seeded(cfg, 2))
    curve = train_chain([enc, dec], [True, True], X, X, cfg)
    space = LatentSpace(KIND_SYMBOLIC, enc, dec, vocab, latent_dim)
    space.meta = {"final_loss": curve[-1], "loss_kind": cfg.loss_kind,
                  "roundtrip": roundtrip_accuracy(space, descs)}
    return space


def encoder_training_pairs(data_spec: TrainDataSpec, vocab: ShapeVocab,
                           positions: Sequence[GridPos] | None = None):
    """(bitmap, relabeled desc) pairs for image-encoder fitting: every shape
    shown to the encoder, at every position (or the given subset), labeled
    with its own slot when it has one and `unseen` otherwise."""
    pairs = []
    shown = tuple(n for n in raster.SHAPE_NAMES if n in data_spec.shapes_for_encoder)
    if positions is None:
        positions = [GridPos(x, y) for y in range(vocab.grid) for x in range(vocab.grid)]
    for name in shown:
        for pos in positions:
            img = raster.compose_raster([(raster.glyph(name), pos.x, pos.y)], grid=vocab.grid)
            pairs.append((img, SymbolicDesc(vocab.shape_index(name), pos)))
    return pairs


def train_image_encoder(sym_space: LatentSpace, pairs: Sequence[tuple[np.ndarray, SymbolicDesc]],
                        cfg: TrainConfig | None = None,
                        hidden: tuple[int, int] = IMG_HIDDEN) -> LatentSpace:
    """Fit a pixel encoder to the frozen symbolic encodings (MSE), paired
    with the frozen symbolic decoder.

    Pairs are (single-shape bitmap, description already relabeled under the
    space's vocabulary); see encoder_training_pairs.
    """
    if sym_space.kind != KIND_SYMBOLIC:
        raise ValueError("image encoder fits against the symbolic space")
    cfg = cfg or TrainConfig(learning_rate=0.05, epochs=800, seed=0, loss_kind="mse")
    if cfg.loss_kind != "mse":
        raise ValueError("encoder fit is an MSE regression")
    vocab = sym_space.vocab
    X = np.stack([img.ravel() for img, _ in pairs])
    T = np.stack([sym_space.encoder.forward(encode_multihot(d, vocab)) for _, d in pairs])
    enc = init_dense((X.shape[1], *hidden, sym_space.latent_dim), _seeded(cfg, 3))
    curve = train_chain([enc], [True], X, T, cfg)
    space = LatentSpace(KIND_IMAGE_TO_SYMBOLIC, enc, sym_space.decoder, vocab,
                        sym_space.latent_dim)
    space.meta = {"final_loss": curve[-1], "n_pairs": len(pairs)}
    return space


def _pixel_decoder_sizes(latent_dim: int, n_px: int) -> tuple[int, ...]:
    return (latent_dim, IMG_HIDDEN[1], IMG_HIDDEN[0], n_px)


def train_image_decoder_recon(img_space: LatentSpace, images: Sequence[np.ndarray],
                              cfg: TrainConfig | None = None) -> LatentSpace:
    """Pixel decoder minimizing reconstruction error against the frozen
    image encoder's latents."""
    if not img_space.encodes_images:
        raise ValueError("needs an image-encoding space")
    cfg = cfg or TrainConfig(learning_rate=0.05, epochs=800, seed=0, loss_kind="mse")
    X_img = np.stack([im.ravel() for im in images])
    Z = img_space.encoder.forward_batch(X_img)
    dec = init_dense(_pixel_decoder_sizes(img_space.latent_dim, X_img.shape[1]), _seeded(cfg, 4))
    curve = train_chain([dec], [True], Z, X_img, cfg)
    space = LatentSpace(KIND_IMAGE_RECON, img_space.encoder, dec, img_space.vocab,
                        img_space.latent_dim)
    space.meta = {"final_loss": curve[-1]}
    return space


def train_image_decoder_sandwich(img_space: LatentSpace, images: Sequence[np.ndarray],
                                 cfg: TrainConfig | None = None) -> LatentSpace:
    """Pixel decoder trained so that re-encoding its output returns the
    input latent (cycle through pixel space, encoder frozen)."""
    if not img_space.encodes_images:
        raise ValueError("needs an image-encoding space")
    cfg = cfg or TrainConfig(learning_rate=0.02, epochs=800, seed=0, loss_kind="mse")
    X_img = np.stack([im.ravel() for im in images])
    Z = img_space.encoder.forward_batch(X_img)
    dec = init_dense(_pixel_decoder_sizes(img_space.latent_dim, X_img.shape[1]), _seeded(cfg, 5))
    curve = train_chain([dec, img_space.encoder], [True, False], Z, Z, cfg)
    space = LatentSpace(KIND_IMAGE_SANDWICH, img_space.encoder, dec, img_space.vocab,
                        img_space.latent_dim)
    space.meta = {"final_loss": curve[-1]}
    return space


def train_image_autoencoder(images: Sequence[np.ndarray], vocab: ShapeVocab = FULL_VOCAB,
                            cfg: TrainConfig | None = None,
                            latent_dim: int = LATENT_DIM) -> LatentSpace:
    """Pure pixel autoencoder: the baseline space with no symbolic structure."""
    cfg = cfg or TrainConfig(learning_rate=0.05, epochs=800, seed=0, loss_kind="mse")
    X = np.stack([im.ravel() for im in images])
    enc = init_dense((X.shape[1], *IMG_HIDDEN, latent_dim), _seeded(cfg, 6))
    dec = init_dense(_pixel_decoder_sizes(latent_dim, X.shape[1]), _seeded(cfg, 7))
    curve = train_chain([enc, dec], [True, True], X, X, cfg)
    space = LatentSpace(KIND_IMAGE_AUTO, enc, dec, vocab, latent_dim)
    space.meta = {"final_loss": curve[-1]}
    return space


# --------------------------------------------------------- encode/decode

def encode_board(space: LatentSpace, b: BoardState) -> tuple[Element, ...]:
    """One (latent, provenance) element per shape, deterministic order."""
    if space.encodes_images:
        if b.raster is None:
            if b.descs is None:
                raise BoardError("image encoding needs a raster")
            b = with_raster(b, space.vocab)
        elems = []
        for bitmap, (cx, cy) in raster.connected_components(b.raster):
            z = space.encoder.forward(bitmap.ravel())
            prov = Provenance.from_bitmap(raster.cell_crop(bitmap, cx, cy))
            elems.append((z, prov))
        return tuple(elems)
    if b.descs is None:
        raise BoardError("symbolic encoding needs descriptions")
    elems = []
    for d in sorted(b.descs, key=lambda d: (d.shape, d.pos.y, d.pos.x)):
        if space.vocab.is_unseen(d.shape):
            if b.raster is None:
                raise BoardError("unseen shape without raster provenance")
            prov = Provenance.from_bitmap(raster.cell_crop(b.raster, d.pos.x, d.pos.y))
        else:
            prov = Provenance.from_atlas(space.vocab.shape_name(d.shape))
        elems.append((space.encoder.forward(encode_multihot(d, space.vocab)), prov))
    return tuple(elems)


def decode_desc(space: LatentSpace, z: np.ndarray) -> SymbolicDesc:
    if not space.decodes_symbolically:
        raise BoardError(f"{space.kind} space has no symbolic decoder")
    return decode_multihot(space.decoder.forward(z), space.vocab)


def decode_latents(space: LatentSpace, elems: Sequence[Element]) -> BoardState:
    """Decode an element buffer to a board.

    Symbolic-decoder kinds produce descriptions (set semantics; unseen labels
    re-render from provenance). Pixel-decoder kinds compose decoded bitmaps
    into a raster-only board.
    """
    if space.decodes_symbolically:
        return collapse_elements(
            ((decode_desc(space, z), prov) for z, prov in elems), space.vocab)
    side = space.vocab.grid * raster.CELL_PX
    img = np.zeros((side, side), dtype=np.float64)
    for z, _ in elems:
        np.maximum(img, space.decoder.forward(z).reshape(side, side), out=img)
    return BoardState(descs=None, raster=img)


def singleton_embeddings(space: LatentSpace) -> list[tuple[str, int, int, np.ndarray]]:
    """(shape name, x, y, latent) for every seen single-shape board."""
    rows = []
    for d in all_descs(space.vocab, include_unseen=False):
        if space.encodes_images:
            img = rasterize([d], space.vocab)
            z = space.encoder.forward(img.ravel())
        else:
            z = space.encoder.forward(encode_multihot(d, space.vocab))
        rows.append((space.vocab.shape_name(d.shape), d.pos.x, d.pos.y, z))
    return rows


def same_position_spread(space: LatentSpace) -> float:
    """Mean pairwise latent distance between different shapes at the same
    position. A measured statistic for judging how tightly positions cluster;
    nothing asserts a particular value."""
    rows = singleton_embeddings(space)
    by_pos: dict[tuple[int, int], list[np.ndarray]] = {}
    for _, x, y, z in rows:
        by_pos.setdefault((x, y), []).append(z)
    dists = []
    for group in by_pos.values():
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                dists.append(float(np.linalg.norm(group[i] - group[j])))
    return float(np.mean(dists)) if dists else 0.0


# ------------------------------------------------------------ checkpoints

def save_latent_space(out_dir, space: LatentSpace) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_net(out_dir / "encoder.bin", space.encoder)
    save_net(out_dir / "decoder.bin", space.decoder)
    meta = {
        "kind": space.kind,
        "latent_dim": space.latent_dim,
        "vocab_names": list(space.vocab.names),
        "include_unseen": space.vocab.include_unseen,
        "grid": space.vocab.grid,
        "position_only": space.vocab.position_only,
        "meta": space.meta,
    }
    with open(out_dir / "space.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_latent_space(in_dir) -> LatentSpace:
    in_dir = Path(in_dir)
    with open(in_dir / "space.json") as f:
        meta = json.load(f)
    vocab = ShapeVocab(names=tuple(meta["vocab_names"]),
                       include_unseen=meta["include_unseen"],
                       grid=meta["grid"], position_only=meta["position_only"])
    enc, _ = load_net(in_dir / "encoder.bin")
    dec, _ = load_net(in_dir / "decoder.bin")
    return LatentSpace(meta["kind"], enc, dec, vocab, meta["latent_dim"], meta["meta"])
