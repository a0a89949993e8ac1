"""Latent spaces: autoencoder quality, data-subset plumbing, checkpoints."""
import json

import numpy as np
import pytest

from gridsynth.board import FULL_VOCAB, GridPos, ShapeVocab, SymbolicDesc, all_descs, make_board, with_raster
from gridsynth.latent import (
    KIND_IMAGE_TO_SYMBOLIC,
    KIND_SYMBOLIC,
    TrainDataSpec,
    decode_desc,
    encode_board,
    encoder_training_pairs,
    full_data_spec,
    load_latent_space,
    roundtrip_accuracy,
    save_latent_space,
    singleton_embeddings,
    train_image_encoder,
    train_symbolic_autoencoder,
)
from gridsynth.nn.net import TrainConfig
from gridsynth import raster


def test_full_spec_covers_everything():
    spec = full_data_spec()
    assert spec.vocab() == FULL_VOCAB
    assert spec.shapes_for_test == frozenset(raster.SHAPE_NAMES)


def test_data_spec_rejects_unknown_shapes():
    with pytest.raises(ValueError):
        TrainDataSpec(frozenset({"blob"}), frozenset(), frozenset(), frozenset())


def test_data_spec_json_roundtrip():
    spec = TrainDataSpec(frozenset({"square", "star"}), frozenset({"square"}),
                         frozenset({"ring"}), frozenset(raster.SHAPE_NAMES))
    back = TrainDataSpec.from_json(spec.to_json())
    assert back == spec
    assert set(json.loads(spec.to_json())) == {"vocab", "transforms", "encoder", "test"}


def test_reduced_vocab_keeps_inventory_order_and_unseen():
    spec = TrainDataSpec(frozenset({"circle", "square"}), frozenset(),
                         frozenset(), frozenset())
    v = spec.vocab()
    assert v.names == ("square", "circle")  # inventory order, not set order
    assert v.include_unseen


def test_canonical_autoencoder_roundtrip_is_exact(sym_space):
    assert sym_space.kind == KIND_SYMBOLIC
    assert sym_space.meta["roundtrip"] == 1.0
    assert roundtrip_accuracy(sym_space, all_descs(FULL_VOCAB)) == 1.0


def test_singleton_embeddings_cover_seen_vocabulary(sym_space):
    rows = singleton_embeddings(sym_space)
    assert len(rows) == 180  # 20 shapes x 9 cells, unseen excluded
    zs = np.stack([z for _, _, _, z in rows])
    assert zs.shape == (180, sym_space.latent_dim)
    # distinct descriptions get distinct embeddings
    d = np.linalg.norm(zs[:, None, :] - zs[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 1e-9


def test_encode_board_is_order_stable(sym_space):
    b = make_board([SymbolicDesc(4, GridPos(2, 0)), SymbolicDesc(9, GridPos(0, 2))])
    one = encode_board(sym_space, b)
    two = encode_board(sym_space, b)
    assert len(one) == 2
    for (z1, p1), (z2, p2) in zip(one, two):
        assert np.array_equal(z1, z2)
    decoded = {decode_desc(sym_space, z) for z, _ in one}
    assert decoded == set(b.descs)


def test_encoder_training_pairs_label_unlabeled_shapes_unseen():
    spec = TrainDataSpec(
        shapes_for_vocab=frozenset({"square"}),
        shapes_for_transforms=frozenset(),
        shapes_for_encoder=frozenset({"square", "star"}),
        shapes_for_test=frozenset(),
    )
    vocab = spec.vocab()
    pairs = encoder_training_pairs(spec, vocab)
    assert len(pairs) == 2 * 9
    labels = {d.shape for _, d in pairs}
    assert labels == {vocab.shape_index("square"), vocab.unseen_index}


def test_image_encoder_reads_pixels_into_symbolic_latents(sym_space):
    spec = TrainDataSpec(
        shapes_for_vocab=frozenset(raster.SHAPE_NAMES),
        shapes_for_transforms=frozenset(),
        shapes_for_encoder=frozenset(raster.SHAPE_NAMES[:6]),
        shapes_for_test=frozenset(),
    )
    pairs = encoder_training_pairs(spec, sym_space.vocab)
    cfg = TrainConfig(learning_rate=0.05, epochs=300, seed=0, loss_kind="mse")
    img_space = train_image_encoder(sym_space, pairs, cfg=cfg)
    assert img_space.kind == KIND_IMAGE_TO_SYMBOLIC
    assert img_space.decoder is sym_space.decoder
    # every trained (shape, position) decodes back through the shared decoder
    wrong = 0
    for name in raster.SHAPE_NAMES[:6]:
        for pos in (GridPos(0, 0), GridPos(2, 1)):
            b = with_raster(make_board([SymbolicDesc(FULL_VOCAB.shape_index(name), pos)]))
            (z, _), = encode_board(img_space, b)
            wrong += decode_desc(img_space, z) != SymbolicDesc(FULL_VOCAB.shape_index(name), pos)
    assert wrong == 0


def test_encode_board_rasterizes_seen_boards_on_demand(sym_space):
    spec = full_data_spec()
    pairs = encoder_training_pairs(spec, sym_space.vocab)
    cfg = TrainConfig(learning_rate=0.05, epochs=120, seed=0, loss_kind="mse")
    img_space = train_image_encoder(sym_space, pairs, cfg=cfg)
    bare = make_board([SymbolicDesc(2, GridPos(1, 1))])  # no raster attached
    elems = encode_board(img_space, bare)
    assert len(elems) == 1


def test_save_load_latent_space_bit_exact(sym_space, tmp_path):
    save_latent_space(tmp_path / "s", sym_space)
    back = load_latent_space(tmp_path / "s")
    assert back.kind == sym_space.kind
    assert back.vocab == sym_space.vocab
    assert back.encoder.params_equal(sym_space.encoder)
    assert back.decoder.params_equal(sym_space.decoder)
    x = np.random.default_rng(0).normal(size=sym_space.latent_dim)
    assert np.array_equal(back.decoder.forward(x), sym_space.decoder.forward(x))


def test_autoencoder_training_is_reproducible():
    small = ShapeVocab(names=raster.SHAPE_NAMES[:2], include_unseen=True)
    cfg = TrainConfig(learning_rate=0.05, epochs=150, seed=3, loss_kind="mse")
    one = train_symbolic_autoencoder(vocab=small, cfg=cfg, latent_dim=8, hidden=16)
    two = train_symbolic_autoencoder(vocab=small, cfg=cfg, latent_dim=8, hidden=16)
    assert one.encoder.params_equal(two.encoder)
    assert one.decoder.params_equal(two.decoder)
    assert one.meta["final_loss"] == two.meta["final_loss"]