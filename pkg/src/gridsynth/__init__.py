"""Grid-of-shapes program synthesis: latent transforms, search, evaluation."""

__version__ = "0.1.0"

from .board import (  # noqa: F401
    BoardState,
    FULL_VOCAB,
    GridPos,
    ShapeVocab,
    SymbolicDesc,
    TRANSFORM_IDS,
    board_equal,
    decode_multihot,
    encode_multihot,
    ground_truth_transform,
    make_board,
    rasterize,
)
