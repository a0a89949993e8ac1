"""Shared trained artifacts, cached on disk so repeated runs skip training.

The fixtures reuse the harness cache (keyed by training config), which keeps
unit tests, acceptance tests, and CLI runs all on the same artifacts.
"""
from dataclasses import replace
from pathlib import Path

import pytest

from gridsynth.harness import (
    ExperimentConfig,
    ensure_symbolic_space,
    ensure_transform_set,
    vector_recipe,
)
from gridsynth.transforms import NeuralExecutor

ARTIFACTS = Path(__file__).parent / "_artifacts"


@pytest.fixture(scope="session")
def base_cfg():
    return ExperimentConfig(out_dir=str(ARTIFACTS))


@pytest.fixture(scope="session")
def sym_space(base_cfg):
    return ensure_symbolic_space(base_cfg)


@pytest.fixture(scope="session")
def tset_ind(base_cfg, sym_space):
    return ensure_transform_set(base_cfg, sym_space)


@pytest.fixture(scope="session")
def vec_cfg(base_cfg):
    return vector_recipe(base_cfg)


@pytest.fixture(scope="session")
def vec_space(vec_cfg):
    return ensure_symbolic_space(vec_cfg)


@pytest.fixture(scope="session")
def tset_vec(vec_cfg, vec_space):
    return ensure_transform_set(vec_cfg, vec_space)


@pytest.fixture(scope="session")
def neural_executor(sym_space, tset_ind):
    return NeuralExecutor(sym_space, tset_ind)
