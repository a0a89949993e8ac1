from .backend import KERNEL_NAME  # noqa: F401
from .net import (  # noqa: F401
    DenseNet,
    DimensionError,
    TrainConfig,
    TrainingDiverged,
    init_dense,
    load_net,
    mse_loss,
    save_net,
    segmented_nll_loss,
    train,
)
