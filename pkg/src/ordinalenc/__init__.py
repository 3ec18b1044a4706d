"""Ordinal age-label encodings, losses, maskout training, and benchmarks."""

from .encodings import (
    EncodedTarget,
    EncodingConfig,
    Family,
    decode_hard_rank,
    decode_ldl,
    decode_soft_rank,
    encode,
    hard_rank_encode,
    ldl_encode,
    soft_rank_encode,
)
from .errors import (
    EncodingConfigError,
    MaskCoversGridWarning,
    NormalizationError,
    NumericInputError,
    TrainingDivergedError,
)
from .estimators import AgeTargetEncoder, MaskoutAgeRegressor
from .losses import (
    LossValue,
    hard_rank_loss,
    hard_rank_predict_bits,
    ldl_loss,
    logit_dim,
    loss,
    predict_age,
    soft_rank_loss,
    softmax,
)
from .maskout import (
    Mask,
    apply_mask,
    default_landmark_masks,
    default_landmark_masks_side,
    global_average_pool,
    make_mask,
    make_mask_side,
    mask_to_text,
)
from .metrics import epsilon_error, mae, mae_by_age_band
from .model import (
    ModelDims,
    ModelParams,
    backward,
    clone_head,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .synth import DataSplit, PopulationSpec, SplitSpec, SyntheticDataset, generate, load_dataset, save_dataset, split
from .trainer import TrainConfig, TrainReport, combined_loss, evaluate, predict_ages, sgd_step, train

__version__ = "0.1.0"
