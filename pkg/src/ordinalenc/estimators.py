"""scikit-learn compatible wrappers around the encodings and the trainer.

``AgeTargetEncoder`` is a transformer from integer ages to supervision
vectors (and back); ``MaskoutAgeRegressor`` is a fit/predict estimator
that trains the masked-branch model on (n, C, H, W) inputs.  Both follow
the sklearn parameter conventions, so ``get_params``/``set_params``,
``clone`` and pipeline composition work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .encodings import EncodingConfig, Family, decode_hard_rank, decode_ldl, decode_soft_rank, encode_matrix
from .model import ModelDims
from .synth import DataSplit
from .trainer import TrainConfig, evaluate, predict_ages, train
from .validation import check_ages, check_feature_maps, check_positive_sigmas


class AgeTargetEncoder(TransformerMixin, BaseEstimator):
    """Transform integer ages into encoding vectors and back.

    Parameters
    ----------
    family : {"ldl", "hard", "soft"}
    max_age : largest age class K; ages live in [1, K].
    sigma : correlation width (years); ignored by the hard family.
    """

    def __init__(self, family="soft", max_age=101, sigma=2.0):
        self.family = family
        self.max_age = max_age
        self.sigma = sigma

    def _config(self) -> EncodingConfig:
        return EncodingConfig(Family(self.family), self.max_age, self.sigma)

    def fit(self, y, _unused=None):
        cfg = self._config()
        check_ages(y, cfg.max_age)
        self.config_ = cfg
        return self

    def transform(self, y) -> np.ndarray:
        check_is_fitted(self, "config_")
        ages = check_ages(y, self.config_.max_age)
        return encode_matrix(ages, self.config_)

    def inverse_transform(self, targets) -> np.ndarray:
        """Decode target rows back to ages (real-valued for LDL)."""
        check_is_fitted(self, "config_")
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim != 2:
            raise ValueError(f"expected a 2-d target matrix, got ndim={targets.ndim}")
        family = Family(self.config_.family)
        out = np.empty(targets.shape[0])
        for i, row in enumerate(targets):
            if family is Family.LDL:
                out[i] = decode_ldl(row)
            elif family is Family.HARD_RANK:
                out[i] = decode_hard_rank(row)
            else:
                out[i] = decode_soft_rank(np.stack([row, 1.0 - row], axis=1))
        return out


class MaskoutAgeRegressor(RegressorMixin, BaseEstimator):
    """Age regressor trained with masked auxiliary branches.

    ``fit`` runs the SGD loop on feature-map inputs; ``predict`` decodes
    the main branch.  Set ``aux_weight=0`` and ``aux_start_epoch`` past
    ``epochs`` for a plain single-branch baseline.
    """

    def __init__(
        self,
        family="soft",
        max_age=101,
        sigma=2.0,
        hidden_channels=16,
        mask_side=4,
        aux_weight=0.3,
        aux_start_epoch=10,
        epochs=100,
        lr=0.01,
        momentum=0.9,
        weight_decay=0.0002,
        batch_size=64,
        lr_drops=((80, 0.1), (90, 0.1)),
        flip_avg=False,
        seed=0,
    ):
        self.family = family
        self.max_age = max_age
        self.sigma = sigma
        self.hidden_channels = hidden_channels
        self.mask_side = mask_side
        self.aux_weight = aux_weight
        self.aux_start_epoch = aux_start_epoch
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.lr_drops = lr_drops
        self.flip_avg = flip_avg
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        drops = tuple((e, f) for e, f in self.lr_drops if e < self.epochs)
        return TrainConfig(
            encoding=EncodingConfig(Family(self.family), self.max_age, self.sigma),
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr_drops=drops,
            aux_weight=self.aux_weight,
            aux_start_epoch=self.aux_start_epoch,
            mask_side=self.mask_side,
            seed=self.seed,
        )

    def fit(self, X, y, sigma_n=None):
        X = check_feature_maps(X)
        ages = check_ages(y, int(self.max_age))
        if ages.size != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} samples but y has {ages.size}")
        n, c, h, w = X.shape
        sigmas = np.ones(n) if sigma_n is None else check_positive_sigmas(sigma_n, n)
        cfg = self._train_config()
        data = DataSplit(X, ages, sigmas, np.arange(n))
        dims = ModelDims(c_in=c, c_out=int(self.hidden_channels), height=h, width=w)
        self.params_, self.report_ = train(dims, data, cfg)
        self.config_ = cfg
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_feature_maps(X, self.params_.c_in, self.params_.height, self.params_.width)
        return predict_ages(self.params_, X, self.config_.encoding, flip_avg=self.flip_avg)

    def mae(self, X, y, sigma_n=None) -> float:
        """Mean absolute error on a labeled set."""
        check_is_fitted(self, "params_")
        X = check_feature_maps(X, self.params_.c_in, self.params_.height, self.params_.width)
        ages = check_ages(y, self.config_.encoding.max_age)
        sigmas = np.ones(ages.size) if sigma_n is None else check_positive_sigmas(sigma_n, ages.size)
        data = DataSplit(X, ages, sigmas, np.arange(ages.size))
        return evaluate(self.params_, data, self.config_.encoding, flip_avg=self.flip_avg)["mae"]
