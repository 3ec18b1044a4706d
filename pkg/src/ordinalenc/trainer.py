"""SGD training loop with the combined main + auxiliary objective.

The loop trains the main branch from epoch 1; at ``aux_start_epoch`` the
five auxiliary heads are cloned from the main head and their masked-branch
losses join the objective with weight ``aux_weight``.  Heads that are not
attached receive no updates at all (no gradient, no weight decay), so a
run with ``aux_start_epoch > epochs`` is bit-identical to a main-only
model on the shared path.

Everything is deterministic given the config seed: parameter init, batch
shuffling, and the fixed reduction order of the batch mean.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .encodings import EncodingConfig, Family, encode_matrix
from .errors import NumericInputError, TrainingDivergedError
from .losses import batch_loss_and_grad, batch_predict_age, logit_dim
from .maskout import Mask, default_landmark_masks_side
from .metrics import epsilon_error, mae
from .model import ModelDims, ModelParams, backward, clone_head, forward_batch, init_params
from .synth import DataSplit

N_AUX_BRANCHES = 5
EVAL_CHUNK = 512


@dataclass(frozen=True)
class TrainConfig:
    encoding: EncodingConfig
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0002
    batch_size: int = 64
    epochs: int = 100
    lr_drops: tuple[tuple[int, float], ...] = ((80, 0.1), (90, 0.1))
    aux_weight: float = 0.3
    aux_start_epoch: int = 10
    mask_side: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.momentum < 1) or self.weight_decay < 0:
            raise ValueError("need lr > 0, 0 <= momentum < 1, weight_decay >= 0")
        if self.batch_size < 1 or self.epochs < 0 or self.aux_weight < 0 or self.aux_start_epoch < 0:
            raise ValueError("batch_size >= 1, epochs >= 0, aux_weight >= 0, aux_start_epoch >= 0")
        drops = tuple((int(e), float(f)) for e, f in self.lr_drops)
        object.__setattr__(self, "lr_drops", drops)
        epochs_seen = [e for e, _ in drops]
        if epochs_seen != sorted(set(epochs_seen)) or any(e >= self.epochs for e in epochs_seen):
            raise ValueError("lr_drops epochs must be strictly increasing and < epochs")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoding"] = {
            "family": str(Family(self.encoding.family)),
            "max_age": self.encoding.max_age,
            "sigma": self.encoding.sigma,
        }
        d["lr_drops"] = [list(x) for x in self.lr_drops]
        return d


@dataclass
class TrainReport:
    seed: int
    config: dict
    train_main_loss: list[float] = field(default_factory=list)
    train_aux_loss: list[float] = field(default_factory=list)  # sum over branches
    train_combined_loss: list[float] = field(default_factory=list)
    val_mae: list[float | None] = field(default_factory=list)
    final_test: dict | None = None
    aux_attached_epoch: int | None = None
    n_train: int = 0
    wall_seconds: float = 0.0
    version: str = "ordinalenc-report-v1"

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, allow_nan=False) + "\n"

    @staticmethod
    def from_json(text: str) -> "TrainReport":
        return TrainReport(**json.loads(text))


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    velocity: ModelParams,
    lr: float,
    momentum: float,
    weight_decay: float,
    active_heads=None,
) -> tuple[ModelParams, ModelParams]:
    """One momentum-SGD update, in place.

    ``v <- momentum * v + grad + weight_decay * param`` then
    ``param <- param - lr * v`` (classic L2-in-gradient form, biases
    included).  Only the backbone and the heads listed in
    ``active_heads`` (default: all) are touched.
    """
    heads = range(params.n_heads) if active_heads is None else active_heads
    triples = [
        (params.backbone_w, grads.backbone_w, velocity.backbone_w),
        (params.backbone_b, grads.backbone_b, velocity.backbone_b),
    ]
    for i in heads:
        triples.append((params.head_w[i], grads.head_w[i], velocity.head_w[i]))
        triples.append((params.head_b[i], grads.head_b[i], velocity.head_b[i]))
    for p, g, v in triples:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("NaN or Inf gradient in SGD step", epoch=-1)
        v *= momentum
        v += g
        if weight_decay:
            v += weight_decay * p
        p -= lr * v
    return params, velocity


def combined_loss(main: float, aux, weight: float) -> float:
    """Main loss plus ``weight`` times the summed auxiliary losses."""
    if weight < 0:
        raise ValueError("auxiliary weight must be >= 0")
    return float(main) + weight * float(np.sum(aux)) if len(aux) else float(main)


def predict_ages(params: ModelParams, inputs: np.ndarray, cfg: EncodingConfig, flip_avg: bool = False) -> np.ndarray:
    """Main-branch age predictions for (n, C, H, W) inputs.

    With ``flip_avg`` the logits of each input and its width-mirrored copy
    are averaged before decoding.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    preds = np.empty(inputs.shape[0])
    for lo in range(0, inputs.shape[0], EVAL_CHUNK):
        chunk = inputs[lo : lo + EVAL_CHUNK]
        logits = forward_batch(params, chunk, [], aux_active=False)[0][0]
        if flip_avg:
            flipped = forward_batch(params, chunk[:, :, :, ::-1], [], aux_active=False)[0][0]
            logits = 0.5 * (logits + flipped)
        preds[lo : lo + EVAL_CHUNK] = batch_predict_age(logits, cfg)
    return preds


def evaluate(params: ModelParams, data: DataSplit, cfg: EncodingConfig, flip_avg: bool = False) -> dict:
    """MAE and epsilon error of the main branch on a split."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty split")
    preds = predict_ages(params, data.inputs, cfg, flip_avg=flip_avg)
    return {
        "mae": mae(preds, data.ages),
        "epsilon_error": epsilon_error(preds, data.ages, data.sigma_n),
        "n": len(data),
    }


def _age_target_table(cfg: EncodingConfig) -> np.ndarray:
    # one encoding per age class; rows indexed by age - 1
    return encode_matrix(np.arange(1, cfg.max_age + 1), cfg)


def train(
    dims: ModelDims,
    train_data: DataSplit,
    cfg: TrainConfig,
    val_data: DataSplit | None = None,
    test_data: DataSplit | None = None,
    masks: list[Mask] | None = None,
    log=None,
) -> tuple[ModelParams, TrainReport]:
    """Run the full training loop; returns final params and the report.

    Raises ``TrainingDivergedError`` (carrying the last finite parameters)
    if a loss or gradient goes non-finite.
    """
    if len(train_data) == 0:
        raise ValueError("training split is empty")
    if dims.height != train_data.inputs.shape[2] or dims.width != train_data.inputs.shape[3]:
        raise ValueError("model dims do not match the training inputs")
    enc = cfg.encoding
    if masks is None:
        masks = default_landmark_masks_side(dims.height, dims.width, cfg.mask_side)
    if len(masks) != N_AUX_BRANCHES:
        raise ValueError(f"expected {N_AUX_BRANCHES} masks, got {len(masks)}")

    start = time.perf_counter()
    params = init_params(cfg.seed, dims, logit_dim(enc.family, enc.max_age), n_heads=1 + N_AUX_BRANCHES)
    velocity = params.zeros_like()
    rng = np.random.default_rng(cfg.seed)
    targets = _age_target_table(enc)
    n = len(train_data)
    report = TrainReport(seed=cfg.seed, config=cfg.to_dict(), n_train=n)

    lr = cfg.lr
    aux_attached = False
    last_good = params.copy()

    for epoch in range(1, cfg.epochs + 1):
        for drop_epoch, factor in cfg.lr_drops:
            if epoch == drop_epoch:
                lr *= factor
        if not aux_attached and epoch >= max(cfg.aux_start_epoch, 1) and cfg.aux_start_epoch <= cfg.epochs:
            for i in range(1, 1 + N_AUX_BRANCHES):
                params = clone_head(params, 0, i)
            velocity = params.zeros_like()
            aux_attached = True
            report.aux_attached_epoch = epoch
        active_heads = range(1 + N_AUX_BRANCHES) if aux_attached else (0,)
        n_branches = 1 + N_AUX_BRANCHES if aux_attached else 1

        order = rng.permutation(n)
        main_sum = aux_sum = combined_sum = 0.0
        try:
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                b = idx.size
                xb = train_data.inputs[idx]
                tb = targets[train_data.ages[idx] - 1]
                logits, trace = forward_batch(params, xb, masks, aux_active=aux_attached)
                branch_means = []
                grad_logits = []
                for i in range(n_branches):
                    losses, grads = batch_loss_and_grad(logits[i], tb, enc)
                    branch_means.append(float(losses.mean()))
                    scale = (1.0 if i == 0 else cfg.aux_weight) / b
                    grad_logits.append(grads * scale)
                step_main = branch_means[0]
                step_aux = branch_means[1:]
                step_combined = combined_loss(step_main, step_aux, cfg.aux_weight)
                if not np.isfinite(step_combined):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", epoch, last_good)
                main_sum += step_main * b
                aux_sum += float(np.sum(step_aux)) * b
                combined_sum += step_combined * b
                grads = backward(trace, grad_logits, params)
                sgd_step(params, grads, velocity, lr, cfg.momentum, cfg.weight_decay, active_heads)
        except NumericInputError as exc:
            raise TrainingDivergedError(f"non-finite values at epoch {epoch}: {exc}", epoch, last_good) from exc
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(str(exc), epoch, last_good) from exc

        report.train_main_loss.append(main_sum / n)
        report.train_aux_loss.append(aux_sum / n)
        report.train_combined_loss.append(combined_sum / n)
        epoch_val = evaluate(params, val_data, enc)["mae"] if val_data is not None and len(val_data) else None
        report.val_mae.append(epoch_val)
        last_good = params.copy()
        if log is not None:
            shown = "nan" if epoch_val is None else f"{epoch_val:.6f}"
            print(f"epoch={epoch} loss={combined_sum / n:.6f} val_mae={shown}", file=log, flush=True)

    if test_data is not None and len(test_data):
        result = evaluate(params, test_data, enc)
        report.final_test = {"mae": result["mae"], "epsilon_error": result["epsilon_error"], "n": result["n"]}
    report.wall_seconds = time.perf_counter() - start
    return params, report
