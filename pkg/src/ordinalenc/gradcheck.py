"""Finite-difference gradient checking.

The checks compare analytic gradients against central differences of the
scalar loss.  Elements where both gradients are tiny (below ``floor``)
are compared absolutely at the floor instead of relatively, since the
relative error of two near-zero numbers is noise.
"""

from __future__ import annotations

import numpy as np

from .encodings import EncodingConfig, Family, encode
from .losses import logit_dim, loss
from .maskout import default_landmark_masks_side
from .model import ModelDims, backward, forward_batch, init_params
from .trainer import combined_loss

FD_STEP = 1e-5
TINY_FLOOR = 1e-8


def finite_difference_grad(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f(x)
        flat[i] = keep - h
        down = f(x)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = TINY_FLOOR) -> float:
    """Worst relative disagreement, with an absolute floor for tiny pairs."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("gradient shapes differ")
    tiny = (np.abs(a) < floor) & (np.abs(b) < floor)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    rel = np.abs(a - b) / denom
    rel[tiny] = np.abs(a - b)[tiny] / floor  # scaled absolute check at the floor
    return float(rel.max()) if rel.size else 0.0


def check_loss_gradients(family: Family, seed: int, trials: int, max_age: int = 12) -> float:
    """Worst FD-vs-analytic error over random logits and targets."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    family = Family(family)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cfg = EncodingConfig(family, max_age, float(rng.uniform(0.4, 4.0)))
        y = int(rng.integers(1, max_age + 1))
        target = encode(y, cfg)
        logits = rng.normal(0.0, 2.0, size=logit_dim(family, max_age))
        analytic = loss(logits, target).grad
        numeric = finite_difference_grad(lambda o: loss(o, target).scalar, logits)
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst


def check_model_gradients(
    family: Family,
    seed: int,
    trials: int,
    max_age: int = 6,
    aux_active: bool = True,
    aux_weight: float = 0.3,
    perturb: float = 0.0,
) -> float:
    """Worst FD error over every model parameter of the full objective.

    The objective is the combined main + weighted auxiliary loss of a
    single random sample.  ``perturb`` corrupts one analytic gradient
    entry (a negative control for the checker itself).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    family = Family(family)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        dims = ModelDims(c_in=3, c_out=4, height=6, width=6)
        d = logit_dim(family, max_age)
        params = init_params(int(rng.integers(2**31)), dims, d, n_heads=6)
        masks = default_landmark_masks_side(dims.height, dims.width, 2)
        cfg = EncodingConfig(family, max_age, float(rng.uniform(0.4, 4.0)))
        target = encode(int(rng.integers(1, max_age + 1)), cfg)
        x = rng.normal(size=(1, dims.c_in, dims.height, dims.width))

        def objective(p):
            logits, _ = forward_batch(p, x, masks, aux_active)
            branch = [loss(o[0], target) for o in logits]
            return combined_loss(branch[0].scalar, [b.scalar for b in branch[1:]], aux_weight)

        logits, trace = forward_batch(params, x, masks, aux_active)
        branch = [loss(o[0], target) for o in logits]
        upstream = [branch[0].grad[None]]
        upstream += [aux_weight * b.grad[None] for b in branch[1:]]
        grads = backward(trace, upstream, params)

        analytic = np.concatenate([g.ravel() for g in grads.arrays()])
        if perturb and trial == 0:
            analytic = analytic.copy()
            analytic[0] += perturb
        numeric = np.concatenate(
            [finite_difference_grad(_param_slice_fn(objective, params, i), arr.copy()).ravel() for i, arr in enumerate(params.arrays())]
        )
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst


def _param_slice_fn(objective, params, index):
    arrays = params.arrays()

    def f(values):
        keep = arrays[index].copy()
        arrays[index][:] = values
        try:
            return objective(params)
        finally:
            arrays[index][:] = keep

    return f
