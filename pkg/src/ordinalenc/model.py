"""A small differentiable model with manual forward/backward.

The backbone is a shared per-cell linear map plus ReLU (the 1x1-conv
equivalent): every spatial cell of the input is transformed by the same
(C_out, C_in) matrix.  Global average pooling turns the feature map into a
C_out vector, and each branch applies its own linear head.  Branch 0 is
the main branch and pools the full feature map; branches 1..5 pool
feature maps with one landmark mask applied each and are only used while
auxiliary training is active.

Because the backbone is shared, gradients from the auxiliary branches
flow into the same weights as the main branch - that coupling is the
whole point of the masked branches.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .maskout import Mask

CHECKPOINT_MAGIC = b"OENC1"


@dataclass(frozen=True)
class ModelDims:
    c_in: int
    c_out: int
    height: int
    width: int

    def __post_init__(self):
        for name in ("c_in", "c_out", "height", "width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class ModelParams:
    """Backbone weights plus one (W, b) head per branch.

    Head weights have shape (D, C_out) so logits are ``W @ f + b``.
    ``height``/``width`` record the spatial grid the model was built for;
    they ride along so checkpoints are self-describing.
    """

    backbone_w: np.ndarray  # (C_out, C_in)
    backbone_b: np.ndarray  # (C_out,)
    head_w: list[np.ndarray] = field(default_factory=list)  # each (D, C_out)
    head_b: list[np.ndarray] = field(default_factory=list)  # each (D,)
    height: int = 0
    width: int = 0

    @property
    def c_out(self) -> int:
        return self.backbone_w.shape[0]

    @property
    def c_in(self) -> int:
        return self.backbone_w.shape[1]

    @property
    def n_heads(self) -> int:
        return len(self.head_w)

    @property
    def logit_dim(self) -> int:
        return self.head_w[0].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.backbone_w.copy(),
            self.backbone_b.copy(),
            [w.copy() for w in self.head_w],
            [b.copy() for b in self.head_b],
            self.height,
            self.width,
        )

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in the canonical (checkpoint) order."""
        out = [self.backbone_w, self.backbone_b]
        for w, b in zip(self.head_w, self.head_b):
            out.extend((w, b))
        return out

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            np.zeros_like(self.backbone_w),
            np.zeros_like(self.backbone_b),
            [np.zeros_like(w) for w in self.head_w],
            [np.zeros_like(b) for b in self.head_b],
            self.height,
            self.width,
        )


def init_params(seed: int, dims: ModelDims, logit_dim: int, n_heads: int = 6) -> ModelParams:
    """Glorot-uniform initialization, deterministic per seed.

    Draw order is fixed (backbone W, backbone b, then each head's W, b) so
    identical seeds give bit-identical parameters.
    """
    if n_heads < 1:
        raise ValueError("need at least the main head")
    rng = np.random.default_rng(seed)
    a = np.sqrt(6.0 / (dims.c_in + dims.c_out))
    backbone_w = rng.uniform(-a, a, size=(dims.c_out, dims.c_in))
    backbone_b = rng.uniform(-a, a, size=dims.c_out)
    head_w, head_b = [], []
    a_h = np.sqrt(6.0 / (dims.c_out + logit_dim))
    for _ in range(n_heads):
        head_w.append(rng.uniform(-a_h, a_h, size=(logit_dim, dims.c_out)))
        head_b.append(rng.uniform(-a_h, a_h, size=logit_dim))
    return ModelParams(backbone_w, backbone_b, head_w, head_b, dims.height, dims.width)


@dataclass
class ForwardTrace:
    """Intermediates cached by ``forward_batch`` for the backward pass."""

    x: np.ndarray  # (B, C_in, H, W)
    relu_mask: np.ndarray  # (B, C_out, H, W) bool, pre-activation > 0
    features: np.ndarray  # (B, C_out, H, W) after ReLU
    pooled: list[np.ndarray]  # per active branch, (B, C_out)
    logits: list[np.ndarray]  # per active branch, (B, D)
    masks: list[Mask]
    aux_active: bool


def forward_batch(params: ModelParams, x: np.ndarray, masks: list[Mask], aux_active: bool):
    """Forward pass over a batch; returns (per-branch logits, trace)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != params.c_in:
        raise ValueError(f"expected (B, {params.c_in}, H, W) input, got shape {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if aux_active:
        if len(masks) != params.n_heads - 1:
            raise ValueError(f"got {len(masks)} masks for {params.n_heads - 1} auxiliary heads")
        for m in masks:
            if m.grid.shape != (h, w):
                raise ValueError(f"mask dims {m.grid.shape} != input spatial dims {(h, w)}")
    z = np.einsum("oc,bchw->bohw", params.backbone_w, x, optimize=True)
    z += params.backbone_b[None, :, None, None]
    relu_mask = z > 0
    features = np.where(relu_mask, z, 0.0)
    pooled = [features.mean(axis=(2, 3))]
    if aux_active:
        for m in masks:
            pooled.append(np.einsum("bchw,hw->bc", features, m.grid, optimize=True) / (h * w))
    logits = [f @ params.head_w[i].T + params.head_b[i] for i, f in enumerate(pooled)]
    return logits, ForwardTrace(x, relu_mask, features, pooled, logits, list(masks), aux_active)


def forward(params: ModelParams, x: np.ndarray, masks: list[Mask], aux_active: bool):
    """Single-sample forward; ``x`` is (C_in, H, W)."""
    logits, trace = forward_batch(params, np.asarray(x, dtype=np.float64)[None], masks, aux_active)
    return [o[0] for o in logits], trace


def backward(trace: ForwardTrace, grad_logits: list[np.ndarray], params: ModelParams) -> ModelParams:
    """Exact parameter gradients for the scalar whose per-branch logit
    gradients are given (summed over the batch).

    Inactive auxiliary heads get zero gradients.  ``grad_logits[i]`` must
    match ``trace.logits[i]`` in shape; pass batch-mean-scaled upstream
    gradients to get batch-mean parameter gradients.
    """
    if len(grad_logits) != len(trace.logits):
        raise ValueError(f"got {len(grad_logits)} logit gradients for {len(trace.logits)} branches")
    grads = params.zeros_like()
    b, _, h, w = trace.x.shape
    d_features = np.zeros_like(trace.features)
    for i, g in enumerate(grad_logits):
        g = np.asarray(g, dtype=np.float64)
        if g.ndim == 1:
            g = g[None]
        if g.shape != trace.logits[i].shape:
            raise ValueError(f"branch {i} gradient shape {g.shape} != logits shape {trace.logits[i].shape}")
        grads.head_w[i][:] = g.T @ trace.pooled[i]
        grads.head_b[i][:] = g.sum(axis=0)
        df = g @ params.head_w[i]  # (B, C_out)
        if i == 0:
            d_features += df[:, :, None, None] / (h * w)
        else:
            d_features += df[:, :, None, None] * (trace.masks[i - 1].grid / (h * w))[None, None]
    dz = np.where(trace.relu_mask, d_features, 0.0)
    grads.backbone_w[:] = np.einsum("bohw,bchw->oc", dz, trace.x, optimize=True)
    grads.backbone_b[:] = dz.sum(axis=(0, 2, 3))
    return grads


def clone_head(params: ModelParams, from_branch: int, to_branch: int) -> ModelParams:
    """Copy one head's (W, b) onto another; no arrays are shared."""
    n = params.n_heads
    if not (0 <= from_branch < n and 0 <= to_branch < n):
        raise IndexError(f"branch index out of range for {n} heads")
    out = params.copy()
    out.head_w[to_branch] = params.head_w[from_branch].copy()
    out.head_b[to_branch] = params.head_b[from_branch].copy()
    return out


def save_checkpoint(params: ModelParams, path) -> None:
    """Flat binary layout: magic, u32 dims header, little-endian f64 data.

    Header order: c_in, c_out, height, width, logit_dim, n_heads.
    Parameter order matches ``ModelParams.arrays`` (row-major matrices).
    """
    header = struct.pack(
        "<5s6I",
        CHECKPOINT_MAGIC,
        params.c_in,
        params.c_out,
        params.height,
        params.width,
        params.logit_dim,
        params.n_heads,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    head_size = struct.calcsize("<5s6I")
    if len(blob) < head_size:
        raise ValueError(f"checkpoint too short: {len(blob)} bytes")
    magic, c_in, c_out, height, width, d, n_heads = struct.unpack_from("<5s6I", blob)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    n_expected = c_out * c_in + c_out + n_heads * (d * c_out + d)
    data = np.frombuffer(blob, dtype="<f8", offset=head_size)
    if data.size != n_expected:
        raise ValueError(f"checkpoint holds {data.size} floats, expected {n_expected}")
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = data[pos : pos + n].reshape(shape).astype(np.float64)
        pos += n
        return out

    backbone_w = take((c_out, c_in))
    backbone_b = take((c_out,))
    head_w, head_b = [], []
    for _ in range(n_heads):
        head_w.append(take((d, c_out)))
        head_b.append(take((d,)))
    return ModelParams(backbone_w, backbone_b, head_w, head_b, height, width)
