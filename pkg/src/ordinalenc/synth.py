"""Synthetic multi-image subjects with known ages, and split protocols.

Every subject has a latent identity vector and a base age; each of their
images is the deterministic age signal for an age near the base age, plus
the subject's identity offset rendered at the landmark positions, plus
per-image noise.  Two images of one subject therefore share a stable
appearance component, which is exactly what lets a random image-level
split (RS) leak identity between train and test; the subject-exclusive
split (SE) removes that leak by construction.

The age signal mixes monotone channels (tanh ramps, so ordinal structure
is learnable) with sinusoidal channels (so the task is not linear in
age), each modulated by a fixed smooth spatial field.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .maskout import landmark_centers

TENSOR_MAGIC = b"OTEN1"
META_FORMAT = "ordinalenc-dataset-v1"

RS = "rs"
SE = "se"

# Age-signal shape. Monotone channels are deliberately weaker than the
# sinusoidal ones: the sinusoids alias distant ages, so decoding has to
# lean on the cumulative ordinal structure rather than a linear readout.
MONOTONE_AMP = (0.35, 0.65)
MONOTONE_STEEPNESS = (2.0, 6.0)
MONOTONE_CENTER = (0.2, 0.8)
SINUSOID_AMP = (1.0, 1.5)
SINUSOID_FREQ = (2.5, 6.5)
ANNOTATION_SIGMA = (1.0, 5.0)


@dataclass(frozen=True)
class PopulationSpec:
    """Knobs of the synthetic population generator."""

    n_subjects: int = 400
    images_min: int = 3
    images_max: int = 8
    cluster_width: float = 3.0
    noise: float = 0.25
    identity_scale: float = 1.0
    c_in: int = 8
    height: int = 7
    width: int = 7
    max_age: int = 101
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.images_min < 1 or self.images_max < self.images_min:
            raise ValueError("need n_subjects >= 1 and 1 <= images_min <= images_max")
        if self.cluster_width < 0 or self.noise < 0 or self.identity_scale < 0:
            raise ValueError("cluster_width, noise, identity_scale must be >= 0")
        if self.max_age < 2:
            raise ValueError("max_age must be >= 2")


@dataclass(frozen=True)
class Subject:
    id: int
    base_age: int
    n_images: int
    identity_vector: np.ndarray | None = None


@dataclass
class DataSplit:
    """A view of samples handed to the trainer/evaluator."""

    inputs: np.ndarray  # (n, C, H, W)
    ages: np.ndarray  # (n,) int
    sigma_n: np.ndarray  # (n,) float
    subject_ids: np.ndarray  # (n,) int

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class SyntheticDataset:
    spec: PopulationSpec
    inputs: np.ndarray  # (N, C, H, W)
    ages: np.ndarray  # (N,) int
    sigma_n: np.ndarray  # (N,) float
    subject_ids: np.ndarray  # (N,) int
    subjects: list[Subject] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def subset(self, indices) -> DataSplit:
        idx = np.asarray(indices, dtype=np.intp)
        return DataSplit(self.inputs[idx], self.ages[idx], self.sigma_n[idx], self.subject_ids[idx])


def _age_signal_tables(rng: np.random.Generator, spec: PopulationSpec):
    """Per-channel age response table (C, K) and spatial fields (C, H, W)."""
    c, k = spec.c_in, spec.max_age
    ages = np.arange(1, k + 1, dtype=np.float64) / k
    n_monotone = (c + 1) // 2
    table = np.empty((c, k))
    for ch in range(c):
        if ch < n_monotone:
            amp = rng.uniform(*MONOTONE_AMP)
            steep = rng.uniform(*MONOTONE_STEEPNESS)
            center = rng.uniform(*MONOTONE_CENTER)
            table[ch] = amp * np.tanh(steep * (ages - center))
        else:
            amp = rng.uniform(*SINUSOID_AMP)
            freq = rng.uniform(*SINUSOID_FREQ)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            table[ch] = amp * np.sin(freq * np.pi * ages + phase)
    hh = np.arange(spec.height, dtype=np.float64)[:, None] / spec.height
    ww = np.arange(spec.width, dtype=np.float64)[None, :] / spec.width
    fields = np.empty((c, spec.height, spec.width))
    for ch in range(c):
        u, v = rng.uniform(0.5, 1.5, size=2)
        psi = rng.uniform(0.0, 2.0 * np.pi)
        fields[ch] = 1.0 + 0.5 * np.cos(2.0 * np.pi * (u * hh + v * ww) + psi)
    return table, fields


def _identity_profile(height: int, width: int) -> np.ndarray:
    """Sum of Gaussian bumps at the landmark positions, peak-normalized.

    Identity lives mostly at the landmarks, mirroring how the stable
    subject-specific appearance of a face concentrates in its parts.
    """
    sigma = 0.17 * min(height, width)
    hh = np.arange(height, dtype=np.float64)[:, None]
    ww = np.arange(width, dtype=np.float64)[None, :]
    profile = np.zeros((height, width))
    for cx, cy in landmark_centers(height, width):
        profile += np.exp(-((hh - cx) ** 2 + (ww - cy) ** 2) / (2.0 * sigma**2))
    return profile / profile.max()


def generate(spec: PopulationSpec) -> SyntheticDataset:
    """Build the full dataset; identical specs give identical bytes."""
    rng = np.random.default_rng(spec.seed)
    table, fields = _age_signal_tables(rng, spec)
    profile = _identity_profile(spec.height, spec.width)

    base_ages = rng.integers(1, spec.max_age + 1, size=spec.n_subjects)
    n_images = rng.integers(spec.images_min, spec.images_max + 1, size=spec.n_subjects)
    identities = rng.standard_normal((spec.n_subjects, spec.c_in))
    total = int(n_images.sum())

    offsets = rng.uniform(-spec.cluster_width, spec.cluster_width, size=total)
    sigma_n = rng.uniform(*ANNOTATION_SIGMA, size=total)
    noise = rng.standard_normal((total, spec.c_in, spec.height, spec.width))

    subject_ids = np.repeat(np.arange(spec.n_subjects), n_images)
    ages = np.clip(np.rint(base_ages[subject_ids] + offsets), 1, spec.max_age).astype(np.int64)

    inputs = np.einsum("nc,chw->nchw", table[:, ages - 1].T, fields, optimize=True)
    inputs += spec.identity_scale * identities[subject_ids][:, :, None, None] * profile[None, None]
    inputs += spec.noise * noise

    subjects = [
        Subject(i, int(base_ages[i]), int(n_images[i]), identities[i]) for i in range(spec.n_subjects)
    ]
    return SyntheticDataset(spec, inputs, ages, sigma_n, subject_ids, subjects)


@dataclass(frozen=True)
class SplitSpec:
    """Evaluation protocol: random image split or subject-exclusive folds."""

    protocol: str = RS
    train_frac: float = 0.8
    test_frac: float = 0.2
    folds: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in (RS, SE):
            raise ValueError(f"protocol must be '{RS}' or '{SE}', got {self.protocol!r}")
        if abs(self.train_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("train and test fractions must sum to 1")
        if not (0 < self.test_frac < 1):
            raise ValueError("test fraction must be in (0, 1)")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")


def split(dataset: SyntheticDataset, spec: SplitSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded, deterministic (train_indices, test_indices) folds.

    RS draws ``folds`` independent uniform image-level resamples of size
    ``test_frac``; subjects routinely straddle the boundary.  SE shuffles
    subjects once and partitions them into ``folds`` groups, so no subject
    id ever appears on both sides of a fold.
    """
    out = []
    if spec.protocol == RS:
        n_test = int(round(dataset.n * spec.test_frac))
        if not 0 < n_test < dataset.n:
            raise ValueError(f"test fraction {spec.test_frac} leaves no train or no test samples")
        for fold in range(spec.folds):
            rng = np.random.default_rng([spec.seed, fold, 1])
            perm = rng.permutation(dataset.n)
            out.append((np.sort(perm[n_test:]), np.sort(perm[:n_test])))
        return out
    n_subjects = len(dataset.subjects)
    if n_subjects < spec.folds:
        raise ValueError(f"subject-exclusive split needs >= {spec.folds} subjects, have {n_subjects}")
    rng = np.random.default_rng([spec.seed, 0, 2])
    perm = rng.permutation(n_subjects)
    for fold in range(spec.folds):
        test_subjects = perm[fold :: spec.folds]
        test_mask = np.isin(dataset.subject_ids, test_subjects)
        out.append((np.flatnonzero(~test_mask), np.flatnonzero(test_mask)))
    return out


def subject_fold_assignment(dataset: SyntheticDataset, spec: SplitSpec) -> np.ndarray:
    """Per-subject fold index for SE; all -1 for RS (not a partition)."""
    assignment = np.full(len(dataset.subjects), -1, dtype=np.int64)
    if spec.protocol == SE:
        rng = np.random.default_rng([spec.seed, 0, 2])
        perm = rng.permutation(len(dataset.subjects))
        for fold in range(spec.folds):
            assignment[perm[fold :: spec.folds]] = fold
    return assignment


# ---------------------------------------------------------------------------
# on-disk format: meta text file, CSV manifest, binary tensors per split
# ---------------------------------------------------------------------------


def _write_tensor_file(path, sample_ids: np.ndarray, inputs: np.ndarray) -> None:
    n, c, h, w = inputs.shape
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<4I", n, c, h, w))
        fh.write(np.ascontiguousarray(sample_ids, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(inputs, dtype="<f8").tobytes())


def _read_tensor_file(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != TENSOR_MAGIC:
        raise ValueError(f"bad tensor magic in {path}")
    n, c, h, w = struct.unpack_from("<4I", blob, 5)
    off = 5 + struct.calcsize("<4I")
    ids = np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int64)
    data = np.frombuffer(blob, dtype="<f8", offset=off + 4 * n)
    if data.size != n * c * h * w:
        raise ValueError(f"tensor file {path} truncated")
    return ids, data.reshape(n, c, h, w).astype(np.float64)


def save_dataset(dataset: SyntheticDataset, out_dir, split_spec: SplitSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Write meta, manifest CSV, and one tensor file per split part."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    folds = split(dataset, split_spec)
    subject_folds = subject_fold_assignment(dataset, split_spec)

    spec = dataset.spec
    lines = [f"format={META_FORMAT}"]
    for key in (
        "seed",
        "n_subjects",
        "images_min",
        "images_max",
        "cluster_width",
        "noise",
        "identity_scale",
        "c_in",
        "height",
        "width",
        "max_age",
    ):
        lines.append(f"{key}={getattr(spec, key)}")
    lines.append(f"n_samples={dataset.n}")
    lines.append(f"protocol={split_spec.protocol}")
    lines.append(f"folds={split_spec.folds}")
    lines.append(f"train_frac={split_spec.train_frac}")
    lines.append(f"test_frac={split_spec.test_frac}")
    lines.append(f"split_seed={split_spec.seed}")
    lines.append("[subjects]")
    lines.append("id,base_age,n_images,fold")
    for s in dataset.subjects:
        lines.append(f"{s.id},{s.base_age},{s.n_images},{subject_folds[s.id]}")
    (out / "meta").write_text("\n".join(lines) + "\n")

    sample_fold = np.full(dataset.n, -1, dtype=np.int64)
    if split_spec.protocol == SE:
        sample_fold = subject_folds[dataset.subject_ids]
    else:
        sample_fold[folds[0][1]] = 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "subject_id", "age", "sigma_n", "fold"])
    for i in range(dataset.n):
        writer.writerow([i, int(dataset.subject_ids[i]), int(dataset.ages[i]), repr(float(dataset.sigma_n[i])), int(sample_fold[i])])
    (out / "samples.csv").write_text(buf.getvalue())

    for i, (train_idx, test_idx) in enumerate(folds):
        _write_tensor_file(out / f"train_fold{i}.bin", train_idx, dataset.inputs[train_idx])
        _write_tensor_file(out / f"test_fold{i}.bin", test_idx, dataset.inputs[test_idx])
    return folds


def load_dataset(in_dir):
    """Read a dataset directory back; returns (dataset, folds, split_spec)."""
    src = Path(in_dir)
    meta_text = (src / "meta").read_text()
    head, _, subject_block = meta_text.partition("[subjects]\n")
    meta = {}
    for line in head.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key] = value
    if meta.get("format") != META_FORMAT:
        raise ValueError(f"unsupported dataset format {meta.get('format')!r}")

    spec = PopulationSpec(
        n_subjects=int(meta["n_subjects"]),
        images_min=int(meta["images_min"]),
        images_max=int(meta["images_max"]),
        cluster_width=float(meta["cluster_width"]),
        noise=float(meta["noise"]),
        identity_scale=float(meta["identity_scale"]),
        c_in=int(meta["c_in"]),
        height=int(meta["height"]),
        width=int(meta["width"]),
        max_age=int(meta["max_age"]),
        seed=int(meta["seed"]),
    )
    split_spec = SplitSpec(
        protocol=meta["protocol"],
        train_frac=float(meta["train_frac"]),
        test_frac=float(meta["test_frac"]),
        folds=int(meta["folds"]),
        seed=int(meta["split_seed"]),
    )

    subjects = []
    for row in csv.DictReader(io.StringIO(subject_block)):
        subjects.append(Subject(int(row["id"]), int(row["base_age"]), int(row["n_images"])))

    n = int(meta["n_samples"])
    ages = np.zeros(n, dtype=np.int64)
    sigma_n = np.zeros(n, dtype=np.float64)
    subject_ids = np.zeros(n, dtype=np.int64)
    with open(src / "samples.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["sample_id"])
            ages[i] = int(row["age"])
            sigma_n[i] = float(row["sigma_n"])
            subject_ids[i] = int(row["subject_id"])

    inputs = np.zeros((n, spec.c_in, spec.height, spec.width))
    seen = np.zeros(n, dtype=bool)
    folds = []
    for i in range(split_spec.folds):
        fold_parts = []
        for part in ("train", "test"):
            ids, data = _read_tensor_file(src / f"{part}_fold{i}.bin")
            inputs[ids] = data
            seen[ids] = True
            fold_parts.append(ids)
        folds.append((fold_parts[0], fold_parts[1]))
    if not seen.all():
        raise ValueError("tensor files do not cover every manifest sample")

    dataset = SyntheticDataset(spec, inputs, ages, sigma_n, subject_ids, subjects)
    return dataset, folds, split_spec
