"""Image ingestion, normalization, deterministic splits and channel handling."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".pgm"}
LUMA = np.array([0.299, 0.587, 0.114])
MIN_IMAGES = 500
SPLIT_FRACTIONS = (0.90, 0.05, 0.05)


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    ids: list[str]
    paths: list[str]
    images: np.ndarray  # [N, C, m, n] in [0, 1]
    split: dict[str, np.ndarray]
    manifest_path: Path | None = None
    labels: dict[str, str] = field(default_factory=dict)

    def subset(self, name: str) -> np.ndarray:
        return self.images[self.split[name]]

    def subset_ids(self, name: str) -> list[str]:
        return [self.ids[i] for i in self.split[name]]

    def label_array(self, name: str) -> list[str]:
        return [self.labels[i] for i in self.subset_ids(name)]

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])  # type: ignore[return-value]


def decode_image(path: Path, size: tuple[int, int], channels: int) -> np.ndarray:
    """Decode, center-crop to square, box-resize, scale to [0,1]; returns [C, m, n]."""
    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)
            arr = arr / (65535.0 if arr.max() > 255 else 255.0)
            arr = arr[..., None]
        else:
            im = im.convert("RGB") if im.mode not in ("L", "RGB") else im
            arr = np.asarray(im, dtype=np.float64) / 255.0
            if arr.ndim == 2:
                arr = arr[..., None]
    h, w = arr.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    arr = arr[top:top + s, left:left + s]
    m, n = size
    if (s, s) != (m, n):
        arr = np.stack([
            np.asarray(Image.fromarray(arr[..., k].astype(np.float32), mode="F")
                       .resize((n, m), resample=Image.BOX), dtype=np.float64)
            for k in range(arr.shape[2])
        ], axis=-1)
    if channels == 1:
        arr = arr[..., :1] if arr.shape[2] == 1 else (arr[..., :3] @ LUMA)[..., None]
    elif channels == 3:
        arr = np.repeat(arr, 3, axis=2) if arr.shape[2] == 1 else arr[..., :3]
    else:
        raise DatasetError(f"channels must be 1 or 3, got {channels}")
    return np.clip(np.transpose(arr, (2, 0, 1)), 0.0, 1.0)


def split_indices(count: int, seed: int) -> dict[str, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(count)
    n_train = int(round(SPLIT_FRACTIONS[0] * count))
    n_val = int(round(SPLIT_FRACTIONS[1] * count))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def read_labels(directory: Path) -> dict[str, str]:
    """Optional ``labels.tsv`` (id<TAB>label) next to the images."""
    path = directory / "labels.tsv"
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            key, label = line.split("\t")[:2]
            out[key] = label
    return out


def write_manifest(path: Path, ids, paths, split: dict[str, np.ndarray]) -> None:
    which = {}
    for name, idx in split.items():
        for i in idx:
            which[int(i)] = name
    with open(path, "w") as fh:
        for i, (ident, p) in enumerate(zip(ids, paths)):
            fh.write(f"{ident}\t{p}\t{which[i]}\n")


def read_manifest(path: Path) -> tuple[list[str], list[str], dict[str, np.ndarray]]:
    ids, paths, groups = [], [], {"train": [], "val": [], "test": []}
    for i, line in enumerate(Path(path).read_text().splitlines()):
        ident, p, name = line.split("\t")
        ids.append(ident)
        paths.append(p)
        groups[name].append(i)
    return ids, paths, {k: np.array(v, dtype=np.int64) for k, v in groups.items()}


def manifest_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_dataset(directory, size: tuple[int, int] = (32, 32), channels: int = 1, seed: int = 0,
                 manifest: Path | None = None, min_images: int = MIN_IMAGES) -> Dataset:
    """Load every PNG/PGM in ``directory`` (sorted by name) and split 90/5/5.

    If ``manifest`` names an existing file its split is reused verbatim;
    otherwise a new one is drawn from ``seed`` and written there.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    ids, paths, images = [], [], []
    for f in files:
        try:
            images.append(decode_image(f, size, channels))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            log.warning("skipping undecodable image %s: %s", f, exc)
            continue
        ids.append(f.stem)
        paths.append(str(f))
    if len(images) < min_images:
        raise DatasetError(f"{directory}: {len(images)} usable images, need at least {min_images}")
    stack = np.stack(images)
    if manifest is not None and Path(manifest).exists():
        m_ids, _, split = read_manifest(manifest)
        if m_ids != ids:
            raise DatasetError(f"manifest {manifest} does not match the images in {directory}")
    else:
        split = split_indices(len(ids), seed)
        if manifest is not None:
            write_manifest(Path(manifest), ids, paths, split)
    return Dataset(ids, paths, stack, split, Path(manifest) if manifest else None, read_labels(directory))


def sum_channels(image: np.ndarray) -> np.ndarray:
    """[C, m, n] -> [m, n] (also accepts a leading batch axis)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim < 3 or image.shape[-3] < 1:
        raise DatasetError(f"expected [..., C, m, n], got {image.shape}")
    return image.sum(axis=-3)


def save_png(path, image: np.ndarray) -> None:
    """Write a [C, m, n] or [m, n] image in [0,1] as 8-bit PNG."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[0] if arr.shape[0] == 1 else np.transpose(arr, (1, 2, 0))
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8).save(path)


# ---------------------------------------------------------------------------
# synthetic desk dataset
# ---------------------------------------------------------------------------

def make_desk_dataset(out_dir, count: int = 1797, size: int = 32, seed: int = 0) -> Path:
    """Render handwritten-digit scans (bundled with scikit-learn) as labeled PNGs.

    Each 8x8 scan is upsampled bicubically, given a small random shift,
    scale and stroke-gain jitter, and written with its class in
    ``labels.tsv``.  Gives a >1,000-image structured, labeled desk corpus.
    """
    from sklearn.datasets import load_digits

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(count):
        src = digits.images[i % len(digits.images)] / 16.0
        label = int(digits.target[i % len(digits.target)])
        scale = rng.uniform(0.85, 1.0)
        inner = int(round(size * scale))
        im = Image.fromarray((src * 255).astype(np.uint8)).resize((inner, inner), Image.BICUBIC)
        canvas = Image.new("L", (size, size), 0)
        slack = size - inner
        dx = int(np.clip(slack // 2 + rng.integers(-1, 2), 0, slack))
        dy = int(np.clip(slack // 2 + rng.integers(-1, 2), 0, slack))
        canvas.paste(im, (dx, dy))
        arr = np.asarray(canvas, dtype=np.float64) * rng.uniform(0.8, 1.0)
        ident = f"img{i:05d}"
        Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8)).save(out / f"{ident}.png")
        lines.append(f"{ident}\t{label}")
    (out / "labels.tsv").write_text("\n".join(lines) + "\n")
    return out
