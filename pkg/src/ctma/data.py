"""Dataset tree ingestion and training-time augmentation.

On-disk layout (one directory per split):

    <root>/{train,val,test}/{A,B,label}/<id>.png

A/ and B/ hold 8-bit RGB images of the two dates, label/ holds single-channel
masks coded {0, 255}. Every id must be present in all three subdirectories and
share dimensions. Iteration order is sorted by id so runs are reproducible.
"""

import os
from dataclasses import dataclass
from typing import Iterator, List

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImageError, LayoutError, MissingFileError
from .pseudo_video import BiTemporalPair, validate_pair

SPLITS = ("train", "val", "test")
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


@dataclass
class DatasetLayout:
    root: str

    def split_dir(self, split: str) -> str:
        return os.path.join(self.root, split)


def _list_ids(d: str) -> dict:
    ids = {}
    for name in sorted(os.listdir(d)):
        stem, ext = os.path.splitext(name)
        if ext.lower() in IMAGE_EXTS:
            ids[stem] = os.path.join(d, name)
    return ids


def load_image(path: str) -> torch.Tensor:
    """8-bit RGB file -> (3, H, W) float tensor in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise CorruptImageError(f"cannot decode {path}: {e}") from e
    return torch.from_numpy(arr).permute(2, 0, 1)


def load_label(path: str) -> torch.Tensor:
    """8-bit mask file with values {0, 255} -> (1, H, W) float tensor in {0, 1}."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float32)
    except (UnidentifiedImageError, OSError) as e:
        raise CorruptImageError(f"cannot decode {path}: {e}") from e
    return torch.from_numpy((arr >= 128.0).astype(np.float32))[None]


def save_image(tensor: torch.Tensor, path: str):
    """(3, H, W) or (1, H, W) float tensor in [0, 1] -> 8-bit file."""
    arr = np.clip(np.rint(tensor.detach().numpy() * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        Image.fromarray(arr[0], mode="L").save(path)
    else:
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def list_pair_ids(layout: DatasetLayout, split: str) -> List[str]:
    base = layout.split_dir(split)
    if not os.path.isdir(base):
        raise MissingFileError(f"split directory not found: {base}")
    dirs = {}
    for sub in ("A", "B", "label"):
        d = os.path.join(base, sub)
        if not os.path.isdir(d):
            raise LayoutError(f"missing subdirectory {sub}/ under {base}")
        dirs[sub] = _list_ids(d)
    all_ids = sorted(set(dirs["A"]) | set(dirs["B"]) | set(dirs["label"]))
    for pid in all_ids:
        missing = [sub for sub in ("A", "B", "label") if pid not in dirs[sub]]
        if missing:
            raise LayoutError(
                f"id {pid!r} missing from {', '.join(m + '/' for m in missing)} under {base}"
            )
    return all_ids


def load_dataset(layout: DatasetLayout, split: str) -> Iterator[BiTemporalPair]:
    """Yield validated pairs of a split in sorted-id order."""
    base = layout.split_dir(split)
    for pid in list_pair_ids(layout, split):
        i1 = load_image(os.path.join(base, "A", _find(base, "A", pid)))
        i2 = load_image(os.path.join(base, "B", _find(base, "B", pid)))
        label = load_label(os.path.join(base, "label", _find(base, "label", pid)))
        yield validate_pair(i1, i2, label, id=pid)


def _find(base: str, sub: str, pid: str) -> str:
    for ext in IMAGE_EXTS:
        if os.path.exists(os.path.join(base, sub, pid + ext)):
            return pid + ext
    raise MissingFileError(f"no image file for id {pid!r} under {base}/{sub}")


def write_pair(pair: BiTemporalPair, root: str, split: str):
    base = os.path.join(root, split)
    for sub in ("A", "B", "label"):
        os.makedirs(os.path.join(base, sub), exist_ok=True)
    save_image(pair.i1, os.path.join(base, "A", pair.id + ".png"))
    save_image(pair.i2, os.path.join(base, "B", pair.id + ".png"))
    save_image(pair.label, os.path.join(base, "label", pair.id + ".png"))


def augment_sample(pair: BiTemporalPair, seed: int, translate_frac: float = 0.1) -> BiTemporalPair:
    """Random flip / 90-degree rotation / small translation, identical on all
    three maps of the pair. Fully determined by the seed.

    Translation shifts by up to translate_frac of the tile size in each axis,
    filling the exposed border by reflection.
    """
    rng = np.random.default_rng(seed)
    flip_h = bool(rng.random() < 0.5)
    flip_v = bool(rng.random() < 0.5)
    k_rot = int(rng.integers(0, 4))
    h, w = pair.height, pair.width
    max_dr = int(round(translate_frac * h))
    max_dc = int(round(translate_frac * w))
    dr = int(rng.integers(-max_dr, max_dr + 1)) if max_dr > 0 else 0
    dc = int(rng.integers(-max_dc, max_dc + 1)) if max_dc > 0 else 0

    def apply(t: torch.Tensor) -> torch.Tensor:
        if flip_h:
            t = torch.flip(t, dims=[-1])
        if flip_v:
            t = torch.flip(t, dims=[-2])
        if k_rot:
            t = torch.rot90(t, k=k_rot, dims=(-2, -1))
        if dr or dc:
            t = _translate_reflect(t, dr, dc)
        return t.contiguous()

    return BiTemporalPair(
        i1=apply(pair.i1),
        i2=apply(pair.i2),
        label=None if pair.label is None else apply(pair.label),
        id=pair.id,
    )


def _translate_reflect(t: torch.Tensor, dr: int, dc: int) -> torch.Tensor:
    pad = (max(dc, 0), max(-dc, 0), max(dr, 0), max(-dr, 0))  # l, r, t, b
    padded = torch.nn.functional.pad(t.unsqueeze(0), pad, mode="reflect")[0]
    h, w = t.shape[-2], t.shape[-1]
    r0 = max(-dr, 0)
    c0 = max(-dc, 0)
    return padded[..., r0 : r0 + h, c0 : c0 + w]
