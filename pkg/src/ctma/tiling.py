"""Sliding-window tiling of large rasters and overlap-averaged stitching.

Windows advance in row-major order at a fixed stride; the last row/column of
windows snaps to the raster edge so every pixel is covered. Stitching averages
the per-pixel predictions of all windows covering that pixel, which is also
how overlapping inference windows are merged at evaluation time.
"""

import csv
from dataclasses import dataclass, field
from typing import List, Tuple

import torch

from .errors import ConfigError, CoverageGapError, ShapeMismatchError, TooSmallError


@dataclass
class TileSpec:
    tile_size: int = 256
    stride: int = 256

    def validate(self, image_hw: Tuple[int, int] = None):
        if not 0 < self.stride <= self.tile_size:
            raise ConfigError(
                f"stride must satisfy 0 < stride <= tile_size, got "
                f"stride={self.stride}, tile_size={self.tile_size}"
            )
        if image_hw is not None and (
            self.tile_size > image_hw[0] or self.tile_size > image_hw[1]
        ):
            raise TooSmallError(
                f"image {image_hw} smaller than tile size {self.tile_size}"
            )
        return self


@dataclass
class TileIndex:
    origins: List[Tuple[int, int]] = field(default_factory=list)  # (row, col) per tile
    tile_size: int = 256
    source_hw: Tuple[int, int] = (0, 0)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id", "row", "col"])
            for i, (r, c) in enumerate(self.origins):
                writer.writerow([i, r, c])


def _axis_origins(dim: int, size: int, stride: int) -> List[int]:
    origins = list(range(0, dim - size + 1, stride))
    if origins[-1] != dim - size:
        origins.append(dim - size)  # snap the last window to the edge
    return origins


def tile_image(img: torch.Tensor, spec: TileSpec):
    """Cut (C, H, W) into windows of spec.tile_size at spec.stride.

    Returns (tiles, index) where tiles is (n, C, t, t) and index records each
    window's top-left origin in row-major order.
    """
    spec.validate()
    h, w = img.shape[-2], img.shape[-1]
    if h < spec.tile_size or w < spec.tile_size:
        raise TooSmallError(
            f"image {h}x{w} smaller than tile size {spec.tile_size}"
        )
    rows = _axis_origins(h, spec.tile_size, spec.stride)
    cols = _axis_origins(w, spec.tile_size, spec.stride)
    origins = [(r, c) for r in rows for c in cols]
    tiles = torch.stack(
        [img[..., r : r + spec.tile_size, c : c + spec.tile_size] for r, c in origins]
    )
    return tiles, TileIndex(origins=origins, tile_size=spec.tile_size, source_hw=(h, w))


def stitch_predictions(tiles, index: TileIndex) -> torch.Tensor:
    """Reassemble per-tile maps into a full raster, averaging overlaps.

    tiles: sequence of (C, t, t) maps (or an (n, C, t, t) tensor) matching
    index. Every source pixel must be covered by at least one window.
    """
    if len(tiles) != len(index.origins):
        raise ShapeMismatchError(
            f"{len(tiles)} tiles vs {len(index.origins)} index entries"
        )
    h, w = index.source_hw
    t = index.tile_size
    first = tiles[0]
    out = torch.zeros(first.shape[:-2] + (h, w), dtype=torch.float64)
    cover = torch.zeros(h, w, dtype=torch.float64)
    for tile, (r, c) in zip(tiles, index.origins):
        if tile.shape[-2:] != (t, t):
            raise ShapeMismatchError(
                f"tile shape {tuple(tile.shape[-2:])} does not match tile size {t}"
            )
        out[..., r : r + t, c : c + t] += tile.to(torch.float64)
        cover[r : r + t, c : c + t] += 1.0
    if not torch.all(cover > 0):
        gaps = int((cover == 0).sum())
        raise CoverageGapError(f"{gaps} pixels not covered by any tile")
    out = out / cover
    return out.to(first.dtype if torch.is_floating_point(first) else torch.float32)
