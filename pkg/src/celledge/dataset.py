"""Dataset tooling: offset-grid patch cutting and deterministic splits."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from celledge.annotations import RasterImage
from celledge.raster import EdgeMap

__all__ = ["PatchSpec", "SplitAssignment", "patch_grid", "cut_patches", "split_dataset"]


@dataclass
class PatchSpec:
    """Patch size and the list of top-left origins to cut."""

    patch_w: int
    patch_h: int
    origins: list[tuple[int, int]]


@dataclass
class SplitAssignment:
    """Disjoint train/val/test index lists under a fixed seed."""

    seed: int
    train: list[int]
    val: list[int]
    test: list[int]


def patch_grid(size: tuple[int, int]) -> PatchSpec:
    """49 patch origins: a 4x4 base grid plus right-, lower- and
    both-offset grids shifted by half a patch.

    Requires both dimensions divisible by 8 so the quarter-size patches
    and their half-patch offsets align (2048x1536 gives 512x384 patches).
    """
    w, h = size
    if w % 8 or h % 8 or w <= 0 or h <= 0:
        raise ValueError(
            f"image size {w}x{h} not cuttable: both dimensions must be "
            "positive multiples of 8 (e.g. 2048x1536)")
    pw, ph = w // 4, h // 4
    base_x = [i * pw for i in range(4)]
    base_y = [j * ph for j in range(4)]
    off_x = [x + pw // 2 for x in base_x[:3]]
    off_y = [y + ph // 2 for y in base_y[:3]]
    origins = [(x, y) for y in base_y for x in base_x]
    origins += [(x, y) for y in base_y for x in off_x]
    origins += [(x, y) for y in off_y for x in base_x]
    origins += [(x, y) for y in off_y for x in off_x]
    return PatchSpec(pw, ph, origins)


def cut_patches(
    image: RasterImage,
    edges: EdgeMap,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut aligned (image, label) patches over the 49-origin grid."""
    if (edges.width, edges.height) != (image.width, image.height):
        raise ValueError(
            f"image {image.width}x{image.height} and label "
            f"{edges.width}x{edges.height} sizes differ")
    spec = patch_grid((image.width, image.height))
    pairs = []
    for x0, y0 in spec.origins:
        img_patch = image.pixels[y0:y0 + spec.patch_h, x0:x0 + spec.patch_w]
        lbl_patch = edges.bits[y0:y0 + spec.patch_h, x0:x0 + spec.patch_w]
        pairs.append((img_patch.copy(), lbl_patch.copy()))
    return pairs


def split_dataset(n: int, seed: int) -> SplitAssignment:
    """Shuffle n indices into 6:1:3 train/val/test splits.

    Sizes are floor(0.6 n) and floor(0.1 n) with the remainder going to
    test (686 -> 411/68/207). The shuffle is an explicit seeded
    Fisher-Yates so assignments reproduce across platforms.
    """
    if n < 10:
        raise ValueError(f"need at least 10 items to split, got {n}")
    indices = list(range(n))
    rng = random.Random(seed)
    for i in range(n - 1, 0, -1):
        j = rng.randrange(i + 1)
        indices[i], indices[j] = indices[j], indices[i]
    n_train = 6 * n // 10
    n_val = n // 10
    return SplitAssignment(
        seed=seed,
        train=indices[:n_train],
        val=indices[n_train:n_train + n_val],
        test=indices[n_train + n_val:],
    )
