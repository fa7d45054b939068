"""Patchification stem and rotation-normalized feature aggregation.

The stem is a single linear projection of each flattened p x p patch
(row-major pixel order, channel fastest). Rotation normalization runs the
stem on quarter-turned copies of the image, turns each feature grid back,
and takes the element-wise max, which makes the result exactly equivariant
to quarter turns of the input.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ArgumentError, ShapeError
from .flops import FlopCounter, count
from .images import ImageTensor, inverse_turn, rotate_grid, rotate_quarter


@dataclass(frozen=True)
class StemWeights:
    """Linear patch projection: (p*p*in_channels) x out_channels, plus bias."""

    patch_size: int
    in_channels: int
    out_channels: int
    projection: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        p, ci, co = self.patch_size, self.in_channels, self.out_channels
        if self.projection.shape != (p * p * ci, co):
            raise ShapeError(
                f"projection shape {self.projection.shape} does not match "
                f"({p * p * ci}, {co})"
            )
        if self.bias.shape != (co,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({co},)")
        if not (np.isfinite(self.projection).all() and np.isfinite(self.bias).all()):
            raise ArgumentError("stem weights must be finite")


@dataclass(frozen=True)
class FeatureMap:
    """hp x wp grid of C-channel patch features (float64)."""

    hp: int
    wp: int
    channels: int
    data: np.ndarray

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FeatureMap":
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"expected hp x wp x C array, got shape {arr.shape}")
        return cls(hp=arr.shape[0], wp=arr.shape[1], channels=arr.shape[2], data=arr)

    @property
    def tokens(self) -> np.ndarray:
        """Row-major (hp*wp, C) view of the grid."""
        return self.data.reshape(self.hp * self.wp, self.channels)


def identity_stem(patch_size: int, in_channels: int) -> StemWeights:
    """Stem whose features are the raw flattened patches."""
    d = patch_size * patch_size * in_channels
    return StemWeights(
        patch_size=patch_size,
        in_channels=in_channels,
        out_channels=d,
        projection=np.eye(d, dtype=np.float32),
        bias=np.zeros(d, dtype=np.float32),
    )


def mean_stem(patch_size: int, in_channels: int) -> StemWeights:
    """Single-channel stem computing each patch's mean intensity."""
    d = patch_size * patch_size * in_channels
    proj = np.full((d, 1), 1.0 / d, dtype=np.float32)
    return StemWeights(
        patch_size=patch_size,
        in_channels=in_channels,
        out_channels=1,
        projection=proj,
        bias=np.zeros(1, dtype=np.float32),
    )


def patchify(
    img: ImageTensor, w: StemWeights, counter: FlopCounter | None = None
) -> FeatureMap:
    """Project each non-overlapping p x p patch to a C-vector.

    Feature at grid cell (i, j) is bias + projection applied to the patch
    whose top-left pixel is (i*p, j*p), accumulated in float64.
    """
    p = w.patch_size
    if img.channels != w.in_channels:
        raise ShapeError(
            f"image has {img.channels} channels, stem expects {w.in_channels}"
        )
    if img.height % p or img.width % p:
        raise ShapeError(
            f"patch size {p} does not divide image {img.height}x{img.width}"
        )
    hp = img.height // p
    wp = img.width // p
    flat = (
        img.data.reshape(hp, p, wp, p, img.channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(hp * wp, p * p * img.channels)
        .astype(np.float64)
    )
    feats = flat @ w.projection.astype(np.float64) + w.bias.astype(np.float64)
    count(counter, "stem", 2 * flat.shape[0] * flat.shape[1] * w.out_channels)
    return FeatureMap(hp=hp, wp=wp, channels=w.out_channels, data=feats.reshape(hp, wp, -1))


def rotation_normalized_features(
    img: ImageTensor,
    w: StemWeights,
    turns: Iterable[int],
    counter: FlopCounter | None = None,
    parallel: bool = False,
) -> FeatureMap:
    """Element-wise max of back-rotated stem features over the given turns.

    With turns={0,1,2,3} and a square input the output commutes exactly with
    quarter-turns of the image: a max over the whole group is unchanged by
    any group element.
    """
    turn_list = sorted({int(q) for q in turns})
    if not turn_list:
        raise ArgumentError("turns must be nonempty")
    if any(q % 2 for q in turn_list) and img.height != img.width:
        raise ShapeError(
            f"odd quarter turns need a square image, got {img.height}x{img.width}"
        )

    def branch(q: int) -> np.ndarray:
        fm = patchify(rotate_quarter(img, q), w, counter)
        return rotate_grid(fm.data, inverse_turn(q))

    if parallel and len(turn_list) > 1:
        with ThreadPoolExecutor(max_workers=len(turn_list)) as pool:
            grids = list(pool.map(branch, turn_list))
    else:
        grids = [branch(q) for q in turn_list]

    acc = grids[0]
    for g in grids[1:]:
        acc = np.maximum(acc, g)
    return FeatureMap(hp=acc.shape[0], wp=acc.shape[1], channels=acc.shape[2], data=acc)
