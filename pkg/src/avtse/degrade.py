"""Inference-time visual corruptions with block-structured frame selection.

Four kinds are supported: gaussian blur (gb) and concealment (cc) act on
pixels, face-missing (fm) zeroes whole frames, masked-feature (mf) zeroes
columns of an encoded visual feature. Frames outside the mask are returned
bit-identical to the input.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

PIXEL_KINDS = ("gb", "cc", "fm")
FEATURE_KINDS = ("mf",)
KINDS = PIXEL_KINDS + FEATURE_KINDS

DEFAULT_BLOCK_LEN = 5


@dataclass
class FrameMask:
    """Boolean frame selection whose true entries form disjoint blocks."""
    flags: np.ndarray
    block_len: int
    proportion: float

    def count(self) -> int:
        return int(np.sum(self.flags))


@dataclass
class DegradationSpec:
    kind: str
    mask: FrameMask
    blur_sigma: float = 3.0
    blur_size: int = 9
    occluder_range: tuple = (30, 60)
    occluder_value: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")


def sample_mask_blocks(num_frames, proportion, block_len=DEFAULT_BLOCK_LEN,
                       seed=0) -> FrameMask:
    """Select round(proportion * num_frames) frames as disjoint random blocks.

    All blocks have length block_len except the final one, which is truncated
    so the selected count is exact. Placement is uniform over the ordered
    non-overlapping arrangements; deterministic given seed.
    """
    if not 0.0 <= proportion <= 1.0:
        raise ValueError("proportion must lie in [0, 1]")
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    count = int(round(proportion * num_frames))
    flags = np.zeros(num_frames, dtype=bool)
    if count > num_frames:
        raise ValueError("mask overflow")
    if count == 0:
        return FrameMask(flags, block_len, proportion)

    lengths = [block_len] * (count // block_len)
    if count % block_len:
        lengths.append(count % block_len)
    num_blocks = len(lengths)
    free = num_frames - count

    # uniform composition of `free` into num_blocks + 1 gaps (stars and bars)
    rng = np.random.default_rng(seed)
    if free > 0:
        bars = np.sort(rng.choice(free + num_blocks, size=num_blocks,
                                  replace=False))
        gaps = np.diff(np.concatenate(([-1], bars, [free + num_blocks]))) - 1
    else:
        gaps = np.zeros(num_blocks + 1, dtype=int)

    pos = 0
    for gap, length in zip(gaps[:-1], lengths):
        pos += int(gap)
        flags[pos:pos + length] = True
        pos += length
    return FrameMask(flags, block_len, proportion)


def _gaussian_kernel(size, sigma):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def degrade(x: np.ndarray, spec: DegradationSpec, seed: int = 0) -> np.ndarray:
    """Apply one corruption to a pixel video (T, 88, 88) or a visual feature
    (N, T). Deterministic given (spec, seed); unmasked frames are untouched."""
    flags = spec.mask.flags
    if spec.kind in FEATURE_KINDS:
        if x.ndim != 2:
            raise ValueError("wrong degradation stage")
        if x.shape[1] != len(flags):
            raise ValueError("mask length does not match feature length")
        out = x.copy()
        out[:, flags] = 0.0
        return out

    if x.ndim != 3:
        raise ValueError("wrong degradation stage")
    if x.shape[0] != len(flags):
        raise ValueError("mask length does not match frame count")
    out = x.copy()
    idx = np.flatnonzero(flags)
    if spec.kind == "fm":
        out[idx] = 0.0
    elif spec.kind == "gb":
        kernel = _gaussian_kernel(spec.blur_size, spec.blur_sigma)
        for i in idx:
            out[i] = ndimage.convolve(x[i], kernel, mode="reflect")
    elif spec.kind == "cc":
        rng = np.random.default_rng(seed)
        lo, hi = spec.occluder_range
        height, width = x.shape[1], x.shape[2]
        for i in idx:
            w = int(rng.integers(lo, hi + 1))
            h = int(rng.integers(lo, hi + 1))
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            out[i, top:top + h, left:left + w] = spec.occluder_value
    return out


def make_spec(kind, num_frames, proportion, seed,
              block_len=DEFAULT_BLOCK_LEN, **params) -> DegradationSpec:
    """Convenience: sample a block mask and wrap it in a DegradationSpec."""
    mask = sample_mask_blocks(num_frames, proportion, block_len, seed)
    return DegradationSpec(kind=kind, mask=mask, **params)
