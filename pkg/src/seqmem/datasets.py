"""MNIST ingestion and construction of the correlated digit sequence.

The library never downloads anything.  Point it at local IDX files (gzipped
or raw); see the README for the canonical filenames and checksums.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np

from .patterns import PatternSet, substream

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
_UBYTE_CODE = 0x08


def _open_maybe_gzip(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx(path) -> np.ndarray:
    """Parse a big-endian IDX file of unsigned bytes into an ndarray."""
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4)
        if len(header) < 4:
            raise ValueError(f"{path}: truncated IDX header")
        if header[0] != 0 or header[1] != 0:
            raise ValueError(f"{path}: bad IDX magic {header!r}")
        dtype_code, ndim = header[2], header[3]
        if dtype_code != _UBYTE_CODE:
            raise ValueError(f"{path}: unsupported IDX dtype code {dtype_code:#x}")
        dim_bytes = fh.read(4 * ndim)
        if len(dim_bytes) < 4 * ndim:
            raise ValueError(f"{path}: truncated IDX dimension list")
        dims = [int(d) for d in np.frombuffer(dim_bytes, dtype=">u4")]
        body = fh.read()
    expected = int(np.prod(dims)) if dims else 0
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims).copy()


def _magic_of(path) -> int:
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4)
    if len(header) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    return int.from_bytes(header, "big")


def load_mnist_images(path) -> np.ndarray:
    """Load an IDX image file, checking its magic number (2051) and rank."""
    if _magic_of(path) != IMAGE_MAGIC:
        raise ValueError(f"{path}: magic {_magic_of(path)} is not an IDX image file")
    images = load_idx(path)
    if images.ndim != 3:
        raise ValueError(f"{path}: image file should be rank 3, got {images.ndim}")
    return images


def load_mnist_labels(path) -> np.ndarray:
    """Load an IDX label file, checking its magic number (2049)."""
    if _magic_of(path) != LABEL_MAGIC:
        raise ValueError(f"{path}: magic {_magic_of(path)} is not an IDX label file")
    labels = load_idx(path)
    if labels.ndim != 1:
        raise ValueError(f"{path}: label file should be rank 1, got {labels.ndim}")
    return labels


def binarize(images: np.ndarray, threshold: int = 128) -> np.ndarray:
    """Map pixels to bipolar values: +1 where pixel >= threshold, else -1.

    The threshold is inclusive, so the default sends pixel value 128 to +1.
    """
    return np.where(images >= threshold, 1, -1).astype(np.int8)


@dataclass
class DigitSequence:
    """Binarized image sequence in blocks of digits 0-9, ascending per block."""

    patterns: PatternSet
    labels: np.ndarray        # digit per pattern
    image_indices: np.ndarray  # row index into the source image array
    threshold: int

    @property
    def n_blocks(self) -> int:
        return self.patterns.n_patterns // 10


def build_digit_sequence(images: np.ndarray, labels: np.ndarray,
                         n_blocks: int = 1000, seed: int = 0,
                         threshold: int = 128) -> DigitSequence:
    """Sample unique images per digit and interleave them into ordered blocks.

    Block l holds one image of each digit 0..9 in ascending order, images
    drawn without replacement, so the full sequence has P = 10 * n_blocks
    correlated patterns.
    """
    if images.shape[0] != labels.shape[0]:
        raise ValueError("images and labels disagree on the number of examples")
    flat = images.reshape(images.shape[0], -1)
    rng = substream(seed, 4)
    chosen = np.empty((n_blocks, 10), dtype=np.int64)
    for digit in range(10):
        pool = np.flatnonzero(labels == digit)
        if pool.size < n_blocks:
            raise ValueError(
                f"digit {digit} has only {pool.size} examples, need {n_blocks}")
        chosen[:, digit] = rng.choice(pool, size=n_blocks, replace=False)
    order = chosen.reshape(-1)
    bipolar = binarize(flat[order], threshold=threshold)
    return DigitSequence(
        patterns=PatternSet.from_bipolar(bipolar),
        labels=labels[order].copy(),
        image_indices=order,
        threshold=threshold,
    )
