"""Binary target encoding of 8-bit color values and sinusoidal input encoding.

Bit vectors are stored least-significant place first, so ``bits[..., j]``
carries place value ``2**j``. Use :func:`msb_first` for display.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, matmul, reshape

N_BITS = 8
MAX_VALUE = 2**N_BITS - 1

# weight of each place in the decoded, unit-range color: 2^(j-1)/255
PLACE_WEIGHTS = 2.0 ** np.arange(N_BITS) / MAX_VALUE


def binary_encode(y) -> np.ndarray:
    """Integer color value(s) in [0, 255] -> bits, shape ``(..., 8)``, dtype uint8."""
    arr = np.asarray(y)
    if not np.issubdtype(arr.dtype, np.integer):
        if np.any(arr != np.round(arr)):
            raise ValueError("binary_encode expects integer color values")
        arr = arr.astype(np.int64)
    if np.any((arr < 0) | (arr > MAX_VALUE)):
        raise ValueError(f"color value out of range [0, {MAX_VALUE}]: {y!r}")
    return ((arr[..., None] >> np.arange(N_BITS)) & 1).astype(np.uint8)


def binary_decode(bits):
    bits = np.asarray(bits)
    if bits.shape[-1] != N_BITS or np.any((bits != 0) & (bits != 1)):
        raise ValueError("expected hard bits with a trailing axis of length 8")
    out = (bits.astype(np.int64) << np.arange(N_BITS)).sum(axis=-1)
    return int(out) if out.ndim == 0 else out


def probability_decode(probs):
    """Unit-range color from per-bit probabilities: (1/255) * sum_j 2^(j-1) p_j.

    Works on arrays and on :class:`Tensor` (the map is linear, so gradients
    pass through with the place weights).
    """
    if isinstance(probs, Tensor):
        lead = probs.shape[:-1]
        flat = reshape(probs, (-1, N_BITS))
        return reshape(matmul(flat, PLACE_WEIGHTS[:, None]), lead)
    return np.asarray(probs, dtype=np.float64) @ PLACE_WEIGHTS


def msb_first(bits) -> list[int]:
    return [int(b) for b in np.asarray(bits)[::-1]]


def color_to_label(c) -> np.ndarray:
    """Unit-range color(s) -> integer labels via round(c * 255)."""
    return np.clip(np.rint(np.asarray(c, dtype=np.float64) * MAX_VALUE), 0, MAX_VALUE).astype(np.int64)


def encode_colors(c) -> np.ndarray:
    """Unit-range colors ``(..., 3)`` -> float bit targets ``(..., 3, 8)``."""
    return binary_encode(color_to_label(c)).astype(np.float64)


def positional_encode(p, n_freqs: int, include_input: bool = True) -> np.ndarray:
    """[p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)].

    Each block is as wide as ``p``'s last axis, giving
    ``d * (include_input + 2 * n_freqs)`` features.
    """
    if n_freqs < 0:
        raise ValueError("n_freqs must be >= 0")
    p = np.asarray(p, dtype=np.float64)
    lead, d = p.shape[:-1], p.shape[-1]
    arg = p[..., None, :] * (2.0 ** np.arange(n_freqs) * np.pi)[:, None]  # (..., L, d)
    waves = np.stack([np.sin(arg), np.cos(arg)], axis=-2).reshape(lead + (2 * n_freqs * d,))
    return np.concatenate([p, waves], axis=-1) if include_input else waves


def encoded_dim(d: int, n_freqs: int, include_input: bool = True) -> int:
    return d * (int(include_input) + 2 * n_freqs)
