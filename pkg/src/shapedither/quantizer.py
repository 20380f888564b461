"""Uniform mid-tread quantizer with explicit overload reporting.

The quantizer has ``Q`` (odd) output levels ``{-(Q-1)/2, ..., (Q-1)/2} * step``.
Rounding is half toward +inf, ``y = step * floor(z / step + 1/2)``, so the
error ``y - z`` of a non-overloaded input falls in ``(-step/2, step/2]``.
An input overloads when ``|z| > Q * step / 2``; the output is still clamped
to the extreme level, but the event is always reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class OverloadError(RuntimeError):
    """Raised when a quantizer input leaves the non-overload region."""


@dataclass(frozen=True)
class QuantizerSpec:
    levels: int = 5
    step: float = 1.0
    tie_break: str = "half-up"
    clamp: bool = True

    def __post_init__(self):
        if isinstance(self.levels, bool) or int(self.levels) != self.levels:
            raise ValueError(f"levels must be an integer, got {self.levels!r}")
        if self.levels < 3 or self.levels % 2 == 0:
            raise ValueError(f"levels must be odd and >= 3, got {self.levels}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be a positive finite number, got {self.step!r}")
        if self.tie_break != "half-up":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")
        if not self.clamp:
            raise ValueError("clamp is always enabled")

    @property
    def max_code(self) -> int:
        return (self.levels - 1) // 2

    @property
    def max_level(self) -> float:
        """Largest output level, (Q-1)*step/2."""
        return self.max_code * self.step

    @property
    def overload_bound(self) -> float:
        """Largest |z| that does not overload, Q*step/2."""
        return self.levels * self.step / 2

    def level_set(self) -> np.ndarray:
        return np.arange(-self.max_code, self.max_code + 1) * self.step


def quantize(spec: QuantizerSpec, z: float) -> tuple[float, bool]:
    """Quantize one sample; returns ``(y, overloaded)``."""
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"quantizer input must be finite, got {z!r}")
    code = math.floor(z / spec.step + 0.5)
    code = max(-spec.max_code, min(spec.max_code, code))
    return code * spec.step, abs(z) > spec.overload_bound


def quantize_array(spec: QuantizerSpec, z) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`quantize`; returns ``(y, overloaded_mask)``."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("quantizer input must be finite")
    codes = np.clip(np.floor(z / spec.step + 0.5), -spec.max_code, spec.max_code)
    return codes * spec.step, np.abs(z) > spec.overload_bound


def subtractive_error(spec: QuantizerSpec, z: float) -> float:
    """Error ``quantize(z) - z`` seen after the dither is subtracted."""
    y, _ = quantize(spec, z)
    return y - float(z)


def error_bin_index(e, step: float, bins: int) -> np.ndarray:
    """Bin index of errors on ``bins`` equal bins over ``(-step/2, step/2]``.

    Bins are closed on the right.  The measure-zero boundary value ``-step/2``
    (clamped input at exactly ``|z| = Q*step/2``) goes into bin 0.
    """
    e = np.asarray(e, dtype=np.float64)
    idx = np.ceil((e / step + 0.5) * bins).astype(np.int64) - 1
    return np.clip(idx, 0, bins - 1)
