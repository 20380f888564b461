"""Bernoulli dither source and FIR-shaped dither synthesis.

The filtered dither is

    r[n] = (step / L) * sum_k g[k] * d[n - k] + offset,

with ``d`` an i.i.d. fair bit stream, ``g`` an integer FIR filter and ``L``
the L1 norm of ``g``.  ``step / L`` is the dither LSB: every sample lies on
the lattice ``offset + m * step / L``.  The centering offset
``-step * (S+ + S-) / (2L)`` (``S+``/``S-`` the positive/negative coefficient
sums) makes the range symmetric about zero.  A deterministic shift leaves
every characteristic-function magnitude unchanged and cancels in any
subtractive architecture.

Random bits come from SplitMix64 (Steele, Lea & Flood 2014) in counter mode:
word ``i`` of a stream seeded with ``s`` is ``mix(s + (i + 1) * GAMMA)`` with

    GAMMA = 0x9E3779B97F4A7C15
    mix(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
            return z ^ (z >> 31)

all modulo 2**64.  Bit ``n`` of the stream is bit ``n % 64`` (LSB first) of
word ``n // 64``.  Any block can be produced independently of the others,
so sharded generation gives the same sequence as a single pass.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1

# Inputs smaller than this many dither LSBs get a warning.
LSB_WARNING_FACTOR = 8


class FilterParseError(ValueError):
    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message)
        self.position = position


class DitherLsbWarning(UserWarning):
    """Input amplitude is comparable to the dither LSB; whitening is not effective."""


# -- random source -----------------------------------------------------------

def splitmix64_words(seed: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the SplitMix64 stream for ``seed``."""
    if count < 0 or start < 0:
        raise ValueError("start and count must be non-negative")
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + idx * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, tag: str) -> int:
    """Substream seed: first 8 bytes (little endian) of sha256("<seed>:<tag>")."""
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class BernoulliSource:
    """Fair bit stream d[n] in {0, 1}; identical seeds give identical streams."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.position = 0

    def bits_at(self, start: int, count: int) -> np.ndarray:
        """Bits ``start .. start+count-1`` without touching the stream position."""
        if count == 0:
            return np.zeros(0, dtype=np.uint8)
        w0 = start // 64
        w1 = (start + count - 1) // 64
        words = splitmix64_words(self.seed, w0, w1 - w0 + 1)
        bits = np.unpackbits(words.astype("<u8").view(np.uint8), bitorder="little")
        off = start - 64 * w0
        return bits[off:off + count]

    def take(self, count: int) -> np.ndarray:
        out = self.bits_at(self.position, count)
        self.position += count
        return out


def uniform_dither(seed: int, count: int, step: float, start: int = 0) -> np.ndarray:
    """I.i.d. uniform samples on (-step/2, step/2] from 53-bit draws."""
    words = splitmix64_words(seed, start, count)
    u = (words >> np.uint64(11)).astype(np.float64) * 2.0 ** -53  # [0, 1)
    return step / 2 - u * step


# -- filters -----------------------------------------------------------------

@dataclass(frozen=True)
class FirFilter:
    """Integer FIR dither-shaping filter ``g``."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(self.coeffs)
        if not coeffs:
            raise ValueError("filter needs at least one coefficient")
        for i, c in enumerate(coeffs):
            if isinstance(c, bool) or not float(c).is_integer():
                raise ValueError(f"coefficient {i} is not an integer: {c!r}")
            if c == 0:
                raise ValueError(f"coefficient {i} is zero")
        object.__setattr__(self, "coeffs", tuple(int(c) for c in coeffs))

    @classmethod
    def parse(cls, literal: str) -> "FirFilter":
        """Parse a comma-separated integer list such as ``"-1,-2,-4,-8,16,-1"``."""
        tokens = literal.split(",")
        coeffs = []
        for pos, tok in enumerate(tokens):
            tok = tok.strip()
            try:
                value = int(tok)
            except ValueError:
                raise FilterParseError(
                    f"position {pos}: {tok!r} is not an integer", pos) from None
            if value == 0:
                raise FilterParseError(f"position {pos}: zero coefficient not allowed", pos)
            coeffs.append(value)
        return cls(tuple(coeffs))

    @property
    def K(self) -> int:
        return len(self.coeffs)

    @property
    def L(self) -> int:
        return sum(abs(c) for c in self.coeffs)

    @property
    def coeff_sum(self) -> int:
        return sum(self.coeffs)

    @property
    def pos_sum(self) -> int:
        return sum(c for c in self.coeffs if c > 0)

    @property
    def neg_sum(self) -> int:
        return sum(c for c in self.coeffs if c < 0)

    @property
    def s(self) -> Optional[int]:
        """Exponent with ``2**s == L``, or None when L is not a power of two."""
        L = self.L
        return L.bit_length() - 1 if L & (L - 1) == 0 else None

    def literal(self) -> str:
        return ",".join(str(c) for c in self.coeffs)

    def __str__(self):
        return f"FirFilter({self.literal()})"

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=np.int64)


G1 = FirFilter((1, -3, 5, -9, 3, -3, 9, -5, 3, -1))
G2 = FirFilter((-1, -2, -4, -8, 16, -1))


def dither_lsb(filt: FirFilter, step: float) -> float:
    return step / filt.L


def centering_offset(filt: FirFilter, step: float) -> float:
    return -step * (filt.pos_sum + filt.neg_sum) / (2 * filt.L)


def dither_range(filt: FirFilter, step: float) -> tuple[float, float, bool]:
    """Exact ``(lo, hi, exceeds_half_lsb)`` of the centered dither."""
    width = filt.pos_sum - filt.neg_sum
    half = step * width / (2 * filt.L)
    # S+ - S- == L always, so the flag can only trip for a malformed filter
    return -half, half, width > filt.L


def filter_bits(filt: FirFilter, bits, step: float) -> np.ndarray:
    """Dither samples for an explicit bit sequence.

    ``bits`` is in time order; output ``i`` uses ``bits[i : i + K]`` and is
    aligned with ``bits[i + K - 1]``, i.e. only fully-populated filter
    outputs are returned (``len(bits) - K + 1`` samples).
    """
    raw = np.convolve(np.asarray(bits, dtype=np.int64), filt.as_array(), mode="valid")
    return centering_offset(filt, step) + raw * (step / filt.L)


class DitherStream:
    """Stateful generator of the filtered dither r[n].

    The shift register is pre-filled with the first K-1 source bits, which is
    the same as discarding the filter fill-in transient.
    """

    def __init__(self, filt: FirFilter, step: float, source: BernoulliSource):
        if not step > 0:
            raise ValueError("step must be positive")
        self.filter = filt
        self.step = float(step)
        self.source = source
        self.centering_offset = centering_offset(filt, step)
        self.state = source.take(filt.K - 1)

    def lattice_index(self, count: int) -> np.ndarray:
        """Next ``count`` raw lattice indices ``sum_k g[k] d[n-k]``."""
        bits = np.concatenate([self.state, self.source.take(count)])
        self.state = bits[len(bits) - (self.filter.K - 1):]
        return np.convolve(bits.astype(np.int64), self.filter.as_array(), mode="valid")

    def next(self, count: int) -> np.ndarray:
        raw = self.lattice_index(count)
        return self.centering_offset + raw * (self.step / self.filter.L)


def make_dither(filt: FirFilter, step: float, seed: int) -> DitherStream:
    return DitherStream(filt, step, BernoulliSource(seed))


def frequency_response(filt: FirFilter, freqs) -> np.ndarray:
    """G(e^{j 2 pi f}) at normalized frequencies ``freqs`` (cycles/sample)."""
    f = np.asarray(freqs, dtype=np.float64)
    k = np.arange(filt.K)
    return np.exp(-2j * np.pi * np.multiply.outer(f, k)) @ filt.as_array()


def analytic_dither_psd(filt: FirFilter, step: float, freqs, onesided: bool = False) -> np.ndarray:
    """AC power density of r[n]: ``(step/L)**2 * 1/4 * |G(f)|**2``.

    Two-sided by default (integrates to the variance over [-1/2, 1/2]);
    ``onesided=True`` doubles every bin except DC and Nyquist.
    """
    f = np.asarray(freqs, dtype=np.float64)
    if np.any((f < 0) | (f > 0.5)):
        raise ValueError("frequencies must lie in [0, 1/2]")
    psd = (step / filt.L) ** 2 * 0.25 * np.abs(frequency_response(filt, f)) ** 2
    if onesided:
        psd = np.where((f > 0) & (f < 0.5), 2 * psd, psd)
    return psd


def dither_variance(filt: FirFilter, step: float) -> float:
    return (step / filt.L) ** 2 * 0.25 * sum(c * c for c in filt.coeffs)


def warn_if_below_lsb(amplitude: float, filt: FirFilter, step: float) -> bool:
    """Warn when the input is within a few dither LSBs; returns True if warned."""
    lsb = dither_lsb(filt, step)
    if abs(amplitude) < LSB_WARNING_FACTOR * lsb:
        warnings.warn(
            f"input amplitude {amplitude:g} is below {LSB_WARNING_FACTOR} dither LSBs "
            f"({LSB_WARNING_FACTOR * lsb:g}); the error will not be whitened",
            DitherLsbWarning, stacklevel=2)
        return True
    return False


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


__all__ = [
    "BernoulliSource", "DitherLsbWarning", "DitherStream", "FilterParseError", "FirFilter",
    "G1", "G2", "analytic_dither_psd", "centering_offset", "derive_seed", "dither_lsb",
    "dither_range", "dither_variance", "filter_bits", "frequency_response", "make_dither",
    "splitmix64_words", "uniform_dither", "warn_if_below_lsb",
]
