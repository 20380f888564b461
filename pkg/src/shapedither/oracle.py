"""Brute-force ground truth by enumerating every Bernoulli bit pattern.

Nothing here uses the cosine-product formulas.  Distributions come from
walking all ``2**n`` equiprobable patterns and counting, so probabilities are
exact dyadic rationals.  They are stored as integer numerators over a shared
``2**log2_denominator``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dither import FirFilter, centering_offset
from .quantizer import OverloadError, QuantizerSpec, error_bin_index, quantize_array

DEFAULT_CAP = 24
_CHUNK = 1 << 20
DEFAULT_PHASES = 1024


class EnumerationCapError(ValueError):
    pass


@dataclass
class LatticePmf:
    """Exact pmf on the lattice ``offset + m * pitch``."""

    pitch: float
    offset: float
    counts: dict
    log2_denominator: int

    @property
    def denominator(self) -> int:
        return 1 << self.log2_denominator

    def probability(self, m: int) -> Fraction:
        return Fraction(self.counts.get(m, 0), self.denominator)

    def total(self) -> Fraction:
        return Fraction(sum(self.counts.values()), self.denominator)

    def support(self) -> list[int]:
        return sorted(m for m, c in self.counts.items() if c)

    def value(self, m: int) -> float:
        return self.offset + m * self.pitch

    def vector(self, lo: int, hi: int) -> np.ndarray:
        """Float probabilities for lattice indices ``lo..hi`` inclusive."""
        return np.array([self.counts.get(m, 0) for m in range(lo, hi + 1)],
                        dtype=np.float64) / self.denominator

    def cf_magnitude(self, ks, L: int) -> np.ndarray:
        """``|sum_m P(m) exp(2j pi k m / L)|`` for each integer ``k``."""
        ms = np.array(self.support(), dtype=np.int64)
        probs = np.array([self.counts[m] for m in ms], dtype=np.float64) / self.denominator
        ks = np.asarray(ks, dtype=np.int64)
        phase = np.exp(2j * np.pi * (np.multiply.outer(ks, ms) % L) / L)
        return np.abs(phase @ probs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "numerator", "denominator_exp"])
        for m in self.support():
            w.writerow([repr(self.value(m)), self.counts[m], self.log2_denominator])
        return buf.getvalue()


@dataclass
class JointLatticePmf:
    """Exact pmf of ``(r_n, r_{n-p})`` keyed by lattice index pairs."""

    pitch: float
    offset: float
    counts: dict
    log2_denominator: int
    lag: int

    @property
    def denominator(self) -> int:
        return 1 << self.log2_denominator

    def probability(self, m1: int, m2: int) -> Fraction:
        return Fraction(self.counts.get((m1, m2), 0), self.denominator)

    def marginal(self, axis: int) -> LatticePmf:
        out: dict[int, int] = {}
        for key, c in self.counts.items():
            out[key[axis]] = out.get(key[axis], 0) + c
        return LatticePmf(self.pitch, self.offset, out, self.log2_denominator)

    def is_product_of_marginals(self) -> bool:
        """Exact test of ``P(m1, m2) == P1(m1) * P2(m2)`` on the product support."""
        a, b = self.marginal(0), self.marginal(1)
        den = self.denominator
        for m1 in a.support():
            for m2 in b.support():
                if self.counts.get((m1, m2), 0) * den != a.counts[m1] * b.counts[m2]:
                    return False
        return True

    def cf_magnitude_grid(self, ks, L: int) -> np.ndarray:
        """``|Phi(k1, k2)|`` on the square grid ``ks x ks``."""
        keys = sorted(k for k, c in self.counts.items() if c)
        m1 = np.array([k[0] for k in keys], dtype=np.int64)
        m2 = np.array([k[1] for k in keys], dtype=np.int64)
        probs = np.array([self.counts[k] for k in keys], dtype=np.float64) / self.denominator
        ks = np.asarray(ks, dtype=np.int64)
        e1 = np.exp(2j * np.pi * (np.multiply.outer(ks, m1) % L) / L)
        e2 = np.exp(2j * np.pi * (np.multiply.outer(ks, m2) % L) / L)
        return np.abs((e1 * probs) @ e2.T)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value1", "value2", "numerator", "denominator_exp"])
        for (m1, m2) in sorted(self.counts):
            if self.counts[(m1, m2)]:
                w.writerow([repr(self.offset + m1 * self.pitch), repr(self.offset + m2 * self.pitch),
                            self.counts[(m1, m2)], self.log2_denominator])
        return buf.getvalue()


def _pattern_sums(weights: list[list[int]], nbits: int):
    """Yield, per chunk of patterns, one array per weight vector of ``sum_j w[j] * bit_j``."""
    for start in range(0, 1 << nbits, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, 1 << nbits), dtype=np.int64)
        bits = [(idx >> j) & 1 for j in range(nbits)]
        yield [sum(w[j] * bits[j] for j in range(nbits) if w[j]) for w in weights]


def _check_cap(nbits: int, cap: int):
    if nbits > cap:
        raise EnumerationCapError(f"{nbits} bits exceeds the enumeration cap of {cap}")


def exact_dither_pmf(filt: FirFilter, step: float = 1.0, cap: int = DEFAULT_CAP) -> LatticePmf:
    """Exact distribution of ``r_n`` over all ``2**K`` patterns."""
    K = filt.K
    _check_cap(K, cap)
    lo = filt.neg_sum
    counts = np.zeros(filt.pos_sum - lo + 1, dtype=np.int64)
    for (m,) in _pattern_sums([list(filt.coeffs)], K):
        counts += np.bincount(np.asarray(m) - lo, minlength=counts.size)
    table = {int(i) + lo: int(c) for i, c in enumerate(counts) if c}
    return LatticePmf(step / filt.L, centering_offset(filt, step), table, K)


def exact_dither_joint_pmf(filt: FirFilter, p: int, step: float = 1.0,
                           cap: int = DEFAULT_CAP) -> JointLatticePmf:
    """Exact joint distribution of ``(r_n, r_{n-p})`` over ``2**(K+p)`` patterns.

    Pattern bit ``j`` stands for ``d[n-j]``.
    """
    if p < 1:
        raise ValueError(f"lag must be >= 1, got {p}")
    K = filt.K
    nbits = K + p
    _check_cap(nbits, cap)
    g = list(filt.coeffs)
    w1 = g + [0] * p
    w2 = [0] * p + g
    lo, span = filt.neg_sum, filt.L + 1
    counts = np.zeros(span * span, dtype=np.int64)
    for m1, m2 in _pattern_sums([w1, w2], nbits):
        key = (np.asarray(m1) - lo) * span + (np.asarray(m2) - lo)
        counts += np.bincount(key, minlength=counts.size)
    table = {}
    for key in np.nonzero(counts)[0]:
        table[(int(key // span) + lo, int(key % span) + lo)] = int(counts[key])
    return JointLatticePmf(step / filt.L, centering_offset(filt, step), table, nbits, p)


def sinusoid_phase_grid(amplitude: float, n: int = DEFAULT_PHASES, dc: float = 0.0) -> np.ndarray:
    """``dc + amplitude * sin(2 pi j / n)`` for ``j = 0..n-1``."""
    return dc + amplitude * np.sin(2 * np.pi * np.arange(n) / n)


def exact_error_pmf(filt: FirFilter, spec: QuantizerSpec, x_values, bins: int | None = None,
                    cap: int = DEFAULT_CAP) -> LatticePmf:
    """Binned subtractive-error pmf, averaged uniformly over ``x_values``.

    For each input value every dither pattern is pushed through the
    quantizer.  The result uses ``bins`` equal bins over
    ``(-step/2, step/2]`` (default ``L``), indexed ``0..bins-1`` with bin
    centers as lattice values.  ``len(x_values)`` must be a power of two so
    the probabilities stay dyadic.
    """
    x_values = np.asarray(x_values, dtype=np.float64).ravel()
    n_x = x_values.size
    if n_x == 0 or n_x & (n_x - 1):
        raise ValueError(f"number of input values must be a power of two, got {n_x}")
    K = filt.K
    _check_cap(K, cap)
    bins = filt.L if bins is None else int(bins)
    step = spec.step

    patterns = np.arange(1 << K, dtype=np.int64)
    raw = sum(g * ((patterns >> k) & 1) for k, g in enumerate(filt.coeffs))
    r = centering_offset(filt, step) + raw * (step / filt.L)

    counts = np.zeros(bins, dtype=np.int64)
    per_chunk = max(1, _CHUNK >> K)
    for start in range(0, n_x, per_chunk):
        xs = x_values[start:start + per_chunk]
        z = xs[:, None] + r[None, :]
        y, over = quantize_array(spec, z)
        if over.any():
            i, j = np.argwhere(over)[0]
            raise OverloadError(
                f"overload at x={xs[i]!r} with dither pattern {int(patterns[j]):#x} (z={z[i, j]!r})")
        counts += np.bincount(error_bin_index(y - z, step, bins).ravel(), minlength=bins)

    pitch = step / bins
    table = {m: int(c) for m, c in enumerate(counts)}
    return LatticePmf(pitch, -step / 2 + pitch / 2, table, K + n_x.bit_length() - 1)


def verify_cf(filt: FirFilter, p: int, cap: int = DEFAULT_CAP) -> dict:
    """Compare enumerated cf magnitudes with the closed forms on the full grid."""
    from .cf import joint_cf_grid, marginal_cf_grid
    from .conditions import k_window

    L = filt.L
    ks = k_window(L)
    marg = exact_dither_pmf(filt, cap=cap)
    joint = exact_dither_joint_pmf(filt, p, cap=cap)
    closed_m, _ = marginal_cf_grid(filt, ks)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    closed_j, _ = joint_cf_grid(filt, p, K1, K2)
    d_marg = float(np.max(np.abs(marg.cf_magnitude(ks, L) - closed_m)))
    d_joint = float(np.max(np.abs(joint.cf_magnitude_grid(ks, L) - closed_j)))
    return {
        "filter": list(filt.coeffs),
        "lag": p,
        "L": L,
        "K": filt.K,
        "max_marginal_discrepancy": d_marg,
        "max_joint_discrepancy": d_joint,
        "max_discrepancy": max(d_marg, d_joint),
        "joint_is_product": joint.is_product_of_marginals(),
        "marginals_consistent": all(
            joint.marginal(axis).counts == {m: c << p for m, c in marg.counts.items()}
            for axis in (0, 1)),
    }
