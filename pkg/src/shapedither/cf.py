"""Closed-form characteristic-function magnitudes of the filtered dither.

On the grid ``u = 2 pi k / step`` the dither characteristic functions reduce
to products of cosines of ``pi * c / L`` with integer ``c``:

* marginal:  ``|Phi_r(k)| = prod_i |cos(pi k g[i] / L)|``
* lag ``p``: ``|Phi_{r_n, r_{n-p}}(k1, k2)|`` is the product over the bits
  ``d[n-j]`` of ``|cos(pi c_j / L)|`` with ``c_j = k1 g[j] + k2 g[j-p]``
  (terms with an out-of-range index dropped).  For ``p >= K`` this factors
  into the product of the two marginals.

Sign and phase are discarded; only magnitudes matter for the whitening
gates.  A factor vanishes exactly when ``c_j == L/2 (mod L)``, which is
decided on integers so the pass/fail path has no tolerance sensitivity.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conditions import k_window, lag_conditions
from .dither import FirFilter

DEFAULT_TOL = 1e-12


def _cos_product(coef_arrays: list[np.ndarray], L: int, shape) -> tuple[np.ndarray, np.ndarray]:
    mags = np.ones(shape, dtype=np.float64)
    zero = np.zeros(shape, dtype=bool)
    for c in coef_arrays:
        if L % 2 == 0:
            zero |= (c % L) == L // 2
        mags *= np.abs(np.cos(np.pi * (c % (2 * L)) / L))
    mags[zero] = 0.0
    return mags, zero


def marginal_cf_grid(filt: FirFilter, ks) -> tuple[np.ndarray, np.ndarray]:
    """Magnitudes and exact-zero mask of the marginal cf at integer ``ks``."""
    ks = np.asarray(ks, dtype=np.int64)
    return _cos_product([g * ks for g in filt.coeffs], filt.L, ks.shape)


def joint_cf_grid(filt: FirFilter, p: int, K1, K2) -> tuple[np.ndarray, np.ndarray]:
    """Magnitudes and exact-zero mask of the lag-``p`` joint cf at ``(K1, K2)``."""
    if p < 1:
        raise ValueError(f"lag must be >= 1, got {p}")
    K1 = np.asarray(K1, dtype=np.int64)
    K2 = np.asarray(K2, dtype=np.int64)
    if p >= filt.K:
        m1, z1 = marginal_cf_grid(filt, K1)
        m2, z2 = marginal_cf_grid(filt, K2)
        return m1 * m2, z1 | z2
    coefs = [a * K1 + b * K2 for _, _, a, b in lag_conditions(filt, p)]
    return _cos_product(coefs, filt.L, np.broadcast(K1, K2).shape)


def marginal_cf_mag(filt: FirFilter, k: int) -> float:
    return float(marginal_cf_grid(filt, [k])[0][0])


def joint_cf_mag(filt: FirFilter, p: int, k1: int, k2: int) -> float:
    return float(joint_cf_grid(filt, p, [k1], [k2])[0][0])


@dataclass
class CfGridScan:
    """Magnitudes over the ``(-L/2, L/2]`` window; ``lag == 0`` is the marginal."""

    filter: FirFilter
    lag: int
    ks: np.ndarray
    values: np.ndarray
    zero_mask: np.ndarray

    @property
    def origin_mask(self) -> np.ndarray:
        if self.lag == 0:
            return self.ks == 0
        K1, K2 = np.meshgrid(self.ks, self.ks, indexing="ij")
        return (K1 == 0) & (K2 == 0)

    @property
    def max_offgrid(self) -> float:
        off = self.values[~self.origin_mask]
        return float(off.max()) if off.size else 0.0

    def value(self, k1: int, k2: Optional[int] = None) -> float:
        i = int(np.searchsorted(self.ks, k1))
        if self.lag == 0:
            return float(self.values[i])
        return float(self.values[i, int(np.searchsorted(self.ks, k2))])

    def points(self):
        """Yield ``(k1, k2, magnitude, exact_zero)``; ``k2`` is None for the marginal."""
        if self.lag == 0:
            for k, v, z in zip(self.ks, self.values, self.zero_mask):
                yield int(k), None, float(v), bool(z)
        else:
            for i, k1 in enumerate(self.ks):
                for j, k2 in enumerate(self.ks):
                    yield int(k1), int(k2), float(self.values[i, j]), bool(self.zero_mask[i, j])

    def offending(self, tol: float = DEFAULT_TOL) -> list[tuple[int, int, Optional[int], float]]:
        bad = (~self.origin_mask) & (self.values > tol)
        out = []
        if self.lag == 0:
            for k in self.ks[bad]:
                out.append((0, int(k), None, self.value(int(k))))
        else:
            for i, j in zip(*np.nonzero(bad)):
                out.append((self.lag, int(self.ks[i]), int(self.ks[j]), float(self.values[i, j])))
        return out


def marginal_scan(filt: FirFilter) -> CfGridScan:
    ks = k_window(filt.L)
    mags, zero = marginal_cf_grid(filt, ks)
    return CfGridScan(filt, 0, ks, mags, zero)


def joint_cf_grid_scan(filt: FirFilter, p: int) -> CfGridScan:
    ks = k_window(filt.L)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    mags, zero = joint_cf_grid(filt, p, K1, K2)
    return CfGridScan(filt, p, ks, mags, zero)


@dataclass
class GateResult:
    passed: bool
    reason: str
    scans: list = field(default_factory=list)
    offending: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def failing_lags(self) -> list[int]:
        return sorted({p for p, *_ in self.offending})


def whiteness_gate(filt: FirFilter, p_max: int, tol: float = DEFAULT_TOL,
                   p_min: int = 1) -> GateResult:
    """Pass iff the marginal cf and every lag ``p_min..p_max`` joint cf vanish off the origin."""
    if p_min < 1 or p_max < p_min:
        raise ValueError(f"need 1 <= p_min <= p_max, got {p_min}..{p_max}")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    scans = [marginal_scan(filt)] + [joint_cf_grid_scan(filt, p) for p in range(p_min, p_max + 1)]
    if filt.L == 1:
        # the only grid point is the origin; the dither is a single scaled bit
        return GateResult(False, "degenerate", scans, [])
    offending = [row for scan in scans for row in scan.offending(tol)]
    return GateResult(not offending, "ok" if not offending else "nonzero", scans, offending)


def scans_to_csv(scans, out=None) -> str:
    """CSV with columns ``p,k1,k2,magnitude`` (``k2`` blank on marginal rows)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "k1", "k2", "magnitude"])
    for scan in scans:
        for k1, k2, mag, _ in scan.points():
            w.writerow([scan.lag, k1, "" if k2 is None else k2, repr(mag)])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
