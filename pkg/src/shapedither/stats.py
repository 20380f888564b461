"""Empirical estimators: error histograms, uniformity and independence tests,
autocorrelation, Welch PSD, spur detection and in-band power."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps
from scipy import stats as sst

from .quantizer import error_bin_index

SIGNIFICANCE = 0.01
MIN_EXPECTED_COUNT = 5
DEFAULT_SEGMENT = 8192
DEFAULT_THRESHOLD_DB = 6.0
DEFAULT_BAND_FRACTION = 0.1
# Hann leakage of a full-scale tone stays above a 6 dB threshold for a few
# bins around a non-coherent frequency; this many bins on each side are dropped.
DEFAULT_SIGNAL_HALFWIDTH = 6


class SupportMismatchError(ValueError):
    pass


class UndersampledError(ValueError):
    pass


class DegenerateSeriesError(ValueError):
    pass


# -- distributions -----------------------------------------------------------

@dataclass
class Histogram:
    """Counts of errors on ``bins`` equal bins over ``(-step/2, step/2]``."""

    step: float
    counts: np.ndarray

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def pitch(self) -> float:
        return self.step / self.bins

    @property
    def centers(self) -> np.ndarray:
        return -self.step / 2 + self.pitch * (np.arange(self.bins) + 0.5)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "count"])
        for c, n in zip(self.centers, self.counts):
            w.writerow([repr(float(c)), int(n)])
        return buf.getvalue()


@dataclass(frozen=True)
class UniformReference:
    """Uniform distribution on ``(-step/2, step/2]`` seen through ``bins`` bins."""

    step: float
    bins: int

    @property
    def probs(self) -> np.ndarray:
        return np.full(self.bins, 1.0 / self.bins)

    @property
    def pitch(self) -> float:
        return self.step / self.bins


def error_histogram(e, step: float, bins: int) -> Histogram:
    idx = error_bin_index(e, step, bins)
    return Histogram(float(step), np.bincount(idx.ravel(), minlength=bins).astype(np.int64))


def joint_histogram(e, lag: int, step: float, bins: int) -> np.ndarray:
    """2-D counts of ``(e[n], e[n-lag])``."""
    e = np.asarray(e)
    if lag < 1 or lag >= len(e):
        raise ValueError(f"lag {lag} out of range for {len(e)} samples")
    idx = error_bin_index(e, step, bins)
    key = idx[lag:] * bins + idx[:-lag]
    return np.bincount(key, minlength=bins * bins).reshape(bins, bins)


def _as_lattice(pmf) -> tuple[Optional[tuple[float, float]], dict]:
    """``((pitch, offset) or None, {index: prob})`` for any supported pmf form."""
    if isinstance(pmf, (Histogram, UniformReference)):
        pitch = pmf.pitch
        offset = -pmf.step / 2 + pitch / 2
        return (pitch, offset), dict(enumerate(pmf.probs))
    if hasattr(pmf, "counts") and hasattr(pmf, "denominator"):
        den = pmf.denominator
        return (pmf.pitch, pmf.offset), {m: c / den for m, c in pmf.counts.items()}
    arr = np.asarray(pmf, dtype=np.float64)
    return None, dict(enumerate(arr))


def tv_distance(pmf_a, pmf_b) -> float:
    """Total-variation distance, half the L1 distance between the pmfs."""
    lat_a, pa = _as_lattice(pmf_a)
    lat_b, pb = _as_lattice(pmf_b)
    if (lat_a is None) != (lat_b is None):
        if len(pa) != len(pb):
            raise SupportMismatchError("pmfs have different lengths")
    elif lat_a is not None:
        if not (math.isclose(lat_a[0], lat_b[0], rel_tol=1e-9)
                and math.isclose(lat_a[1], lat_b[1], rel_tol=1e-9, abs_tol=1e-12)):
            raise SupportMismatchError(f"lattices differ: {lat_a} vs {lat_b}")
    elif len(pa) != len(pb):
        raise SupportMismatchError("pmfs have different lengths")
    keys = set(pa) | set(pb)
    return 0.5 * float(sum(abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in keys))


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    alpha: float

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha

    def to_dict(self) -> dict:
        return {"chi2": self.statistic, "dof": self.dof, "p_value": self.p_value,
                "alpha": self.alpha, "verdict": "pass" if self.passed else "fail"}


def uniformity_test(hist: Histogram, reference: Optional[UniformReference] = None,
                    alpha: float = SIGNIFICANCE) -> ChiSquareResult:
    """Pearson chi-square of a histogram against the uniform reference."""
    reference = reference or UniformReference(hist.step, hist.bins)
    if reference.bins != hist.bins:
        raise SupportMismatchError(f"{hist.bins} bins vs reference {reference.bins}")
    expected = hist.n * reference.probs
    if expected.min() < MIN_EXPECTED_COUNT:
        raise UndersampledError(
            f"expected count {expected.min():.2f} per bin is below {MIN_EXPECTED_COUNT}")
    chi2 = float(np.sum((hist.counts - expected) ** 2 / expected))
    dof = hist.bins - 1
    return ChiSquareResult(chi2, dof, float(sst.chi2.sf(chi2, dof)), alpha)


def independence_test(joint_counts, alpha: float = SIGNIFICANCE) -> ChiSquareResult:
    """Chi-square independence test on a 2-D contingency table."""
    table = np.asarray(joint_counts, dtype=np.float64)
    expected = np.outer(table.sum(1), table.sum(0)) / table.sum()
    if expected.min() < MIN_EXPECTED_COUNT:
        raise UndersampledError("contingency table has cells with expected count below 5")
    chi2 = float(np.sum((table - expected) ** 2 / expected))
    dof = (table.shape[0] - 1) * (table.shape[1] - 1)
    return ChiSquareResult(chi2, dof, float(sst.chi2.sf(chi2, dof)), alpha)


# -- second-order statistics -------------------------------------------------

def autocorrelation(series, max_lag: int, normalized: bool = False) -> np.ndarray:
    """Biased mean-removed estimate ``r[p] = (1/N) sum_n c[n] c[n+p]``, ``p = 0..max_lag``.

    With ``normalized=True`` the result is divided by ``r[0]``; a constant
    series then raises :class:`DegenerateSeriesError`.
    """
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    if max_lag >= n:
        raise ValueError(f"max_lag {max_lag} must be below the series length {n}")
    c = x - x.mean()
    r = np.array([np.dot(c[: n - p], c[p:]) / n for p in range(max_lag + 1)])
    if normalized:
        if r[0] == 0:
            raise DegenerateSeriesError("zero-variance series has no normalized autocorrelation")
        r = r / r[0]
    return r


@dataclass
class PsdEstimate:
    freqs: np.ndarray
    density: np.ndarray
    n_averages: int
    segment_length: int
    fs: float = 1.0

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def total_power(self) -> float:
        return float(np.sum(self.density) * self.df)

    def db(self) -> np.ndarray:
        return 10 * np.log10(np.maximum(self.density, np.finfo(float).tiny))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency", "psd_db"])
        for f, d in zip(self.freqs, self.db()):
            w.writerow([repr(float(f)), repr(float(d))])
        return buf.getvalue()


def welch_averages(n: int, segment_length: int, overlap: float) -> int:
    hop = segment_length - int(segment_length * overlap)
    return 1 + (n - segment_length) // hop


def welch_psd(series, segment_length: int = DEFAULT_SEGMENT, overlap: float = 0.5,
              window: str = "hann", fs: float = 1.0) -> PsdEstimate:
    """One-sided averaged modified periodogram scaled as a density.

    Each segment has its mean removed, so the integral of the density matches
    the series variance.
    """
    x = np.asarray(series, dtype=np.float64)
    if segment_length < 2 or segment_length & (segment_length - 1):
        raise ValueError(f"segment length must be a power of two, got {segment_length}")
    if segment_length > len(x):
        raise ValueError(f"segment length {segment_length} exceeds series length {len(x)}")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    noverlap = int(segment_length * overlap)
    freqs, density = sps.welch(x, fs=fs, window=window, nperseg=segment_length,
                               noverlap=noverlap, detrend="constant", scaling="density",
                               return_onesided=True)
    return PsdEstimate(freqs, density, welch_averages(len(x), segment_length, overlap),
                       segment_length, fs)


def _signal_mask(psd: PsdEstimate, signal_freqs: Sequence[float], halfwidth: int) -> np.ndarray:
    mask = np.zeros(len(psd.freqs), dtype=bool)
    for f in signal_freqs:
        mask |= np.abs(psd.freqs - f) <= halfwidth * psd.df
    return mask


@dataclass
class Spur:
    frequency: float
    db_above_floor: float
    first_bin: int
    last_bin: int

    def to_dict(self) -> dict:
        return {"frequency": self.frequency, "db_above_floor": self.db_above_floor,
                "first_bin": self.first_bin, "last_bin": self.last_bin}


def detect_spurs(psd: PsdEstimate, threshold_db: float = DEFAULT_THRESHOLD_DB,
                 signal_freqs: Sequence[float] = (),
                 signal_halfwidth: int = DEFAULT_SIGNAL_HALFWIDTH) -> list[Spur]:
    """Runs of bins more than ``threshold_db`` above the median density.

    Adjacent bins merge into one spur reported at its peak.  Bins within
    ``signal_halfwidth`` of a declared signal frequency are ignored.
    """
    floor = float(np.median(psd.density))
    if floor <= 0:
        return []
    rel = 10 * np.log10(np.maximum(psd.density, np.finfo(float).tiny) / floor)
    hot = (rel > threshold_db) & ~_signal_mask(psd, signal_freqs, signal_halfwidth)
    spurs = []
    i, n = 0, len(hot)
    while i < n:
        if not hot[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and hot[j + 1]:
            j += 1
        peak = i + int(np.argmax(rel[i:j + 1]))
        spurs.append(Spur(float(psd.freqs[peak]), float(rel[peak]), i, j))
        i = j + 1
    return spurs


def harmonic_number(freq: float, fundamental: float, tolerance: float,
                    max_harmonic: int = 64) -> Optional[int]:
    """Smallest harmonic ``h`` of ``fundamental`` whose alias lands within ``tolerance`` of ``freq``."""
    for h in range(1, max_harmonic + 1):
        alias = abs(((h * fundamental + 0.5) % 1.0) - 0.5)
        if abs(alias - freq) <= tolerance:
            return h
    return None


def inband_power(psd: PsdEstimate, band_fraction: float = DEFAULT_BAND_FRACTION,
                 signal_freqs: Sequence[float] = (),
                 signal_halfwidth: int = DEFAULT_SIGNAL_HALFWIDTH) -> float:
    """Integrated density over ``[0, band_fraction * fs/2]`` minus signal bins."""
    if not 0 < band_fraction <= 1:
        raise ValueError("band_fraction must be in (0, 1]")
    band = psd.freqs <= band_fraction * psd.fs / 2
    keep = band & ~_signal_mask(psd, signal_freqs, signal_halfwidth)
    return float(np.sum(psd.density[keep]) * psd.df)


# -- bundled run statistics --------------------------------------------------

@dataclass
class RunStats:
    n: int
    variance: float
    pmf: Histogram
    tv_to_uniform: float
    uniformity: Optional[ChiSquareResult]
    autocorr: np.ndarray
    psd: Optional[PsdEstimate]
    spurs: list
    inband_power: Optional[float]
    joint_pmfs: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "variance": self.variance,
            "tv_to_uniform": self.tv_to_uniform,
            "uniformity": self.uniformity.to_dict() if self.uniformity else None,
            "max_abs_normalized_autocorr": (
                float(np.max(np.abs(self.autocorr[1:] / self.autocorr[0])))
                if len(self.autocorr) > 1 and self.autocorr[0] > 0 else None),
            "welch_averages": self.psd.n_averages if self.psd else None,
            "spur_count": len(self.spurs),
            "spurs": [s.to_dict() for s in self.spurs],
            "inband_power": self.inband_power,
        }


def compute_run_stats(e, step: float, bins: int, max_lag: int = 64,
                      segment_length: int = DEFAULT_SEGMENT,
                      threshold_db: float = DEFAULT_THRESHOLD_DB,
                      band_fraction: float = DEFAULT_BAND_FRACTION,
                      signal_freqs: Sequence[float] = (),
                      joint_lags: Sequence[int] = (),
                      alpha: float = SIGNIFICANCE) -> RunStats:
    e = np.asarray(e, dtype=np.float64)
    hist = error_histogram(e, step, bins)
    try:
        uni = uniformity_test(hist, alpha=alpha)
    except UndersampledError:
        uni = None
    psd = welch_psd(e, segment_length) if len(e) >= segment_length else None
    return RunStats(
        n=len(e),
        variance=float(np.var(e)),
        pmf=hist,
        tv_to_uniform=tv_distance(hist, UniformReference(step, bins)),
        uniformity=uni,
        autocorr=autocorrelation(e, min(max_lag, len(e) - 1)),
        psd=psd,
        spurs=detect_spurs(psd, threshold_db, signal_freqs) if psd else [],
        inband_power=inband_power(psd, band_fraction, signal_freqs) if psd else None,
        joint_pmfs={p: joint_histogram(e, p, step, bins) for p in joint_lags},
    )


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
