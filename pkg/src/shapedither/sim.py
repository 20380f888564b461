"""End-to-end dithered-quantizer pipelines.

Three architectures are modelled:

* ``additive``: ``y = Q(x + r)``, error ``y - x``.  No whiteness certificate
  is issued, because the error is never independent of the input.
* ``subtractive``: i.i.d. uniform dither on ``(-step/2, step/2]``, output
  ``y - r``.
* ``filtered-subtractive``: FIR-shaped Bernoulli dither, output ``y - r``.

For the subtractive architectures the error tap is ``(y - r) - x``, the
difference between the subtractive output and the input.  This equals the
quantizer error ``y - z`` up to floating-point rounding.

Random streams are counter-based and keyed by ``(seed, stream tag)``.
Identical configs therefore reproduce bit-identical series, and two configs
with the same dither kind see the same source bits.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import stats
from .conditions import theorem2_check
from .dither import (FirFilter, G1, G2, derive_seed, make_dither, splitmix64_words,
                     uniform_dither, warn_if_below_lsb)
from .quantizer import OverloadError, QuantizerSpec, quantize_array

ARCHITECTURES = ("additive", "subtractive", "filtered-subtractive")
DITHER_KINDS = ("none", "uniform", "filtered")
SIGNAL_KINDS = ("sinusoid", "dc", "uniform-random", "file")
TAP_NAMES = ("x", "r", "z", "y", "y_minus_r", "e")

DEFAULT_FREQUENCY = 0.0137
DEFAULT_UNIFORM_BINS = 32


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SignalSpec:
    kind: str = "sinusoid"
    amplitude: float = 2.0
    frequency: float = DEFAULT_FREQUENCY
    phase: float = 0.0
    dc: float = 0.0
    path: Optional[str] = None
    coherent: bool = False

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ConfigError(f"unknown signal kind {self.kind!r}")
        if self.kind == "sinusoid" and not 0 < self.frequency < 0.5:
            raise ConfigError("sinusoid frequency must be in (0, 1/2)")
        if self.kind == "file" and not self.path:
            raise ConfigError("file signal needs a path")

    def effective_frequency(self, segment_length: int) -> float:
        """Frequency actually synthesized (snapped to an odd bin when coherent)."""
        if not self.coherent:
            return self.frequency
        k = int(round(self.frequency * segment_length))
        if k % 2 == 0:
            k += 1
        return k / segment_length

    def peak(self) -> float:
        if self.kind == "dc":
            return abs(self.dc)
        if self.kind == "file":
            return float(np.max(np.abs(_load_series(self.path))))
        return abs(self.dc) + abs(self.amplitude)

    def generate(self, n: int, seed: int, segment_length: int) -> np.ndarray:
        idx = np.arange(n, dtype=np.float64)
        if self.kind == "sinusoid":
            f = self.effective_frequency(segment_length)
            return self.dc + self.amplitude * np.sin(2 * np.pi * f * idx + self.phase)
        if self.kind == "dc":
            return np.full(n, float(self.dc))
        if self.kind == "uniform-random":
            words = splitmix64_words(derive_seed(seed, "input"), 0, n)
            u = (words >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
            return self.dc + self.amplitude * (2 * u - 1)
        data = _load_series(self.path)
        if len(data) < n:
            raise ConfigError(f"{self.path} holds {len(data)} samples, {n} requested")
        return data[:n].copy()


def _load_series(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path).astype(np.float64).ravel()
    return np.loadtxt(path, delimiter=None if not path.endswith(".csv") else ",",
                      dtype=np.float64).ravel()


@dataclass(frozen=True)
class PipelineConfig:
    architecture: str = "filtered-subtractive"
    dither: str = "filtered"
    filter: Optional[FirFilter] = None
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    signal: SignalSpec = field(default_factory=SignalSpec)
    n: int = 1 << 20
    seed: int = 7
    taps: tuple = ("e",)
    name: str = ""
    overload_policy: str = "fail"
    bins: Optional[int] = None
    segment_length: int = stats.DEFAULT_SEGMENT
    band_fraction: float = stats.DEFAULT_BAND_FRACTION
    threshold_db: float = stats.DEFAULT_THRESHOLD_DB
    max_lag: int = 64
    joint_lags: tuple = ()

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.dither not in DITHER_KINDS:
            raise ConfigError(f"unknown dither kind {self.dither!r}")
        if self.dither == "filtered":
            if self.filter is None:
                raise ConfigError("filtered dither needs a filter")
            if self.architecture != "filtered-subtractive":
                raise ConfigError("filtered dither requires the filtered-subtractive architecture")
        elif self.architecture == "filtered-subtractive":
            raise ConfigError("filtered-subtractive architecture requires filtered dither")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        bad = [t for t in self.taps if t not in TAP_NAMES]
        if bad:
            raise ConfigError(f"unknown tap(s) {bad}; valid taps are {list(TAP_NAMES)}")
        if self.overload_policy not in ("warn", "fail"):
            raise ConfigError("overload_policy must be 'warn' or 'fail'")

    @property
    def error_bins(self) -> int:
        if self.bins is not None:
            return self.bins
        return self.filter.L if self.dither == "filtered" else DEFAULT_UNIFORM_BINS

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.dither == "filtered":
            return f"filtered[{self.filter.literal()}]"
        return f"{self.architecture}/{self.dither}"

    def dither_peak(self) -> float:
        return 0.0 if self.dither == "none" else self.quantizer.step / 2

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["filter"] = list(self.filter.coeffs) if self.filter else None
        d["taps"] = list(self.taps)
        d["joint_lags"] = list(self.joint_lags)
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def preset_config(dither: str, n: int = 1 << 20, seed: int = 7, **overrides) -> PipelineConfig:
    """Default experiment: Q=5, step 1, sinusoid of amplitude 2 steps.

    ``dither`` is ``"G1"``, ``"G2"`` or ``"uniform"``.
    """
    key = dither.upper() if dither.lower() != "uniform" else "uniform"
    if key == "G1":
        base = PipelineConfig("filtered-subtractive", "filtered", G1, name="G1")
    elif key == "G2":
        base = PipelineConfig("filtered-subtractive", "filtered", G2, name="G2")
    elif key == "uniform":
        base = PipelineConfig("subtractive", "uniform", None, name="uniform")
    else:
        raise ConfigError(f"unknown preset dither {dither!r}")
    return base.replace(n=n, seed=seed, **overrides)


@dataclass
class RunResult:
    config: PipelineConfig
    stats: stats.RunStats
    y_psd: Optional[stats.PsdEstimate]
    y_spurs: list
    y_inband_power: Optional[float]
    overloads: int
    taps: dict
    certificate: Optional[str]
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "name": self.config.label,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "n": self.config.n,
            "overloads": self.overloads,
            "certificate": self.certificate,
            "notes": self.notes,
            "error": self.stats.summary(),
            "y_spur_count": len(self.y_spurs),
            "y_spurs": [s.to_dict() for s in self.y_spurs],
            "y_inband_power": self.y_inband_power,
        }


def _dither(config: PipelineConfig) -> np.ndarray:
    step, n = config.quantizer.step, config.n
    if config.dither == "none":
        return np.zeros(n)
    if config.dither == "uniform":
        return uniform_dither(derive_seed(config.seed, "uniform"), n, step)
    return make_dither(config.filter, step, derive_seed(config.seed, "bernoulli")).next(n)


def run(config: PipelineConfig) -> RunResult:
    """Simulate one pipeline and measure its error and output spectra."""
    q = config.quantizer
    notes = []
    if config.signal.peak() + config.dither_peak() > q.overload_bound:
        msg = (f"input peak {config.signal.peak():g} plus dither {config.dither_peak():g} "
               f"exceeds the overload bound {q.overload_bound:g}")
        if config.overload_policy == "fail":
            raise OverloadError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    if config.dither == "filtered":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            warn_if_below_lsb(config.signal.peak(), config.filter, q.step)
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
            notes.append(str(w.message))

    x = config.signal.generate(config.n, config.seed, config.segment_length)
    r = _dither(config)
    z = x + r
    y, over = quantize_array(q, z)
    overloads = int(np.count_nonzero(over))
    if overloads and config.overload_policy == "fail":
        raise OverloadError(f"{overloads} overload events")

    if config.architecture == "additive":
        out = y
        e = y - x
        certificate = None
        notes.append("additive dither: error is input-dependent, no whiteness certificate")
    else:
        out = y - r
        e = out - x
        if config.dither == "filtered":
            certificate = "T2:" + theorem2_check(config.filter).verdict
        elif config.dither == "uniform":
            certificate = "uniform"
        else:
            certificate = None

    freq = config.signal.effective_frequency(config.segment_length)
    signal_freqs = [freq] if config.signal.kind == "sinusoid" else []
    run_stats = stats.compute_run_stats(
        e, q.step, config.error_bins, max_lag=config.max_lag,
        segment_length=config.segment_length, threshold_db=config.threshold_db,
        band_fraction=config.band_fraction, joint_lags=config.joint_lags)

    y_psd = y_spurs = y_inband = None
    if config.n >= config.segment_length:
        y_psd = stats.welch_psd(y, config.segment_length)
        y_spurs = stats.detect_spurs(y_psd, config.threshold_db, signal_freqs)
        y_inband = stats.inband_power(y_psd, config.band_fraction, signal_freqs)

    series = {"x": x, "r": r, "z": z, "y": y, "y_minus_r": out, "e": e}
    taps = {name: series[name] for name in config.taps}
    return RunResult(config, run_stats, y_psd, y_spurs or [], y_inband, overloads, taps,
                     certificate, notes)


def compare(configs, results: Optional[list] = None) -> list[dict]:
    """One comparison row per config; configs must share step, Q, input and N."""
    configs = list(configs)
    if not configs:
        return []
    ref = configs[0]
    for c in configs[1:]:
        if (c.quantizer != ref.quantizer or c.signal != ref.signal or c.n != ref.n):
            raise ConfigError(f"config {c.label} differs from {ref.label} in step, Q, input or N")
    results = results or [run(c) for c in configs]
    rows = []
    for c, res in zip(configs, results):
        st = res.stats
        rows.append({
            "name": c.label,
            "config_hash": c.config_hash(),
            "variance": st.variance,
            "tv_to_uniform": st.tv_to_uniform,
            "chi2": st.uniformity.statistic if st.uniformity else None,
            "chi2_verdict": ("pass" if st.uniformity.passed else "fail") if st.uniformity else None,
            "spur_count": len(st.spurs),
            "y_spur_count": len(res.y_spurs),
            "inband_power_y": res.y_inband_power,
            "inband_power_y_db": (10 * np.log10(res.y_inband_power)
                                  if res.y_inband_power else None),
            "overloads": res.overloads,
        })
    return rows


def format_table(rows: list[dict]) -> str:
    cols = ["name", "variance", "tv_to_uniform", "chi2_verdict", "spur_count",
            "inband_power_y_db", "overloads"]
    lines = ["  ".join(f"{c:>18}" for c in cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>18.6g}" if isinstance(v, float) else f"{str(v):>18}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def write_taps(result: RunResult, directory: str, fmt: str = "csv") -> list[str]:
    """Write tapped series as one CSV or as ``<tap>.f64`` little-endian binaries
    with ``<tap>.json`` sidecars."""
    os.makedirs(directory, exist_ok=True)
    cfg = result.config
    written = []
    if fmt == "csv":
        path = os.path.join(directory, "taps.csv")
        names = list(result.taps)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["n"] + names) + "\n")
            cols = [result.taps[k] for k in names]
            for i in range(cfg.n):
                fh.write(",".join([str(i)] + [repr(float(c[i])) for c in cols]) + "\n")
        written.append(path)
    elif fmt == "f64":
        for name, data in result.taps.items():
            path = os.path.join(directory, f"{name}.f64")
            np.asarray(data, dtype="<f8").tofile(path)
            side = os.path.join(directory, f"{name}.json")
            with open(side, "w") as fh:
                json.dump({"schema": 1, "tap": name, "n": cfg.n, "step": cfg.quantizer.step,
                           "seed": cfg.seed, "config_hash": cfg.config_hash(),
                           "dtype": "float64-le"}, fh, indent=2, sort_keys=True)
                fh.write("\n")
            written += [path, side]
    else:
        raise ConfigError(f"unknown tap format {fmt!r}")
    return written
