"""Exact checkers for the whitening conditions on integer dither filters.

Lag-``p`` check (``theorem1_check``).  For every nonzero ``(k1, k2)`` in the
window ``(-L/2, L/2]**2`` at least one of the following must hold, with
``<x>_L`` the canonical residue of ``x`` modulo ``L``:

1. ``<g[l] k1>_L == L/2``            for some ``0 <= l < min(p, K)``
2. ``<g[K-r] k2>_L == L/2``          for some ``1 <= r <= min(p, K)``
3. ``<g[m] k1 + g[m-p] k2>_L == L/2`` for some ``p <= m < K``

Each one zeroes a cosine factor of the joint characteristic function of
``(r[n], r[n-p])`` on the ``2 pi / step`` grid.  The window suffices because
that function is L-periodic in both arguments on the grid.

Power-of-two check (``theorem2_check``).  ``L == 2**s`` with ``s > 1`` and
every magnitude ``2**0 .. 2**(s-1)`` occurs among ``|g[k]|``.  This makes the
lag-``p`` check pass for every ``p >= K``.

All arithmetic is on Python/numpy integers; nothing here touches floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .dither import FirFilter

COND_MARGINAL_K1 = 1
COND_MARGINAL_K2 = 2
COND_CROSS = 3

DEFAULT_MAX_COUNTEREXAMPLES = 4096


def mod_L(x: int, L: int) -> int:
    """Canonical representative of ``x`` modulo ``L`` in ``[0, L)``."""
    if L <= 0:
        raise ValueError(f"modulus must be positive, got {L}")
    return x % L  # Python's % is already non-negative for L > 0


def k_window(L: int) -> np.ndarray:
    """Integers in ``(-L/2, L/2]`` in increasing order."""
    return np.arange(-((L - 1) // 2), L // 2 + 1, dtype=np.int64)


@dataclass
class ConditionReport:
    theorem: str
    passed: bool
    filter: FirFilter
    lag: Optional[int] = None
    counterexamples: list = field(default_factory=list)
    counterexample_count: int = 0
    truncated: bool = False
    witnesses: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def summary(self) -> str:
        head = f"{self.theorem}: {self.verdict}"
        if self.theorem == "T1":
            head += f" (p={self.lag})"
        if not self.passed and self.details.get("reason"):
            head += f", {self.details['reason']}"
        return head

    def to_dict(self) -> dict[str, Any]:
        if self.theorem == "T1":
            witnesses = [
                {"k1": k1, "k2": k2, "condition": c, "index": i}
                for (k1, k2), (c, i) in sorted(self.witnesses.items())
            ]
            counter = [list(ce) for ce in self.counterexamples]
        else:
            witnesses = [{"exponent": e, "index": i} for e, i in sorted(self.witnesses.items())]
            counter = [list(ce) for ce in self.counterexamples]
        return {
            "schema": 1,
            "theorem": self.theorem,
            "verdict": self.verdict,
            "filter": list(self.filter.coeffs),
            "L": self.filter.L,
            "K": self.filter.K,
            "lag": self.lag,
            "details": self.details,
            "counterexample_count": self.counterexample_count,
            "truncated": self.truncated,
            "counterexamples": counter,
            "witnesses": witnesses,
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kwargs)


def lag_conditions(filt: FirFilter, p: int) -> list[tuple[int, int, int, int]]:
    """``(condition, index, a, b)`` tuples; each tests ``<a k1 + b k2>_L == L/2``."""
    g, K = filt.coeffs, filt.K
    conds = [(COND_MARGINAL_K1, l, g[l], 0) for l in range(min(p, K))]
    conds += [(COND_MARGINAL_K2, r, 0, g[K - r]) for r in range(1, min(p, K) + 1)]
    conds += [(COND_CROSS, m, g[m], g[m - p]) for m in range(p, K)]
    return conds


def replay_witness(filt: FirFilter, p: int, k1: int, k2: int, condition: int, index: int) -> bool:
    """Re-evaluate one witness as an integer equality."""
    g, K, L = filt.coeffs, filt.K, filt.L
    if L % 2:
        return False
    if condition == COND_MARGINAL_K1:
        ok = 0 <= index < min(p, K)
        val = g[index] * k1 if ok else None
    elif condition == COND_MARGINAL_K2:
        ok = 1 <= index <= min(p, K)
        val = g[K - index] * k2 if ok else None
    elif condition == COND_CROSS:
        ok = p <= index < K
        val = g[index] * k1 + g[index - p] * k2 if ok else None
    else:
        raise ValueError(f"unknown condition {condition}")
    return ok and mod_L(val, L) == L // 2


def theorem1_check(filt: FirFilter, p: int,
                   max_counterexamples: Optional[int] = DEFAULT_MAX_COUNTEREXAMPLES) -> ConditionReport:
    """Check the three lag-``p`` conditions on every nonzero grid pair."""
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise ValueError(f"lag must be a positive integer, got {p!r}")
    p = int(p)
    L = filt.L
    ks = k_window(L)
    K1, K2 = np.meshgrid(ks, ks, indexing="ij")
    nonzero = (K1 != 0) | (K2 != 0)

    witness_cond = np.zeros(K1.shape, dtype=np.int64)
    witness_idx = np.full(K1.shape, -1, dtype=np.int64)
    details: dict[str, Any] = {"L": L, "K": filt.K}
    if L % 2:
        details["reason"] = f"L={L} is odd, <.>_L never equals L/2"
    else:
        half = L // 2
        for cond, idx, a, b in lag_conditions(filt, p):
            hit = ((a * K1 + b * K2) % L == half) & (witness_idx < 0)
            witness_cond[hit] = cond
            witness_idx[hit] = idx

    missing = nonzero & (witness_idx < 0)
    bad = [(int(a), int(b)) for a, b in zip(K1[missing], K2[missing])]  # row-major = lexicographic
    found = nonzero & (witness_idx >= 0)
    witnesses = {
        (int(a), int(b)): (int(c), int(i))
        for a, b, c, i in zip(K1[found], K2[found], witness_cond[found], witness_idx[found])
    }
    count = len(bad)
    truncated = max_counterexamples is not None and count > max_counterexamples
    if truncated:
        bad = bad[:max_counterexamples]
    if count and "reason" not in details:
        details["reason"] = f"{count} grid pairs without a satisfied condition"
    return ConditionReport(
        # odd L fails outright; for L=1 the grid has no nonzero pair to report
        theorem="T1", passed=count == 0 and L % 2 == 0, filter=filt, lag=p,
        counterexamples=bad, counterexample_count=count, truncated=truncated,
        witnesses=witnesses, details=details,
    )


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def theorem2_check(filt: FirFilter, strict: bool = False) -> ConditionReport:
    """Power-of-two coefficient check.

    With ``strict=True`` every ``|g[k]|`` must additionally be one of
    ``2**0 .. 2**(s-1)``.
    """
    L = filt.L
    mags = [abs(c) for c in filt.coeffs]
    problems: list[tuple] = []
    witnesses: dict[int, int] = {}
    details: dict[str, Any] = {"L": L, "strict": strict}
    reasons = []

    if not _is_pow2(L):
        problems.append(("L_not_power_of_two", L))
        reasons.append(f"L={L} not 2^s")
        details["s"] = None
    else:
        s = L.bit_length() - 1
        details["s"] = s
        if s <= 1:
            problems.append(("s_too_small", s))
            reasons.append(f"s={s} must exceed 1")
        missing = []
        for i in range(s):
            try:
                witnesses[i] = mags.index(1 << i)
            except ValueError:
                missing.append(i)
        if missing:
            problems.extend(("missing_exponent", i) for i in missing)
            reasons.append("missing magnitudes " + ",".join(f"2^{i}" for i in missing))
        details["missing_exponents"] = missing

    non_pow2 = [k for k, m in enumerate(mags) if not _is_pow2(m)]
    details["non_power_of_two_indices"] = non_pow2
    if strict:
        limit = L // 2
        offenders = [k for k, m in enumerate(mags) if not _is_pow2(m) or m > limit]
        problems.extend(("strict_coefficient", k) for k in offenders)
        if offenders:
            reasons.append("coefficients not in {2^0..2^(s-1)} at " + ",".join(map(str, offenders)))

    if reasons:
        details["reason"] = "; ".join(reasons)
    return ConditionReport(
        theorem="T2", passed=not problems, filter=filt,
        counterexamples=problems, counterexample_count=len(problems),
        witnesses=witnesses, details=details,
    )
