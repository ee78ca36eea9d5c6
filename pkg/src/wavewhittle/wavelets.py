"""Daubechies filters and the decimated (Mallat) wavelet transform.

Scales follow the dyadic convention in which level ``j >= 1`` has spacing
``2**j``: level 1 is the first high-pass/decimate stage applied to the raw
samples.  Filtering uses the correlation form

    d_j[k] = sum_l g_l a_{j-1}[2k + l],     a_j[k] = sum_l h_l a_{j-1}[2k + l],

so that coefficient ``k`` of level ``j`` only touches samples
``2**j k .. 2**j k + (2**j - 1) T`` and can be reproduced by a single dot
product with the level-j equivalent filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pywt

from .errors import (
    IndexOutOfRange,
    NonFiniteInput,
    SeriesTooShort,
    UnsupportedOrder,
)

MIN_ORDER = 2
MAX_ORDER = 10

# Decay exponent alpha in |psi_hat(lambda)| <= C (1 + |lambda|)^-alpha for the
# Daubechies family with M vanishing moments.  M=2 is the classical
# 2 - log2(sqrt 3); the others are envelope slopes of the refinement product
# over lambda in [2^6 pi, 2^15 pi], rounded down (conservative for tail bounds).
REGULARITY = {
    2: 1.20,
    3: 1.55,
    4: 1.85,
    5: 2.10,
    6: 2.35,
    7: 2.60,
    8: 2.85,
    9: 3.10,
    10: 3.35,
}


@dataclass(frozen=True)
class WaveletFamily:
    vanishing_moments: int
    scaling_filter: np.ndarray
    wavelet_filter: np.ndarray
    support_length: int
    regularity: float

    @property
    def name(self) -> str:
        return f"db{self.vanishing_moments}"

    @property
    def filter_length(self) -> int:
        return self.support_length + 1


def build_daubechies_filters(M: int = 4) -> WaveletFamily:
    """Orthonormal minimal-phase Daubechies filters with ``M`` vanishing moments."""
    if not isinstance(M, (int, np.integer)) or not MIN_ORDER <= M <= MAX_ORDER:
        raise UnsupportedOrder(f"M must be an integer in [{MIN_ORDER}, {MAX_ORDER}], got {M!r}")
    M = int(M)
    w = pywt.Wavelet(f"db{M}")
    h = np.asarray(w.rec_lo, dtype=float)
    L = h.size
    k = np.arange(L)
    g = (-1.0) ** k * h[::-1]
    for arr in (h, g):
        arr.setflags(write=False)
    return WaveletFamily(
        vanishing_moments=M,
        scaling_filter=h,
        wavelet_filter=g,
        support_length=L - 1,
        regularity=REGULARITY[M],
    )


def coefficient_count(N_X: int, j: int, T_psi: int) -> int:
    """Number of boundary-free coefficients retained at scale ``j``."""
    val = np.floor(2.0 ** (-j) * (N_X - T_psi + 1) - T_psi + 1)
    return max(0, int(val))


def default_j1(N_X: int, T_psi: int, min_count: int = 4) -> int:
    """Coarsest scale still holding at least ``min_count`` coefficients."""
    j = 1
    while coefficient_count(N_X, j + 1, T_psi) >= min_count:
        j += 1
    return j


@dataclass(frozen=True)
class TimeSeriesPanel:
    values: np.ndarray
    component_names: tuple[str, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("panel values must be a (N_X, p) matrix")
        names = tuple(self.component_names) or tuple(f"X{i + 1}" for i in range(vals.shape[1]))
        if len(names) != vals.shape[1]:
            raise ValueError("component_names length must equal the number of columns")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "component_names", names)

    @property
    def N_X(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WaveletPyramid:
    coefficients: dict[int, np.ndarray]
    counts: dict[int, int]
    j0: int
    j1: int
    family: WaveletFamily = field(repr=False)

    @property
    def scales(self) -> list[int]:
        return list(range(self.j0, self.j1 + 1))


def _as_panel(panel) -> TimeSeriesPanel:
    return panel if isinstance(panel, TimeSeriesPanel) else TimeSeriesPanel(np.asarray(panel))


def _analysis_step(a: np.ndarray, h: np.ndarray, g: np.ndarray, periodic: bool):
    # a has shape (n, p); returns (approx, detail) at half resolution
    L = h.size
    n = a.shape[0]
    if periodic:
        idx = (2 * np.arange(n // 2)[:, None] + np.arange(L)[None, :]) % n
    else:
        m = (n - L) // 2 + 1
        if m <= 0:
            return a[:0], a[:0]
        idx = 2 * np.arange(m)[:, None] + np.arange(L)[None, :]
    win = a[idx]  # (m, L, p)
    # tap-by-tap accumulation: elementwise, so each column is bit-identical
    # to transforming it alone
    lo = np.zeros((idx.shape[0], a.shape[1]))
    hi = np.zeros_like(lo)
    for l in range(L):
        lo += h[l] * win[:, l]
        hi += g[l] * win[:, l]
    return lo, hi


def pyramid_transform(
    panel,
    family: WaveletFamily,
    j0: int,
    j1: int,
    *,
    trim: bool = True,
) -> WaveletPyramid:
    """Decimated wavelet coefficients of every column for scales ``j0..j1``.

    With ``trim=True`` only boundary-free coefficients are kept, exactly
    ``coefficient_count(N_X, j, T)`` of them per scale.  ``trim=False`` uses
    periodic extension on a dyadic-length input (energy-preserving mode).
    """
    panel = _as_panel(panel)
    x = panel.values
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("panel contains NaN or infinite values")
    if j0 < 1 or j1 < j0:
        raise ValueError(f"need 1 <= j0 <= j1, got j0={j0}, j1={j1}")
    T = family.support_length
    N = panel.N_X
    if trim and coefficient_count(N, j1, T) < 4:
        raise SeriesTooShort(
            f"N_X={N} leaves {coefficient_count(N, j1, T)} coefficients at scale {j1}; need >= 4"
        )
    if not trim and (N & (N - 1) or N < 2 ** j1):
        raise SeriesTooShort("periodic mode needs a dyadic length of at least 2**j1")

    h, g = family.scaling_filter, family.wavelet_filter
    coeffs: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    a = x
    for j in range(1, j1 + 1):
        a, d = _analysis_step(a, h, g, periodic=not trim)
        if j >= j0:
            if trim:
                n_j = coefficient_count(N, j, T)
                d = d[:n_j]
            coeffs[j] = np.ascontiguousarray(d)
            counts[j] = d.shape[0]
    if not trim:
        coeffs[0] = np.ascontiguousarray(a)  # smooth part at scale j1, keyed 0
    return WaveletPyramid(coeffs, counts, j0, j1, family)


def equivalent_filter(family: WaveletFamily, j: int) -> np.ndarray:
    """Level-``j`` analysis filter: ``d_j[k] = sum_m f[m] x[2**j k + m]``."""
    h, g = family.scaling_filter, family.wavelet_filter
    f = np.array([1.0])
    for level in range(j):
        taps = g if level == j - 1 else h
        up = np.zeros((taps.size - 1) * 2 ** level + 1)
        up[:: 2 ** level] = taps
        f = np.convolve(f, up)
    return f


def direct_transform_oracle(
    panel, family: WaveletFamily, j: int, k: int, component: int = 0
) -> float:
    """Single coefficient W_{j,k} by one dot product with the equivalent filter."""
    panel = _as_panel(panel)
    if j < 1:
        raise IndexOutOfRange(f"scale must be >= 1, got {j}")
    f = equivalent_filter(family, j)
    start = 2 ** j * k
    if k < 0 or start + f.size > panel.N_X or not 0 <= component < panel.p:
        raise IndexOutOfRange(f"(j={j}, k={k}, component={component}) is not an interior coefficient")
    return float(f @ panel.values[start:start + f.size, component])


def pyramid_counts(N_X: int, family: WaveletFamily, scales: Sequence[int]) -> list[int]:
    return [coefficient_count(N_X, j, family.support_length) for j in scales]
