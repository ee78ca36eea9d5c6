"""End-to-end fit: transform, estimate, and attach asymptotic covariances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import AsymptoticCovariances, Interval, asymptotic_covariances, interval
from .estimation import (
    G_hat,
    OptimizerTrace,
    ScaleCovarianceSet,
    estimate_d,
    long_run_correlations,
    omega_hat,
    scale_covariances,
    whittle_criterion_R,
)
from .kernels import INF, KernelTable, default_table
from .wavelets import TimeSeriesPanel, build_daubechies_filters, default_j1, pyramid_transform


@dataclass
class InferenceResult:
    d_hat: np.ndarray
    G_hat: np.ndarray
    omega_hat: np.ndarray
    r_hat: np.ndarray
    criterion_value: float
    optimizer_trace: OptimizerTrace
    cov_set: ScaleCovarianceSet
    asymptotics: dict[str, AsymptoticCovariances] = field(default_factory=dict)
    primary: str = "finite"

    @property
    def n(self) -> int:
        return self.cov_set.n

    @property
    def _prim(self) -> AsymptoticCovariances:
        return self.asymptotics[self.primary]

    @property
    def d_cov(self) -> np.ndarray:
        return self._prim.W_d

    @property
    def G_cov(self) -> np.ndarray:
        return self._prim.W_G

    @property
    def r_var(self) -> np.ndarray:
        return self._prim.r_var

    @property
    def joint_cov(self) -> np.ndarray | None:
        return self._prim.W_joint

    def intervals(self, level: float = 0.95, mode: str | None = None) -> dict[str, Interval]:
        acov = self.asymptotics[mode or self.primary]
        p = self.d_hat.size
        return {
            "d": interval(self.d_hat, np.diag(acov.W_d), self.n, level),
            "G": interval(self.G_hat, np.diag(acov.W_G).reshape(p, p), self.n, level),
            "r": interval(self.r_hat, acov.r_var, self.n, level),
        }


def fit(panel, *, j0: int = 3, j1: int | None = None, M: int = 4, Delta=None,
        table: KernelTable | None = None, modes=("finite", "infinite"), joint: bool = True,
        bounds=(-1.0, 2.0), variance_weights: str = "geometric") -> InferenceResult:
    """Wavelet Whittle fit of a panel with plug-in asymptotic covariances.

    ``Delta`` defaults to ``j1 - j0``; ``modes`` selects which of the finite
    and infinite scale-range variances are attached.  ``variance_weights``
    is ``"geometric"`` (the large-sample scale profile) or ``"empirical"``
    (the observed n_j / n, a finite-sample refinement of the finite mode).
    """
    if variance_weights not in ("geometric", "empirical"):
        raise ValueError("variance_weights must be 'geometric' or 'empirical'")
    panel = panel if isinstance(panel, TimeSeriesPanel) else TimeSeriesPanel(np.asarray(panel))
    family = build_daubechies_filters(M)
    if j1 is None:
        j1 = default_j1(panel.N_X, family.support_length)
    table = table or default_table(M)
    pyr = pyramid_transform(panel, family, j0, j1)
    cs = scale_covariances(pyr)
    d, trace = estimate_d(cs, bounds=bounds)
    G = G_hat(cs, d)
    res = InferenceResult(
        d_hat=d,
        G_hat=G,
        omega_hat=omega_hat(G, d, table),
        r_hat=long_run_correlations(G),
        criterion_value=whittle_criterion_R(cs, d),
        optimizer_trace=trace,
        cov_set=cs,
        primary=modes[0] if modes else "finite",
    )
    finite_delta = (j1 - j0) if Delta is None else Delta
    weights = None
    if variance_weights == "empirical":
        if finite_delta != j1 - j0:
            raise ValueError("empirical weights need Delta = j1 - j0")
        weights = [cs.counts[j] for j in cs.scales]
    for mode in modes:
        D = finite_delta if mode == "finite" else INF
        res.asymptotics[mode] = asymptotic_covariances(d, G, D, table, joint=joint and mode == "finite",
                                                       weights=weights if mode == "finite" else None)
    return res
