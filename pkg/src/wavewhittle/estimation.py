"""Per-scale wavelet covariances and wavelet Whittle estimation.

With ``Lambda_j(d) = diag(2^{j d})`` the profiled criterion is

    R(d) = log det G_hat(d) + 2 log(2) <J> sum_a d_a,
    G_hat(d)_{ab} = (1/n) sum_j n_j 2^{-j(d_a + d_b)} sigma_hat_{ab}(j),

where ``<J> = (1/n) sum_j j n_j``.  ``R`` is a negative log-likelihood up to
constants and is minimized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, optimize

from .errors import (
    CosineSingularity,
    DegenerateVariance,
    EmptyScale,
    NonPDMatrix,
    OptimFailed,
)
from .kernels import KernelTable, default_table
from .wavelets import WaveletPyramid

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ScaleCovarianceSet:
    sigma_hat: dict[int, np.ndarray]
    counts: dict[int, int]
    j0: int
    j1: int

    @property
    def scales(self) -> np.ndarray:
        return np.arange(self.j0, self.j1 + 1)

    @property
    def n(self) -> int:
        return int(sum(self.counts[j] for j in self.scales))

    @property
    def mean_scale(self) -> float:
        return sum(j * self.counts[j] for j in self.scales) / self.n

    @property
    def p(self) -> int:
        return self.sigma_hat[self.j0].shape[0]

    @cached_property
    def _stack(self):
        js = self.scales
        w = np.array([self.counts[j] for j in js], dtype=float) / self.n
        S = np.stack([self.sigma_hat[j] for j in js])
        for a in (js, w, S):
            a.setflags(write=False)
        return js, w, S

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(scales, weights n_j / n, Sigma stack of shape (J, p, p)); read-only views."""
        return self._stack


def scale_covariances(pyramid: WaveletPyramid) -> ScaleCovarianceSet:
    """Uncentered cross-moments of the wavelet coefficients at every retained scale."""
    sig, counts = {}, {}
    for j in pyramid.scales:
        W = pyramid.coefficients[j]
        if W.shape[0] < 1:
            raise EmptyScale(f"scale {j} has no coefficients")
        S = W.T @ W / W.shape[0]
        sig[j] = (S + S.T) / 2
        counts[j] = W.shape[0]
    return ScaleCovarianceSet(sig, counts, pyramid.j0, pyramid.j1)


def synthetic_set(d, G, scales, counts) -> ScaleCovarianceSet:
    """Noise-free set with Sigma(j) = Lambda_j(d) G Lambda_j(d) exactly."""
    d = np.asarray(d, float)
    G = np.asarray(G, float)
    scales = list(scales)
    sig = {j: np.outer(2.0 ** (j * d), 2.0 ** (j * d)) * G for j in scales}
    return ScaleCovarianceSet(sig, dict(zip(scales, counts)), scales[0], scales[-1])


def _corr(S: np.ndarray) -> np.ndarray:
    diag = np.diag(S)
    if np.any(diag <= 0):
        raise DegenerateVariance("a diagonal variance is not positive")
    s = np.sqrt(diag)
    R = S / np.outer(s, s)
    R = np.clip(R, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return R


def scale_correlations(cov_set: ScaleCovarianceSet) -> dict[int, np.ndarray]:
    return {j: _corr(cov_set.sigma_hat[j]) for j in cov_set.scales}


def _scale_factors(js: np.ndarray, d: np.ndarray) -> np.ndarray:
    return 2.0 ** (-np.outer(js, d))  # (J, p)


def G_hat(cov_set: ScaleCovarianceSet, d) -> np.ndarray:
    """Scale-normalized, count-weighted average of the per-scale covariances."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not np.all(np.isfinite(d)):
        raise ValueError("d must be finite")
    js, w, S = cov_set.stacked()
    F = _scale_factors(js, d)
    G = np.tensordot(w, F[:, :, None] * S * F[:, None, :], 1)
    return (G + G.T) / 2


def _H_hat(cov_set: ScaleCovarianceSet, d: np.ndarray) -> np.ndarray:
    # sum_j (n_j/n) j 2^{-j(d_a+d_b)} sigma_ab(j)
    js, w, S = cov_set.stacked()
    F = _scale_factors(js, d)
    return np.tensordot(w * js, F[:, :, None] * S * F[:, None, :], 1)


def _logdet(G: np.ndarray) -> float:
    try:
        c = linalg.cho_factor(G, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NonPDMatrix("G_hat(d) is not positive definite") from None
    diag = np.diag(c[0])
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NonPDMatrix("G_hat(d) is not positive definite")
    return 2.0 * float(np.sum(np.log(diag)))


def whittle_criterion_R(cov_set: ScaleCovarianceSet, d) -> float:
    d = np.atleast_1d(np.asarray(d, dtype=float))
    return _logdet(G_hat(cov_set, d)) + 2 * LOG2 * cov_set.mean_scale * float(d.sum())


def whittle_likelihood(cov_set: ScaleCovarianceSet, G, d) -> float:
    """Full Gaussian Whittle negative log-likelihood L(G, d), normalized by n.

    At ``G = G_hat(d)`` it equals ``R(d) + p``.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    G = np.asarray(G, dtype=float)
    js, w, S = cov_set.stacked()
    total = 0.0
    for wj, j, Sj in zip(w, js, S):
        lam = 2.0 ** (j * d)
        C = np.outer(lam, lam) * G
        total += wj * (_logdet(C) + np.trace(linalg.solve(C, Sj, assume_a="pos")))
    return float(total)


def whittle_gradient(cov_set: ScaleCovarianceSet, d) -> np.ndarray:
    """Analytic gradient of R.

    dR/dd_a = 2 log 2 (<J> - sum_c [G_hat^-1]_{ac} H_{ac}) with
    H_{ac} = (1/n) sum_j j n_j 2^{-j(d_a+d_c)} sigma_ac(j).
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    G = G_hat(cov_set, d)
    Gi = linalg.inv(G)
    H = _H_hat(cov_set, d)
    return 2 * LOG2 * (cov_set.mean_scale - np.sum(Gi * H, axis=1))


def whittle_hessian(cov_set: ScaleCovarianceSet, d, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the analytic gradient, symmetrized."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    p = d.size
    Hs = np.empty((p, p))
    for a in range(p):
        e = np.zeros(p)
        e[a] = step
        Hs[a] = (whittle_gradient(cov_set, d + e) - whittle_gradient(cov_set, d - e)) / (2 * step)
    return (Hs + Hs.T) / 2


def init_d_log_regression(cov_set: ScaleCovarianceSet) -> np.ndarray:
    """Half the least-squares slope of log2 sigma_aa(j) against j."""
    js, _, S = cov_set.stacked()
    if js.size < 2:
        raise ValueError("need at least two scales")
    v = np.diagonal(S, axis1=1, axis2=2)
    if np.any(v <= 0):
        raise DegenerateVariance("a wavelet variance is zero; the series may be constant")
    y = np.log2(v)
    x = js - js.mean()
    slope = x @ (y - y.mean(axis=0)) / (x @ x)
    return slope / 2


@dataclass
class OptimizerTrace:
    evaluations: list[tuple[np.ndarray, float]] = field(default_factory=list)
    iterations: int = 0
    restarts: int = 0
    boundary_hit: bool = False
    nonpd_evaluations: int = 0
    message: str = ""

    def to_record(self) -> dict:
        return {
            "iterations": self.iterations,
            "restarts": self.restarts,
            "boundary_hit": self.boundary_hit,
            "nonpd_evaluations": self.nonpd_evaluations,
            "message": self.message,
            "path": [[list(map(float, x)), float(f)] for x, f in self.evaluations],
        }


def _simplex(x0: np.ndarray, step: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    p = x0.size
    S = np.tile(x0, (p + 1, 1))
    for a in range(p):
        v = x0[a] + step
        S[a + 1, a] = v if v <= hi[a] else x0[a] - step
    return np.clip(S, lo, hi)


def estimate_d(cov_set: ScaleCovarianceSet, init=None, bounds=(-1.0, 2.0), *,
               xatol: float = 1e-6, fatol: float = 1e-10, polish: bool = True):
    """Minimize R(d) by Nelder-Mead, restarted once from a perturbed point.

    Returns ``(d_hat, trace)``.  Points where ``G_hat(d)`` is not positive
    definite score ``+inf``.  A final quasi-Newton pass with the analytic
    gradient is kept only when it lowers ``R``; it matters for large ``p``,
    where the simplex alone stalls short of the optimum.
    """
    p = cov_set.p
    lo = np.broadcast_to(np.asarray(bounds[0], float), (p,)).copy()
    hi = np.broadcast_to(np.asarray(bounds[1], float), (p,)).copy()
    x0 = init_d_log_regression(cov_set) if init is None else np.atleast_1d(np.asarray(init, float))
    x0 = np.clip(x0, lo + 1e-3, hi - 1e-3)
    trace = OptimizerTrace()

    def f(x):
        try:
            val = whittle_criterion_R(cov_set, x)
        except NonPDMatrix:
            trace.nonpd_evaluations += 1
            return math.inf
        return val

    def record(intermediate_result):
        trace.iterations += 1
        trace.evaluations.append((np.array(intermediate_result.x), float(intermediate_result.fun)))

    max_iter = 2000 * p
    # dimension-dependent simplex coefficients keep the restart from crawling
    # when p is large; small problems use the classical ones
    opts = dict(xatol=xatol, fatol=fatol, maxiter=max_iter, maxfev=4 * max_iter, adaptive=p > 5)
    res = optimize.minimize(f, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)), callback=record,
                            options=dict(opts, initial_simplex=_simplex(x0, 0.1, lo, hi)))
    best = res
    # restart from a deterministic perturbation of the first solution
    trace.restarts = 1
    x1 = np.clip(res.x + 0.05 * (-1.0) ** np.arange(p), lo, hi)
    res2 = optimize.minimize(f, x1, method="Nelder-Mead", bounds=list(zip(lo, hi)), callback=record,
                             options=dict(opts, initial_simplex=_simplex(x1, 0.02, lo, hi)))
    if res2.fun <= best.fun:
        best = res2
    success = res.success or res2.success
    x, fx = np.asarray(best.x, float), float(best.fun)
    if polish and np.isfinite(fx):
        res3 = optimize.minimize(f, x, jac=lambda z: whittle_gradient(cov_set, z), method="L-BFGS-B",
                                 bounds=list(zip(lo, hi)), options=dict(ftol=1e-15, gtol=1e-10))
        if np.isfinite(res3.fun) and res3.fun < fx:
            x, fx = np.asarray(res3.x, float), float(res3.fun)
            success = True
    if not success or not np.isfinite(fx):
        raise OptimFailed(f"Nelder-Mead did not converge in {max_iter} iterations: {best.message}")
    trace.message = str(best.message)
    trace.boundary_hit = bool(np.any((x - lo < 1e-4) | (hi - x < 1e-4)))
    return x, trace


def omega_hat(G_hat_at_dhat, d_hat, table: KernelTable | None = None) -> np.ndarray:
    """Long-run covariance: G_ab / (cos(pi (d_a - d_b) / 2) K(d_a + d_b))."""
    G = np.asarray(G_hat_at_dhat, dtype=float)
    d = np.atleast_1d(np.asarray(d_hat, dtype=float))
    table = table or default_table()
    c = np.cos(np.pi * (d[:, None] - d[None, :]) / 2)
    if np.any(np.abs(c) <= 1e-6):
        raise CosineSingularity("cos(pi (d_a - d_b) / 2) vanishes for some pair")
    s = d[:, None] + d[None, :]
    us, inv = np.unique(np.round(s, 12), return_inverse=True)
    Kv = np.asarray(table.K(us)).reshape(-1)[inv].reshape(s.shape)
    O = G / (c * Kv)
    return (O + O.T) / 2


def long_run_correlations(G_hat_at_dhat) -> np.ndarray:
    return _corr(np.asarray(G_hat_at_dhat, dtype=float))
