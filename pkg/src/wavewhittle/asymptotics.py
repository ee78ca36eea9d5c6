"""Asymptotic covariance matrices of scale covariances, d_hat, G_hat and r_hat.

All matrices are covariances of ``sqrt(n)`` times the estimation error,
where ``n`` is the total number of retained wavelet coefficients.  Kernels
come from a :class:`~wavewhittle.kernels.KernelTable`; variances are
evaluated at whatever ``(d, G)`` is supplied, so plugging in ``d_hat`` and
``G_hat(d_hat)`` gives first-order plug-in standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .errors import SingularMatrix
from .kernels import (
    INF,
    KernelTable,
    _check_delta,
    _tilde,
    default_table,
    eta_kappa,
    script_I_Delta,
    script_I_G_Delta,
)

LOG2 = math.log(2.0)
TWO_PI = 2.0 * np.pi
SYM_TOL = 1e-8


def _vec(d) -> np.ndarray:
    return np.atleast_1d(np.asarray(d, dtype=float))


def _mat(G) -> np.ndarray:
    return np.atleast_2d(np.asarray(G, dtype=float))


def _symmetrize(A: np.ndarray, what: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(A))))
    asym = float(np.max(np.abs(A - A.T))) / scale
    if asym > SYM_TOL:
        raise AssertionError(f"{what} asymmetric before symmetrization ({asym:.2e})")
    return (A + A.T) / 2


def _inv(G: np.ndarray) -> np.ndarray:
    try:
        Gi = linalg.inv(G)
    except linalg.LinAlgError:
        raise SingularMatrix("G is singular") from None
    if not np.all(np.isfinite(Gi)) or np.linalg.cond(G) > 1e14:
        raise SingularMatrix("G is numerically singular")
    return Gi


def _pair_lookup(fn, d: np.ndarray):
    """Evaluate fn on all pairs of pairwise sums; returns (table, index matrix).

    ``fn(x, y)`` is called once on the outer grid of unique sums; entries for
    sums s = d_a + d_b are found via ``idx[a, b]``.
    """
    s = np.round(d[:, None] + d[None, :], 12)
    us, inv = np.unique(s, return_inverse=True)
    X, Y = np.meshgrid(us, us, indexing="ij")
    return np.asarray(fn(X, Y)), inv.reshape(s.shape)


# ---------------------------------------------------------------------------
# scale covariances


def wavelet_cov_asym_cov(u: int, u2: int, ab, ab2, d, G, table: KernelTable | None = None) -> float:
    """Asymptotic covariance of sqrt(n) times two scale covariances.

    ``u``/``u2`` are scale offsets from the finest retained scale, ``ab`` and
    ``ab2`` the component pairs (0-based).
    """
    table = table or default_table()
    d, G = _vec(d), _mat(G)
    if u < 0 or u2 < 0:
        raise ValueError("scale offsets must be >= 0")
    a, b = ab
    a2, b2 = ab2
    v = abs(u - u2)
    expo = (d[a] + d[b] + d[a2] + d[b2]) * max(u, u2) - v / 2
    t1 = G[a, a2] * G[b, b2] * table.tilde_I(v, d[a] + d[a2], d[b] + d[b2])
    t2 = G[a, b2] * G[b, a2] * table.tilde_I(v, d[a] + d[b2], d[b] + d[a2])
    return float(TWO_PI * 2.0 ** expo * (t1 + t2))


def scale_correlation_variance(j: int, a: int, b: int, d, rho: float,
                               table: KernelTable | None = None, kernel=None) -> float:
    """Asymptotic variance of sqrt(n_j) (rho_hat_ab(j) - rho_ab(j)) by the delta method.

    With m = d_a + d_b and ``k(x, y)`` the normalized scale kernel,

        2 pi [k(2d_a, 2d_b) + k(m, m)(rho^2 + rho^4)
              - 2 rho^2 (k(2d_a, m) + k(2d_b, m))
              + rho^2 / 2 (k(2d_a, 2d_a) + k(2d_b, 2d_b))].

    ``kernel`` defaults to the scale-gap-zero kernel; passing an aggregated
    kernel gives the corresponding whole-estimator variance.  The level ``j``
    does not enter at first order.
    """
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    table = table or default_table()
    d = _vec(d)
    k = kernel if kernel is not None else (lambda x, y: table.tilde_I(0, x, y))
    da, db = 2 * d[a], 2 * d[b]
    m = d[a] + d[b]
    r2 = rho * rho
    val = (k(da, db) + k(m, m) * (r2 + r2 * r2) - 2 * r2 * (k(da, m) + k(db, m))
           + r2 / 2 * (k(da, da) + k(db, db)))
    return float(TWO_PI * val)


# ---------------------------------------------------------------------------
# memory parameters


def _d_core(d: np.ndarray, G: np.ndarray, kern) -> tuple[np.ndarray, np.ndarray]:
    """Return (W, P) with W the middle matrix and P = G^-1 o G + I."""
    Gi = _inv(G)
    Im, idx = _pair_lookup(kern, d)
    I1 = Im[idx[:, :, None, None], idx[None, None, :, :]]  # [a,a',b,b'] -> k(s_aa', s_bb')
    I2 = Im[idx[:, None, None, :], idx.T[None, :, :, None]]  # [a,a',b,b'] -> k(s_ab', s_a'b)
    W = G * np.einsum("ab,cd,bd,acbd->ac", Gi, Gi, G, I1, optimize=True)
    W = W + np.einsum("ab,cd,ad,cb,acbd->ac", Gi, Gi, G, G, I2, optimize=True)
    P = Gi * G + np.eye(d.size)
    return W, P


def d_asym_cov(d, G, Delta, table: KernelTable | None = None, form: str = "derived",
               weights=None) -> np.ndarray:
    """Covariance of sqrt(n)(d_hat - d): (pi / log^2 2) P^-1 W P^-1.

    ``weights`` optionally replaces the geometric scale profile (see
    :func:`~wavewhittle.kernels.script_I_Delta`).
    """
    table = table or default_table()
    _check_delta(Delta)
    d, G = _vec(d), _mat(G)
    W, P = _d_core(d, G, lambda x, y: script_I_Delta(Delta, x, y, table, form=form, weights=weights))
    Pi = _inv(P)
    C = math.pi / LOG2 ** 2 * Pi @ W @ Pi
    return _symmetrize(C, "d covariance")


# ---------------------------------------------------------------------------
# G and long-run correlations


def G_asym_cov(d, G, Delta, table: KernelTable | None = None, weight: str = "appendix",
               weights=None) -> np.ndarray:
    """Covariance of sqrt(n) vec(G_hat(d) - G), row-major over (a, b)."""
    table = table or default_table()
    _check_delta(Delta)
    d, G = _vec(d), _mat(G)
    p = d.size
    Im, idx = _pair_lookup(lambda x, y: script_I_G_Delta(Delta, x, y, table, weight, weights), d)
    # indices [a, b, a', b']
    t1 = (G[:, None, :, None] * G[None, :, None, :]
          * Im[idx[:, None, :, None], idx[None, :, None, :]])
    t2 = (G[:, None, None, :] * G.T[None, :, :, None]
          * Im[idx[:, None, None, :], idx.T[None, :, :, None]])
    WG = TWO_PI * (t1 + t2).reshape(p * p, p * p)
    return _symmetrize(WG, "G covariance")


def r_asym_var(a: int, b: int, d, r: float, Delta, table: KernelTable | None = None,
               kernel: str = "G", weight: str = "appendix") -> float:
    """Asymptotic variance of sqrt(n)(r_hat_ab - r_ab).

    ``kernel="G"`` aggregates with the G-estimator kernel; ``kernel="d"``
    uses the memory-parameter kernel instead.
    """
    table = table or default_table()
    _check_delta(Delta)
    if kernel == "G":
        k = lambda x, y: script_I_G_Delta(Delta, x, y, table, weight=weight)  # noqa: E731
    elif kernel == "d":
        k = lambda x, y: script_I_Delta(Delta, x, y, table)  # noqa: E731
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return scale_correlation_variance(0, a, b, d, r, table, kernel=k)


def r_asym_var_matrix(d, r, Delta, table: KernelTable | None = None, weight: str = "appendix",
                      weights=None) -> np.ndarray:
    """All pairwise variances of sqrt(n)(r_hat - r); zero diagonal."""
    table = table or default_table()
    _check_delta(Delta)
    d, r = _vec(d), _mat(r)
    Im, idx = _pair_lookup(lambda x, y: script_I_G_Delta(Delta, x, y, table, weight, weights), d)
    k = lambda s, t: Im[s, t]  # noqa: E731
    p = d.size
    diag = np.diag(idx)
    aa, bb = diag[:, None], diag[None, :]
    m = idx
    r2 = r * r
    val = (k(aa, bb) + k(m, m) * (r2 + r2 * r2) - 2 * r2 * (k(aa, m) + k(bb, m))
           + r2 / 2 * (k(aa, aa) + k(bb, bb)))
    V = TWO_PI * val
    V[np.arange(p), np.arange(p)] = 0.0
    return np.maximum((V + V.T) / 2, 0.0)


# ---------------------------------------------------------------------------
# joint distribution


def cross_weights(Delta: int) -> np.ndarray:
    """Per-gap weights of the d/G cross covariance.

    Row ``v`` (scale gap, 0..Delta) holds ``(c_fine, c_coarse)`` such that
    the gap-``v`` contribution is ``2^-v (c_fine 2^{v x} + c_coarse 2^{v y})``
    where ``x`` is the exponent on the memory side and ``y`` on the G side.
    """
    eta, _ = eta_kappa(Delta)
    w = np.arange(Delta + 1)
    p = 2.0 ** (-w) / (2.0 - 2.0 ** (-Delta))
    out = np.zeros((Delta + 1, 2))
    for v in range(1, Delta + 1):
        q = p[: Delta - v + 1]
        ww = w[: Delta - v + 1]
        out[v, 0] = np.sum(q * (ww - eta))
        out[v, 1] = np.sum(q * (ww + v - eta))
    return out


def dG_cross_cov(d, G, Delta, table: KernelTable | None = None) -> np.ndarray:
    """Cross covariance of sqrt(n)(d_hat - d) and sqrt(n) vec(G_hat - G), shape (p, p^2).

    Assembled directly from the wavelet-covariance process: d_hat is
    linearized through the score, G_hat(d) is a weighted sum of scale
    covariances, and their covariance is summed over pairs of scales.
    """
    table = table or default_table()
    if Delta == INF:
        raise ValueError("cross covariance needs a finite Delta")
    _check_delta(Delta)
    Delta = int(Delta)
    d, G = _vec(d), _mat(G)
    p = d.size
    Gi = _inv(G)
    P = Gi * G + np.eye(p)
    _, kappa = eta_kappa(Delta)
    cw = cross_weights(Delta)
    s = d[:, None] + d[None, :]
    X = np.zeros((p, p, p))  # [m, a, b]
    for v in range(1, Delta + 1):
        Tv, idx = _pair_lookup(lambda x, y: _tilde(table, v, x, y), d)
        # exponents: x = s[m, b'] (memory side), y = s[a, b] (G side)
        E = 2.0 ** (-v) * (cw[v, 0] * 2.0 ** (v * s)[:, :, None, None]
                           + cw[v, 1] * 2.0 ** (v * s)[None, None, :, :])  # [m,b',a,b]
        K1 = G[:, None, :, None] * G[None, :, None, :] * Tv[idx[:, None, :, None], idx[None, :, None, :]]
        K2 = G[:, None, None, :] * G.T[None, :, :, None] * Tv[idx[:, None, None, :], idx.T[None, :, :, None]]
        X += np.einsum("mc,mcab->mab", Gi, E * (K1 + K2), optimize=True)
    X *= TWO_PI
    cross = linalg.solve(P, X.reshape(p, p * p)) / (kappa * LOG2)
    return cross


def joint_dG_cov(d, G, Delta, table: KernelTable | None = None, weight: str = "appendix") -> np.ndarray:
    """Joint covariance of sqrt(n)(d_hat, vec G_hat(d_hat)); size p + p^2."""
    table = table or default_table()
    if Delta == INF:
        raise ValueError("joint covariance needs a finite Delta")
    Wd = d_asym_cov(d, G, Delta, table)
    WG = G_asym_cov(d, G, Delta, table, weight=weight)
    C = dG_cross_cov(d, G, Delta, table)
    J = np.block([[Wd, C], [C.T, WG]])
    return _symmetrize(J, "joint covariance")


# ---------------------------------------------------------------------------
# bundle and intervals


@dataclass
class AsymptoticCovariances:
    Delta: float
    W_d: np.ndarray
    W_G: np.ndarray
    r_var: np.ndarray
    W_joint: np.ndarray | None = None
    rho_var: dict = field(default_factory=dict)

    def V(self, u, u2, ab, ab2, d, G, table=None) -> float:
        return wavelet_cov_asym_cov(u, u2, ab, ab2, d, G, table)


def asymptotic_covariances(d, G, Delta, table: KernelTable | None = None, *, joint: bool = True,
                           weight: str = "appendix", weights=None) -> AsymptoticCovariances:
    """Bundle of the d, G, r (and, for finite Delta, joint) covariances.

    ``weights`` applies to the d, G and r blocks; the d/G cross block always
    uses the geometric profile.
    """
    table = table or default_table()
    d, G = _vec(d), _mat(G)
    if Delta == INF:
        weights = None
    Wd = d_asym_cov(d, G, Delta, table, weights=weights)
    WG = G_asym_cov(d, G, Delta, table, weight=weight, weights=weights)
    s = np.sqrt(np.diag(G))
    r = np.clip(G / np.outer(s, s), -1, 1)
    rv = r_asym_var_matrix(d, r, Delta, table, weight=weight, weights=weights)
    Wj = None
    if joint and Delta != INF:
        C = dG_cross_cov(d, G, Delta, table)
        Wj = _symmetrize(np.block([[Wd, C], [C.T, WG]]), "joint covariance")
    return AsymptoticCovariances(Delta, Wd, WG, rv, Wj)


@dataclass(frozen=True)
class Interval:
    estimate: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def z_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(stats.norm.ppf((1 + level) / 2))


def interval(estimate, variance, n: int, level: float = 0.95) -> Interval:
    """estimate +- z sqrt(variance / n), elementwise."""
    est = np.asarray(estimate, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0) / n)
    z = z_quantile(level)
    return Interval(est, sd, est - z * sd, est + z * sd)


def confidence_intervals(result, n: int | None = None, level: float = 0.95) -> dict[str, Interval]:
    """Gaussian intervals for d, G and r from an InferenceResult."""
    n = result.n if n is None else n
    p = result.d_hat.size
    return {
        "d": interval(result.d_hat, np.diag(result.d_cov), n, level),
        "G": interval(result.G_hat, np.diag(result.G_cov).reshape(p, p), n, level),
        "r": interval(result.r_hat, result.r_var, n, level),
    }
