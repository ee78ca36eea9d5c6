"""Multivariate fractional noise and the Monte Carlo harness.

Panels are generated as

    X_a(t) = (1 - B)^{-D_a} (1 - B)^{-(d_a - D_a)} [phi(B)^{-1} eps_a](t),

with ``eps(t)`` iid with covariance ``2 pi omega`` and an optional scalar
AR(1) short-memory filter.  The factor 2 pi makes ``omega`` the long-run
covariance of the zero-frequency approximation
``f(lambda) ~ |lambda|^-d omega |lambda|^-d`` (phases aside), which is the
quantity that ``omega_hat`` estimates.  The fractional filter is a truncated
MA(infinity) applied by FFT convolution.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, signal, special, stats

from .errors import DomainError, NonPDMatrix, ResourceLimit, WaveWhittleError
from .wavelets import TimeSeriesPanel

DEFAULT_TRUNC = 2 ** 16
DEFAULT_BUDGET = 2 ** 40
THREADS_ENV = "WAVEWHITTLE_THREADS"
TWO_PI = 2.0 * math.pi


def fractional_ma_coefficients(d: float, trunc: int) -> np.ndarray:
    """Weights psi_0..psi_trunc of (1 - B)^-d."""
    if not abs(d) < 0.5:
        raise DomainError(f"|d| must be < 0.5 for the stationary filter, got {d}")
    if trunc < 1:
        raise ValueError("trunc must be >= 1")
    k = np.arange(1, trunc + 1)
    return np.concatenate([[1.0], np.cumprod((k - 1 + d) / k)])


def fractional_acvf(d: float, lags) -> np.ndarray:
    """Autocovariance of unit-innovation fractional noise at integer lags.

    gamma(0) = Gamma(1 - 2d) / Gamma(1 - d)^2 and
    gamma(k) / gamma(k - 1) = (k - 1 + d) / (k - d).
    """
    k = np.abs(np.asarray(lags, dtype=int))
    g0 = math.exp(special.gammaln(1 - 2 * d) - 2 * special.gammaln(1 - d))
    i = np.arange(1, int(k.max(initial=0)) + 1)
    ratios = np.concatenate([[1.0], np.cumprod((i - 1 + d) / (i - d))])
    return g0 * ratios[k]


@dataclass(frozen=True)
class SimulationSpec:
    d: tuple
    omega: tuple
    N_X: int
    seed: int = 0
    differencing: tuple | None = None
    ma_truncation: int | None = None
    ar_phi: float = 0.0
    innovation: str = "gaussian"

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        om = np.atleast_2d(np.asarray(self.omega, dtype=float))
        if om.shape != (d.size, d.size):
            raise ValueError("omega must be p x p with p = len(d)")
        if np.any(d <= -0.5) or np.any(d > 1.25):
            raise DomainError("each d must lie in (-0.5, 1.25]")
        D = np.where(d > 0.5, 1, 0) if self.differencing is None else np.asarray(self.differencing, int)
        if np.any(np.abs(d - D) >= 0.5):
            raise DomainError("d - D must lie in (-0.5, 0.5) for every component")
        if self.innovation not in ("gaussian", "exponential"):
            raise ValueError("innovation must be 'gaussian' or 'exponential'")
        if not abs(self.ar_phi) < 1:
            raise ValueError("AR coefficient must satisfy |phi| < 1")
        object.__setattr__(self, "d", tuple(d.tolist()))
        object.__setattr__(self, "omega", tuple(map(tuple, om.tolist())))
        object.__setattr__(self, "differencing", tuple(int(x) for x in D))

    @property
    def p(self) -> int:
        return len(self.d)

    @property
    def truncation(self) -> int:
        return self.ma_truncation if self.ma_truncation is not None else max(DEFAULT_TRUNC, 10 * self.N_X)

    def to_dict(self) -> dict:
        return {
            "d": list(self.d), "omega": [list(r) for r in self.omega], "N_X": self.N_X,
            "seed": self.seed, "differencing": list(self.differencing),
            "ma_truncation": self.ma_truncation, "ar_phi": self.ar_phi, "innovation": self.innovation,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulationSpec":
        keys = {"d", "omega", "N_X", "seed", "differencing", "ma_truncation", "ar_phi", "innovation"}
        kw = {k: v for k, v in doc.items() if k in keys}
        for k in ("d", "omega", "differencing"):
            if kw.get(k) is not None:
                kw[k] = tuple(map(tuple, kw[k])) if k == "omega" else tuple(kw[k])
        return cls(**kw)


def _innovations(rng: np.random.Generator, n: int, omega: np.ndarray, kind: str) -> np.ndarray:
    try:
        L = linalg.cholesky(omega, lower=True)
    except linalg.LinAlgError:
        raise NonPDMatrix("omega is not positive definite") from None
    if kind == "gaussian":
        e = rng.standard_normal((n, omega.shape[0]))
    else:
        e = rng.exponential(size=(n, omega.shape[0])) - 1.0
    return e @ L.T


def simulate_mvlm(spec: SimulationSpec, rng: np.random.Generator | None = None, *,
                  budget: int = DEFAULT_BUDGET) -> TimeSeriesPanel:
    """Draw one panel; reproducible from ``spec.seed`` unless ``rng`` is given."""
    N, T = spec.N_X, spec.truncation
    if T < 10 * N:
        raise ValueError(f"ma_truncation={T} is below 10 * N_X = {10 * N}")
    if N * T > budget:
        raise ResourceLimit(f"N_X * truncation = {N * T} exceeds the budget {budget}")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    d = np.asarray(spec.d)
    D = np.asarray(spec.differencing)
    burn = T
    n_tot = N + burn + T
    eps = _innovations(rng, n_tot, TWO_PI * np.asarray(spec.omega), spec.innovation)
    if spec.ar_phi:
        eps = signal.lfilter([1.0], [1.0, -spec.ar_phi], eps, axis=0)
    out = np.empty((N, spec.p))
    for a in range(spec.p):
        psi = fractional_ma_coefficients(d[a] - D[a], T)
        y = signal.fftconvolve(eps[:, a], psi, mode="valid")  # length n_tot - T
        y = y[burn:burn + N]
        for _ in range(D[a]):
            y = np.cumsum(y)
        out[:, a] = y
    return TimeSeriesPanel(out)


def circulant_fractional_noise(N: int, d: float, rng: np.random.Generator, sigma: float = 1.0) -> np.ndarray:
    """Exact stationary fractional noise of length N by circulant embedding.

    ``sigma`` is the innovation standard deviation.
    """
    if not abs(d) < 0.5:
        raise DomainError("circulant embedding needs |d| < 0.5")
    m = 1 << int(math.ceil(math.log2(2 * (N - 1)))) if N > 1 else 2
    g = fractional_acvf(d, np.arange(m // 2 + 1)) * sigma ** 2
    c = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.rfft(c).real
    if np.any(lam < -1e-10 * lam.max()):
        raise DomainError("circulant embedding is not nonnegative definite")
    lam = np.maximum(lam, 0.0)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.fft(np.sqrt(np.concatenate([lam, lam[-2:0:-1]]) / m) * z)
    return w.real[:N]


# ---------------------------------------------------------------------------
# Monte Carlo harness


@dataclass(frozen=True)
class EstimationConfig:
    j0: int = 3
    j1: int | None = None
    M: int = 4
    Delta: int | None = None
    level: float = 0.95
    method: str = "ma"
    variance_weights: str = "geometric"


@dataclass
class MonteCarloSummary:
    replicates: int
    failures: int
    d_true: np.ndarray
    r_true: np.ndarray
    n: int
    d_hat: np.ndarray
    r_hat: np.ndarray
    empirical_sd: dict = field(default_factory=dict)
    theoretical_sd: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)
    normality_stats: dict = field(default_factory=dict)
    bias: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "replicates": self.replicates, "failures": self.failures, "n": self.n,
            "d_true": self.d_true, "r_true": self.r_true,
            "empirical_sd": self.empirical_sd, "theoretical_sd": self.theoretical_sd,
            "coverage": self.coverage, "normality_stats": self.normality_stats, "bias": self.bias,
            "errors": self.errors,
        }


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index``; same in serial and parallel runs."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _one_replicate(args):
    from .inference import fit

    spec, cfg, idx = args
    rng = replicate_rng(spec.seed, idx)
    try:
        if cfg.method == "circulant":
            if spec.p != 1:
                raise ValueError("circulant mode is univariate")
            x = circulant_fractional_noise(spec.N_X, spec.d[0], rng, math.sqrt(TWO_PI * spec.omega[0][0]))
            panel = TimeSeriesPanel(x)
        else:
            panel = simulate_mvlm(spec, rng)
        res = fit(panel, j0=cfg.j0, j1=cfg.j1, M=cfg.M, Delta=cfg.Delta, modes=("finite",), joint=False,
                  variance_weights=cfg.variance_weights)
        ci = res.intervals(cfg.level)
        return dict(d=res.d_hat, r=res.r_hat, d_lo=ci["d"].lower, d_hi=ci["d"].upper,
                    r_lo=ci["r"].lower, r_hi=ci["r"].upper, n=res.n)
    except WaveWhittleError as exc:
        return dict(error=exc.to_record())


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _true_G(spec: SimulationSpec, table) -> np.ndarray:
    # G_ab = omega_ab cos(pi (d_a - d_b) / 2) K(d_a + d_b)
    d = np.asarray(spec.d)
    om = np.asarray(spec.omega)
    s = d[:, None] + d[None, :]
    return om * np.cos(np.pi * (d[:, None] - d[None, :]) / 2) * table.K(s.ravel()).reshape(s.shape)


def monte_carlo(spec: SimulationSpec, replicates: int, config: EstimationConfig | None = None, *,
                workers: int | None = None, max_failure_rate: float = 0.05) -> MonteCarloSummary:
    """Simulate, fit and aggregate ``replicates`` independent panels."""
    from .asymptotics import d_asym_cov, r_asym_var_matrix
    from .kernels import default_table
    from .wavelets import build_daubechies_filters, coefficient_count, default_j1

    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    cfg = config or EstimationConfig()
    workers = worker_count() if workers is None else workers
    tasks = [(spec, cfg, i) for i in range(replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_one_replicate, tasks, chunksize=max(1, replicates // (4 * workers))))
    else:
        outs = [_one_replicate(t) for t in tasks]
    ok = [o for o in outs if "error" not in o]
    fails = [o["error"] for o in outs if "error" in o]
    if len(fails) > max_failure_rate * replicates:
        raise WaveWhittleError(f"{len(fails)} of {replicates} replicates failed; first: {fails[0]}")

    fam = build_daubechies_filters(cfg.M)
    T = fam.support_length
    j1 = cfg.j1 if cfg.j1 is not None else default_j1(spec.N_X, T)
    counts = [coefficient_count(spec.N_X, j, T) for j in range(cfg.j0, j1 + 1)]
    n = sum(counts)
    Delta = (j1 - cfg.j0) if cfg.Delta is None else cfg.Delta
    table = default_table(cfg.M)
    d0 = np.asarray(spec.d)
    G0 = _true_G(spec, table)
    s0 = np.sqrt(np.diag(G0))
    r0 = G0 / np.outer(s0, s0)
    Wd = d_asym_cov(d0, G0, Delta, table)
    Wr = r_asym_var_matrix(d0, r0, Delta, table)

    p = spec.p
    dh = np.array([o["d"] for o in ok]).reshape(-1, p)
    rh = np.array([o["r"] for o in ok]).reshape(-1, p, p)
    summ = MonteCarloSummary(replicates, len(fails), d0, r0, n, dh, rh, errors=fails[:10])
    sd_th = np.sqrt(np.diag(Wd))
    z = np.sqrt(n) * (dh - d0) / sd_th
    summ.empirical_sd["d"] = np.sqrt(n) * dh.std(axis=0, ddof=1)
    summ.theoretical_sd["d"] = sd_th
    if Delta == j1 - cfg.j0:
        summ.theoretical_sd["d_empirical_weights"] = np.sqrt(np.diag(d_asym_cov(d0, G0, Delta, table,
                                                                                weights=counts)))
    summ.bias["d"] = dh.mean(axis=0) - d0
    lo = np.array([o["d_lo"] for o in ok]).reshape(-1, p)
    hi = np.array([o["d_hi"] for o in ok]).reshape(-1, p)
    summ.coverage["d"] = np.mean((lo <= d0) & (d0 <= hi), axis=0)
    summ.normality_stats["d"] = {
        "skewness": stats.skew(z, axis=0),
        "excess_kurtosis": stats.kurtosis(z, axis=0),
        "ks": np.array([stats.kstest(z[:, a], "norm").statistic for a in range(p)]),
    }
    if p > 1:
        iu = np.triu_indices(p, 1)
        rv = rh[:, iu[0], iu[1]]
        sd_r = np.sqrt(Wr[iu])
        zr = np.sqrt(n) * (rv - r0[iu]) / sd_r
        rlo = np.array([o["r_lo"] for o in ok])[:, iu[0], iu[1]]
        rhi = np.array([o["r_hi"] for o in ok])[:, iu[0], iu[1]]
        summ.empirical_sd["r"] = np.sqrt(n) * rv.std(axis=0, ddof=1)
        summ.theoretical_sd["r"] = sd_r
        summ.bias["r"] = rv.mean(axis=0) - r0[iu]
        summ.coverage["r"] = np.mean((rlo <= r0[iu]) & (r0[iu] <= rhi), axis=0)
        summ.normality_stats["r"] = {
            "skewness": stats.skew(zr, axis=0),
            "excess_kurtosis": stats.kurtosis(zr, axis=0),
            "ks": np.array([stats.kstest(zr[:, k], "norm").statistic for k in range(zr.shape[1])]),
        }
    return summ


def with_seed(spec: SimulationSpec, seed: int) -> SimulationSpec:
    return replace(spec, seed=seed)
