"""Fourier transform of the wavelet and the scalar kernels of the asymptotic theory.

Conventions
-----------
``psi_hat(lam)`` is the Fourier transform of the mother wavelet, normalized so
that ``int |psi_hat|^2 = 2 pi``.  The folded spectrum is

    g(lam; delta) = sum_t |lam + 2 pi t|^-delta |psi_hat(lam + 2 pi t)|^2,

and the cross-scale kernel for a scale gap ``u`` is the vector of ``2**u``
polyphase components (``lam`` is the frequency of the coarser scale)

    D_{u,tau}(lam; delta) = 2^{-u/2} sum_t |xi_t|^-delta conj(psi_hat(2^-u xi_t))
                            psi_hat(xi_t) exp(i 2^-u tau xi_t),  xi_t = lam + 2 pi t.

``I_u(d1, d2)`` integrates the Hermitian inner product of two such vectors
over (-pi, pi).  Summing over ``tau`` first collapses the phases, so the
integrand is ``sum_r conj(B_r(d1)) B_r(d2)`` with ``B_r`` the sum of the
terms whose ``t`` is congruent to ``r`` modulo ``2**u``.
"""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import (
    ConvergenceError,
    DegenerateDelta,
    DivergentSeries,
    DomainError,
    SingularityError,
)
from .wavelets import WaveletFamily, build_daubechies_filters

INF = math.inf
TWO_PI = 2.0 * np.pi

DEFAULT_DEPTH = 30
DEFAULT_TRUNC = 100
DEFAULT_TOL = 1e-9
SERIES_CUTOFF = 1e-10
SERIES_MAX_U = 40


# ---------------------------------------------------------------------------
# psi_hat


class PsiHatEvaluator:
    """Refinement-product evaluation of the wavelet's Fourier transform."""

    def __init__(self, family: WaveletFamily | None = None, product_depth: int = DEFAULT_DEPTH):
        if product_depth < 20:
            raise ValueError("product_depth must be >= 20")
        self.family = family if family is not None else build_daubechies_filters(4)
        self.product_depth = int(product_depth)
        s2 = np.sqrt(2.0)
        # polyval wants the highest power first
        self._h = self.family.scaling_filter[::-1] / s2
        self._g = self.family.wavelet_filter[::-1] / s2
        self._scalar = lru_cache(maxsize=65536)(self._eval_scalar)

    def _transfer(self, coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.polyval(coeffs, np.exp(-1j * x))

    def evaluate(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = self._transfer(self._g, lam / 2.0)
        scale = 0.5
        for _ in range(2, self.product_depth + 1):
            scale *= 0.5
            out = out * self._transfer(self._h, lam * scale)
        return out

    def _eval_scalar(self, lam: float) -> complex:
        return complex(self.evaluate(lam))

    def __call__(self, lam):
        if np.ndim(lam) == 0:
            return self._scalar(float(lam))
        return self.evaluate(lam)


def psi_hat(lam, evaluator: PsiHatEvaluator | None = None):
    ev = evaluator if evaluator is not None else _default_evaluator()
    return ev(lam)


@lru_cache(maxsize=None)
def _default_evaluator() -> PsiHatEvaluator:
    return PsiHatEvaluator(build_daubechies_filters(4))


def _check_domain(delta: float, family: WaveletFamily) -> None:
    lo, hi = -family.regularity, 2 * family.vanishing_moments
    if not (lo < delta < hi) or not np.isfinite(delta):
        raise DomainError(f"delta={delta} outside ({lo}, {hi}) for {family.name}")


def envelope_constant(evaluator: PsiHatEvaluator, lam_min: float, lam_max: float, n: int = 4001) -> float:
    """max of |psi_hat(lam)| lam^alpha over [lam_min, lam_max]."""
    lam = np.linspace(lam_min, lam_max, n)
    alpha = evaluator.family.regularity
    return float(np.max(np.abs(evaluator(lam)) * lam ** alpha))


def _tail_sum(C: float, a: float, T: int) -> float:
    """Bound on sum_{|t|>T} C |2 pi t -+ pi|^-a over both signs."""
    if a <= 1.0:
        return math.inf
    return 2.0 * C * TWO_PI ** (-a) * (T - 0.5) ** (1.0 - a) / (a - 1.0)


# ---------------------------------------------------------------------------
# pointwise kernels


def K(delta: float, evaluator: PsiHatEvaluator | None = None, tol: float = 1e-6,
      T_trunc: int = DEFAULT_TRUNC) -> float:
    """int_R |lam|^-delta |psi_hat(lam)|^2 dlam by adaptive quadrature on the line.

    The integrand vanishes like |lam|^(2M - delta) at the origin, so no
    substitution is needed there; panels are split at multiples of pi and the
    tail beyond 2 pi (T_trunc + 1/2) is controlled by the decay bound.
    """
    ev = evaluator if evaluator is not None else _default_evaluator()
    _check_domain(delta, ev.family)

    def f(x):
        return x ** (-delta) * abs(ev(x)) ** 2 if x > 0 else 0.0

    edge = TWO_PI * (T_trunc + 0.5)
    total, err = 0.0, 0.0
    a = 0.0
    for b in np.arange(np.pi, edge + np.pi / 2, np.pi):
        val, e = integrate.quad(f, a, b, epsabs=tol * 1e-3, epsrel=tol, limit=200)
        total += val
        err += e
        a = b
    C = envelope_constant(ev, edge / 2, edge)
    tail = C ** 2 * edge ** (1 - delta - 2 * ev.family.regularity) / (delta + 2 * ev.family.regularity - 1)
    total, err = 2 * total, 2 * (err + tail)
    if err > tol * max(1.0, total):
        raise ConvergenceError(f"K({delta}) error estimate {err:.2e} exceeds tolerance {tol:.1e}")
    return total


def g_psi(lam, delta: float, T_trunc: int = DEFAULT_TRUNC,
          evaluator: PsiHatEvaluator | None = None):
    """Folded spectrum g(lam; delta), vectorized in ``lam``."""
    ev = evaluator if evaluator is not None else _default_evaluator()
    if T_trunc < 10:
        raise ValueError("T_trunc must be >= 10")
    lam = np.asarray(lam, dtype=float)
    if delta > 0 and np.any(lam == 0):
        raise SingularityError("g(0; delta) with delta > 0 has a 0^-delta factor")
    t = np.arange(-T_trunc, T_trunc + 1)
    xi = lam[..., None] + TWO_PI * t
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.abs(xi) ** (-delta) * np.abs(ev.evaluate(xi)) ** 2
    terms = np.where(xi == 0, 0.0, terms)
    return terms.sum(axis=-1)


def D_u_inf(lam, u: int, delta: float, T_trunc: int = DEFAULT_TRUNC,
            evaluator: PsiHatEvaluator | None = None, delta_max: int = 12):
    """Polyphase vector (length 2**u) of the cross-scale kernel at ``lam``."""
    ev = evaluator if evaluator is not None else _default_evaluator()
    if not 0 <= u <= delta_max:
        raise ValueError(f"u must be in [0, {delta_max}]")
    lam = np.asarray(lam, dtype=float)
    if delta > 0 and np.any(lam == 0):
        raise SingularityError("D(0; delta) with delta > 0 has a 0^-delta factor")
    t = np.arange(-T_trunc, T_trunc + 1)
    xi = lam[..., None] + TWO_PI * t
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.abs(xi) ** (-delta) * np.conj(ev.evaluate(xi / 2 ** u)) * ev.evaluate(xi)
    a = np.where(xi == 0, 0.0, a)
    tau = np.arange(2 ** u)
    phase = np.exp(1j * 2.0 ** (-u) * xi[..., None, :] * tau[:, None])
    return 2.0 ** (-u / 2) * np.sum(a[..., None, :] * phase, axis=-1)


def eta_kappa(Delta: int) -> tuple[float, float]:
    """Mean and variance of the scale weights 2^-u / (2 - 2^-Delta), u = 0..Delta."""
    if Delta == INF:
        return 1.0, 2.0
    u = np.arange(int(Delta) + 1)
    w = 2.0 ** (-u) / (2.0 - 2.0 ** (-Delta))
    eta = float(np.sum(u * w))
    kappa = float(np.sum((u - eta) ** 2 * w))
    return eta, kappa


# ---------------------------------------------------------------------------
# quadrature grid shared by the folded integrals


class _Grid:
    """Graded Gauss-Legendre rule on (0, pi) with folded frequencies."""

    def __init__(self, evaluator: PsiHatEvaluator, T_trunc: int, level: int,
                 n_gl: int = 12, n_geo: int = 12):
        edges = np.concatenate([[0.0], np.pi * 2.0 ** -np.arange(n_geo, -1, -1)])
        sub = 2 ** level
        fine = [np.linspace(a, b, sub + 1) for a, b in zip(edges[:-1], edges[1:])]
        fine = np.unique(np.concatenate(fine))
        x, w = leggauss(n_gl)
        a, b = fine[:-1, None], fine[1:, None]
        self.lam = ((b - a) / 2 * x + (a + b) / 2).ravel()
        self.w = ((b - a) / 2 * w).ravel()
        self.t = np.arange(-T_trunc, T_trunc + 1)
        self.xi = self.lam[:, None] + TWO_PI * self.t
        self.logabs = np.log(np.abs(self.xi))
        self.psi0 = evaluator.evaluate(self.xi)
        self.abs2 = np.abs(self.psi0) ** 2
        self._ev = evaluator
        self._psi_u: OrderedDict[int, np.ndarray] = OrderedDict()

    def psi_u(self, u: int) -> np.ndarray:
        if u == 0:
            return self.psi0
        if u not in self._psi_u:
            self._psi_u[u] = self._ev.evaluate(self.xi / 2 ** u)
            if len(self._psi_u) > 6:
                self._psi_u.popitem(last=False)
        return self._psi_u[u]

    def B(self, u: int, deltas: np.ndarray) -> np.ndarray:
        """Residue-class sums, shape (len(deltas), nodes, R)."""
        base = np.conj(self.psi_u(u)) * self.psi0
        A = np.exp(-np.asarray(deltas)[:, None, None] * self.logabs) * base
        m = 2 ** u
        if m >= self.t.size:
            return A
        S = np.zeros((self.t.size, m))
        S[np.arange(self.t.size), self.t % m] = 1.0
        return A @ S

    def K(self, deltas: np.ndarray) -> np.ndarray:
        E = np.exp(-np.asarray(deltas)[:, None, None] * self.logabs) * self.abs2
        return 2.0 * E.sum(axis=2) @ self.w

    def gram(self, u: int, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
        """Matrix of I_u(d1[i], d2[j])."""
        B1 = self.B(u, d1)
        B2 = B1 if d2 is d1 else self.B(u, d2)
        G = np.einsum("inr,n,jnr->ij", np.conj(B1), self.w, B2, optimize=True)
        return 2.0 * G.real


def _cheb_nodes(lo: float, hi: float, n: int) -> np.ndarray:
    k = np.arange(n)
    return (lo + hi) / 2 + (hi - lo) / 2 * np.cos((2 * k + 1) * np.pi / (2 * n))


def _bary_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = nodes.size
    k = np.arange(n)
    wts = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * n))
    diff = x[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15)
    diff = np.where(exact, 1.0, diff)
    L = wts / diff
    L = L / L.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    L[hit] = exact[hit].astype(float)
    return L


# ---------------------------------------------------------------------------
# kernel table


def _key(x: float) -> float:
    return round(float(x), 12)


@dataclass
class QuadratureReport:
    value: float
    error: float
    level: int


class KernelTable:
    """Memoized K(delta) and normalized cross-scale integrals for one wavelet family.

    Integrals are computed on a graded Gauss-Legendre grid over (0, pi); each
    request is evaluated at two consecutive refinement levels and accepted when
    they agree within ``quad_tolerance`` (absolute, on the normalized scale).
    Batches with many distinct deltas go through a Chebyshev surrogate in each
    argument whose accuracy is checked against direct evaluation.
    """

    MAX_LEVEL = 4

    def __init__(self, family: WaveletFamily | None = None, *, quad_tolerance: float = DEFAULT_TOL,
                 trunc_terms: int = DEFAULT_TRUNC, product_depth: int = DEFAULT_DEPTH,
                 delta_max_scale_gap: int = 12, cheb_nodes: int = 16):
        self.family = family if family is not None else build_daubechies_filters(4)
        self.evaluator = PsiHatEvaluator(self.family, product_depth)
        self.quad_tolerance = float(quad_tolerance)
        self.trunc_terms = int(trunc_terms)
        self.product_depth = int(product_depth)
        self.delta_max_scale_gap = int(delta_max_scale_gap)
        self.cheb_nodes = int(cheb_nodes)
        self.K_values: dict[float, float] = {}
        self.I_tilde_values: dict[tuple[int, float, float], float] = {}
        self.errors: dict = {}
        self._surrogates: dict = {}
        self._grids: dict[int, _Grid] = {}
        self._level = 1
        self._lock = threading.RLock()
        self._env_C: float | None = None

    # -- grid management
    def _grid(self, level: int) -> _Grid:
        if level not in self._grids:
            self._grids[level] = _Grid(self.evaluator, self.trunc_terms, level)
        return self._grids[level]

    def _envelope(self) -> float:
        if self._env_C is None:
            T = self.trunc_terms
            self._env_C = envelope_constant(self.evaluator, TWO_PI * T / 2, TWO_PI * (T + 1))
        return self._env_C

    def tail_bound(self, delta: float) -> float:
        """Bound on the folded terms dropped beyond |t| > trunc_terms."""
        return _tail_sum(self._envelope(), self.family.regularity + delta, self.trunc_terms)

    # -- K
    def K(self, delta) -> float | np.ndarray:
        arr = np.atleast_1d(np.asarray(delta, dtype=float))
        out = np.array([self.K_values.get(_key(x), np.nan) for x in arr])
        todo = np.unique(arr[np.isnan(out)])
        if todo.size:
            for x in todo:
                _check_domain(x, self.family)
            with self._lock:
                vals, err, _ = self._converge(lambda g: g.K(todo), scale=np.ones(todo.size))
                for x, v, e in zip(todo, vals, err):
                    self.K_values[_key(x)] = float(v)
                    a = 2 * self.family.regularity + x
                    tail = TWO_PI * _tail_sum(self._envelope() ** 2, a, self.trunc_terms)
                    self.errors[("K", _key(x))] = float(e + tail)
            out = np.array([self.K_values[_key(x)] for x in arr])
        return float(out[0]) if np.ndim(delta) == 0 else out

    def _converge(self, fn, scale):
        lvl = self._level
        prev = fn(self._grid(lvl - 1))
        while True:
            cur = fn(self._grid(lvl))
            err = np.abs(cur - prev)
            if np.all(err <= self.quad_tolerance * np.maximum(scale, 1e-300)):
                self._level = max(self._level, lvl)
                return cur, err, lvl
            if lvl >= self.MAX_LEVEL:
                raise ConvergenceError(
                    f"kernel quadrature did not reach {self.quad_tolerance:.1e} (max error {err.max():.2e})"
                )
            prev, lvl = cur, lvl + 1

    # -- I_u
    def I(self, u: int, d1: float, d2: float) -> float:
        return self.tilde_I(u, d1, d2) * self.K(d1) * self.K(d2)

    def tilde_I(self, u: int, d1: float, d2: float) -> float:
        k = (int(u), _key(d1), _key(d2))
        if k not in self.I_tilde_values:
            self.tilde_I_matrix(u, np.array([d1]), np.array([d2]))
        return self.I_tilde_values[k]

    def _exact_matrix(self, u: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        d = np.unique(np.concatenate([x, y]))
        Kd = self.K(d)
        scale = np.outer(Kd, Kd)
        with self._lock:
            gram, err, _ = self._converge(lambda g: g.gram(u, d, d), scale=scale)
        Ti = gram / scale
        pos = {v: i for i, v in enumerate(d)}
        ix, iy = [pos[v] for v in x], [pos[v] for v in y]
        for a, va in enumerate(d):
            for b, vb in enumerate(d):
                self.I_tilde_values[(u, _key(va), _key(vb))] = float(Ti[a, b])
        for a in ix:
            self.errors[("I", u, _key(d[a]))] = float(err[a].max() / scale[a].max())
        return Ti[np.ix_(ix, iy)]

    def tilde_I_matrix(self, u: int, x, y) -> np.ndarray:
        """Normalized integrals on the outer grid x[i], y[j]."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        for v in np.concatenate([x, y]):
            _check_domain(v, self.family)
        if u < 0:
            raise ValueError("u must be >= 0")
        ux, inv_x = np.unique(np.round(x, 12), return_inverse=True)
        uy, inv_y = np.unique(np.round(y, 12), return_inverse=True)
        if np.union1d(ux, uy).size <= self.cheb_nodes:
            cached = np.array([[self.I_tilde_values.get((u, a, b), np.nan) for b in uy] for a in ux])
            M = cached if not np.isnan(cached).any() else self._exact_matrix(u, ux, uy)
        else:
            # large grids: whole-matrix cache, entries are not stored one by one
            key = (u, ux.tobytes(), uy.tobytes())
            M = self._surrogates.get(key)
            if M is None:
                M = self._surrogates[key] = self._surrogate_matrix(u, ux, uy)
        return M[np.ix_(inv_x, inv_y)]

    def _surrogate_matrix(self, u: int, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        allv = np.union1d(ux, uy)
        lo, hi = allv.min(), allv.max()
        pad = 1e-3 * max(hi - lo, 1e-3)
        n = self.cheb_nodes
        while True:
            nodes = _cheb_nodes(lo - pad, hi + pad, n)
            Tn = self._exact_matrix(u, nodes, nodes)
            Lx, Ly = _bary_matrix(nodes, ux), _bary_matrix(nodes, uy)
            M = Lx @ Tn @ Ly.T
            # spot check two off-node entries against direct evaluation
            probe = [(0, uy.size - 1), (ux.size // 2, uy.size // 3)]
            px = np.array([ux[i] for i, _ in probe])
            py = np.array([uy[j] for _, j in probe])
            direct = np.diag(self._exact_matrix(u, px, py))
            approx = np.array([M[i, j] for i, j in probe])
            if np.max(np.abs(direct - approx)) <= 10 * self.quad_tolerance or n >= 64:
                if n >= 64 and np.max(np.abs(direct - approx)) > 10 * self.quad_tolerance:
                    raise ConvergenceError("Chebyshev surrogate for the kernel table did not converge")
                return M
            n *= 2

    # -- export / import
    def to_json(self) -> str:
        doc = {
            "schema": "wavewhittle.kernel_table/1",
            "family": self.family.name,
            "M": self.family.vanishing_moments,
            "quad_tolerance": self.quad_tolerance,
            "trunc_terms": self.trunc_terms,
            "product_depth": self.product_depth,
            "K": [[k, v] for k, v in sorted(self.K_values.items())],
            "I_tilde": [[u, a, b, v] for (u, a, b), v in sorted(self.I_tilde_values.items())],
        }
        return json.dumps(doc, indent=1, default=float)

    @classmethod
    def from_json(cls, text: str) -> "KernelTable":
        doc = json.loads(text)
        table = cls(build_daubechies_filters(int(doc["M"])), quad_tolerance=doc["quad_tolerance"],
                    trunc_terms=doc["trunc_terms"], product_depth=doc["product_depth"])
        table.K_values = {float(k): float(v) for k, v in doc["K"]}
        table.I_tilde_values = {(int(u), float(a), float(b)): float(v) for u, a, b, v in doc["I_tilde"]}
        return table


_TABLES: dict[tuple, KernelTable] = {}


def default_table(M: int = 4, **kw) -> KernelTable:
    """Process-wide shared table for Daubechies order ``M``."""
    key = (M, tuple(sorted(kw.items())))
    if key not in _TABLES:
        _TABLES[key] = KernelTable(build_daubechies_filters(M), **kw)
    return _TABLES[key]


def I_u(u: int, d1: float, d2: float, table: KernelTable | None = None) -> float:
    return (table or default_table()).I(u, d1, d2)


def tilde_I_u(u: int, d1: float, d2: float, table: KernelTable | None = None) -> float:
    return (table or default_table()).tilde_I(u, d1, d2)


# ---------------------------------------------------------------------------
# scale-aggregated kernels.  All accept broadcastable arrays of deltas.


def _pairs(d1, d2):
    d1, d2 = np.broadcast_arrays(np.asarray(d1, float), np.asarray(d2, float))
    return d1, d2


def _tilde(table: KernelTable, u: int, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    ux, ix = np.unique(np.round(d1.ravel(), 12), return_inverse=True)
    uy, iy = np.unique(np.round(d2.ravel(), 12), return_inverse=True)
    M = table.tilde_I_matrix(u, ux, uy)
    return M[ix, iy].reshape(d1.shape)


def _check_delta(Delta) -> None:
    if Delta != INF and (int(Delta) != Delta or Delta < 0):
        raise ValueError(f"Delta must be a non-negative integer or INF, got {Delta!r}")
    if Delta == 0:
        raise DegenerateDelta("Delta=0 gives kappa_0 = 0; use Delta >= 1")


def _infinite_series(d1, d2, table: KernelTable):
    total = _tilde(table, 0, d1, d2).astype(float)
    prev = None
    grow = 0
    for u in range(1, SERIES_MAX_U + 1):
        term = (2.0 ** (u * d1) + 2.0 ** (u * d2)) * 2.0 ** (-u) * _tilde(table, u, d1, d2)
        total = total + term
        mag = float(np.max(np.abs(term)))
        if mag < SERIES_CUTOFF:
            return total
        if prev is not None and mag > prev:
            grow += 1
            if grow >= 3:
                raise DivergentSeries(f"scale series terms grow at u={u} (max delta {np.max([d1, d2])})")
        else:
            grow = 0
        prev = mag
    if np.max([d1, d2]) >= 1:
        raise DivergentSeries("scale series did not contract by u=40 with max(delta) >= 1")
    return total


def _geo_weights(Delta: int) -> np.ndarray:
    w = np.arange(Delta + 1)
    return 2.0 ** (-w) / (2.0 - 2.0 ** (-Delta))


def _scale_weights(Delta: int, weights) -> np.ndarray:
    if weights is None:
        return _geo_weights(Delta)
    p = np.asarray(weights, dtype=float)
    if p.shape != (Delta + 1,) or np.any(p < 0):
        raise ValueError(f"weights must be {Delta + 1} non-negative numbers")
    return p / p.sum()


def finite_delta_coefficients(Delta: int, form: str = "derived", weights=None) -> np.ndarray:
    """C_u, u = 1..Delta, multiplying 2^-u (2^{u d1} + 2^{u d2}) I~_u in script_I_Delta.

    ``derived`` is 2^u sum_{w=0}^{Delta-u} p_{w+u} (w - eta)(w + u - eta); with
    the geometric weights p_w = 2^-w / (2 - 2^-Delta) this is
    sum_w p_w (w - eta)(w + u - eta).  ``printed`` is the shortcut
    A_u (u - eta)(u - eta - eta_{Delta-u}), A_u = (2 - 2^{u-Delta}) / (2 - 2^-Delta).
    """
    p = _scale_weights(Delta, weights)
    u_all = np.arange(Delta + 1)
    eta = float(np.sum(p * u_all))
    out = np.empty(Delta)
    for u in range(1, Delta + 1):
        if form == "derived":
            w = np.arange(Delta - u + 1)
            out[u - 1] = 2.0 ** u * np.sum(p[u:] * (w - eta) * (w + u - eta))
        elif form == "printed":
            if weights is not None:
                raise ValueError("the printed form only exists for geometric weights")
            A = (2 - 2.0 ** (u - Delta)) / (2 - 2.0 ** (-Delta))
            out[u - 1] = A * (u - eta) * (u - eta - eta_kappa(Delta - u)[0])
        else:
            raise ValueError(f"unknown form {form!r}")
    return out


def script_I_Delta(Delta, d1, d2, table: KernelTable | None = None, form: str = "derived",
                   weights=None):
    """Scale-aggregated kernel of the memory-parameter variance.

    ``weights`` (length Delta + 1) replaces the geometric scale profile by
    arbitrary proportions, e.g. the observed n_j / n.
    """
    table = table or default_table()
    _check_delta(Delta)
    d1, d2 = _pairs(d1, d2)
    if Delta == INF:
        out = _infinite_series(d1, d2, table)
    else:
        Delta = int(Delta)
        p = _scale_weights(Delta, weights)
        u = np.arange(Delta + 1)
        eta = np.sum(p * u)
        kappa = float(np.sum(p * (u - eta) ** 2))
        C = finite_delta_coefficients(Delta, form, weights)
        out = 2.0 / kappa * _tilde(table, 0, d1, d2)
        for u in range(1, Delta + 1):
            coef = (2.0 ** (u * d1) + 2.0 ** (u * d2)) * 2.0 ** (-u) * C[u - 1]
            out = out + 2.0 / kappa ** 2 * coef * _tilde(table, u, d1, d2)
    return float(out) if out.ndim == 0 else out


def G_weights(Delta: int, weight: str = "appendix", weights=None) -> np.ndarray:
    """A_u, u = 1..Delta, with 2^-u A_u the total weight of scale pairs u apart."""
    u = np.arange(1, Delta + 1)
    if weights is not None:
        p = _scale_weights(Delta, weights)
        return np.array([2.0 ** k * p[k:].sum() for k in u])
    if weight == "appendix":
        return (2 - 2.0 ** (u - Delta)) / (2 - 2.0 ** (-Delta))
    if weight == "printed":
        return (2 - 2.0 ** (-Delta - u)) / (2 - 2.0 ** (-Delta))
    raise ValueError(f"unknown weight {weight!r}")


def script_I_G_Delta(Delta, d1, d2, table: KernelTable | None = None, weight: str = "appendix",
                     weights=None):
    """Scale-aggregated kernel of the covariance of G_hat.

    The scale-gap-0 term keeps weight sum_w p_w = 1 for any ``weights``;
    only the gap weights A_u depend on the profile.
    """
    table = table or default_table()
    _check_delta(Delta)
    d1, d2 = _pairs(d1, d2)
    if Delta == INF:
        out = _infinite_series(d1, d2, table)
    else:
        Delta = int(Delta)
        w = G_weights(Delta, weight, weights)
        out = _tilde(table, 0, d1, d2).astype(float)
        for u in range(1, Delta + 1):
            coef = (2.0 ** (u * d1) + 2.0 ** (u * d2)) * 2.0 ** (-u) * w[u - 1]
            out = out + coef * _tilde(table, u, d1, d2)
    return float(out) if out.ndim == 0 else out


def script_I_dG_Delta(Delta, d1, d2, table: KernelTable | None = None, form: str = "derived"):
    """Scale-aggregated kernel of the cross covariance between d_hat and G_hat.

    ``d1`` carries the scale exponent of the memory-parameter side and ``d2``
    that of the G side.  The scale-gap-zero contribution is proportional to
    sum_u p_u (u - eta) = 0 and drops out.  ``derived`` sums the weights
    exactly; ``printed`` uses the displayed shortcut with its sign conventions.
    """
    table = table or default_table()
    if Delta == INF:
        raise ValueError("cross kernel needs a finite Delta")
    _check_delta(Delta)
    Delta = int(Delta)
    d1, d2 = _pairs(d1, d2)
    eta, kappa = eta_kappa(Delta)
    out = np.zeros(d1.shape)
    for u in range(1, Delta + 1):
        eta_r = eta_kappa(Delta - u)[0] if Delta - u > 0 else 0.0
        A = (2 - 2.0 ** (u - Delta)) / (2 - 2.0 ** (-Delta))
        if form == "derived":
            bracket = A * (2.0 ** (u * d1) * (eta_r - eta) + 2.0 ** (u * d2) * (eta_r + u - eta))
            out = out + 4.0 / kappa * 2.0 ** (-u) * bracket * _tilde(table, u, d1, d2)
        elif form == "printed":
            Ap = (2 - 2.0 ** (-Delta - u)) / (2 - 2.0 ** (-Delta))
            bracket = (2.0 ** (-u * d1) + 2.0 ** (-u * d2)) * Ap * (u - eta) + 2.0 ** (-u * d2) * eta_r
            out = out + 1.0 / kappa * 2.0 ** (-u) * bracket * _tilde(table, u, d1, d2)
        else:
            raise ValueError(f"unknown form {form!r}")
    return float(out) if out.ndim == 0 else out
