"""Inverse Laplace transforms along a sector contour.

The contour ``Gamma`` is the unit-circle arc ``|arg z| <= b`` joined to the
two rays ``arg z = +-b``, ``|z| >= 1``, with ``pi/2 < b < 3pi/4``.  The
Bromwich integral is taken over ``Gamma / T``:

    P(T) = (1/2 pi i) int_{Gamma/T} e^{beta T} g(beta) d beta
         = (1/2 pi i T) int_Gamma e^z g(z/T) dz.

On the rays ``|e^z| = e^{r cos b}``, so truncating at ``R`` with
``e^{R cos b} = 1e-14`` is harmless for integrands bounded by ``C/|beta|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rg
from .errors import QuadratureStall
from .free import DEFAULT_TOL, endtoend_free, green0, p0
from .lattice import shell_count

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ContourSpec:
    """Quadrature layout on ``Gamma``; ``ray_cutoff=None`` picks ``R`` from ``b_beta``."""

    b_beta: float = 5 * math.pi / 8
    arc_nodes: int = 64
    ray_nodes: int = 256
    ray_cutoff: float | None = None
    rtol: float = 1e-8
    max_refine: int = 4

    def __post_init__(self):
        if not math.pi / 2 < self.b_beta < 3 * math.pi / 4:
            raise ValueError("b_beta must lie in (pi/2, 3pi/4)")
        if self.arc_nodes < 4 or self.ray_nodes < 8:
            raise ValueError("need at least 4 arc nodes and 8 ray nodes")
        if self.ray_cutoff is None:
            object.__setattr__(self, "ray_cutoff", math.log(1e-14) / math.cos(self.b_beta))
        if not self.ray_cutoff > 1:
            raise ValueError("ray_cutoff must exceed 1")

    def nodes(self, level: int = 0):
        """Nodes ``z_k`` and weights ``w_k`` with ``sum w_k h(z_k) ~ (1/2 pi i) int h dz``.

        ``level`` doubles the node counts that many times.
        """
        return _nodes(self.b_beta, self.arc_nodes << level, self.ray_nodes << level, self.ray_cutoff)


@lru_cache(maxsize=32)
def _nodes(b, n_arc, n_ray, R):
    # the arc is split in four panels, the rays in geometric panels 1, 2, 4, ...
    edges = np.linspace(-b, b, 5)
    per = max(n_arc // 4, 2)
    x, w = np.polynomial.legendre.leggauss(per)
    th = np.concatenate([0.5 * (hi - lo) * x + 0.5 * (hi + lo) for lo, hi in zip(edges[:-1], edges[1:])])
    wth = np.concatenate([0.5 * (hi - lo) * w for lo, hi in zip(edges[:-1], edges[1:])])
    z_arc = np.exp(1j * th)
    # dz / (2 pi i) = e^{i theta} d theta / (2 pi)
    w_arc = z_arc * wth / (2 * np.pi)

    r_edges = [1.0]
    while r_edges[-1] * 2 < R:
        r_edges.append(r_edges[-1] * 2)
    r_edges.append(R)
    per = max(n_ray // (len(r_edges) - 1), 4)
    x, w = np.polynomial.legendre.leggauss(per)
    r = np.concatenate([0.5 * (hi - lo) * x + 0.5 * (hi + lo) for lo, hi in zip(r_edges[:-1], r_edges[1:])])
    wr = np.concatenate([0.5 * (hi - lo) * w for lo, hi in zip(r_edges[:-1], r_edges[1:])])
    up, down = np.exp(1j * b), np.exp(-1j * b)
    # upper ray outward (dz = e^{ib} dr), lower ray inward (dz = -e^{-ib} dr)
    z = np.concatenate([z_arc, r * up, r * down])
    wz = np.concatenate([w_arc, wr * up / (2j * np.pi), -wr * down / (2j * np.pi)])
    z.setflags(write=False)
    wz.setflags(write=False)
    return z, wz


def invert(g, T: float, contour: ContourSpec = ContourSpec(), atol: float = 0.0):
    """``(1/2 pi i) int_{Gamma/T} e^{beta T} g(beta) d beta`` with an error estimate.

    ``g`` must accept a complex array.  The rule is doubled until two
    successive values agree to ``contour.rtol`` (or ``atol``); the returned
    error is the last difference, floored at the rounding level of the sum.  Returns ``(value, error)``.
    """
    if not T > 0:
        raise ValueError("T must be positive")

    def rule(level):
        z, w = contour.nodes(level)
        terms = w * np.exp(z) * g(z / T)
        # the rounding floor keeps the estimate honest once the rule has converged
        return complex(np.sum(terms) / T), 64 * EPS * float(np.sum(np.abs(terms))) / T

    prev, _ = rule(0)
    for level in range(1, contour.max_refine + 1):
        cur, floor = rule(level)
        err = max(abs(cur - prev), floor)
        if err <= max(contour.rtol * abs(cur), atol):
            return cur, err
        prev = cur
    raise QuadratureStall(f"contour quadrature did not reach rtol={contour.rtol} after "
                          f"{contour.max_refine} doublings (last change {err:.3g})")


@dataclass(frozen=True)
class InteractingKernelQuery:
    """Time horizon, target level ``N(x)`` and coupling for the interacting kernel."""

    T: float
    x_level: int
    lam: complex
    L: int = 2

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.x_level < 0:
            raise ValueError("x_level must be >= 0")

    @property
    def ell_quarter(self) -> complex:
        """``ell(1/T)^{1/4}``."""
        return rg.ell_quarter(1.0 / self.T, self.lam, self.L)

    @property
    def t(self) -> complex:
        """Renormalised time ``T ell(1/T)^{1/4}``."""
        return self.T * self.ell_quarter


class _BetaEffCache:
    """``beta_eff_inf`` at the contour nodes, shared by every level and moment."""

    def __init__(self, lam, L, contour, T):
        self.lam, self.L, self.contour, self.T = complex(lam), L, contour, T
        self._vals = {}

    def __call__(self, beta):
        key = beta.size, complex(beta[0]), complex(beta[-1])
        if key not in self._vals:
            self._vals[key] = beta if self.lam == 0 else rg.beta_eff(beta, self.lam, None, L=self.L)
        return self._vals[key]


@lru_cache(maxsize=16)
def _cache_for(lam, L, contour, T):
    return _BetaEffCache(lam, L, contour, T)


def p_lambda(T: float, x_level: int, lam, L: int = 2, contour: ContourSpec = ContourSpec(),
             with_error: bool = False):
    """Interacting kernel ``P_lambda(T, x)`` with ``G_lambda ~ G0(beta_eff_inf(beta_hat), x)``.

    Each quadrature node ``beta_hat`` runs one shifted flow; the resulting
    effective couplings are cached and reused for every ``x``.
    """
    q = InteractingKernelQuery(T, x_level, complex(lam), L)
    beff = _cache_for(q.lam, L, contour, float(T))
    val, err = invert(lambda b: green0(beff(b), x_level, L), T, contour)
    return (val, err) if with_error else val


def p_lambda_leading(T: float, x_level: int, lam, L: int = 2) -> complex:
    """Leading term ``ell^{1/4} P0(T ell^{1/4}, x)`` with ``ell = ell(1/T)``."""
    q = InteractingKernelQuery(T, x_level, complex(lam), L)
    lq = q.ell_quarter
    return complex(lq * p0(T * lq, x_level, L))


def ell_log_factor(T: float, lam, L: int = 2):
    """``(ell(1/T) from the flow, closed-form approximant)``; see :func:`rg.ell_log_factor`."""
    return rg.ell_log_factor(T, lam, L)


def _moment_integrand(beta, alpha, L, rel=1e-14):
    """``sum_x |x|^alpha G0(beta, x)`` summed shell by shell.

    The shell terms decay like ``L^{(alpha-2) N} / |beta|^2``; summation stops
    once the geometric tail of that envelope drops below ``rel`` of the sum.
    """
    r = float(L) ** (alpha - 2)
    acc = np.zeros(beta.shape, dtype=complex)
    N = 1
    while True:
        term = shell_count(N, L) * float(L) ** (alpha * N) * green0(beta, N, L)
        acc += term
        # past the crossover |beta| L^{2N} > 1 the envelope is geometric
        if np.all(np.abs(beta) * float(L) ** (2 * N) > 1):
            tail = np.abs(term) * r / (1 - r)
            if np.all(tail <= rel * np.abs(acc)):
                return acc
        N += 1
        if N > 10_000:
            raise RuntimeError("shell sum did not terminate")


def endtoend_interacting(T: float, alpha: float, lam, L: int = 2,
                         contour: ContourSpec = ContourSpec()) -> float:
    """``[sum_x |x|^alpha P_lambda(T,x) / sum_x P_lambda(T,x)]^{1/alpha}``.

    The shell sums are done under the integral: ``sum_x G0(beta, x) = 1/beta``
    exactly, and the alpha-moment is summed shell by shell at each node.
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    beff = _cache_for(complex(lam), L, contour, float(T))
    num, _ = invert(lambda b: _moment_integrand(beff(b), alpha, L), T, contour)
    den, _ = invert(lambda b: 1.0 / beff(b), T, contour)
    return float((num / den).real) ** (1.0 / alpha)


def endtoend_theory(T: float, alpha: float, lam, L: int = 2) -> float:
    """Right side of the end-to-end law: the free moment at ``t = T ell(1/T)^{1/4}``."""
    q = InteractingKernelQuery(T, 0, complex(lam), L)
    t = q.t
    return endtoend_free(float(t.real), alpha, L, DEFAULT_TOL) ** (1.0 / alpha)
