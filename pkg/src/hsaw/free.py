"""Closed forms for the free (non-interacting) hierarchical Levy walk.

Every series here has an explicit geometric envelope, so truncation is
chosen a priori from the envelope rather than from the size of the last
term.  ``beta`` arguments may be scalars or complex arrays; level arguments
are the integer ``N(x)`` with ``N = 0`` meaning ``x = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Divergence, PoleProximity

POLE_EPS = 1e-10


@dataclass(frozen=True)
class SeriesTolerance:
    rel_tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_TOL = SeriesTolerance()


def _angle_floor(beta):
    """Lower bound for ``|1 + z|`` valid on the whole ray through ``beta``."""
    theta = np.abs(np.angle(beta))
    return np.where(theta <= np.pi / 2, 1.0, np.abs(np.sin(theta)))


def _terms_needed(z0abs, s, amp, abs_tol, L, rho, q, max_terms):
    """Smallest J with ``sum_{j>=J} amp rho^j / |1+z_j|^q <= abs_tol``.

    ``z_j = z0 L^{2j}`` lie on one ray, so ``|1+z_j| >= s`` (angle floor) and
    ``|1+z_j| >= |z_j|/2`` once ``|z_j| >= 2``.  Both envelopes are geometric;
    the smaller admissible J wins.  Works elementwise and returns the max.
    """
    z0abs, s, amp, abs_tol = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (z0abs, s, amp, abs_tol)))
    g = float(L) ** 2
    big = np.full(z0abs.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ja = big.copy()
        if rho < 1:
            ok = s > 0
            need = amp / (np.where(ok, s, 1.0) ** q * (1 - rho) * abs_tol)
            ja = np.where(ok, np.ceil(np.log(np.maximum(need, 1.0)) / -np.log(rho)), np.inf)
        jb = big.copy()
        r2 = rho * g ** (-q)
        if r2 < 1:
            ok = z0abs > 0
            start = np.ceil(np.log(np.maximum(2.0 / np.where(ok, z0abs, 1.0), 1.0)) / np.log(g))
            need = amp * (2.0 / np.where(ok, z0abs, 1.0)) ** q / ((1 - r2) * abs_tol)
            jj = np.ceil(np.log(np.maximum(need, 1.0)) / np.log(g**q / rho))
            jb = np.where(ok, np.maximum(start, jj), np.inf)
    J = np.minimum(ja, jb)
    J = np.where(abs_tol > 0, J, np.inf)
    Jmax = float(np.max(J)) if J.size else 0.0
    if not np.isfinite(Jmax) or Jmax + 1 > max_terms:
        raise Divergence(f"series needs more than max_terms={max_terms} terms")
    return int(Jmax) + 1


def _check_poles(*dens):
    for d in dens:
        if np.any(np.abs(d) < POLE_EPS):
            raise PoleProximity("series denominator within 1e-10 of zero")


def _refine(evaluate, tol):
    """Re-run ``evaluate(scale)`` until the relative scale stops shrinking.

    ``evaluate`` receives a per-element magnitude and returns the sum; the
    absolute tolerance it uses is ``tol.rel_tol * scale``.
    """
    scale = None
    for _ in range(8):
        S = evaluate(scale)
        mag = np.abs(S)
        if scale is not None and np.all(mag >= scale * 0.999):
            return S
        if np.any(mag == 0):
            return S
        scale = mag if scale is None else np.minimum(scale, mag)
    return S


def _as_beta(beta):
    b = np.asarray(beta, dtype=complex)
    return b, b.ndim == 0


def _result(out, scalar, shape, real):
    # real arguments give real values; the imaginary parts are exact zeros
    if real:
        out = out.real
        return float(out[0]) if scalar else out.reshape(shape)
    return complex(out[0]) if scalar else out.reshape(shape)


def green0(beta, level: int, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL):
    """Free Green's function ``G0(beta, x)`` with ``N(x) = level``.

    Uses the manifestly cancellation-free series

        G0 = sum_j L^{-2j} (1-L^-4)(1-L^{-2-2j}) / (|x|^2 (1+beta|x|^2 L^-2)(1+beta|x|^2 L^{2j}))

    for ``x != 0`` and ``sum_k L^{-2k}(1-L^-4)/(1+L^{2k} beta)`` at the origin.
    Poles sit on ``[-1, 0)`` in beta.
    """
    b, scalar = _as_beta(beta)
    b1 = np.atleast_1d(b).ravel()
    B = 1.0 - L**-4.0
    s = _angle_floor(b1)
    if level == 0:
        z0 = b1
        amp = np.full(b1.shape, B)

        def evaluate(scale):
            first = np.abs(B / (1 + z0)) if scale is None else scale
            J = _terms_needed(np.abs(z0), s, amp, tol.rel_tol * first, L, L**-2.0, 1, tol.max_terms)
            k = np.arange(J)[:, None]
            den = 1 + (float(L) ** (2 * k)) * z0
            _check_poles(den)
            return np.sum(B * float(L) ** (-2.0 * k) / den, axis=0)
    else:
        u = float(L) ** (2 * level)
        z0 = b1 * u
        pre = 1 + z0 * L**-2.0
        _check_poles(pre)
        amp = B / (u * np.abs(pre))

        def evaluate(scale):
            first = amp * (1 - L**-2.0) / np.maximum(np.abs(1 + z0), POLE_EPS) if scale is None else scale
            J = _terms_needed(np.abs(z0), s, amp, tol.rel_tol * first, L, L**-2.0, 1, tol.max_terms)
            j = np.arange(J)[:, None]
            den = 1 + z0 * float(L) ** (2 * j)
            _check_poles(den)
            num = float(L) ** (-2.0 * j) * B * (1 - float(L) ** (-2.0 - 2 * j))
            return np.sum(num / (u * pre * den), axis=0)

    out = _refine(evaluate, tol)
    return _result(out, scalar, b.shape, np.isrealobj(beta))


def green0_alt(beta, level: int, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL):
    """``G0`` from the indicator-sum form

        sum_k L^{-2k} / (1 + L^{2k} beta) (1{|x/L^k| = 0} - L^-4 1{|x/L^k| <= L}).

    An independent route to :func:`green0`, kept for cross-checking.
    """
    b, scalar = _as_beta(beta)
    b1 = np.atleast_1d(b).ravel()
    B = 1.0 - L**-4.0
    s = _angle_floor(b1)
    N = int(level)
    # the tail from k = max(N, 0) on is B L^{-2k}/(1 + L^{2k} beta)
    k0 = N
    z0 = b1 * float(L) ** (2 * k0)
    amp = np.full(b1.shape, B * float(L) ** (-2.0 * k0))
    head = 0.0
    if N >= 1:
        kk = N - 1
        den = 1 + float(L) ** (2 * kk) * b1
        _check_poles(den)
        head = -(L**-4.0) * float(L) ** (-2.0 * kk) / den

    def evaluate(scale):
        first = np.abs(amp / (1 + z0)) if scale is None else scale
        J = _terms_needed(np.abs(z0), s, amp, tol.rel_tol * first, L, L**-2.0, 1, tol.max_terms)
        k = k0 + np.arange(J)[:, None]
        ind0 = (k >= N).astype(float)
        ind1 = (k >= N - 1).astype(float)
        den = 1 + float(L) ** (2 * k) * b1
        _check_poles(den)
        return head + np.sum(float(L) ** (-2.0 * k) / den * (ind0 - L**-4.0 * ind1), axis=0)

    out = _refine(evaluate, tol)
    return _result(out, scalar, b.shape, np.isrealobj(beta))


def green0_dbeta(beta, level: int, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL):
    """Term-by-term ``d G0 / d beta``.  Diverges logarithmically at ``beta = 0``."""
    b, scalar = _as_beta(beta)
    b1 = np.atleast_1d(b).ravel()
    if np.any(b1 == 0):
        raise Divergence("d G0/d beta diverges at beta = 0")
    B = 1.0 - L**-4.0
    s = _angle_floor(b1)
    if level == 0:
        z0 = b1
        amp = np.full(b1.shape, B)

        def evaluate(scale):
            first = np.abs(B / (1 + z0) ** 2) if scale is None else scale
            J = _terms_needed(np.abs(z0), s, amp, tol.rel_tol * first, L, 1.0, 2, tol.max_terms)
            k = np.arange(J)[:, None]
            den = 1 + float(L) ** (2 * k) * z0
            _check_poles(den)
            return -np.sum(B / den**2, axis=0)
    else:
        u = float(L) ** (2 * level)
        a = u * L**-2.0
        z0 = b1 * u
        pre = 1 + a * b1
        _check_poles(pre)
        amp_a = B * a / (u * np.abs(pre) ** 2)
        amp_b = B / np.abs(pre)

        def evaluate(scale):
            first = amp_b / np.maximum(np.abs(1 + z0) ** 2, POLE_EPS) if scale is None else scale
            Ja = _terms_needed(np.abs(z0), s, amp_a, tol.rel_tol * first / 2, L, L**-2.0, 1, tol.max_terms)
            Jb = _terms_needed(np.abs(z0), s, amp_b, tol.rel_tol * first / 2, L, 1.0, 2, tol.max_terms)
            j = np.arange(max(Ja, Jb))[:, None]
            bj = u * float(L) ** (2 * j)
            den = 1 + bj * b1
            _check_poles(den)
            num = float(L) ** (-2.0 * j) * B * (1 - float(L) ** (-2.0 - 2 * j))
            term = num / (u * pre * den)
            return -np.sum(term * (a / pre + bj / den), axis=0)

    out = _refine(evaluate, tol)
    return _result(out, scalar, b.shape, np.isrealobj(beta))


def f_shape(t, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL):
    """Heat-kernel shape ``f(t) = sum_j L^{-4j}(1-L^-4)(e^{-L^{-2j} t} - e^{-L^2 t})``.

    Defined for ``Re t >= 0``; complex ``t`` in the right half plane is the
    analytic continuation.
    """
    tt = np.asarray(t, dtype=complex)
    scalar = tt.ndim == 0
    t1 = np.atleast_1d(tt).ravel()
    if np.any(t1.real < 0):
        raise Divergence("f_shape needs Re t >= 0")
    B = 1.0 - L**-4.0
    # |e^{-a} - e^{-b}| <= min(2, |a - b|) on Re >= 0, so the tail after J is m L^{-4J}
    m = np.minimum(2.0, L**2 * np.abs(t1))

    def evaluate(scale):
        if scale is None:
            first = m * B * 1e-3
        else:
            first = scale
        with np.errstate(divide="ignore"):
            need = np.where(m > 0, m / (tol.rel_tol * np.maximum(first, 1e-300)), 1.0)
        J = int(np.max(np.ceil(np.log(np.maximum(need, 1.0)) / (4 * np.log(L))))) + 1
        J = max(J, int(np.max(np.ceil(np.log(np.maximum(np.abs(t1), 1.0)) / (2 * np.log(L))))) + 2)
        if J > tol.max_terms:
            raise Divergence(f"f_shape needs more than {tol.max_terms} terms")
        j = np.arange(J)[:, None]
        a = float(L) ** (-2.0 * j) * t1
        gap = (L**2 - float(L) ** (-2.0 * j)) * t1
        diff = -np.exp(-a) * np.expm1(-gap)
        return np.sum(float(L) ** (-4.0 * j) * B * diff, axis=0)

    out = _refine(evaluate, tol)
    return _result(out, scalar, tt.shape, np.isrealobj(t))


def p0(T, level: int, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL):
    """Free transition kernel ``P0(T, x)`` (a single site, not a shell)."""
    TT = np.asarray(T, dtype=complex)
    scalar = TT.ndim == 0
    T1 = np.atleast_1d(TT).ravel()
    if np.any(T1.real <= 0):
        raise Divergence("p0 needs Re T > 0")
    if level >= 1:
        u = float(L) ** (2 * level)
        out = f_shape(T1 / u, L, tol) / u**2
    else:
        B = 1.0 - L**-4.0

        def evaluate(scale):
            first = np.full(T1.shape, 1e-3 * B) if scale is None else scale
            need = 1.0 / (tol.rel_tol * np.maximum(first, 1e-300))
            J = int(np.max(np.ceil(np.log(need) / (4 * np.log(L))))) + 1
            J = max(J, int(np.max(np.ceil(np.log(np.maximum(np.abs(T1), 1.0)) / (2 * np.log(L))))) + 2)
            if J > tol.max_terms:
                raise Divergence(f"p0 needs more than {tol.max_terms} terms")
            k = np.arange(J)[:, None]
            return np.sum(float(L) ** (-4.0 * k) * B * np.exp(-float(L) ** (-2.0 * k) * T1), axis=0)

        out = _refine(evaluate, tol)
    return _result(out, scalar, TT.shape, np.isrealobj(T))


def _fcap(L):
    """Constant with ``f(t) <= _fcap(L) t^-2`` for all ``t > 0``."""
    B = 1.0 - L**-4.0
    return 1.0 + B * 27 * np.exp(-3.0) / (1 - L**-2.0)


def endtoend_free(T: float, alpha: float, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """``E0(|omega(T)|^alpha) = (1-L^-4) sum_{N>=1} L^{alpha N} f(T L^{-2N})``."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    if not T > 0:
        raise ValueError("T must be positive")
    B = 1.0 - L**-4.0
    ratio = float(L) ** (alpha - 2)
    # f(t) <= L^2 t bounds the N -> infinity tail by a geometric series
    n_peak = max(1, int(np.ceil(np.log(T) / (2 * np.log(L)))) + 1)
    N = np.arange(1, n_peak + 1)
    S = 0.0
    while True:
        vals = B * float(L) ** (alpha * N) * f_shape(T * float(L) ** (-2.0 * N), L, tol).real
        S = float(np.sum(vals))
        Nn = N[-1] + 1
        tail = B * L**2 * T * ratio**Nn / (1 - ratio)
        if tail <= tol.rel_tol * S:
            return S
        if len(N) > tol.max_terms:
            raise Divergence("endtoend_free did not converge")
        N = np.arange(1, len(N) * 2 + 1)


def f_alpha_sum(T: float, alpha: float, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Two-sided sum ``sum_{j in Z} f_alpha(T / L^{2j})``."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    B = 1.0 - L**-4.0
    logL = np.log(L)
    j_mid = int(np.round(np.log(T) / (2 * logL)))
    # rough magnitude: the largest term sits near t ~ 1
    scale = B * 0.1
    abs_tol = tol.rel_tol * scale / 2
    cf = _fcap(L)
    # j -> +inf: t -> 0, f_alpha <= B L^2 t^{1-alpha/2}
    r_up = float(L) ** -(2 - alpha)
    n_up = int(np.ceil(np.log(B * L**2 / ((1 - r_up) * abs_tol)) / -np.log(r_up))) + 1
    # j -> -inf: t -> inf, f_alpha <= B cf t^{-2-alpha/2}
    r_dn = float(L) ** -(4 + alpha)
    n_dn = int(np.ceil(np.log(B * cf / ((1 - r_dn) * abs_tol)) / -np.log(r_dn))) + 1
    if n_up + n_dn > tol.max_terms:
        raise Divergence("f_alpha_sum needs too many terms")
    j = np.arange(j_mid - n_dn, j_mid + n_up + 1)
    t = T * float(L) ** (-2.0 * j)
    vals = t ** (-alpha / 2) * B * f_shape(t, L, tol).real
    # sum small terms first
    return float(np.sum(np.sort(vals)))


def F_alpha(T: float, alpha: float, L: int = 2, tol: SeriesTolerance = DEFAULT_TOL) -> float:
    """Log-periodic limit of ``E0(|omega(T)|^alpha)^{1/alpha} / sqrt(T)``."""
    return f_alpha_sum(T, alpha, L, tol) ** (1.0 / alpha)


def jump_constant_exact(L: int) -> float:
    """Large-beta limit of ``beta^2 G0(beta, x) |x|^6``, ``(L^2 - 1)/(1 - L^-6)``."""
    return (L**2 - 1.0) / (1.0 - float(L) ** -6)


def derive_jump_constant(L: int = 2, level: int = 1, beta: float = 1e8) -> float:
    """Jump constant ``C`` from the large-beta resolvent expansion.

    The off-diagonal resolvent entry is ``C |x|^-6 / beta^2 + O(beta^-3)``;
    two probes at ``beta`` and ``2 beta`` are Richardson-combined to cancel
    the ``O(1/beta)`` correction.
    """
    u6 = float(L) ** (6 * level)
    v1 = (beta**2 * green0(beta, level, L) * u6).real
    v2 = ((2 * beta) ** 2 * green0(2 * beta, level, L) * u6).real
    return 2 * v2 - v1
