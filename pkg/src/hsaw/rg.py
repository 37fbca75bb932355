"""Renormalization-group recursion for the couplings ``(beta_j, lambda_j)``.

The recursion is the leading-order model map

    lambda' = lambda - 8 B lambda^2 / (1 + beta)^2
    beta'   = L^2 [beta + 2 B lambda / (1 + beta)]

with the higher-order remainders set to zero.  Alongside it we carry the
beta-derivatives ``(dbeta_j, dlambda_j)``, locate the critical killing rate
``beta_c(lambda)`` (the stable manifold), and run the shifted flow
``beta_hat_j = beta_j(beta_hat + beta_c) - beta_c_j`` from which the
effective couplings and the slowly varying factor ``ell`` follow.

All logarithms of the scale index are base ``L``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .errors import DenominatorCollapse, NoBracket, NonConvergence, ZeroTrajectory

COLLAPSE_EPS = 1e-8
MAX_STEPS = 200


def _B(L):
    return 1.0 - float(L) ** -4


@dataclass(frozen=True)
class DomainSpec:
    """Opening angles and radii of the beta and lambda domains."""

    b_beta: float = 5 * math.pi / 8
    b_lambda: float = math.pi / 8
    eps: float = 0.01
    delta: float = 0.06
    delta_bar: float = 0.08
    rho: float = 0.5

    def __post_init__(self):
        bb, bl, e = self.b_beta, self.b_lambda, self.eps
        if not (2 * bb + 1.5 * bl < 1.5 * math.pi and bb > math.pi / 2 and bl < math.pi / 3):
            raise ValueError("need 2 b_beta + 3/2 b_lambda < 3pi/2, b_beta > pi/2, b_lambda < pi/3")
        if not 2 * (bb + e) + 1.5 * (bl + e) < 1.5 * math.pi:
            raise ValueError("eps too large for the angle constraint")
        if not 0 < self.delta < self.delta_bar:
            raise ValueError("need 0 < delta < delta_bar")

    @property
    def beta_bar_angle(self):
        return self.b_beta + self.b_lambda / 4 + self.eps

    def in_beta_bar(self, beta, rho=None):
        """Membership in the widened sector plus a ball of radius ``rho``."""
        rho = self.rho if rho is None else rho
        b = np.asarray(beta, dtype=complex)
        theta = np.abs(np.angle(b))
        r = np.abs(b)
        excess = theta - self.beta_bar_angle
        dist = np.where(excess <= 0, 0.0,
                        np.where(excess >= np.pi / 2, r, r * np.sin(np.clip(excess, 0, np.pi / 2))))
        inside = ((r > 0) & (excess < 0)) | (dist < rho)
        return inside

    def in_lambda_bar(self, lam):
        # lambda = 0 is the free fixed line; it is kept inside so the free flow never exits
        lam = np.asarray(lam, dtype=complex)
        r = np.abs(lam)
        return (r == 0) | ((r < self.delta_bar) & (np.abs(np.angle(lam)) < self.b_lambda + self.eps))

    def in_lambda(self, lam):
        lam = complex(lam)
        return 0 < abs(lam) < self.delta and abs(cmath.phase(lam)) < self.b_lambda


@dataclass
class CouplingState:
    step: int
    beta: complex
    lam: complex
    dbeta: complex = 1.0
    dlam: complex = 0.0


def step(s: CouplingState, L: int = 2) -> CouplingState:
    """One step of the model recursion, derivatives included.

    Plain arithmetic only, so ``complex``, ``mpmath`` and numpy arrays all work.
    """
    B = _B(L) if not isinstance(s.beta, (mpmath.mpf, mpmath.mpc)) else 1 - mpmath.mpf(L) ** -4
    g = L**2
    opb = 1 + s.beta
    if np.any(np.abs(complex(opb) if np.ndim(opb) == 0 else opb) <= COLLAPSE_EPS):
        raise DenominatorCollapse(f"|1 + beta_j| <= {COLLAPSE_EPS} at step {s.step}", s.step)
    lam, beta, dl, db = s.lam, s.beta, s.dlam, s.dbeta
    lam_n = lam - 8 * B * lam**2 / opb**2
    beta_n = g * (beta + 2 * B * lam / opb)
    dl_n = dl - 16 * B * (lam * dl - lam**2 * db / opb) / opb**2
    db_n = g * (db + 2 * B * (dl - lam * db / opb) / opb)
    return CouplingState(s.step + 1, beta_n, lam_n, db_n, dl_n)


@dataclass
class FlowReport:
    """Trajectory of the recursion and where it left its domain.

    ``exit_step`` is ``None`` when the flow stayed inside for every computed
    step (the ``M = infinity`` case up to ``max_steps``).
    """

    beta: list
    lam: list
    dbeta: list
    dlam: list
    exit_step: int | None = None

    @property
    def exited_domain(self) -> bool:
        return self.exit_step is not None

    @property
    def states(self):
        return [CouplingState(j, b, l, db, dl)
                for j, (b, l, db, dl) in enumerate(zip(self.beta, self.lam, self.dbeta, self.dlam))]

    def __len__(self):
        return len(self.beta)


def _inside(beta, lam, domain, region):
    if region == "ball":
        ok_b = abs(complex(beta)) < domain.rho
    else:
        ok_b = bool(domain.in_beta_bar(complex(beta)))
    return ok_b and bool(domain.in_lambda_bar(complex(lam)))


def flow(beta, lam, domain: DomainSpec = DomainSpec(), max_steps: int = MAX_STEPS, L: int = 2,
         region: str = "domain") -> FlowReport:
    """Iterate :func:`step` until the couplings leave the domain.

    ``region="domain"`` uses the widened sector plus ``B(rho)`` for beta;
    ``region="ball"`` uses ``B(rho)`` alone, the set whose preimages shrink
    onto the critical killing rate.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if region not in ("domain", "ball"):
        raise ValueError("region must be 'domain' or 'ball'")
    s = CouplingState(0, beta, lam, 1 if isinstance(beta, (mpmath.mpf, mpmath.mpc)) else 1.0 + 0j, 0 * lam)
    rep = FlowReport([s.beta], [s.lam], [s.dbeta], [s.dlam])
    for j in range(max_steps + 1):
        if not _inside(s.beta, s.lam, domain, region):
            rep.exit_step = j
            return rep
        if j == max_steps:
            break
        s = step(s, L)
        rep.beta.append(s.beta)
        rep.lam.append(s.lam)
        rep.dbeta.append(s.dbeta)
        rep.dlam.append(s.dlam)
    return rep


@dataclass
class CriticalData:
    """Critical killing rate and how well it is resolved.

    ``beta_c_exact`` keeps the working-precision value; the forward flow is
    unstable with rate ``L^2`` per step, so holding ``K`` steps needs about
    ``K log10(L^2)`` digits.
    """

    lam: complex
    beta_c: complex
    bracket_width: float
    steps_held: int
    beta_c_exact: object = field(default=None, repr=False)
    iterations: int = 0


def _escape(beta, lam, L, budget):
    """Escape direction of the real flow: +1, -1, or 0 if none within budget."""
    B = 1 - mpmath.mpf(L) ** -4
    g = L**2
    half = mpmath.mpf(1) / 2
    for k in range(budget + 1):
        if beta > half:
            return 1, k
        if beta < -half or 1 + beta < mpmath.mpf("1e-3"):
            return -1, k
        if k == budget:
            break
        opb = 1 + beta
        beta, lam = g * (beta + 2 * B * lam / opb), lam - 8 * B * lam**2 / opb**2
    return 0, budget


def _dps_for(steps, L):
    return int(math.ceil(steps * 2 * math.log10(L))) + 25


def critical_beta(lam, domain: DomainSpec = DomainSpec(), L: int = 2, tol: float | None = None,
                  hold_steps: int = 60, c_bracket: float = 5.0, max_iter: int = 2000) -> CriticalData:
    """Critical killing rate ``beta_c(lambda)``.

    Real ``lambda``: bisection on the escape direction of the flow (too large
    a beta runs off to ``+infinity``, too small a beta runs negative).
    Complex ``lambda``: Newton on ``beta_K(beta) = 0`` with the tracked
    derivative, continued in ``arg lambda`` from the real solution.

    The search runs at enough precision that the flow from ``beta_c_exact``
    stays in ``B(1/2)`` for ``hold_steps`` steps; ``tol`` (default
    ``1e-14 |lambda|``) bounds the final bracket width.
    """
    lam = complex(lam)
    if lam == 0:
        return CriticalData(0j, 0j, 0.0, hold_steps, mpmath.mpf(0))
    if abs(lam) >= domain.delta or abs(cmath.phase(lam)) >= domain.b_lambda:
        raise ValueError("lambda must lie in the small sector D_lambda")
    tol = 1e-14 * abs(lam) if tol is None else tol
    budget = hold_steps + 15
    with mpmath.workdps(_dps_for(budget, L)):
        if lam.imag == 0:
            return _critical_real(lam.real, L, tol, hold_steps, budget, c_bracket, max_iter)
        return _critical_complex(lam, L, tol, hold_steps, budget, c_bracket, max_iter)


def _critical_real(lam, L, tol, hold_steps, budget, c_bracket, max_iter):
    lam_mp = mpmath.mpf(lam)
    lo = -mpmath.mpf(c_bracket) * abs(lam_mp)
    hi = -lo
    if _escape(lo, lam_mp, L, budget)[0] != -1 or _escape(hi, lam_mp, L, budget)[0] != 1:
        raise NoBracket(f"[-{c_bracket}|lambda|, {c_bracket}|lambda|] does not straddle beta_c")
    for it in range(max_iter):
        mid = (lo + hi) / 2
        d, k = _escape(mid, lam_mp, L, budget)
        if d == 1:
            hi = mid
        elif d == -1:
            lo = mid
        width = float(hi - lo)
        if d == 0 or (k > hold_steps and width <= tol):
            held = _escape(mid, lam_mp, L, budget)[1]
            return CriticalData(complex(lam), complex(float(mid)), max(width, 0.0), held, mid, it + 1)
    raise NonConvergence("bisection for beta_c hit its iteration cap")


def _newton_track(beta, lam, L, K):
    """``(beta_K, dbeta_K)`` of the flow from ``beta`` in mpmath complex."""
    B = 1 - mpmath.mpf(L) ** -4
    g = L**2
    db, dl = mpmath.mpc(1), mpmath.mpc(0)
    for _ in range(K):
        opb = 1 + beta
        if abs(opb) < COLLAPSE_EPS:
            raise DenominatorCollapse("|1 + beta_j| collapsed during Newton tracking")
        dl, db = (dl - 16 * B * (lam * dl - lam**2 * db / opb) / opb**2,
                  g * (db + 2 * B * (dl - lam * db / opb) / opb))
        beta, lam = g * (beta + 2 * B * lam / opb), lam - 8 * B * lam**2 / opb**2
        if abs(beta) > 1e6:
            break
    return beta, db


def _critical_complex(lam, L, tol, hold_steps, budget, c_bracket, max_iter):
    start = _critical_real(abs(lam), L, tol, hold_steps, budget, c_bracket, max_iter)
    beta = mpmath.mpc(start.beta_c_exact)
    phi = cmath.phase(lam)
    n_arg = max(1, int(math.ceil(abs(phi) / (math.pi / 64))))
    iters = start.iterations
    width = float("inf")
    for a in range(1, n_arg + 1):
        lam_mp = abs(lam) * mpmath.expj(phi * a / n_arg)
        for K in sorted({4, 8, 16, 32, budget}):
            for _ in range(50):
                iters += 1
                bK, dbK = _newton_track(beta, lam_mp, L, K)
                delta = bK / dbK
                beta -= delta
                width = float(abs(delta))
                if width <= 1e-3 * float(mpmath.mpf(L) ** (-2 * K)) or width == 0:
                    break
            else:
                raise NonConvergence("Newton for complex beta_c did not converge")
    held = _hold_count(beta, lam_mp, L, budget)
    return CriticalData(lam, complex(beta), width, held, beta, iters)


def _hold_count(beta, lam, L, budget):
    B = 1 - mpmath.mpf(L) ** -4
    g = L**2
    for k in range(budget + 1):
        if abs(beta) >= 0.5:
            return k
        opb = 1 + beta
        beta, lam = g * (beta + 2 * B * lam / opb), lam - 8 * B * lam**2 / opb**2
    return budget


@lru_cache(maxsize=64)
def critical_trajectory(lam: complex, n_steps: int = MAX_STEPS, L: int = 2, tail: int = 60):
    """Critical trajectory ``(beta_c_j, lambda_c_j)`` for ``j = 0..n_steps``.

    Computed as the bounded solution of the recursion: the beta equation is
    solved backwards (where it contracts by ``L^-2``) and the lambda equation
    forwards, alternating until both settle.  This is stable in double
    precision for any length, unlike forward iteration from ``beta_c``.
    Returns two complex arrays.
    """
    lam = complex(lam)
    n = n_steps + tail
    if lam == 0:
        z = np.zeros(n_steps + 1, dtype=complex)
        return z, z.copy()
    B = _B(L)
    g = float(L) ** 2
    j = np.arange(n + 1)
    lams = lam / (1 + 8 * B * lam * j)
    betas = np.zeros(n + 1, dtype=complex)
    for sweep in range(200):
        if not np.all(np.isfinite(betas)) or not np.all(np.isfinite(lams)):
            break
        old = betas.copy()
        # frozen-lambda fixed point of the beta map as the far boundary value
        betas[n] = -2 * B * g * lams[n] / (g - 1)
        with np.errstate(all="ignore"):
            for k in range(n - 1, -1, -1):
                a = betas[k + 1] / g
                bq = 1 - a
                cq = 2 * B * lams[k] - a
                betas[k] = -2 * cq / (bq + np.sqrt(bq * bq - 4 * cq))
            for k in range(n):
                lams[k + 1] = lams[k] - 8 * B * lams[k] ** 2 / (1 + betas[k]) ** 2
        if np.max(np.abs(betas - old)) <= 8 * np.finfo(float).eps * np.max(np.abs(betas)):
            break
    else:
        raise NonConvergence("critical trajectory sweep did not settle")
    return betas[: n_steps + 1].copy(), lams[: n_steps + 1].copy()


def critical_beta_sweep(lam, L: int = 2) -> complex:
    """``beta_c`` read off the backward-sweep trajectory (double precision)."""
    return complex(critical_trajectory(complex(lam), MAX_STEPS, L)[0][0])


@dataclass
class ShiftedFlow:
    """Shifted couplings ``beta_hat_k`` with their ``lambda_k`` and ``dbeta_k``.

    Arrays have shape ``(steps + 1,) + beta_hat.shape``.
    """

    beta_hat: np.ndarray
    lam: np.ndarray
    dbeta: np.ndarray
    exit_step: np.ndarray

    def report(self, index=()):
        """A :class:`FlowReport` for one starting point."""
        sl = (slice(None),) + (index if isinstance(index, tuple) else (index,))
        e = int(self.exit_step[index])
        k = self.beta_hat.shape[0]
        return FlowReport(list(self.beta_hat[sl]), list(self.lam[sl]), list(self.dbeta[sl]),
                          [np.nan] * k, None if e < 0 else e)


def _shifted_step(bh, lh, bc, lc, B, g):
    """One step of ``(beta_hat, lambda_hat) = (beta - beta_c_j, lambda - lambda_c_j)``.

    Written so that no term is a difference of nearly equal numbers.
    """
    lam = lc + lh
    opc = 1 + bc
    opb = opc + bh
    bh_n = g * (bh + 2 * B * (lh / opb - lc * bh / (opc * opb)))
    lh_n = lh - 8 * B * (lh * (lam + lc) / opb**2 - lc**2 * bh * (2 + 2 * bc + bh) / (opb**2 * opc**2))
    return bh_n, lh_n


def _trajectory(lam, n, L):
    bc, lc = critical_trajectory(lam, max(int(n), MAX_STEPS), L)
    return bc, lc


def shifted_flow(beta_hat, lam, domain: DomainSpec = DomainSpec(), max_steps: int = MAX_STEPS,
                 L: int = 2, stop_above: float = 1e100) -> ShiftedFlow:
    """Flow of ``beta_hat = beta - beta_c(lambda)``, vectorised over ``beta_hat``.

    This is the flow from ``beta_hat + beta_c`` minus the critical flow,
    computed from the exact difference recursion

        beta_hat' = L^2 [beta_hat + 2B (lambda_hat/(1+beta) - lambda_c beta_hat/((1+beta_c)(1+beta)))]

    with ``lambda_hat = lambda - lambda_c`` carried alongside, which avoids
    the cancellation of subtracting two unstable flows.  ``lam`` in the
    result is the coupling of the ``beta_hat + beta_c`` flow.  Iteration
    stops early once every ``|beta_hat_k|`` exceeds ``stop_above``.
    """
    bh = np.atleast_1d(np.asarray(beta_hat, dtype=complex)).ravel()
    shape = np.shape(np.asarray(beta_hat))
    lam = complex(lam)
    B = _B(L)
    g = float(L) ** 2
    bc, lc = _trajectory(lam, max_steps, L)
    lh = np.zeros(bh.shape, dtype=complex)
    db = np.ones(bh.shape, dtype=complex)
    dl = np.zeros(bh.shape, dtype=complex)
    out_b, out_l, out_d = [bh.copy()], [lh + lc[0]], [db.copy()]
    exit_step = np.full(bh.shape, -1)
    for k in range(max_steps):
        lam_k = lc[k] + lh
        out_of = ~(domain.in_beta_bar(bh) & domain.in_lambda_bar(lam_k)) & (exit_step < 0)
        exit_step[out_of] = k
        opb = 1 + bh + bc[k]
        if np.any(np.abs(opb) <= COLLAPSE_EPS):
            raise DenominatorCollapse(f"|1 + beta_j| <= {COLLAPSE_EPS} at step {k}", k)
        dl, db = (dl - 16 * B * (lam_k * dl - lam_k**2 * db / opb) / opb**2,
                  g * (db + 2 * B * (dl - lam_k * db / opb) / opb))
        bh, lh = _shifted_step(bh, lh, bc[k], lc[k], B, g)
        out_b.append(bh.copy())
        out_l.append(lc[k + 1] + lh)
        out_d.append(db.copy())
        if np.all(np.abs(bh) > stop_above):
            break
    res = ShiftedFlow(np.array(out_b), np.array(out_l), np.array(out_d), exit_step)
    if shape == ():
        return ShiftedFlow(res.beta_hat[:, 0], res.lam[:, 0], res.dbeta[:, 0], res.exit_step[0])
    n = res.beta_hat.shape[0]
    return ShiftedFlow(res.beta_hat.reshape((n,) + shape), res.lam.reshape((n,) + shape),
                       res.dbeta.reshape((n,) + shape), res.exit_step.reshape(shape))


def _first_above(vals, thresh):
    above = np.abs(vals) > thresh
    hit = above.any(axis=0)
    first = np.argmax(above, axis=0)
    return np.where(hit, first, vals.shape[0])


def k_hat(beta_hat, lam, domain: DomainSpec = DomainSpec(), L: int = 2, max_steps: int = MAX_STEPS):
    """Largest ``k`` with ``|beta_hat_k| <= 1`` (``0`` if there is none)."""
    sf = shifted_flow(beta_hat, lam, domain, max_steps, L, stop_above=1e3)
    first = _first_above(sf.beta_hat, 1.0)
    if np.any(first >= sf.beta_hat.shape[0]):
        raise NonConvergence("shifted flow never left |beta_hat| <= 1 within max_steps")
    k = np.maximum(first - 1, 0)
    return int(k) if np.ndim(k) == 0 else k


def l_k_aux(lam, k_hat_val: int, L: int = 2) -> complex:
    """``exp(sum_{j<k_hat} 8B / (1/lambda + 8Bj))``; depends on ``lambda, k_hat`` only."""
    B = _B(L)
    lam = complex(lam)
    if k_hat_val <= 0:
        return 1.0 + 0j
    j = np.arange(k_hat_val)
    return complex(np.exp(np.sum(8 * B / (1 / lam + 8 * B * j))))


def lambda_k_model(lam, k_hat_val, L: int = 2):
    """Closed-form running coupling ``lambda / (1 + 8 B lambda k_hat)``."""
    return lam / (1 + 8 * _B(L) * lam * np.asarray(k_hat_val))


def beta_eff(beta_hat, lam, k=None, domain: DomainSpec = DomainSpec(), L: int = 2,
             max_steps: int = 10_000, rtol: float = 1e-12):
    """Effective coupling ``L^{-2k} beta_hat_k``; ``k=None`` gives the limit.

    The limit is reached once ``|beta_eff_{k+1}/beta_eff_k - 1| < rtol`` for
    every element, which happens a few dozen steps past ``k_hat``.
    """
    bh0 = np.asarray(beta_hat, dtype=complex)
    if np.any(bh0 == 0):
        raise ZeroTrajectory("beta_hat = 0 has no effective coupling ratio")
    if k is not None:
        sf = shifted_flow(bh0, lam, domain, max(int(k), 1), L, stop_above=np.inf)
        out = sf.beta_hat[int(k)] * float(L) ** (-2 * int(k))
        return complex(out) if out.ndim == 0 else out
    return _beta_eff_limit(bh0, complex(lam), L, max_steps, rtol)


def _beta_eff_limit(bh0, lam, L, max_steps, rtol):
    bh = np.atleast_1d(bh0).astype(complex).ravel()
    eff = bh.copy()
    if lam == 0:
        return complex(eff[0]) if bh0.ndim == 0 else eff.reshape(bh0.shape)
    B = _B(L)
    g = float(L) ** 2
    n_traj = MAX_STEPS
    bc, lc = _trajectory(lam, n_traj, L)
    lh = np.zeros(bh.shape, dtype=complex)
    active = np.ones(bh.shape, dtype=bool)
    for k in range(max_steps):
        if k + 1 >= len(bc):
            n_traj *= 2
            bc, lc = _trajectory(lam, n_traj, L)
        b, h = bh[active], lh[active]
        opb = 1 + b + bc[k]
        if np.any(np.abs(opb) <= COLLAPSE_EPS):
            raise DenominatorCollapse(f"|1 + beta_j| <= {COLLAPSE_EPS} at step {k}", k)
        b_n, h_n = _shifted_step(b, h, bc[k], lc[k], B, g)
        factor = b_n / (g * b)
        eff[active] *= factor
        bh[active], lh[active] = b_n, h_n
        # an element is finished once its factor has settled at 1
        idx = np.flatnonzero(active)
        active[idx[np.abs(factor - 1) < rtol]] = False
        if not active.any():
            return complex(eff[0]) if bh0.ndim == 0 else eff.reshape(bh0.shape)
    raise NonConvergence("beta_eff did not stabilise within max_steps")


def ell_k(beta_hat, lam, k, domain: DomainSpec = DomainSpec(), L: int = 2):
    """``ell_k = (beta_hat / beta_eff_k)^4``."""
    be = beta_eff(beta_hat, lam, k, domain, L)
    if np.any(be == 0):
        raise ZeroTrajectory("beta_hat_k vanished")
    return (np.asarray(beta_hat, dtype=complex) / be) ** 4


def ell_quarter(beta_hat, lam, L: int = 2):
    """``ell(beta_hat)^{1/4} = beta_hat / beta_eff_inf`` (principal branch, near 1)."""
    bh = np.asarray(beta_hat, dtype=complex)
    out = bh / beta_eff(bh, lam, None, L=L)
    return complex(out) if np.ndim(out) == 0 else out


def ell(beta_hat, lam, L: int = 2):
    """Limit ``ell(beta_hat) = lim_k ell_k(beta_hat)``."""
    return ell_quarter(beta_hat, lam, L) ** 4


def ell_log_factor(T: float, lam, L: int = 2):
    """``(ell(1/T) from the flow, closed-form approximant)`` for ``T > 1``.

    The approximant is ``1 + B lambda (4 log T + log|1 + lambda log T|)`` with
    base-``L`` logs and the unknown ``O(lambda)`` constant set to zero.
    """
    if not T > 1:
        raise ValueError("T must exceed 1")
    B = _B(L)
    lt = math.log(T, L)
    approx = 1 + B * lam * (4 * lt + math.log(abs(1 + lam * lt), L))
    return ell(1.0 / T, lam, L), complex(approx)


def k_hat_formula(beta_hat_abs, lam, L: int = 2):
    """``1/2 log(1 + 1/|b|) + 1/8 log|1 + 4 B lambda log(1 + 1/|b|)|`` (base L)."""
    B = _B(L)
    x = np.log1p(1 / np.asarray(beta_hat_abs, dtype=float)) / np.log(L)
    return 0.5 * x + np.log(np.abs(1 + 4 * B * lam * x)) / (8 * np.log(L))
