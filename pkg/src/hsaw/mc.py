"""Monte Carlo for the hierarchical Levy walk with self-repulsion weights.

A path on ``[0, T]`` has a Poisson(``gamma T``) number of jumps at uniform
order-statistic times.  Each jump picks a shell level ``N`` with
probability ``(1 - L^-2) L^{-2(N-1)}`` and a uniform site of that shell,
added with the group law.  The repulsion weight is ``exp(-lambda tau^2)``
with ``tau^2 = sum_x tau(x)^2`` the self-intersection local time.

The ensemble is simulated in fixed-size chunks, each with its own stream
spawned from the seed, so the output bits do not depend on the number of
worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateWeights, DepthOverflow
from .lattice import DEFAULT_CAPACITY, LatticeParams, Site, sample_shell, shell_count

CHUNK = 1 << 14


@dataclass(frozen=True)
class McConfig:
    T: float
    lam: float = 0.0
    n_paths: int = 100_000
    seed: int = 0
    L: int = 2
    alpha: float = 1.0
    capacity: int = DEFAULT_CAPACITY
    threads: int = field(default=1, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if isinstance(self.lam, complex) or not self.lam >= 0:
            raise ValueError("lambda must be a real number >= 0")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def params(self) -> LatticeParams:
        return _params(self.L)


@lru_cache(maxsize=8)
def _params(L):
    return LatticeParams(L)


@dataclass
class PathRecord:
    """One path: jump times, visited sites, local times and endpoint."""

    jump_times: list
    sites: list
    local_times: dict
    T: float

    @property
    def endpoint(self) -> Site:
        return self.sites[-1]


def simulate_path(cfg: McConfig, rng: np.random.Generator) -> PathRecord:
    """Exact single-path simulation with exponential holding times."""
    p = cfg.params
    gamma = p.gamma
    r = float(cfg.L) ** -2
    x = Site.zero(cfg.L, cfg.capacity)
    t = 0.0
    times, sites = [], [x]
    local = {}
    while True:
        hold = rng.exponential(1.0 / gamma)
        if t + hold >= cfg.T:
            local[x] = local.get(x, 0.0) + (cfg.T - t)
            break
        local[x] = local.get(x, 0.0) + hold
        t += hold
        N = int(rng.geometric(1.0 - r))
        if N > cfg.capacity:
            raise DepthOverflow(f"jump to shell {N} exceeds capacity {cfg.capacity}")
        x = x + sample_shell(N, rng, cfg.L, cfg.capacity)
        times.append(t)
        sites.append(x)
    return PathRecord(times, sites, dict(sorted(local.items())), cfg.T)


def tau_squared(path: PathRecord) -> float:
    """``sum_x tau(x)^2`` over the sites the path visited."""
    return float(sum(v * v for v in path.local_times.values()))


@dataclass
class Ensemble:
    """Per-path summaries of a simulated ensemble."""

    tau2: np.ndarray
    level: np.ndarray
    n_jumps: np.ndarray
    folded: int = 0


def _chunk(cfg: McConfig, seq: np.random.SeedSequence, m: int):
    rng = np.random.default_rng(seq)
    L, n, T = cfg.L, cfg.L**4, cfg.T
    gamma = cfg.params.gamma
    K = rng.poisson(gamma * T, size=m)
    kmax = int(K.max()) if m else 0
    # jump times: sorted uniforms, padded past K with T so padded holds are 0
    u = rng.random((m, kmax)) * T
    active = np.arange(kmax)[None, :] < K[:, None]
    u = np.where(active, u, T)
    u.sort(axis=1)
    edges = np.concatenate([np.zeros((m, 1)), u, np.full((m, 1), T)], axis=1)
    hold = np.diff(edges, axis=1)

    lev = rng.geometric(1.0 - float(L) ** -2, size=(m, kmax))
    folded = int(np.count_nonzero((lev > cfg.capacity) & active))
    lev = np.minimum(lev, cfg.capacity)
    lev = np.where(active, lev, 0)
    dmax = max(int(lev.max()) if lev.size else 0, 1)
    pos = np.arange(dmax)[None, None, :]
    low = rng.integers(0, n, size=(m, kmax, dmax), dtype=np.int16)
    top = rng.integers(1, n, size=(m, kmax, dmax), dtype=np.int16)
    N = lev[:, :, None]
    disp = np.where(pos < N - 1, low, np.where(pos == N - 1, top, 0))
    sites = np.concatenate([np.zeros((m, 1, dmax), dtype=np.int32),
                            np.cumsum(disp, axis=1, dtype=np.int32) % n], axis=1)

    end = sites[:, -1, :]
    nz = end != 0
    level = np.where(nz.any(axis=1), dmax - np.argmax(nz[:, ::-1], axis=1), 0)

    # pack each site into 64-bit words, most significant digits first
    bits = max(int(n - 1).bit_length(), 1)
    per_word = 64 // bits
    n_words = -(-dmax // per_word)
    words = []
    for w in range(n_words):
        acc = np.zeros(sites.shape[:2], dtype=np.uint64)
        for d in range(w * per_word, min((w + 1) * per_word, dmax)):
            acc |= sites[:, :, d].astype(np.uint64) << np.uint64((d - w * per_word) * bits)
        words.append(acc.ravel())
    path_id = np.repeat(np.arange(m), kmax + 1)
    order = np.lexsort(tuple(words) + (path_id,))
    h = hold.ravel()[order]
    keys = [w[order] for w in words]
    pid = path_id[order]
    new = np.ones(h.size, dtype=bool)
    new[1:] = pid[1:] != pid[:-1]
    for k in keys:
        new[1:] |= k[1:] != k[:-1]
    starts = np.flatnonzero(new)
    occ = np.add.reduceat(h, starts)
    tau2 = np.bincount(pid[starts], weights=occ * occ, minlength=m)
    return tau2, level, K, folded


@lru_cache(maxsize=8)
def simulate_ensemble(cfg: McConfig) -> Ensemble:
    """Simulate ``cfg.n_paths`` paths; cached per configuration."""
    sizes = [CHUNK] * (cfg.n_paths // CHUNK)
    if cfg.n_paths % CHUNK:
        sizes.append(cfg.n_paths % CHUNK)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = list(zip(seqs, sizes))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            parts = list(ex.map(lambda a: _chunk(cfg, *a), jobs))
    else:
        parts = [_chunk(cfg, *a) for a in jobs]
    return Ensemble(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                    np.concatenate([p[2] for p in parts]), sum(p[3] for p in parts))


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    ess: float = float("nan")


def _log_weights(cfg, ens):
    logw = -cfg.lam * ens.tau2
    shift = float(logw.max())
    return np.exp(logw - shift), shift


def weighted_endtoend(cfg: McConfig) -> McEstimate:
    """Self-normalised ``[E(w |omega(T)|^alpha) / E(w)]^{1/alpha}``, ``w = exp(-lambda tau^2)``."""
    ens = simulate_ensemble(cfg)
    w, _ = _log_weights(cfg, ens)
    a = np.where(ens.level > 0, float(cfg.L) ** (cfg.alpha * ens.level.astype(float)), 0.0)
    sw = w.sum()
    ess = sw * sw / np.dot(w, w)
    if ess < 10:
        raise DegenerateWeights(f"effective sample size {ess:.3g} < 10")
    R = np.dot(w, a) / sw
    se_R = math.sqrt(np.dot(w * w, (a - R) ** 2)) / sw
    inv = 1.0 / cfg.alpha
    return McEstimate(R**inv, inv * R ** (inv - 1) * se_R, float(ess))


def weighted_kernel(cfg: McConfig, x_level: int, beta_c: float | None = None) -> McEstimate:
    """Per-site kernel ``exp(-beta_c T) E(w 1{N(omega(T)) = x_level}) / #shell``.

    ``beta_c`` defaults to the critical killing rate of ``cfg.lam``.
    """
    if x_level < 0:
        raise ValueError("x_level must be >= 0")
    if beta_c is None:
        from .rg import critical_beta

        beta_c = critical_beta(cfg.lam, L=cfg.L).beta_c.real if cfg.lam > 0 else 0.0
    ens = simulate_ensemble(cfg)
    w, shift = _log_weights(cfg, ens)
    y = w * (ens.level == x_level)
    count = 1 if x_level == 0 else shell_count(x_level, cfg.L)
    scale = math.exp(shift - beta_c * cfg.T) / count
    n = y.size
    return McEstimate(scale * y.mean(), scale * y.std(ddof=1) / math.sqrt(n) if n > 1 else float("inf"))

