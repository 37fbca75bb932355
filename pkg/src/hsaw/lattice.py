"""The four-dimensional hierarchical lattice.

A site is a finitely supported digit sequence ``(..., x2, x1, x0)`` with
``x_i`` in ``Z_n`` and ``n = L**4``.  The group law is digitwise addition
mod ``n`` and ``|x| = L**N`` where ``N`` is one past the index of the highest
nonzero digit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import total_ordering
from itertools import product

import numpy as np

from .errors import DepthOverflow

DEFAULT_CAPACITY = 64


@dataclass(frozen=True)
class LatticeParams:
    """Scale factor ``L`` and the constants derived from it.

    ``C`` is the jump-rate constant of the Levy process.  When omitted it is
    computed once by :func:`hsaw.free.derive_jump_constant`.
    """

    L: int = 2
    C: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        object.__setattr__(self, "L", int(self.L))
        if self.C is None:
            from .free import derive_jump_constant

            object.__setattr__(self, "C", derive_jump_constant(self.L))
        if not self.C > 0:
            raise ValueError("jump constant C must be positive")

    @property
    def n(self) -> int:
        return self.L**4

    @property
    def B(self) -> float:
        return 1.0 - self.L**-4.0

    @property
    def gamma(self) -> float:
        """Total jump rate out of a site, ``C * sum_N shell_count(N) L**(-6N)``."""
        # shell_count(N) L^{-6N} = B L^{-2N}, a geometric series
        r = self.L**-2.0
        return self.C * self.B * r / (1.0 - r)

    def level_probabilities(self, n_max: int) -> np.ndarray:
        """Probability that a jump lands in shell ``N`` for ``N = 1..n_max``.

        The mass beyond ``n_max`` is folded into the last entry.
        """
        r = self.L**-2.0
        N = np.arange(1, n_max + 1)
        p = (1.0 - r) * r ** (N - 1)
        p[-1] += r**n_max
        return p


@total_ordering
@dataclass(frozen=True, eq=False)
class Site:
    """Point of the hierarchical group, stored as canonical digits.

    ``digits[i]`` is the digit at position ``i`` (least significant first);
    trailing zeros are stripped so equal sites have equal tuples.
    """

    digits: tuple = ()
    L: int = 2
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        d = [int(v) for v in self.digits]
        n = self.L**4
        if any(v < 0 or v >= n for v in d):
            raise ValueError(f"digits must lie in [0, {n})")
        while d and d[-1] == 0:
            d.pop()
        if len(d) > self.capacity:
            raise DepthOverflow(f"site needs {len(d)} positions, capacity is {self.capacity}")
        object.__setattr__(self, "digits", tuple(d))

    @classmethod
    def zero(cls, L=2, capacity=DEFAULT_CAPACITY):
        return cls((), L, capacity)

    @property
    def n(self) -> int:
        return self.L**4

    @property
    def level(self) -> int:
        return len(self.digits)

    def _check(self, other):
        if not isinstance(other, Site):
            return NotImplemented
        if other.L != self.L:
            raise ValueError("sites belong to lattices with different L")
        return None

    def _combine(self, other, sign):
        m = max(self.level, other.level)
        a = self.digits + (0,) * (m - self.level)
        b = other.digits + (0,) * (m - other.level)
        n = self.n
        return Site(tuple((x + sign * y) % n for x, y in zip(a, b)), self.L,
                    max(self.capacity, other.capacity))

    def __add__(self, other):
        bad = self._check(other)
        if bad is not None:
            return bad
        return self._combine(other, 1)

    def __sub__(self, other):
        bad = self._check(other)
        if bad is not None:
            return bad
        return self._combine(other, -1)

    def __neg__(self):
        return Site(tuple((-v) % self.n for v in self.digits), self.L, self.capacity)

    def __eq__(self, other):
        if not isinstance(other, Site):
            return NotImplemented
        return self.L == other.L and self.digits == other.digits

    def __hash__(self):
        return hash((self.L, self.digits))

    def sort_key(self):
        """Most-significant-first key; a total order compatible with ``==``."""
        return (self.level, self.digits[::-1])

    def __lt__(self, other):
        if not isinstance(other, Site):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __repr__(self):
        return f"Site({self.digits}, L={self.L})"


def norm(x: Site) -> int:
    """``0`` for the zero element, otherwise ``L**level``."""
    return 0 if x.level == 0 else x.L**x.level


def distance(x: Site, y: Site) -> int:
    return norm(x - y)


def shell_count(N: int, L: int = 2) -> int:
    """Number of sites with ``|x| = L**N``, i.e. ``(n - 1) n**(N - 1)``."""
    if N < 1:
        raise ValueError("shell index N must be >= 1")
    n = L**4
    return (n - 1) * n ** (N - 1)


def scale_down(x: Site) -> Site:
    """The map ``x -> x/L``: drop digit 0 and shift the rest down."""
    return Site(x.digits[1:], x.L, x.capacity)


def sample_shell(N: int, rng: np.random.Generator, L: int = 2,
                 capacity: int = DEFAULT_CAPACITY) -> Site:
    """Uniform draw from the ``shell_count(N)`` sites of norm ``L**N``."""
    if N < 1:
        raise ValueError("shell index N must be >= 1")
    if N > capacity:
        raise DepthOverflow(f"shell {N} exceeds capacity {capacity}")
    n = L**4
    low = rng.integers(0, n, size=N - 1)
    top = rng.integers(1, n)
    return Site(tuple(low) + (top,), L, capacity)


def enumerate_sites(max_level: int, L: int = 2):
    """All sites of level ``<= max_level`` as a digit array (rows, max_level)."""
    n = L**4
    grid = np.array(list(product(range(n), repeat=max_level)), dtype=np.int64)
    # product varies the last column fastest; that column is position 0
    return grid[:, ::-1].copy()


def levels_of(digits: np.ndarray) -> np.ndarray:
    """Vectorised level of each row of a digit array."""
    nz = digits != 0
    has = nz.any(axis=1)
    last = digits.shape[1] - np.argmax(nz[:, ::-1], axis=1)
    return np.where(has, last, 0)
