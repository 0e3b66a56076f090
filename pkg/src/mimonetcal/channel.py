"""Virtual-channel variance matrices, degrees of freedom and ergodic capacity.

A sub-state of an N x N virtual channel is a binary support pattern: every
path (m, n) is either good (variance ``v_s``) or bad (variance 0).  Patterns
are enumerated by an integer whose bit ``k`` (little endian) holds link
``k = (m-1)*N + (n-1)``; a set bit means good.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EULER_GAMMA = 0.577215664901533
LN2 = math.log(2.0)

DEFAULT_MC_SAMPLES = 100_000
CHUNK_SAMPLES = 8192


class NoGoodLinks(ValueError):
    """Raised when a variance matrix is requested for the all-bad sub-state."""


@dataclass(frozen=True)
class SupportPattern:
    n: int
    bits: tuple[bool, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.bits) != self.n * self.n:
            raise ValueError(f"expected {self.n * self.n} links, got {len(self.bits)}")

    @classmethod
    def from_string(cls, s: str) -> "SupportPattern":
        """Parse a 'g'/'b' string such as ``'gbbg'`` (row-major)."""
        n = math.isqrt(len(s))
        if n * n != len(s) or set(s) - {"g", "b"}:
            raise ValueError(f"not a square g/b pattern: {s!r}")
        return cls(n, tuple(c == "g" for c in s))

    @property
    def index(self) -> int:
        return sum(1 << k for k, good in enumerate(self.bits) if good)

    @property
    def good_links(self) -> int:
        return sum(self.bits)

    def matrix(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool).reshape(self.n, self.n)

    def __str__(self):
        return "".join("g" if b else "b" for b in self.bits)


@dataclass(frozen=True)
class VarianceMatrix:
    pattern: SupportPattern
    good_variance: float

    def matrix(self) -> np.ndarray:
        return self.pattern.matrix() * self.good_variance


@dataclass(frozen=True)
class DofProfile:
    r: int
    row_counts: tuple[int, ...]
    total: int
    # reduced support is not r x r; the closed form then only approximates
    approximate: bool = False


@dataclass(frozen=True)
class CapacityEstimate:
    mean: float
    std_error: float
    samples: int
    snr_db: float
    seed: int


def pattern_from_substate(state_index: int, n: int) -> SupportPattern:
    if n < 1:
        raise ValueError("n must be >= 1")
    links = n * n
    if not 0 <= state_index < (1 << links):
        raise ValueError(f"sub-state index {state_index} out of range for n={n}")
    return SupportPattern(n, tuple(bool((state_index >> k) & 1) for k in range(links)))


def structural_rank(pattern: SupportPattern) -> int:
    """Size of a maximum matching between receive rows and transmit columns."""
    support = pattern.matrix()
    n = pattern.n
    match_col = [-1] * n

    def augment(row, seen):
        for col in range(n):
            if support[row, col] and not seen[col]:
                seen[col] = True
                if match_col[col] < 0 or augment(match_col[col], seen):
                    match_col[col] = row
                    return True
        return False

    return sum(augment(row, [False] * n) for row in range(n))


def good_variance(pattern: SupportPattern) -> float:
    d = pattern.good_links
    if d == 0:
        raise NoGoodLinks("all-bad sub-state has no variance matrix")
    return pattern.n * pattern.n / d


def variance_matrix(pattern: SupportPattern) -> VarianceMatrix:
    return VarianceMatrix(pattern, good_variance(pattern))


def dof_profile(pattern: SupportPattern) -> DofProfile:
    """Degrees of freedom plus per-row good-link counts of the reduced support."""
    support = pattern.matrix()
    reduced = support[support.any(axis=1)][:, support.any(axis=0)]
    r = structural_rank(pattern)
    rows, cols = reduced.shape
    return DofProfile(
        r=r,
        row_counts=tuple(int(c) for c in reduced.sum(axis=1)),
        total=int(reduced.sum()),
        approximate=not (rows == cols == r),
    )


def _merge_moments(parts):
    # Chan et al. pairwise combination of (count, mean, M2)
    count, mean, m2 = 0, 0.0, 0.0
    for n_b, mean_b, m2_b in parts:
        if n_b == 0:
            continue
        total = count + n_b
        delta = mean_b - mean
        mean += delta * n_b / total
        m2 += m2_b + delta * delta * count * n_b / total
        count = total
    return count, mean, m2


def _logdet_chunk(v: np.ndarray, rho: float, size: int, rng: np.random.Generator):
    n = v.shape[0]
    scale = np.sqrt(v / 2.0)
    h = (rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))) * scale
    gram = np.eye(n) + (rho / n) * (h @ np.conj(np.swapaxes(h, 1, 2)))
    # gram is Hermitian positive definite
    chol = np.linalg.cholesky(gram)
    diag = np.real(np.diagonal(chol, axis1=1, axis2=2))
    return 2.0 * np.log2(diag).sum(axis=1)


def ergodic_capacity_mc(
    v: VarianceMatrix,
    snr_db: float,
    samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
) -> CapacityEstimate:
    """Monte Carlo estimate of E log2 det(I + rho/N H H^H).

    Samples are drawn in fixed-size chunks, each with its own child seed, so
    the estimate does not depend on how chunks are scheduled.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rho = 10.0 ** (snr_db / 10.0)
    var = v.matrix()
    sizes = [CHUNK_SAMPLES] * (samples // CHUNK_SAMPLES)
    if samples % CHUNK_SAMPLES:
        sizes.append(samples % CHUNK_SAMPLES)
    children = np.random.SeedSequence([seed, v.pattern.n, v.pattern.index]).spawn(len(sizes))
    parts = []
    for size, child in zip(sizes, children):
        x = _logdet_chunk(var, rho, size, np.random.default_rng(child))
        mean = float(x.mean())
        parts.append((size, mean, float(((x - mean) ** 2).sum())))
    count, mean, m2 = _merge_moments(parts)
    std = math.sqrt(m2 / (count - 1)) if count > 1 else 0.0
    return CapacityEstimate(
        mean=mean,
        std_error=std / math.sqrt(count),
        samples=count,
        snr_db=snr_db,
        seed=seed,
    )


def harmonic_number(k: int) -> float:
    if k < 0:
        raise ValueError("k must be >= 0")
    return math.fsum(1.0 / p for p in range(1, k + 1))


def highsnr_capacity_closed_form(profile: DofProfile, snr_db: float, n: int) -> float:
    if profile.r == 0:
        return 0.0
    r = profile.r
    rho = 10.0 ** (snr_db / 10.0)
    return r * (math.log2(rho * n) - (1.0 + EULER_GAMMA) / LN2 + _spread_term(profile))


def _spread_term(profile: DofProfile) -> float:
    harmonics = math.fsum(harmonic_number(d - 1) for d in profile.row_counts)
    return harmonics / (profile.r * LN2) - math.log2(profile.total)


def lemma1_form(profile: DofProfile, snr_db: float, n: int) -> tuple[float, float]:
    """Split the high-SNR capacity into r*log2(rho*N/r) and an SNR-free offset."""
    if profile.r == 0:
        return 0.0, 0.0
    r = profile.r
    rho = 10.0 ** (snr_db / 10.0)
    c_prime = math.log2(r) - (1.0 + EULER_GAMMA) / LN2 + _spread_term(profile)
    return r * math.log2(rho * n / r), r * c_prime


# -- pattern classes -------------------------------------------------------
#
# The capacity law of a pattern is invariant under row permutations, column
# permutations and transposition, so one estimate serves a whole class.


@lru_cache(maxsize=None)
def _link_transforms(n: int) -> np.ndarray:
    grid = np.arange(n * n).reshape(n, n)
    maps = []
    for rows in itertools.permutations(range(n)):
        for cols in itertools.permutations(range(n)):
            g = grid[np.ix_(rows, cols)]
            maps.append(g.ravel())
            maps.append(g.T.ravel())
    return np.unique(np.array(maps), axis=0)


@lru_cache(maxsize=None)
def substate_classes(n: int) -> np.ndarray:
    """Canonical (minimal) class index of every sub-state of an n x n channel."""
    links = n * n
    if links > 16:
        raise ValueError("pattern classes are only tabulated for n <= 4")
    idx = np.arange(1 << links, dtype=np.int64)
    # float matmul is exact below 2**53 and far faster than integer matmul
    bits = ((idx[:, None] >> np.arange(links)) & 1).astype(np.float64)
    weights = np.ldexp(1.0, np.arange(links))
    transforms = _link_transforms(n)
    # bits[:, perm] @ w == bits @ w' with w'[perm] = w
    permuted = np.empty((links, len(transforms)))
    for j, perm in enumerate(transforms):
        permuted[perm, j] = weights
    best = idx.astype(np.float64)
    for start in range(0, len(transforms), 128):
        np.minimum(best, (bits @ permuted[:, start:start + 128]).min(axis=1), out=best)
    best = best.astype(np.int64)
    best.flags.writeable = False
    return best


@lru_cache(maxsize=None)
def substate_dofs(n: int) -> np.ndarray:
    """Structural rank of every sub-state, indexed by sub-state integer."""
    classes = substate_classes(n)
    rank_of = {int(c): structural_rank(pattern_from_substate(int(c), n)) for c in np.unique(classes)}
    out = np.array([rank_of[int(c)] for c in classes], dtype=np.int64)
    out.flags.writeable = False
    return out


def capacity_table(n, snr_db, samples=DEFAULT_MC_SAMPLES, seed=0, estimate=None):
    """Per-sub-state ergodic capacity in bits/s/Hz (all-bad sub-state pinned to 0).

    ``estimate`` maps a class-representative pattern to a CapacityEstimate and
    defaults to :func:`ergodic_capacity_mc`; the harness injects a caching one.
    Returns ``(capacities, estimates)`` with estimates keyed by class index.
    """
    if estimate is None:
        def estimate(pattern):
            return ergodic_capacity_mc(variance_matrix(pattern), snr_db, samples, seed)

    classes = substate_classes(n)
    estimates = {}
    for c in np.unique(classes):
        c = int(c)
        if c == 0:
            continue
        estimates[c] = estimate(pattern_from_substate(c, n))
    caps = np.array([0.0 if c == 0 else estimates[int(c)].mean for c in classes])
    return caps, estimates
