"""Markov-modulated service processes built from per-path Gilbert-Elliott links.

Two constructions are provided:

* :func:`full_chain` keeps every one of the ``2**(N*N)`` sub-states
  (ordered by sub-state integer, see :mod:`mimonetcal.channel`).
* :func:`aggregated_chain` lumps sub-states by degrees of freedom into
  ``N + 1`` states ordered by DOF ascending.

Rates are taken as given; the caller decides the unit (bits/s/Hz or blocks
per slot).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .channel import pattern_from_substate, substate_dofs

FULL_CHAIN_MAX_N = 3
AGGREGATED_MAX_N = 4


class StateSpaceTooLarge(ValueError):
    pass


class DegenerateChain(ValueError):
    pass


@dataclass(frozen=True)
class GilbertElliott:
    p_gb: float
    p_bg: float

    def __post_init__(self):
        for name in ("p_gb", "p_bg"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} is not a probability")
        if self.p_gb == 0.0 and self.p_bg == 0.0:
            raise DegenerateChain("p_gb and p_bg are both zero")

    def link_matrix(self) -> np.ndarray:
        """2x2 transition matrix indexed (bad=0, good=1)."""
        return np.array(
            [[1.0 - self.p_bg, self.p_bg],
             [self.p_gb, 1.0 - self.p_gb]]
        )


def ge_kappa(ge: GilbertElliott) -> float:
    """Stationary probability of the bad state."""
    total = ge.p_gb + ge.p_bg
    if total <= 0.0:
        raise DegenerateChain("p_gb + p_bg must be positive")
    return ge.p_gb / total


def ge_from_kappa(kappa: float, p_bg: float) -> GilbertElliott:
    if not 0.0 <= kappa < 1.0:
        raise ValueError("kappa must lie in [0, 1)")
    if not 0.0 < p_bg <= 1.0:
        raise ValueError("p_bg must lie in (0, 1]")
    p_gb = kappa * p_bg / (1.0 - kappa)
    if p_gb > 1.0:
        raise ValueError(f"infeasible: kappa={kappa}, p_bg={p_bg} gives p_gb={p_gb} > 1")
    return GilbertElliott(p_gb=p_gb, p_bg=p_bg)


@dataclass
class ServiceChain:
    q: np.ndarray
    pi: np.ndarray
    rates: np.ndarray
    labels: list
    provenance: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.rates)

    def validate(self, stoch_tol=1e-12, stat_tol=1e-10):
        q, pi = self.q, self.pi
        if q.shape != (self.k, self.k) or pi.shape != (self.k,):
            raise ValueError("shape mismatch between q, pi and rates")
        if (q < 0).any() or np.abs(q.sum(axis=1) - 1.0).max() > stoch_tol:
            raise ValueError("q is not row-stochastic")
        if (pi < 0).any() or abs(pi.sum() - 1.0) > stat_tol:
            raise ValueError("pi is not a distribution")
        if np.abs(pi @ q - pi).max() > stat_tol:
            raise ValueError("pi is not stationary for q")
        if (self.rates < 0).any():
            raise ValueError("negative service rate")
        return self

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "q": self.q.tolist(),
                "pi": self.pi.tolist(),
                "rates": self.rates.tolist(),
                "labels": self.labels,
                "provenance": self.provenance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ServiceChain":
        d = json.loads(text)
        return cls(
            q=np.array(d["q"], dtype=float),
            pi=np.array(d["pi"], dtype=float),
            rates=np.array(d["rates"], dtype=float),
            labels=d["labels"],
            provenance=d.get("provenance", {}),
        )


def _gth(q: np.ndarray) -> np.ndarray | None:
    """Grassmann-Taksar-Heyman elimination; subtraction-free, hence accurate
    even when Q is close to the identity (slow fading)."""
    p = np.array(q, dtype=float)
    k = p.shape[0]
    for n in range(k - 1, 0, -1):
        s = p[n, :n].sum()
        if s <= 0.0:
            return None
        p[:n, n] /= s
        p[:n, :n] += np.outer(p[:n, n], p[n, :n])
    pi = np.zeros(k)
    pi[0] = 1.0
    for n in range(1, k):
        pi[n] = pi[:n] @ p[:n, n]
    return pi


def stationary_distribution(q: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Solve pi = pi Q.  Direct elimination for K <= 16, power iteration beyond."""
    k = q.shape[0]
    pi = None
    if k <= 16:
        pi = _gth(q)
        if pi is None:
            # reducible chain: least squares picks a stationary vector
            a = np.vstack([q.T - np.eye(k), np.ones(k)])
            b = np.zeros(k + 1)
            b[-1] = 1.0
            pi = np.linalg.lstsq(a, b, rcond=None)[0]
    else:
        pi = np.full(k, 1.0 / k)
        for _ in range(max_iter):
            nxt = pi @ q
            if np.abs(nxt - pi).max() < tol:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def substate_stationary_weight(pattern, kappa: float) -> float:
    good = pattern.good_links
    bad = len(pattern.bits) - good
    return kappa**bad * (1.0 - kappa) ** good


def _product_weights(n: int, kappa: float) -> np.ndarray:
    links = n * n
    good = np.array([bin(s).count("1") for s in range(1 << links)])
    return kappa ** (links - good) * (1.0 - kappa) ** good


def _kron_apply(link: np.ndarray, f: np.ndarray, links: int) -> np.ndarray:
    """Compute (P f) where P is the Kronecker power of ``link`` over all paths."""
    t = f.reshape((2,) * links)
    for axis in range(links):
        t = np.moveaxis(np.tensordot(link, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


def _as_rate_array(rates, size: int) -> np.ndarray:
    if isinstance(rates, dict):
        arr = np.array([float(rates.get(s, 0.0)) for s in range(size)])
    else:
        arr = np.asarray(rates, dtype=float)
    if arr.shape != (size,):
        raise ValueError(f"expected {size} per-sub-state rates, got shape {arr.shape}")
    return arr


def full_chain(n: int, ge: GilbertElliott, capacities) -> ServiceChain:
    """Exact chain over all 2**(n*n) sub-states."""
    if n > FULL_CHAIN_MAX_N:
        raise StateSpaceTooLarge(
            f"full chain needs 2**{n * n} states; use aggregated_chain for n > {FULL_CHAIN_MAX_N}"
        )
    links = n * n
    size = 1 << links
    link = ge.link_matrix()
    q = np.ones((1, 1))
    # first kron factor is the most significant bit, i.e. the last link
    for _ in range(links):
        q = np.kron(link, q)
    rates = _as_rate_array(capacities, size).copy()
    dofs = substate_dofs(n)
    rates[dofs == 0] = 0.0
    kappa = ge_kappa(ge)
    if 0.0 < kappa < 1.0:
        pi = _product_weights(n, kappa)
        pi = pi / pi.sum()
    else:
        pi = stationary_distribution(q)
    labels = [str(pattern_from_substate(s, n)) for s in range(size)]
    return ServiceChain(q=q, pi=pi, rates=rates, labels=labels,
                        provenance={"method": 1, "n": n, "p_gb": ge.p_gb, "p_bg": ge.p_bg})


def aggregated_chain(n: int, ge: GilbertElliott, per_substate_capacity, weighting: str = "uniform") -> ServiceChain:
    """DOF-lumped chain with states 0..n degrees of freedom.

    ``weighting="uniform"`` averages sub-state capacities with equal weight
    inside each DOF class; ``"stationary"`` weights them by the normalized
    stationary sub-state probabilities instead.
    """
    if n > AGGREGATED_MAX_N:
        raise StateSpaceTooLarge(f"sub-state enumeration is capped at n = {AGGREGATED_MAX_N}")
    if weighting not in ("uniform", "stationary"):
        raise ValueError(f"unknown weighting {weighting!r}")
    links = n * n
    size = 1 << links
    caps = _as_rate_array(per_substate_capacity, size)
    dofs = substate_dofs(n)
    k = n + 1
    kappa = ge_kappa(ge)
    prior = _product_weights(n, kappa)

    link = ge.link_matrix()
    # into[:, j] = Pr(next sub-state in class j | current sub-state)
    into = np.column_stack([_kron_apply(link, (dofs == j).astype(float), links) for j in range(k)])

    q = np.zeros((k, k))
    rates = np.zeros(k)
    for i in range(k):
        members = dofs == i
        w = prior[members]
        if w.sum() > 0:
            w = w / w.sum()
        else:
            # class unreachable in stationarity (kappa in {0, 1})
            w = np.full(members.sum(), 1.0 / members.sum())
        q[i] = w @ into[members]
        if i > 0:
            rates[i] = caps[members].mean() if weighting == "uniform" else w @ caps[members]
    q = q / q.sum(axis=1, keepdims=True)
    pi = stationary_distribution(q)
    return ServiceChain(q=q, pi=pi, rates=rates, labels=list(range(k)),
                        provenance={"method": 2, "n": n, "p_gb": ge.p_gb, "p_bg": ge.p_bg,
                                    "weighting": weighting,
                                    "class_sizes": np.bincount(dofs, minlength=k).tolist()})


def first_order_capacity(chain: ServiceChain) -> float:
    return float(chain.rates @ chain.pi)


def class_sizes(n: int) -> list[int]:
    return np.bincount(substate_dofs(n), minlength=n + 1).tolist()


def dof_class_weights(n: int, kappa: float) -> np.ndarray:
    """Stationary probability of each DOF class under independent links."""
    return np.bincount(substate_dofs(n), weights=_product_weights(n, kappa), minlength=n + 1)


__all__ = [
    "GilbertElliott", "ServiceChain", "StateSpaceTooLarge", "DegenerateChain",
    "ge_kappa", "ge_from_kappa", "substate_stationary_weight", "full_chain",
    "aggregated_chain", "first_order_capacity", "stationary_distribution",
    "class_sizes", "dof_class_weights",
]
