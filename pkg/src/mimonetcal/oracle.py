"""Brute-force and simulation references for the analytic code paths.

Nothing here reuses the matrix recursions or closed forms being checked:
service MGFs are summed path by path, arrival MGFs by sampling the phase,
and delays come from an explicit slot-level FIFO queue.

Queue convention: slot k covers (k-1, k] and serves R of the state occupied
during it.  A burst generated at real time x belongs to slot t = ceil(x) and
can already be served in slot t.  Its delay is the number of the slot in
which its last block leaves minus t.  This is the virtual delay
W(t) = min{d : A(t) <= S(t + d)} of the cumulative model, i.e. exactly the
quantity the MGF bound controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channel import EULER_GAMMA, harmonic_number

BRUTE_FORCE_MAX_PATHS = 1 << 25


class McValue(NamedTuple):
    mean: float
    std_error: float


class PathSpaceTooLarge(ValueError):
    pass


def brute_force_service_mgf(chain, theta: float, t: int) -> float:
    """E exp(-theta * sum of rates over t slots), enumerating every state path."""
    k = chain.k
    if t < 1:
        raise ValueError("t must be >= 1")
    if k**t > BRUTE_FORCE_MAX_PATHS:
        raise PathSpaceTooLarge(f"{k}**{t} paths exceed the enumeration guard")
    q, pi, rates = chain.q, chain.pi, chain.rates
    total = 0.0
    # one block per starting state keeps memory at k**(t-1) paths
    tails = np.indices((k,) * (t - 1)).reshape(t - 1, -1) if t > 1 else np.zeros((0, 1), dtype=int)
    for first in range(k):
        paths = np.vstack([np.full(tails.shape[1], first), tails])
        prob = np.full(paths.shape[1], pi[first])
        for step in range(1, t):
            prob = prob * q[paths[step - 1], paths[step]]
        served = rates[paths].sum(axis=0)
        total += math.fsum(prob * np.exp(-theta * served))
    return total


@dataclass
class QueueTrace:
    horizon: int
    delays: np.ndarray
    seed: int
    censored: int = 0

    def violations(self, d: float) -> int:
        return int((self.delays > d).sum())

    def violation_frequency(self, d: float) -> float:
        return self.violations(d) / len(self.delays) if len(self.delays) else 0.0

    def summary_rows(self, ds):
        return [(d, self.violation_frequency(d), len(self.delays)) for d in ds]


def sample_chain_path(chain, slots: int, rng: np.random.Generator) -> np.ndarray:
    """Per-slot state indices of a stationary run, drawn as holding times and jumps."""
    q, k = chain.q, chain.k
    stay = np.clip(np.diag(q), 0.0, 1.0)
    jump = q - np.diag(np.diag(q))
    with np.errstate(invalid="ignore", divide="ignore"):
        jump_cdf = np.cumsum(jump / jump.sum(axis=1, keepdims=True), axis=1)
    states, lengths = [], []
    state = int(rng.choice(k, p=chain.pi))
    filled = 0
    batch = 4096
    u_hold, u_jump, pos = rng.random(batch), rng.random(batch), 0
    while filled < slots:
        if pos == batch:
            u_hold, u_jump, pos = rng.random(batch), rng.random(batch), 0
        p = stay[state]
        if p >= 1.0:
            run = slots - filled
        elif p <= 0.0:
            run = 1
        else:
            # geometric number of slots (>= 1) spent before leaving
            run = int(math.floor(math.log(1.0 - u_hold[pos]) / math.log(p))) + 1
        run = min(run, slots - filled)
        states.append(state)
        lengths.append(run)
        filled += run
        if p < 1.0:
            state = int(min(np.searchsorted(jump_cdf[state], u_jump[pos], side="right"), k - 1))
        pos += 1
    return np.repeat(np.array(states, dtype=np.int64), lengths)


def simulate_queue(chain, src, horizon: int, seed: int, drain: int | None = None) -> QueueTrace:
    """FIFO queue fed by the periodic source and drained by the Markov service.

    Bursts arriving in slots 0..horizon are recorded; service is simulated
    ``drain`` slots beyond the horizon so late bursts can leave.  Bursts
    still queued at the very end are counted in ``censored``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    if drain is None:
        drain = max(1000, horizon // 100)
    phase = rng.random()
    n_bursts = int(math.floor((horizon - phase * src.tau) / src.tau)) + 1
    if src.sigma == 0 or n_bursts <= 0:
        return QueueTrace(horizon, np.zeros(max(n_bursts, 0)), seed)
    times = np.maximum(np.ceil(phase * src.tau + src.tau * np.arange(n_bursts)), 1).astype(np.int64)

    slots = horizon + drain
    path = sample_chain_path(chain, slots, rng)
    # served[t] = service delivered in slots 1..t
    served = np.concatenate([[0.0], np.cumsum(chain.rates[path])])

    sigma = src.sigma
    j = np.arange(n_bursts)
    # burst j is out once served[D] >= (j+1) sigma + max_{i<=j} (served[t_i - 1] - i sigma)
    target = (j + 1) * sigma + np.maximum.accumulate(served[times - 1] - j * sigma)
    # cumulative sums round; treat a shortfall below 1e-12 relative as served
    done = np.searchsorted(served, target - 1e-12 * max(served[-1], 1.0), side="left")
    censored = int((done > slots).sum())
    delays = (done - times)[done <= slots].astype(float)
    return QueueTrace(horizon, delays, seed, censored)


def simulate_replications(chain, src, horizon: int, seed: int, reps: int) -> QueueTrace:
    """Independent runs with derived seeds, merged by concatenating delays."""
    children = np.random.SeedSequence(seed).generate_state(reps)
    traces = [simulate_queue(chain, src, horizon, int(s)) for s in children]
    return QueueTrace(
        horizon * reps,
        np.concatenate([t.delays for t in traces]),
        seed,
        sum(t.censored for t in traces),
    )


def wishart_logdet_mean(r: int) -> float:
    """E ln det(H H^H) in nats for an r x r matrix of iid CN(0, 1) entries."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return math.fsum(harmonic_number(k - 1) - EULER_GAMMA for k in range(1, r + 1))


def mc_logdet(r: int, samples: int, seed: int) -> McValue:
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((samples, r, r)) + 1j * rng.standard_normal((samples, r, r))) / math.sqrt(2.0)
    x = 2.0 * np.log(np.abs(np.linalg.det(h)))
    return McValue(float(x.mean()), float(x.std(ddof=1) / math.sqrt(samples)))


def mc_arrival_mgf(src, theta: float, t: float, samples: int, seed: int) -> McValue:
    """Average of exp(theta A(t)) over the random phase of the periodic source."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(samples)
    # bursts at u tau + n tau, n >= 0, that fall in [0, t]
    count = np.where(u * src.tau <= t, np.floor((t - u * src.tau) / src.tau) + 1, 0)
    x = np.exp(theta * src.sigma * count)
    se = float(x.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return McValue(float(x.mean()), se)
