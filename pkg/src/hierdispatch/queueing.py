"""M/M/c waiting-time analytics used by the inter-region allocator.

Standard Erlang-C expressions: P0 is the empty-system probability and
mean_wait the expected queueing delay Wq (hours). Factorial terms switch
to log-space above c = 20 to avoid overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_LOG_SPACE_C = 20


class Unstable(Exception):
    """Utilization rho = lambda / (c * mu) is >= 1; waits are unbounded."""


@dataclass(frozen=True)
class QueueParams:
    lam: float  # arrivals/hour
    mu: float   # service completions/hour per server
    c: int      # server count

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.c < 1:
            raise ValueError("c must be >= 1")

    @property
    def rho(self) -> float:
        return self.lam / (self.c * self.mu)


def _check_stable(q: QueueParams) -> None:
    if q.rho >= 1:
        raise Unstable(f"rho={q.rho:.3f} >= 1 for lam={q.lam}, mu={q.mu}, c={q.c}")


def p0(q: QueueParams) -> float:
    """Probability of an empty system, in (0, 1]."""
    _check_stable(q)
    if q.lam == 0:
        return 1.0
    a = q.lam / q.mu
    if q.c <= _LOG_SPACE_C:
        total = sum(a ** m / math.factorial(m) for m in range(q.c))
        total += a ** q.c / (math.factorial(q.c) * (1 - q.rho))
        return 1.0 / total
    log_a = math.log(a)
    terms = [m * log_a - math.lgamma(m + 1) for m in range(q.c)]
    terms.append(q.c * log_a - math.lgamma(q.c + 1) - math.log(1 - q.rho))
    peak = max(terms)
    return math.exp(-(peak + math.log(sum(math.exp(t - peak) for t in terms))))


def wait_probability(q: QueueParams) -> float:
    """Erlang-C probability that an arrival has to queue."""
    _check_stable(q)
    if q.lam == 0:
        return 0.0
    a = q.lam / q.mu
    if q.c <= _LOG_SPACE_C:
        numer = a ** q.c / (math.factorial(q.c) * (1 - q.rho))
    else:
        numer = math.exp(q.c * math.log(a) - math.lgamma(q.c + 1) - math.log(1 - q.rho))
    return numer * p0(q)


def mean_wait(q: QueueParams) -> float:
    """Mean queueing delay Wq in hours; strictly decreasing in c."""
    _check_stable(q)
    if q.lam == 0:
        return 0.0
    return wait_probability(q) / (q.c * q.mu - q.lam)


def mean_wait_or_inf(q: QueueParams) -> float:
    """mean_wait with an infinite sentinel instead of Unstable."""
    try:
        return mean_wait(q)
    except Unstable:
        return math.inf
