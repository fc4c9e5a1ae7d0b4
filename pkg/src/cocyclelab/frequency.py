"""Continued fractions of the rotation number and return times of circle rotations."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import RationalFrequency, SearchBudgetExceeded

RATIONAL_TOL = 1e-14
RETURN_SEARCH_CAP = 10**7


@dataclass(frozen=True)
class ContinuedFraction:
    alpha: float
    partial_quotients: tuple  # a_1 .. a_D
    convergents: tuple  # (p_k, q_k) for k = 0 .. D, starting at (0, 1)

    @property
    def denominators(self):
        return [q for _, q in self.convergents]

    def q(self, k):
        return self.convergents[k][1]


@dataclass(frozen=True)
class DiophantineEstimate:
    tau: float
    gamma_lower: float
    argmin_q: int


@dataclass(frozen=True)
class Arc:
    """Half-open arc [start, start + length) on R/Z."""
    start: float
    length: float

    @classmethod
    def ball(cls, center, radius):
        return cls((center - radius) % 1.0, 2.0 * radius)

    @property
    def center(self):
        return (self.start + 0.5 * self.length) % 1.0

    def contains(self, x):
        return np.mod(np.asarray(x) - self.start, 1.0) < self.length


def circle_dist(x):
    """Distance to the nearest integer."""
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.round(x))


def expand(alpha, depth):
    """Partial quotients and convergents of alpha in (0, 1), computed exactly on the binary value."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if depth < 1:
        raise ValueError("depth must be positive")
    x = Fraction(alpha)
    quotients = []
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    convergents = [(p, q)]
    for _ in range(depth):
        if x < Fraction(RATIONAL_TOL):
            raise RationalFrequency(f"alpha={alpha!r} is rational after {len(quotients)} quotients")
        y = 1 / x
        a = math.floor(y)
        x = y - a
        quotients.append(a)
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        convergents.append((p, q))
    return ContinuedFraction(float(alpha), tuple(quotients), tuple(convergents))


def diophantine_estimate(cf, tau, q_max):
    if tau <= 2:
        raise ValueError("tau must exceed 2")
    qs = np.arange(1, int(q_max) + 1, dtype=float)
    vals = qs**tau * circle_dist(qs * cf.alpha)
    i = int(np.argmin(vals))
    return DiophantineEstimate(float(tau), float(vals[i]), i + 1)


def _orbit_positions(alpha, x0, ns, sign):
    # n*alpha is reduced mod 1 before adding the start so large n keeps full resolution
    return np.mod(x0 + sign * np.mod(ns * alpha, 1.0), 1.0)


def first_return_time(alpha, interval, min_time=1, direction="forward", cap=RETURN_SEARCH_CAP,
                      chunk=1 << 16):
    """Smallest n >= min_time with center(interval) +/- n*alpha inside interval."""
    if interval.length >= 1.0:
        return int(min_time)
    if interval.length <= 0:
        raise ValueError("empty interval")
    sign = 1.0 if direction == "forward" else -1.0
    x0 = interval.center
    n0 = int(min_time)
    while n0 <= cap:
        ns = np.arange(n0, min(n0 + chunk, cap + 1), dtype=float)
        hit = np.nonzero(interval.contains(_orbit_positions(alpha, x0, ns, sign)))[0]
        if hit.size:
            return int(ns[hit[0]])
        n0 += chunk
    raise SearchBudgetExceeded(f"no return within {cap} steps")


def first_overlap_time(alpha, centers, radius, min_time=1, direction="forward",
                       cap=RETURN_SEARCH_CAP, chunk=1 << 16):
    """Smallest n >= min_time such that the union of balls B(c, radius) meets its own n-translate.

    This is the minimum over all points of the union of their first return time to the union.
    """
    sign = 1.0 if direction == "forward" else -1.0
    c = np.asarray(centers, dtype=float)
    diffs = (c[None, :] - c[:, None]).ravel()
    n0 = int(min_time)
    while n0 <= cap:
        ns = np.arange(n0, min(n0 + chunk, cap + 1), dtype=float)
        shift = sign * np.mod(ns * alpha, 1.0)
        d = circle_dist(shift[:, None] - diffs[None, :])
        hit = np.nonzero((d < 2 * radius).any(axis=1))[0]
        if hit.size:
            return int(ns[hit[0]])
        n0 += chunk
    raise SearchBudgetExceeded(f"no overlap within {cap} steps")


def max_orbit_gap(alpha, m):
    """Largest gap of the point set {0, alpha, ..., m*alpha} on the circle."""
    pts = np.sort(np.mod(np.arange(m + 1) * alpha, 1.0))
    gaps = np.diff(np.concatenate([pts, [pts[0] + 1.0]]))
    return float(gaps.max())


def hitting_time_bound(alpha, cf, interval_length):
    """Smallest M such that every orbit x, x+alpha, ..., x+M*alpha meets every arc of the given length."""
    if not 0.0 < interval_length < 1.0:
        raise ValueError("interval_length must lie in (0, 1)")
    hi = None
    # three-gap structure: the first q_k + q_{k-1} points have largest gap ||q_{k-1} alpha||
    if cf is not None:
        for k in range(1, len(cf.convergents)):
            q_prev, q_k = cf.q(k - 1), cf.q(k)
            if circle_dist(q_prev * alpha) < interval_length:
                hi = q_k + q_prev - 1
                break
    if hi is None or max_orbit_gap(alpha, hi) >= interval_length:
        hi = 1
        while max_orbit_gap(alpha, hi) >= interval_length:
            hi *= 2
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if max_orbit_gap(alpha, mid) < interval_length:
            hi = mid
        else:
            lo = mid
    return hi


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
