"""Singular configuration potentials on (-1, 1).

Two families:

``HardLog(c1, lambda_w)``
    ``W(r) = -c1 ln(1 - r^2) - lambda_w r^2 / 2 + c0``, blowing up at the pure
    states; ``c0`` is chosen so that ``min W = 0``.
``DoubleLog(lam)``
    ``W(r) = (1 + r) ln(1 + r) + (1 - r) ln(1 - r) - lam r^2 / 2``, bounded on
    ``[-1, 1]``.  Accepted by the solver, but a bound on ``W`` gives no
    separation from +-1 with it.

The semiconvexity constant ``lam`` (``W'' >= -lam``) is computed from samples,
never taken from the user.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PureStateError

SEMICONVEXITY_MARGIN = 1e-9
GUARD_BAND = 1e-14
_LAM_SAMPLES = 10001


def chebyshev_samples(n):
    """``n`` Chebyshev points of the first kind on (-1, 1), ascending."""
    k = np.arange(n, 0, -1)
    return np.cos((2 * k - 1) * np.pi / (2 * n))


def _check_domain(r):
    r = np.asarray(r, dtype=float)
    bad = ~(np.abs(r) < 1.0)
    if np.any(bad):
        witness = r[bad].ravel()[0] if r.ndim else float(r)
        raise PureStateError(f"pure state reached: potential evaluated at r = {witness!r}")
    return r


class Potential:
    """Base class; subclasses provide ``_W``, ``_dW`` and ``_d2W``."""

    family = "abstract"
    satisfies_W1 = False

    def W(self, r):
        return self._W(_check_domain(r))

    def dW(self, r):
        return self._dW(_check_domain(r))

    def d2W(self, r):
        return self._d2W(_check_domain(r))

    @property
    def W0(self):
        return float(self.W(0.0))

    def _semiconvexity(self):
        r = np.concatenate([chebyshev_samples(_LAM_SAMPLES), [0.0]])
        return max(0.0, float(np.max(-self._d2W(r)))) + SEMICONVEXITY_MARGIN


@dataclass(frozen=True)
class HardLog(Potential):
    c1: float = 1.0
    lambda_w: float = 0.0
    c0: float = field(init=False)
    lam: float = field(init=False)

    family = "hardlog"
    satisfies_W1 = True

    def __post_init__(self):
        if not self.c1 > 0:
            raise ValueError("hardlog barrier coefficient c1 must be positive")
        if not self.lambda_w >= 0:
            raise ValueError("hardlog well coefficient lambda_w must be >= 0")
        object.__setattr__(self, "c0", 0.0)
        object.__setattr__(self, "c0", -float(self._W(np.asarray(self.argmin))))
        object.__setattr__(self, "lam", self._semiconvexity())

    @property
    def argmin(self):
        """Nonnegative minimizer of ``W`` (``W`` is even)."""
        if self.lambda_w <= 2.0 * self.c1:
            return 0.0
        return float(np.sqrt(1.0 - 2.0 * self.c1 / self.lambda_w))

    def _W(self, r):
        return (-self.c1 * (np.log1p(-r) + np.log1p(r))
                - 0.5 * self.lambda_w * r * r + self.c0)

    def _dW(self, r):
        return 2.0 * self.c1 * r / ((1.0 - r) * (1.0 + r)) - self.lambda_w * r

    def _d2W(self, r):
        q = (1.0 - r) * (1.0 + r)
        return 2.0 * self.c1 * (1.0 + r * r) / (q * q) - self.lambda_w

    def W_from_gap(self, s):
        """``W(1 - s)`` evaluated without forming ``1 - s`` (accurate near 1)."""
        s = np.asarray(s, dtype=float)
        return (-self.c1 * (np.log(s) + np.log(2.0 - s))
                - 0.5 * self.lambda_w * (1.0 - s) ** 2 + self.c0)


@dataclass(frozen=True)
class DoubleLog(Potential):
    lam_param: float = 1.0
    lam: float = field(init=False)

    family = "doublelog"
    satisfies_W1 = False

    def __post_init__(self):
        if not np.isfinite(self.lam_param):
            raise ValueError("doublelog lambda must be finite")
        object.__setattr__(self, "lam", self._semiconvexity())

    def _W(self, r):
        return ((1.0 + r) * np.log1p(r) + (1.0 - r) * np.log1p(-r)
                - 0.5 * self.lam_param * r * r)

    def _dW(self, r):
        return np.log1p(r) - np.log1p(-r) - self.lam_param * r

    def _d2W(self, r):
        return 2.0 / ((1.0 - r) * (1.0 + r)) - self.lam_param


def make_potential(family, c1=1.0, lambda_w=0.0, lam=1.0):
    if family == "hardlog":
        return HardLog(float(c1), float(lambda_w))
    if family == "doublelog":
        return DoubleLog(float(lam))
    raise ValueError(f"unknown potential family {family!r}")


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    min_slack: float
    witness: float
    samples: int
    lam: float

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {status} min_slack={self.min_slack!r} "
                f"witness={self.witness!r} samples={self.samples} lambda={self.lam!r}")


def check_W2(pot: Potential, sample_count=10_000, lam=None, tol=1e-12):
    """Check ``W''(r) + lam >= -tol`` on Chebyshev samples."""
    if sample_count < 100:
        raise ValueError("check_W2 needs at least 100 samples")
    lam = pot.lam if lam is None else float(lam)
    r = chebyshev_samples(sample_count)
    slack = pot.d2W(r) + lam
    i = int(np.argmin(slack))
    return CheckReport("W2", bool(slack[i] >= -tol), float(slack[i]), float(r[i]),
                       sample_count, lam)


def check_W25(pot: Potential, sample_count=10_000, lam=None, tol=1e-10):
    """Check ``W'(r) r >= W(r) - lam r^2 / 2 - W(0)`` on Chebyshev samples."""
    if sample_count < 100:
        raise ValueError("check_W25 needs at least 100 samples")
    lam = pot.lam if lam is None else float(lam)
    r = chebyshev_samples(sample_count)
    slack = w25_slack(pot, r, lam)
    i = int(np.argmin(slack))
    return CheckReport("W2.5", bool(slack[i] >= -tol), float(slack[i]), float(r[i]),
                       sample_count, lam)


def w25_slack(pot, r, lam=None):
    lam = pot.lam if lam is None else lam
    r = np.asarray(r, dtype=float)
    return pot.dW(r) * r - pot.W(r) + 0.5 * lam * r * r + pot.W0


def separation_radius(pot: Potential, W_max):
    """Largest ``delta`` with ``W(r) <= W_max  =>  |r| <= 1 - delta``.

    Bisection on the gap ``s = 1 - r`` along the increasing outer branch,
    carried to floating-point resolution.
    """
    if not pot.satisfies_W1:
        raise ValueError(
            f"{pot.family} potential is bounded on [-1, 1]; separation radius "
            "is undefined via a bound on W"
        )
    W_max = float(W_max)
    if not np.isfinite(W_max):
        raise ValueError("W_max must be finite: an unbounded potential gives no separation")
    r_star = pot.argmin
    w_min = float(pot.W(r_star))
    if W_max < w_min:
        raise ValueError(f"W_max = {W_max} is below min W = {w_min}")
    hi = 1.0 - r_star
    lo = 0.5 * hi
    while pot.W_from_gap(lo) <= W_max:
        if lo < 1e-300:
            raise ValueError(f"W_max = {W_max} exceeds the representable range of W")
        lo *= 0.5
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pot.W_from_gap(mid) > W_max:
            lo = mid
        else:
            hi = mid
    return lo
