"""Stationary dominating process: a paused, exponentiated workload queue.

The dominating value is ``D = h_star * exp(U)`` where U is the workload
of a queue with deterministic inter-arrival ``a = log(1/beta_star)`` and
unit-exponential service, observed at arrival epochs (Lindley recursion
``U' = max(U + E - a, 0)``).  Pausing: after a move at value z the next
move happens ``F(z)`` time units later, so D is constant between moves
and takes values in ``[h_star, inf)``.

The path is grown backward in move index from a stationary anchor at
absolute time 0, using the closed-form time reversal of the stationary
Lindley chain; innovations are then reconstructed so that replaying the
path forward reproduces it exactly, float for float.
"""

import math
from dataclasses import dataclass

import numpy as np

from .drift import TamingParams, taming_F
from .errors import LedgerConflictError, QueueError
from .rng import SLOT_INN, SLOT_REV, SLOT_STAT

__all__ = [
    "QueueParams",
    "EmbeddedPath",
    "sigma_root",
    "stationary_sample",
    "lindley_forward",
    "reversed_step",
    "reconstruct_innovation",
    "extend_grid_backward",
    "write_trace",
]


def sigma_root(a: float) -> float:
    """Unique sigma in (0,1) with sigma = exp(-a*(1-sigma)).

    Exists (and the queue is stable) only for a > 1.
    """
    if a <= 1.0:
        raise QueueError(
            f"unstable queue: inter-arrival a = {a} <= 1 "
            f"(requires beta_star < exp(-1))"
        )
    lo, hi = 0.0, 1.0
    # f(lo) > 0 > f(hi) for f(s) = exp(-a*(1-s)) - s once a > 1
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if math.exp(-a * (1.0 - mid)) - mid > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QueueParams:
    """Inter-arrival a, geometric root sigma, and the floor value."""

    a: float
    sigma: float
    h_star: float

    def __post_init__(self):
        if self.a <= 1.0:
            raise QueueError(f"unstable queue: a = {self.a} <= 1")
        if abs(self.sigma - math.exp(-self.a * (1.0 - self.sigma))) >= 1e-10:
            raise QueueError("sigma does not solve its fixed-point equation")

    @classmethod
    def from_certificate(cls, cert) -> "QueueParams":
        a = -math.log(cert.beta_star)
        return cls(a=a, sigma=sigma_root(a), h_star=cert.h_star)


def stationary_sample(q: QueueParams, u: float) -> float:
    """Inverse-CDF draw from the stationary workload law.

    Atom of mass 1-sigma at 0; tail P(U > x) = sigma * exp(-(1-sigma)x).
    """
    if u <= 1.0 - q.sigma:
        return 0.0
    return -math.log((1.0 - u) / q.sigma) / (1.0 - q.sigma)


def lindley_forward(U: float, E: float, a: float) -> float:
    """One workload step. Operation order (U + E) - a is part of the
    contract: innovation reconstruction inverts exactly this."""
    return max((U + E) - a, 0.0)


def _cdf0_unnormalized(w: float, sigma: float, a: float) -> float:
    # integral of exp(-(1-sigma)t) * (1 - exp(t-a)) over (0, w)
    s1 = 1.0 - sigma
    return -math.expm1(-s1 * w) / s1 - math.exp(-a) * math.expm1(sigma * w) / sigma


def reversed_step(U_next: float, q: QueueParams, u1: float, u2: float) -> float:
    """Draw U_prev from the exact time reversal of the stationary chain.

    For w' > 0: atom at 0 with probability exp(-sigma*(w'+a)), else
    density proportional to exp(sigma*w) on (0, w'+a), inverted in
    closed form at u2.  For w' = 0: atom at 0 with probability
    1 - exp(-a), else density proportional to
    exp(-(1-sigma)w)*(1-exp(w-a)) on (0, a), inverted numerically at u2
    (monotone CDF, bisection; deterministic in (u1, u2)).
    """
    sigma, a = q.sigma, q.a
    if U_next > 0.0:
        s = sigma * (U_next + a)
        if u1 <= math.exp(-s):
            return 0.0
        # (1/sigma) * log(1 + u2*(e^s - 1)), rearranged to avoid overflow
        return (s + math.log(u2 + (1.0 - u2) * math.exp(-s))) / sigma
    if u1 <= -math.expm1(-a):
        return 0.0
    total = _cdf0_unnormalized(a, sigma, a)
    target = u2 * total
    lo, hi = 0.0, a
    while hi - lo > 1e-15 * a:
        mid = 0.5 * (lo + hi)
        if _cdf0_unnormalized(mid, sigma, a) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def reconstruct_innovation(U_prev: float, U_next: float, a: float, u: float) -> float:
    """Innovation E replaying the transition: lindley_forward(U_prev, E, a)
    lands on U_next.

    Deterministic when U_next > 0; otherwise Exp(1) truncated to
    (0, a - U_prev], realized from the provided uniform.  The replay is
    exact whenever U_next lies in the float image of the forward map
    (always the case for forward-generated pairs); for other targets,
    which can arise from backward-grown workloads when U_next sits in a
    lower binade than U_prev + E, the nearest representable value is at
    most one ulp away and the nudge scan returns its best preimage.
    """
    if U_next > 0.0:
        E = (U_next + a) - U_prev
        if E <= 0.0:
            raise QueueError(
                f"inconsistent transition pair ({U_prev}, {U_next}): "
                f"requires a positive innovation"
            )
        best, best_err = E, abs(lindley_forward(U_prev, E, a) - U_next)
        if best_err == 0.0:
            return E
        lo = hi = E
        for _ in range(8):
            lo = math.nextafter(lo, -math.inf)
            hi = math.nextafter(hi, math.inf)
            for cand in (lo, hi):
                if cand <= 0.0:
                    continue
                err = abs(lindley_forward(U_prev, cand, a) - U_next)
                if err < best_err:
                    best, best_err = cand, err
                    if best_err == 0.0:
                        return best
        return best
    gap = a - U_prev
    if gap <= 0.0:
        raise QueueError(
            f"inconsistent transition pair ({U_prev}, 0): U_prev >= a"
        )
    E = -math.log1p(-u * -math.expm1(-gap))
    if E <= 0.0:  # u at the bottom of its range after rounding
        E = math.nextafter(0.0, 1.0)
    while lindley_forward(U_prev, E, a) != 0.0:
        E = math.nextafter(E, -math.inf)
    return E


class EmbeddedPath:
    """Dominating path at move times, grown backward from index 0.

    Entry j holds the workload U_j, value D_j = h_star*exp(U_j), the
    absolute move time sigma_j <= 0, the pause gap F(D_j), and the
    innovation E_j driving the step j -> j+1 (undefined at j = 0).
    Extension is append-only at the past end; existing entries never
    change.
    """

    def __init__(self, q: QueueParams, taming: TamingParams, ledger):
        self.q = q
        self.taming = taming
        u0 = ledger.u(0, SLOT_STAT)
        U0 = stationary_sample(q, u0)
        # storage index i corresponds to move index -i
        self._U = [U0]
        self._D = [q.h_star * math.exp(U0)]
        self._gap = [taming_F(self._D[0], taming)]
        self._sigma = [0]
        self._E = [math.nan]

    @property
    def min_index(self) -> int:
        return -(len(self._U) - 1)

    def U(self, j: int) -> float:
        return self._U[-j]

    def D(self, j: int) -> float:
        return self._D[-j]

    def gap(self, j: int) -> int:
        return self._gap[-j]

    def sigma(self, j: int) -> int:
        return self._sigma[-j]

    def E(self, j: int) -> float:
        return self._E[-j]

    def indices(self):
        return range(self.min_index, 1)


def extend_grid_backward(path: EmbeddedPath, target_move_index: int, ledger) -> EmbeddedPath:
    """Grow the path back to `target_move_index` (append-only).

    Each new index j consumes its own ledger slots: two reversal
    uniforms and one innovation uniform, all keyed by j, so the result
    is independent of the schedule by which the past was requested.
    """
    if target_move_index > 0:
        raise LedgerConflictError("target move index must be <= 0")
    q, taming = path.q, path.taming
    while path.min_index > target_move_index:
        j = path.min_index - 1
        if -j != len(path._U):
            raise LedgerConflictError(f"path extension out of order at {j}")
        u1, u2 = ledger.us(j, SLOT_REV, 2)
        U_prev = reversed_step(path.U(j + 1), q, u1, u2)
        E = reconstruct_innovation(U_prev, path.U(j + 1), q.a, ledger.u(j, SLOT_INN))
        D_prev = q.h_star * math.exp(U_prev)
        path._U.append(U_prev)
        path._D.append(D_prev)
        g = taming_F(D_prev, taming)
        path._gap.append(g)
        path._sigma.append(path.sigma(j + 1) - g)
        path._E.append(E)
    return path


def write_trace(path: EmbeddedPath, fh) -> None:
    """CSV trace, one row per move index, most negative first."""
    fh.write("move_index,sigma_time,U,D,E,gap\n")
    for j in range(path.min_index, 1):
        fh.write(
            f"{j},{path.sigma(j)},{path.U(j)!r},{path.D(j)!r},"
            f"{path.E(j)!r},{path.gap(j)}\n"
        )
