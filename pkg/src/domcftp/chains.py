"""Builtin target chains and the independent oracles used to test them.

Chains are dense row-stochastic matrices with a per-state value
function V >= 1.  The two builtins exercise the two coalescence
mechanisms: `build_poly_rw` is a polynomially tamed random walk whose
tracked set shrinks under shared-quantile coupling, and
`build_regen_chain` carries regeneration structure (order 1 directly in
the kernel, order 2 through a two-step composition).
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DriftError

__all__ = [
    "ChainSpec",
    "RegenInfo",
    "build_poly_rw",
    "build_regen_chain",
    "exact_stationary",
    "stationary_direct",
    "kernel_power_cdf",
    "write_chain_file",
    "read_chain_file",
]

_ROW_TOL = 1e-12


@dataclass
class ChainSpec:
    """Finite kernel + value function, with cached V-order structure."""

    n: int
    P: np.ndarray
    V: np.ndarray
    label: str = "chain"
    _cum_cache: dict = field(default_factory=dict, repr=False)
    _pow2: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.P = np.ascontiguousarray(self.P, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.n == 0:
            raise DriftError("empty state space")
        if self.P.shape != (self.n, self.n):
            raise DriftError(f"kernel shape {self.P.shape} != ({self.n}, {self.n})")
        bad = np.abs(self.P.sum(axis=1) - 1.0) >= _ROW_TOL
        if bad.any():
            raise DriftError(f"rows {np.flatnonzero(bad)[:5]} do not sum to 1")
        if (self.P < 0).any():
            raise DriftError("negative kernel entries")
        if (self.V < 1.0).any():
            raise DriftError("V must be >= 1 everywhere")
        # V-order with ties broken by ascending state index, fixed globally
        self.vorder = np.lexsort((np.arange(self.n), self.V)).astype(np.int64)
        self.V_sorted = self.V[self.vorder]
        self.P_vord = np.ascontiguousarray(self.P[self.vorder][:, self.vorder])
        self.inv_vorder = np.empty(self.n, dtype=np.int64)
        self.inv_vorder[self.vorder] = np.arange(self.n)

    def power_vord(self, k: int) -> np.ndarray:
        """P^k in V-ordered indexing, by binary powers."""
        if k < 1:
            raise DriftError(f"matrix power needs k >= 1, got {k}")
        if not self._pow2:
            self._pow2.append(self.P_vord)
        while (1 << len(self._pow2)) <= k:
            self._pow2.append(self._pow2[-1] @ self._pow2[-1])
        out = None
        bit = 0
        kk = k
        while kk:
            if kk & 1:
                out = self._pow2[bit] if out is None else out @ self._pow2[bit]
            kk >>= 1
            bit += 1
        return out

    def cum_vord(self, k: int) -> np.ndarray:
        """Cumulative rows of P^k in V-order (cached per k)."""
        hit = self._cum_cache.get(k)
        if hit is None:
            hit = np.ascontiguousarray(np.cumsum(self.power_vord(k), axis=1))
            self._cum_cache[k] = hit
        return hit


def kernel_power_cdf(chain: ChainSpec, k: int, x: int) -> np.ndarray:
    """V-ordered cumulative row of P^k(x, .) for the original state x."""
    return chain.cum_vord(k)[chain.inv_vorder[x]]


class RegenInfo(NamedTuple):
    """Construction-time regeneration knowledge for a builtin chain."""

    m: int
    eps: float
    nu: np.ndarray


def build_poly_rw(
    N: int = 1024,
    delta: float = 0.5,
    c_down: float = 0.6,
    c_up: float = 0.4,
) -> ChainSpec:
    """Random walk on {0..N} with polynomially shrinking jumps.

    V(x) = x + 1.  From x the walk jumps down or up by
    J(x) = max(1, ceil(x**(1-delta))) (truncated at the ends) and holds
    otherwise, so the per-step drift is -(c_down - c_up)*J(x) away from
    the boundary and taming with the same delta contracts V
    geometrically.  J(0) is pinned to 1 to keep the chain irreducible.
    """
    if N < 64:
        raise DriftError(f"N must be >= 64, got {N}")
    if not (0.0 < delta < 1.0):
        raise DriftError(f"delta must lie in (0,1), got {delta}")
    if not (c_down > c_up > 0.0):
        raise DriftError("need c_down > c_up > 0")
    if c_down + c_up > 1.0:
        raise DriftError("need c_down + c_up <= 1")
    n = N + 1
    P = np.zeros((n, n))
    hold = 1.0 - c_down - c_up
    for x in range(n):
        J = max(1, math.ceil(x ** (1.0 - delta)))
        P[x, max(x - J, 0)] += c_down
        P[x, min(x + J, N)] += c_up
        P[x, x] += hold
    V = np.arange(1, n + 1, dtype=np.float64)
    label = f"poly_rw(N={N}, delta={delta}, c_down={c_down}, c_up={c_up})"
    return ChainSpec(n=n, P=P, V=V, label=label)


def build_regen_chain(
    N: int = 31,
    eps_built: float = 0.2,
    m_mode: int = 1,
) -> tuple[ChainSpec, RegenInfo]:
    """Chain with built-in regeneration structure on states {0..N-1}.

    m_mode 1: P = eps_built * (1 nu^T) + (1 - eps_built) * Q with nu on
    the four lowest states, so every row dominates eps_built * nu and
    the level set of any height is 1-small.  Q mixes a strong downward
    jump with a thin uniform layer that keeps every stationary mass
    bounded away from zero (so per-state frequency tests are
    well-conditioned).

    m_mode 2: regeneration only appears in the two-step composition.
    Single-step rows fan into {0, 1} but two designated rows each miss
    one of those targets, so no order-1 minorization exists while
    P^2(x, 0) is uniformly large.  Combined with a strongly contracting
    one-step drift this keeps the certified floor at the taming
    threshold, where the pause length is 1.
    """
    if N > 64:
        raise DriftError(f"N must be <= 64, got {N}")
    if m_mode == 1:
        if not (0.0 < eps_built < 1.0):
            raise DriftError(f"eps_built must lie in (0,1), got {eps_built}")
        if N < 8:
            raise DriftError("m_mode 1 needs N >= 8")
        n = N
        nu = np.zeros(n)
        nu[:4] = (0.70, 0.20, 0.07, 0.03)
        Q = np.zeros((n, n))
        unif = 0.03 / n
        for x in range(n):
            Q[x, :] += unif
            if x == 0:
                Q[x, 0] += 0.94
                Q[x, min(1, n - 1)] += 0.03
            else:
                Q[x, max(x - 8, 0)] += 0.84
                Q[x, min(x + 1, n - 1)] += 0.03
                Q[x, x] += 0.10
        P = eps_built * np.tile(nu, (n, 1)) + (1.0 - eps_built) * Q
        info = RegenInfo(m=1, eps=eps_built, nu=nu.copy())
    elif m_mode == 2:
        if not (0.0 < eps_built <= 0.8):
            raise DriftError(f"m_mode 2 supports eps_built in (0, 0.8], got {eps_built}")
        if N < 10:
            raise DriftError("m_mode 2 needs N >= 10")
        n = N
        zm = n - 4  # the one row that never hits state 0
        P = np.zeros((n, n))
        P[0, 0], P[0, 1], P[0, 2] = 0.97, 0.02, 0.01
        P[1, 0], P[1, 2] = 0.96, 0.04  # never hits state 1
        P[zm, 1], P[zm, zm + 1] = 0.995, 0.005
        for x in range(2, n):
            if x == zm:
                continue
            P[x, 0] += 0.96
            P[x, 1] += 0.02
            P[x, min(x + 1, n - 1)] += 0.02
        nu = np.zeros(n)
        nu[0] = 1.0
        info = RegenInfo(m=2, eps=eps_built, nu=nu)
    else:
        raise DriftError(f"m_mode must be 1 or 2, got {m_mode}")
    V = np.arange(1, n + 1, dtype=np.float64)
    label = f"regen(N={N}, eps_built={eps_built}, m_mode={m_mode})"
    return ChainSpec(n=n, P=P, V=V, label=label), info


def exact_stationary(chain: ChainSpec, max_iter: int = 10**6) -> np.ndarray:
    """Stationary distribution by power iteration with Aitken steps.

    Converges to residual ||pi P - pi||_inf < 1e-13 or raises.  Kept
    independent of the sampler code path on purpose: it is the oracle
    every end-to-end frequency test compares against.
    """
    n = chain.n
    P = chain.P
    v = np.full(n, 1.0 / n)
    prev = [v]
    it = 0
    while it < max_iter:
        v = v @ P
        s = v.sum()
        if not math.isfinite(s) or s <= 0:
            raise DriftError("power iteration diverged")
        v /= s
        it += 1
        if np.abs(v @ P - v).max() < 1e-13:
            return v
        prev.append(v)
        if len(prev) == 3:
            v0, v1, v2 = prev
            d1 = v1 - v0
            d2 = v2 - 2.0 * v1 + v0
            safe = np.abs(d2) > 1e-300
            acc = v2.copy()
            acc[safe] = v2[safe] - (v2[safe] - v1[safe]) ** 2 / d2[safe]
            if (acc >= 0).all() and acc.sum() > 0:
                acc /= acc.sum()
                if np.abs(acc @ P - acc).max() < np.abs(v2 @ P - v2).max():
                    v = acc
            prev = [v]
    raise DriftError(f"power iteration failed to converge in {max_iter} iterations")


def stationary_direct(chain: ChainSpec) -> np.ndarray:
    """Stationary distribution by direct linear solve (cross-check oracle)."""
    n = chain.n
    A = chain.P.T - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(A, rhs)


def write_chain_file(chain: ChainSpec, fh) -> None:
    """Plain-text kernel format: n, then n kernel rows, then V."""
    fh.write(f"{chain.n}\n")
    for row in chain.P:
        fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    fh.write(" ".join(repr(float(x)) for x in chain.V) + "\n")


def read_chain_file(fh, label: str = "file") -> ChainSpec:
    tokens = fh.read().split()
    if not tokens:
        raise DriftError("empty chain file")
    n = int(tokens[0])
    need = 1 + n * n + n
    if len(tokens) != need:
        raise DriftError(f"chain file has {len(tokens)} tokens, expected {need}")
    vals = np.array([float(t) for t in tokens[1:]], dtype=np.float64)
    P = vals[: n * n].reshape(n, n)
    V = vals[n * n :]
    return ChainSpec(n=n, P=P, V=V, label=label)
