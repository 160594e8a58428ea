"""Quantile coupling beneath the dominating value, and regeneration.

A block update realizes a k-step transition as the (1-u)-quantile of
the V-ordered row of P^k.  With u = exp(-E) tied to the innovation E
that drives the dominating jump, Markov's inequality turns the
certified mean bound E_x[V(X_k)] <= (1-eps_cap)*beta_star*z into an
almost-sure bound

    V(result) <= (1-eps_cap)*beta_star*z / u <= z * exp(E - a),

so the update can never overshoot the next dominating value.  The bound
is piecewise-constant in u, which is why it can be certified
exhaustively for a finite chain (`check_quantile_domination`).

Regeneration splits P^m on the level set C* = {V <= h_star} as
eps*nu + (1-eps)*R.  On the residual branch the whole k-step block is
realized as one composite quantile over R P^(k-m), keeping the same
Markov bound (eps_cap absorbs the 1/(1-eps) inflation); on the success
branch every tracked state collapses onto a shared nu-draw advanced
k-m single steps, which stays below the floor whenever the reachable
set of supp(nu) does.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .chains import ChainSpec, kernel_power_cdf
from .drift import DriftCertificate, taming_F
from .errors import CouplingError

__all__ = [
    "MinorizationCert",
    "BlockUpdate",
    "quantile_block_update",
    "compute_minorization",
    "find_small_order",
    "residual_rows_vord",
    "regenerative_block_update",
    "sigma_star_span",
    "SpanBeyondZero",
    "check_quantile_domination",
    "reachable_within",
]


@dataclass(frozen=True)
class MinorizationCert:
    """P^m(x, .) >= eps * nu(.) for every x in C*, nu supported on C*."""

    m: int
    eps: float
    nu: np.ndarray
    C_star: np.ndarray

    def validate(self, chain: ChainSpec, eps_cap: float | None = None) -> None:
        if self.m < 1:
            raise CouplingError("minorization order must be >= 1")
        if not (0.0 < self.eps <= 1.0):
            raise CouplingError(f"eps out of range: {self.eps}")
        if abs(float(self.nu.sum()) - 1.0) > 1e-9:
            raise CouplingError("nu does not sum to 1")
        in_c = np.zeros(chain.n, dtype=bool)
        in_c[self.C_star] = True
        if (self.nu[~in_c] != 0.0).any():
            raise CouplingError("nu has mass outside C*")
        if eps_cap is not None and self.eps > eps_cap:
            raise CouplingError(f"eps = {self.eps} exceeds eps_cap = {eps_cap}")
        Pm = np.linalg.matrix_power(chain.P, self.m)
        if (Pm[self.C_star] < self.eps * self.nu).any():
            raise CouplingError("entrywise minorization check failed")


@dataclass(frozen=True)
class BlockUpdate:
    """Randomness of one move block: value z, length k = F(z),
    innovation E, quantile uniform u = exp(-E), optional regeneration
    pair (bernoulli uniform, nu-draw uniform)."""

    z: float
    k: int
    E: float
    u: float
    regen: Optional[tuple] = None


def quantile_block_update(
    x: int, blk: BlockUpdate, chain: ChainSpec, cert: DriftCertificate
) -> int:
    """(1-u)-quantile of P^k(x, .) under the global V-order.

    Marginally exact (the map inverts the row CDF at a uniform) and
    almost surely dominated as described in the module docstring.
    """
    if chain.V[x] > blk.z:
        raise CouplingError(
            f"contract violation: V({x}) = {chain.V[x]} exceeds block value {blk.z}"
        )
    if blk.k != taming_F(blk.z, cert.taming):
        raise CouplingError(
            f"block length {blk.k} does not match F({blk.z})"
        )
    row = kernel_power_cdf(chain, blk.k, x)
    tail = 1.0 - blk.u
    idx = int(np.searchsorted(row, tail, side="left"))
    if idx >= chain.n:
        idx = chain.n - 1
    return int(chain.vorder[idx])


def compute_minorization(
    chain: ChainSpec, C_star: np.ndarray, m: int, eps_cap: float
) -> MinorizationCert:
    """Componentwise-minimum minorization of P^m over C*, restricted to C*.

    Restricting nu to C* costs mass but guarantees post-regeneration
    values stay at or below the floor.  eps is capped by eps_cap (the
    drift certificate reserved exactly that much inflation room) and
    shaved by ulps if rounding would break the entrywise check.
    """
    C_star = np.asarray(C_star, dtype=np.int64)
    if C_star.size == 0:
        raise CouplingError("C* is empty")
    if m < 1:
        raise CouplingError("m must be >= 1")
    Pm = np.linalg.matrix_power(chain.P, m)
    mu = Pm[C_star].min(axis=0)
    mask = np.zeros(chain.n, dtype=bool)
    mask[C_star] = True
    mu = np.where(mask, mu, 0.0)
    total = float(mu.sum())
    if total <= 0.0:
        raise CouplingError(f"C* is not m-small for this m (m = {m})")
    eps = min(total, eps_cap)
    nu = mu / total
    while (Pm[C_star] < eps * nu).any():
        eps *= 1.0 - 1e-12
    return MinorizationCert(m=m, eps=eps, nu=nu, C_star=C_star)


def find_small_order(
    chain: ChainSpec, C_star: np.ndarray, m_max: int
) -> int:
    """Smallest m <= m_max with nonzero restricted overlap."""
    if m_max < 1:
        raise CouplingError("m_max must be >= 1")
    C_star = np.asarray(C_star, dtype=np.int64)
    mask = np.zeros(chain.n, dtype=bool)
    mask[C_star] = True
    Pm = chain.P
    for m in range(1, m_max + 1):
        mu = Pm[C_star].min(axis=0)
        if float(mu[mask].sum()) > 0.0:
            return m
        Pm = Pm @ chain.P
    raise CouplingError(f"no small-set order <= {m_max}")


def residual_rows_vord(
    chain: ChainSpec, mcert: MinorizationCert, k: int
) -> np.ndarray:
    """Cumulative composite residual rows (V-ordered) for a k-step block.

    Row x (a V-order position inside C*) is the CDF of
    ((P^m - eps nu)/(1 - eps)) P^(k - m) from that state.  Valid only
    for k >= m.
    """
    m, eps = mcert.m, mcert.eps
    if k < m:
        raise CouplingError(f"block length {k} shorter than order {m}")
    pos = np.sort(chain.inv_vorder[mcert.C_star])
    nu_v = mcert.nu[chain.vorder]
    R = (chain.power_vord(m)[pos] - eps * nu_v) / (1.0 - eps)
    np.clip(R, 0.0, None, out=R)
    R /= R.sum(axis=1, keepdims=True)
    if k > m:
        R = R @ chain.power_vord(k - m)
    return np.ascontiguousarray(np.cumsum(R, axis=1))


def reachable_within(chain: ChainSpec, start: np.ndarray, steps: int) -> np.ndarray:
    """States reachable from `start` in at most `steps` transitions."""
    mask = np.zeros(chain.n, dtype=bool)
    mask[np.asarray(start, dtype=np.int64)] = True
    support = chain.P > 0.0
    for _ in range(steps):
        new = support[mask].any(axis=0) | mask
        if (new == mask).all():
            break
        mask = new
    return np.flatnonzero(mask)


def regenerative_block_update(
    S,
    blk: BlockUpdate,
    mcert: MinorizationCert,
    chain: ChainSpec,
    cert: DriftCertificate,
    step_us: np.ndarray | None = None,
) -> tuple[list, bool]:
    """Floor-block update with a shared regeneration attempt.

    Contract-checking reference implementation (the engine keeps a
    vectorized twin).  Returns (updated states, coalesced flag); the
    per-state marginal over the whole block is exactly P^k(x, .).
    """
    if blk.regen is None:
        raise CouplingError("regenerative update needs the regen uniforms")
    if blk.z != cert.h_star:
        raise CouplingError("regenerative updates only apply at floor blocks")
    if blk.k < mcert.m:
        raise CouplingError(
            f"block length {blk.k} below minorization order {mcert.m}"
        )
    in_c = np.zeros(chain.n, dtype=bool)
    in_c[mcert.C_star] = True
    S = [int(x) for x in S]
    for x in S:
        if not in_c[x]:
            raise CouplingError(f"state {x} outside C* at a floor block")
    r_u, n_u = blk.regen
    extra = blk.k - mcert.m
    if r_u < mcert.eps:
        nu_cum = np.cumsum(mcert.nu[chain.vorder])
        pos = int(np.searchsorted(nu_cum, n_u, side="left"))
        if extra:
            if step_us is None or len(step_us) < extra:
                raise CouplingError(f"need {extra} step uniforms")
            tails = 1.0 - np.asarray(step_us[:extra], dtype=np.float64)
            pos = int(
                _kernels.get_backend().walk_single(chain.cum_vord(1), pos, tails)
            )
        return [int(chain.vorder[pos])], True
    rows = residual_rows_vord(chain, mcert, blk.k)
    pos_of = {int(p): i for i, p in enumerate(np.sort(chain.inv_vorder[mcert.C_star]))}
    tail = 1.0 - blk.u
    out = []
    for x in S:
        row = rows[pos_of[int(chain.inv_vorder[x])]]
        idx = int(np.searchsorted(row, tail, side="left"))
        out.append(int(chain.vorder[min(idx, chain.n - 1)]))
    return sorted(set(out)), False


class SpanBeyondZero(CouplingError):
    """A composite span would cross absolute time zero."""


def sigma_star_span(grid, floor_index: int, m: int) -> tuple[int, list]:
    """Composite regeneration horizon from a floor block.

    Returns (steps, spanned move indices): the first move time at or
    after the floor whose offset is >= m, skipping the immediate next
    move per the j >= 2 indexing convention.  The spanned blocks are
    consumed as a single composite attempt.
    """
    offsets = 0
    i = 0
    while True:
        i += 1
        if floor_index + i > 0:
            raise SpanBeyondZero(
                f"span from {floor_index} reaches past move index 0"
            )
        offsets += grid.gap(floor_index + i - 1)
        if i >= 2 and offsets >= m:
            return offsets, [floor_index + t for t in range(i)]


def check_quantile_domination(
    chain: ChainSpec, cert: DriftCertificate, z: float
) -> list:
    """Exhaustive almost-sure domination check at block value z.

    The quantile map is piecewise constant in u, so checking every
    breakpoint of every admissible starting state certifies the almost
    sure statement.  Returns the list of violations (empty = certified).
    """
    k = taming_F(z, cert.taming)
    cum = chain.cum_vord(k)
    ev = chain.power_vord(k) @ chain.V_sorted
    mean_cap = (1.0 - cert.eps_cap) * cert.beta_star * z
    a = -math.log(cert.beta_star)
    z_ea = z * math.exp(-a)  # bound(u) = z_ea / u, decreasing in u
    violations = []
    for pos in range(chain.n):
        if chain.V_sorted[pos] > z:
            continue
        if ev[pos] > mean_cap:
            violations.append((int(chain.vorder[pos]), "mean", float(ev[pos])))
            continue
        row = cum[pos]
        prev_c = 0.0
        for i in range(chain.n):
            c = row[i]
            if c > prev_c:
                # piece with image V_sorted[i]: u in [1-c, 1-prev_c)
                u_sup = 1.0 - prev_c
                if chain.V_sorted[i] * u_sup > z_ea:
                    violations.append(
                        (int(chain.vorder[pos]), "sup", float(u_sup), float(chain.V_sorted[i]))
                    )
                u_in = math.nextafter(u_sup, 0.0)
                idx = min(int(np.searchsorted(row, 1.0 - u_in, side="left")), chain.n - 1)
                bound = z * math.exp(-math.log(u_in) - a)
                if chain.V_sorted[idx] > bound:
                    violations.append(
                        (int(chain.vorder[pos]), float(u_in), float(chain.V_sorted[idx]), float(bound))
                    )
                prev_c = c
            if c >= 1.0:
                break
    return violations
