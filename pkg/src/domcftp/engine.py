"""Dominated coupling-from-the-past over a finite chain.

One run grows the dominating path backward move by move (doubling the
horizon until coalescence), initializes the tracked set to every state
whose value sits below the dominating value at the horizon, and evolves
the whole set forward through shared-randomness block updates.  When
the set is a single state at time 0, that state is an exact draw from
the stationary law.

All randomness is addressed through the ledger, so the realized path
and every block map are pure functions of the seed: extending the
horizon can only prepend history, never rewrite it, which is the
correctness core of coupling-from-the-past.

Work happens in V-ordered indexing: states are relabeled so V is
nondecreasing, making every level set a prefix and the domination check
a comparison of one integer against a searchsorted rank.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .chains import ChainSpec
from .coupling import (
    MinorizationCert,
    SpanBeyondZero,
    compute_minorization,
    reachable_within,
    residual_rows_vord,
    sigma_star_span,
)
from .dominating import EmbeddedPath, QueueParams, extend_grid_backward
from .drift import DriftCertificate, taming_F
from .errors import CouplingError, DominationError, NoCoalescenceError
from .rng import MASK64, SLOT_NU, SLOT_Q, SLOT_R, SLOT_STEP

__all__ = [
    "RandomnessLedger",
    "PerfectSample",
    "SamplerWorkspace",
    "run_perfect_sample",
    "evolve_forward_set",
    "check_domination",
]


class RandomnessLedger:
    """Move-indexed, write-once view of a run's randomness.

    Values are derived on demand from (seed, move index, slot), so the
    ledger is immutable by construction: the same address always holds
    the same number, no matter when or how often it is read.
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._backend = _kernels.get_backend()

    def u(self, index: int, slot: int) -> float:
        return self._backend.slot_u(self.seed, index, slot)

    def us(self, index: int, slot: int, count: int) -> np.ndarray:
        return self._backend.stream_uniforms(self.seed, index, slot, count)


@dataclass(frozen=True)
class PerfectSample:
    """One exact draw plus run diagnostics."""

    state: int
    T_used: int
    regen_events: int
    domination_violations: int
    seed: int
    depth: int  # total chain steps spanned by the final pass


def check_domination(S, D_value: float, V: np.ndarray) -> np.ndarray:
    """States (original indexing) whose value exceeds the dominator."""
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        return S
    return S[V[S] > D_value]


class SamplerWorkspace:
    """Shared, read-only preparation for many runs on one chain.

    Holds the V-ordered kernel powers, the regeneration residual rows
    for floor blocks, and (in sigma* mode) a cache of composite-span
    minorizations keyed by realized span length.
    """

    def __init__(
        self,
        chain: ChainSpec,
        cert: DriftCertificate,
        mcert: Optional[MinorizationCert] = None,
        mode: str = "standard",
        max_T: int = 2**20,
    ):
        if mode not in ("standard", "sigma_star"):
            raise CouplingError(f"unknown mode: {mode}")
        cert.validate()
        self.chain = chain
        self.cert = cert
        self.mcert = mcert
        self.mode = mode
        self.max_T = max_T
        self.qp = QueueParams.from_certificate(cert)
        self.k_floor = taming_F(cert.h_star, cert.taming)
        # prefix length of C* = {V <= h_star} in V-ordered indexing
        self.pl = int(np.searchsorted(chain.V_sorted, cert.h_star, side="right"))
        self.regen_active = False
        self.regen_disabled_reason = None
        self.span_B = None
        self._span_cache: dict = {}

        if mode == "sigma_star":
            if mcert is None:
                raise CouplingError("sigma_star mode needs a minorization certificate")
            if mcert.m <= self.k_floor:
                raise CouplingError(
                    f"sigma_star mode expects m > F(h*) = {self.k_floor}, got m = {mcert.m}"
                )
            self.span_B = max(2, mcert.m)

        if mcert is not None:
            mcert.validate(chain, eps_cap=cert.eps_cap)
            expect = set(int(x) for x in chain.vorder[: self.pl])
            if set(int(x) for x in mcert.C_star) != expect:
                raise CouplingError("minorization C* is not the level set {V <= h*}")
            self.nu_cum_vord = np.cumsum(mcert.nu[chain.vorder])
            if mode == "standard":
                if mcert.m > self.k_floor:
                    raise CouplingError(
                        f"minorization order {mcert.m} exceeds the floor pause "
                        f"F(h*) = {self.k_floor}; use sigma_star mode"
                    )
                support = np.flatnonzero(mcert.nu > 0.0)
                reach = reachable_within(chain, support, self.k_floor - mcert.m)
                if (chain.V[reach] <= cert.h_star).all():
                    self.regen_active = True
                    self.resid_floor = residual_rows_vord(chain, mcert, self.k_floor)
                else:
                    self.regen_disabled_reason = (
                        "states reachable from supp(nu) within F(h*) - m steps "
                        "escape {V <= h*}; falling back to set tracking"
                    )

    # -- span minorization (sigma* mode) ---------------------------------

    def _span_cert(self, steps: int):
        hit = self._span_cache.get(steps, "miss")
        if hit != "miss":
            return hit
        try:
            mc = compute_minorization(
                self.chain, self.mcert.C_star, steps, self.cert.eps_cap
            )
            rows = residual_rows_vord(self.chain, mc, steps)
            entry = (mc.eps, np.cumsum(mc.nu[self.chain.vorder]), rows)
        except CouplingError:
            entry = None
        self._span_cache[steps] = entry
        return entry

    # -- forward evolution ------------------------------------------------

    def _rank(self, D: float) -> int:
        return int(np.searchsorted(self.chain.V_sorted, D, side="right"))

    def evolve(self, path, ledger, S, from_index, collect_trace=False):
        """Apply every block from `from_index` up to time 0.

        S holds V-order positions, sorted unique.  Returns
        (S, regen_events, violations, trace of |S| per block).
        """
        kern = _kernels.get_backend()
        chain, cert = self.chain, self.cert
        sigma_mode = self.mode == "sigma_star"
        regen_events = 0
        violations = 0
        trace = [] if collect_trace else None
        j = from_index
        while j < 0:
            U_j = path.U(j)
            end_j = j + 1
            coalesced_here = False
            if U_j == 0.0 and (self.regen_active or sigma_mode):
                if S[-1] >= self.pl:
                    raise DominationError(
                        f"tracked set escapes C* at floor block {j}"
                    )
            if U_j == 0.0 and self.regen_active:
                r_u = ledger.u(j, SLOT_R)
                if r_u < self.mcert.eps:
                    pos = int(
                        np.searchsorted(self.nu_cum_vord, ledger.u(j, SLOT_NU), side="left")
                    )
                    pos = min(pos, chain.n - 1)
                    extra = self.k_floor - self.mcert.m
                    if extra:
                        tails = 1.0 - ledger.us(j, SLOT_STEP, extra)
                        pos = int(kern.walk_single(chain.cum_vord(1), pos, tails))
                    S = np.array([pos], dtype=np.int64)
                    regen_events += 1
                    coalesced_here = True
                else:
                    tail = 1.0 - math.exp(-path.E(j))
                    S = np.unique(kern.map_rows(self.resid_floor, S, tail))
            elif (
                sigma_mode
                and U_j == 0.0
                and j % self.span_B == 0
            ):
                span = None
                try:
                    steps, idxs = sigma_star_span(path, j, self.mcert.m)
                    span = self._span_cert(steps)
                except SpanBeyondZero:
                    span = None
                if span is None:
                    tail = 1.0 - math.exp(-path.E(j))
                    S = np.unique(kern.map_rows(chain.cum_vord(path.gap(j)), S, tail))
                else:
                    eps_s, nu_cum_s, resid_s = span
                    r_u = ledger.u(j, SLOT_R)
                    if r_u < eps_s:
                        pos = int(
                            np.searchsorted(nu_cum_s, ledger.u(j, SLOT_NU), side="left")
                        )
                        S = np.array([min(pos, chain.n - 1)], dtype=np.int64)
                        regen_events += 1
                        coalesced_here = True
                    else:
                        tail_q = 1.0 - ledger.u(j, SLOT_Q)
                        S = np.unique(kern.map_rows(resid_s, S, tail_q))
                    end_j = j + len(idxs)
            else:
                tail = 1.0 - math.exp(-path.E(j))
                S = np.unique(kern.map_rows(chain.cum_vord(path.gap(j)), S, tail))
            # inductive domination at the block (or span) end
            r_next = self._rank(path.D(end_j))
            if S[-1] >= r_next:
                if sigma_mode:
                    violations += 1
                else:
                    bad = self.chain.vorder[S[S >= r_next]]
                    raise DominationError(
                        f"domination failed after block {j}: states {bad.tolist()} "
                        f"exceed D = {path.D(end_j)} (implementation bug)"
                    )
            if collect_trace:
                trace.append(int(S.size))
            _ = coalesced_here
            j = end_j
        return S, regen_events, violations, trace

    # -- one full run -------------------------------------------------------

    def run(self, seed: int, schedule: str = "doubling") -> PerfectSample:
        if schedule not in ("doubling", "increment"):
            raise CouplingError(f"unknown backoff schedule: {schedule}")
        ledger = RandomnessLedger(seed)
        path = EmbeddedPath(self.qp, self.cert.taming, ledger)
        T = 1
        while True:
            extend_grid_backward(path, -T, ledger)
            S0 = np.arange(self._rank(path.D(-T)), dtype=np.int64)
            S, regen_events, violations, _ = self.evolve(path, ledger, S0, -T)
            depth = -path.sigma(-T)
            if S.size == 1:
                return PerfectSample(
                    state=int(self.chain.vorder[S[0]]),
                    T_used=T,
                    regen_events=regen_events,
                    domination_violations=violations,
                    seed=seed,
                    depth=depth,
                )
            if depth >= self.max_T:
                raise NoCoalescenceError(
                    f"no coalescence within {self.max_T} steps "
                    f"(horizon T = {T} blocks, |S| = {S.size})"
                )
            T = T * 2 if schedule == "doubling" else T + 1


def run_perfect_sample(
    chain: ChainSpec,
    cert: DriftCertificate,
    mcert: Optional[MinorizationCert] = None,
    seed: int = 0,
    mode: str = "standard",
    max_T: int = 2**20,
    schedule: str = "doubling",
) -> PerfectSample:
    """Convenience wrapper: one exact draw with a fresh workspace."""
    ws = SamplerWorkspace(chain, cert, mcert=mcert, mode=mode, max_T=max_T)
    return ws.run(seed, schedule=schedule)


def evolve_forward_set(
    S,
    path,
    ledger,
    from_index: int,
    chain: ChainSpec,
    cert: DriftCertificate,
    mcert: Optional[MinorizationCert] = None,
    mode: str = "standard",
):
    """Evolve a set of original-index states from `from_index` to 0.

    Returns (states at 0 in original indexing, |S| trace per block).
    Domination is asserted after every block; in standard mode a
    violation is fatal.
    """
    ws = SamplerWorkspace(chain, cert, mcert=mcert, mode=mode)
    pos = np.unique(chain.inv_vorder[np.asarray(S, dtype=np.int64)])
    if pos.size and chain.V_sorted[pos[-1]] > path.D(from_index):
        raise DominationError("initial set not dominated at the horizon")
    out, _, _, trace = ws.evolve(path, ledger, pos, from_index, collect_trace=True)
    return chain.vorder[out], trace
