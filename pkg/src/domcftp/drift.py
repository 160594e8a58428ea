"""Drift-condition certification.

Certifies, for a concrete finite kernel, every scalar hypothesis the
sampler relies on: the one-step weak drift ``PV <= V + b on C``, the
geometric drift of the chain subsampled by the taming function
``F(z) = ceil(lam * z**delta)`` (``1`` at or below the threshold
``d_prime``), the admissible contraction target ``beta_star``, and the
floor ``h_star`` above which

    beta*z + b_prime + b*(lam+1)*z**delta  <=  (1 - eps_cap)*beta_star*z.

``eps_cap`` reserves multiplicative room so that a residual kernel
inflated by 1/(1-eps) after regeneration splitting still satisfies the
same bound; with ``eps_cap = 0`` the inequality is the plain one.

Everything here is numerical over the full (truncated) state space:
maxima include boundary rows, so truncation can only make certificates
more conservative.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DriftError

__all__ = [
    "TamingParams",
    "DriftCertificate",
    "taming_F",
    "validate_rate_condition",
    "select_beta_star",
    "compute_h_star",
    "certify_weak_drift",
    "certify_subsampled_drift",
    "certify_chain",
]

_H_STAR_REL_TOL = 1e-9

# Keys of the flat serialized block, in emission order.
_CERT_KEYS = (
    "beta",
    "b",
    "b_prime",
    "d_prime",
    "lambda",
    "delta",
    "beta_star",
    "eps_cap",
    "h_star",
)


@dataclass(frozen=True)
class TamingParams:
    """Taming function parameters (scale, exponent, threshold)."""

    lam: float
    delta: float
    d_prime: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise DriftError(f"delta must lie in (0,1), got {self.delta}")
        if self.lam <= 0.0:
            raise DriftError(f"lambda must be positive, got {self.lam}")
        if self.d_prime < 1.0:
            raise DriftError(f"d_prime must be >= 1, got {self.d_prime}")


def taming_F(z: float, t: TamingParams) -> int:
    """Subsampling interval for the value ``z`` (total: every z >= 0)."""
    if z < 0:
        raise DriftError(f"taming_F needs z >= 0, got {z}")
    if z <= t.d_prime:
        return 1
    return int(math.ceil(t.lam * z**t.delta))


def validate_rate_condition(beta: float, delta: float) -> bool:
    """Strict check of log(beta) < log(1-delta)/delta."""
    if not (0.0 < beta < 1.0):
        raise DriftError(f"beta must lie in (0,1), got {beta}")
    if not (0.0 < delta < 1.0):
        raise DriftError(f"delta must lie in (0,1), got {delta}")
    return math.log(beta) < math.log1p(-delta) / delta


def select_beta_star(beta: float, delta: float) -> float:
    """Log-midpoint of the admissible interval for beta_star.

    The midpoint rule is a convention: any point strictly between beta
    and (1-delta)**(1/delta) works, but the midpoint balances queue
    stability (small beta_star) against floor blow-up (beta_star near
    beta).
    """
    if not validate_rate_condition(beta, delta):
        raise DriftError(
            f"rate condition violated: log({beta}) >= log(1-{delta})/{delta}"
        )
    return math.exp(0.5 * (math.log(beta) + math.log1p(-delta) / delta))


def compute_h_star(
    beta: float,
    beta_star: float,
    b: float,
    b_prime: float,
    t: TamingParams,
    eps_cap: float = 0.0,
) -> float:
    """Smallest admissible floor: max(d_prime, largest root of g).

    ``g(z) = (1-eps_cap)*beta_star*z - beta*z - b*(lam+1)*z**delta - b_prime``
    crosses zero once from below on (0, inf); bisection with bracket
    doubling refines the crossing to 1e-9 relative and the upper bracket
    end is returned so ``g(h_star) >= 0`` holds in float arithmetic.
    """
    margin = (1.0 - eps_cap) * beta_star - beta
    if margin <= 0.0:
        raise DriftError(
            f"no admissible h*: (1-eps_cap)*beta_star = "
            f"{(1.0 - eps_cap) * beta_star} does not exceed beta = {beta}"
        )
    if b < 0.0 or b_prime < 0.0:
        raise DriftError("b and b_prime must be nonnegative")

    coeff = b * (t.lam + 1.0)

    def g(z: float) -> float:
        return margin * z - coeff * z**t.delta - b_prime

    if g(t.d_prime) >= 0.0:
        return t.d_prime
    lo = t.d_prime
    hi = max(t.d_prime, 1.0)
    for _ in range(400):
        hi *= 2.0
        if g(hi) > 0.0:
            break
    else:
        raise DriftError("h* bracket search failed to find a sign change")
    while hi - lo > _H_STAR_REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def certify_weak_drift(chain) -> tuple[float, np.ndarray]:
    """Pointwise weak drift: returns (b, C) with PV <= V + b*1_C.

    C is the set of states where the one-step expectation exceeds V,
    b the largest excess (0 for an empty C).
    """
    if chain.n == 0:
        raise DriftError("empty state space")
    excess = chain.P @ chain.V - chain.V
    C = np.flatnonzero(excess > 0.0)
    b = float(excess[C].max()) if C.size else 0.0
    return b, C


def subsampled_expectations(chain, t: TamingParams) -> np.ndarray:
    """E_x[V(X_{F(V(x))})] for every state, by exact matrix powers."""
    ks = np.array([taming_F(float(v), t) for v in chain.V], dtype=np.int64)
    kmax = int(ks.max())
    wanted = set(int(k) for k in ks)
    snap = {}
    w = chain.V.astype(np.float64).copy()
    for k in range(1, kmax + 1):
        w = chain.P @ w
        if k in wanted:
            snap[k] = w.copy()
    return np.array([snap[int(k)][x] for x, k in enumerate(ks)])


def certify_subsampled_drift(chain, t: TamingParams) -> tuple[float, float]:
    """Geometric drift of the F-subsampled chain: returns (beta, b_prime).

    beta is the worst ratio E_x[V(X_F)]/V(x) over {V > d_prime}; b_prime
    the worst excess over beta*V on {V <= d_prime}.  When no state lies
    above the threshold the contraction claim is vacuous: by convention
    beta = 0 and b_prime is measured against V itself.
    """
    ev = subsampled_expectations(chain, t)
    hi = chain.V > t.d_prime
    lo = ~hi
    if hi.any():
        beta = float((ev[hi] / chain.V[hi]).max())
        if beta >= 1.0:
            raise DriftError(
                f"chain not tamed by these parameters: beta = {beta} >= 1 "
                f"(try a larger lambda)"
            )
        ref = beta * chain.V[lo]
    else:
        beta = 0.0
        ref = chain.V[lo]
    b_prime = float(max(0.0, (ev[lo] - ref).max())) if lo.any() else 0.0
    return beta, b_prime


@dataclass(frozen=True)
class DriftCertificate:
    """Verified constants for one (chain, taming) pair."""

    b: float
    C: tuple = field(repr=False)
    beta: float
    b_prime: float
    taming: TamingParams
    beta_star: float
    eps_cap: float
    h_star: float

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        t = self.taming
        if not (0.0 < self.beta < 1.0):
            raise DriftError(f"beta out of range: {self.beta}")
        if not (0.0 <= self.eps_cap < 1.0):
            raise DriftError(f"eps_cap out of range: {self.eps_cap}")
        bound = math.log1p(-t.delta) / t.delta
        if not (math.log(self.beta) < math.log(self.beta_star) < bound):
            raise DriftError(
                f"beta_star = {self.beta_star} violates the admissible "
                f"interval ({self.beta}, {math.exp(bound)})"
            )
        if self.h_star < t.d_prime:
            raise DriftError("h_star below the taming threshold")
        margin = (1.0 - self.eps_cap) * self.beta_star
        lhs = (
            self.beta * self.h_star
            + self.b_prime
            + self.b * (t.lam + 1.0) * self.h_star**t.delta
        )
        if lhs > margin * self.h_star:
            raise DriftError("floor inequality fails at h_star")

    def floor_bound(self, z: float) -> float:
        """Left side of the floor inequality at value z."""
        t = self.taming
        return self.beta * z + self.b_prime + self.b * (t.lam + 1.0) * z**t.delta

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "b": self.b,
            "b_prime": self.b_prime,
            "d_prime": self.taming.d_prime,
            "lambda": self.taming.lam,
            "delta": self.taming.delta,
            "beta_star": self.beta_star,
            "eps_cap": self.eps_cap,
            "h_star": self.h_star,
        }

    def to_text(self) -> str:
        """Flat key-value block, 17 significant digits per value."""
        d = self.as_dict()
        return "".join(f"{k} = {d[k]:.17g}\n" for k in _CERT_KEYS)

    @classmethod
    def from_text(cls, text: str, C: tuple = ()) -> "DriftCertificate":
        vals = {}
        for line in text.strip().splitlines():
            key, _, raw = line.partition("=")
            vals[key.strip()] = float(raw)
        missing = set(_CERT_KEYS) - set(vals)
        if missing:
            raise DriftError(f"certificate block missing keys: {sorted(missing)}")
        taming = TamingParams(vals["lambda"], vals["delta"], vals["d_prime"])
        return cls(
            b=vals["b"],
            C=C,
            beta=vals["beta"],
            b_prime=vals["b_prime"],
            taming=taming,
            beta_star=vals["beta_star"],
            eps_cap=vals["eps_cap"],
            h_star=vals["h_star"],
        )


def certify_chain(
    chain,
    d_prime: float,
    delta: float,
    lam_schedule,
    eps_cap: float = 0.0,
) -> DriftCertificate:
    """Full pipeline over a lambda schedule; first admissible wins.

    Raises DriftError when no lambda in the schedule yields a tamed,
    rate-admissible certificate with a positive floor margin.
    """
    b, C = certify_weak_drift(chain)
    failures = []
    for lam in lam_schedule:
        t = TamingParams(float(lam), delta, d_prime)
        try:
            beta, b_prime = certify_subsampled_drift(chain, t)
            if beta <= 0.0:
                raise DriftError("degenerate beta = 0: no state above d_prime")
            if not validate_rate_condition(beta, delta):
                raise DriftError(f"rate condition violated (beta = {beta})")
            beta_star = select_beta_star(beta, delta)
            h_star = compute_h_star(beta, beta_star, b, b_prime, t, eps_cap)
            return DriftCertificate(
                b=b,
                C=tuple(int(x) for x in C),
                beta=beta,
                b_prime=b_prime,
                taming=t,
                beta_star=beta_star,
                eps_cap=eps_cap,
                h_star=h_star,
            )
        except DriftError as exc:
            failures.append(f"lambda={lam}: {exc}")
    raise DriftError(
        "rate condition violated for all lambda; attempts:\n  "
        + "\n  ".join(failures)
    )
