"""Deterministic, addressable random streams.

Every random quantity consumed by a run is addressed by a triple
``(seed, move_index, slot)``.  The stream for a triple is an
xoshiro256++ generator whose state is derived from the triple with
splitmix64, so any draw can be re-derived at any time and never depends
on the order in which other draws were made.  This is what makes
backward extension of a run reproducible: extending the past creates
new addresses instead of perturbing old ones.

Derivation (documented so other implementations can reproduce it):

1. absorb: ``x = seed``; then for each of ``move_index`` and ``slot``:
   ``x = splitmix_next(x) ^ value`` (values taken as two's-complement
   64-bit words), followed by one more ``splitmix_next``;
2. expand: the four xoshiro256++ state words are four further
   ``splitmix_next`` outputs;
3. uniforms are ``((out >> 11) + 0.5) * 2**-53`` which lies strictly
   inside (0, 1).

The compiled backend (``domcftp._speedups``) implements the identical
arithmetic; `tests/test_backends.py` pins bit equality.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# Slot identifiers, one per kind of randomness a move index can consume.
SLOT_STAT = 0  # stationary anchor draw (move index 0 only)
SLOT_REV = 1  # reversed workload step (two uniforms)
SLOT_INN = 2  # innovation reconstruction
SLOT_Q = 3  # composite-span quantile uniform (sigma* mode)
SLOT_R = 4  # regeneration bernoulli
SLOT_NU = 5  # regeneration measure draw
SLOT_STEP = 6  # intra-block single-step uniforms

SLOT_NAMES = {
    SLOT_STAT: "stat_u",
    SLOT_REV: "rev_u",
    SLOT_INN: "inn_u",
    SLOT_Q: "q_u",
    SLOT_R: "r_u",
    SLOT_NU: "n_u",
    SLOT_STEP: "step_u",
}

_U53 = 2.0 ** -53


def _mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _splitmix_next(x: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    x = (x + GOLDEN) & MASK64
    return x, _mix64(x)


def stream_state(seed: int, index: int, slot: int) -> list[int]:
    """xoshiro256++ state for the (seed, index, slot) address."""
    x = seed & MASK64
    for word in (index & MASK64, slot & MASK64):
        x, out = _splitmix_next(x)
        x = out ^ word
        x, _ = _splitmix_next(x)
    s = []
    for _ in range(4):
        x, out = _splitmix_next(x)
        s.append(out)
    if s[0] == s[1] == s[2] == s[3] == 0:
        s[0] = GOLDEN
    return s


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def xoshiro_next(s: list[int]) -> int:
    """One xoshiro256++ output; mutates the 4-word state in place."""
    s0, s1, s2, s3 = s
    result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
    t = (s1 << 17) & MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return result


def to_unit(word: int) -> float:
    """Map a 64-bit word to a double strictly inside (0, 1)."""
    return ((word >> 11) + 0.5) * _U53


def uniforms(seed: int, index: int, slot: int, count: int) -> list[float]:
    """The first `count` uniforms of a slot stream (pure reference)."""
    s = stream_state(seed, index, slot)
    return [to_unit(xoshiro_next(s)) for _ in range(count)]


def derive_seed(master: int, lane: int) -> int:
    """Replica/worker seed: splitmix64 hash of (master, lane).

    Documented so external tooling can predict per-replica seeds:
    ``mix64(mix64(master ^ GOLDEN) ^ (lane + 1))``.
    """
    return _mix64(_mix64((master & MASK64) ^ GOLDEN) ^ ((lane + 1) & MASK64))
