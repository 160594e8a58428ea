"""Pure-Python/numpy implementations of the hot kernels.

Semantics are pinned by this module; the compiled twin in
``domcftp._speedups`` must produce bit-identical results.  All quantile
lookups use the "first index whose cumulative value is >= tail" rule
(numpy's searchsorted with side='left'), clamped to the last column so
tails produced from denormal-small uniforms stay in range.
"""

import numpy as np

from .. import rng

_LOOP_CUTOVER = 24  # below this set size a per-row bisect beats the vector op


def backend_name() -> str:
    return "pure"


def stream_uniforms(seed: int, index: int, slot: int, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.float64)
    s = rng.stream_state(seed, index, slot)
    for i in range(count):
        out[i] = rng.to_unit(rng.xoshiro_next(s))
    return out


def slot_u(seed: int, index: int, slot: int) -> float:
    s = rng.stream_state(seed, index, slot)
    return rng.to_unit(rng.xoshiro_next(s))


def map_rows(cum: np.ndarray, states: np.ndarray, tail: float) -> np.ndarray:
    """Quantile-map each state through its cumulative row.

    `cum` is (rows, n) with nondecreasing rows ending at ~1; `states`
    indexes rows.  Returns raw mapped column indices (not deduplicated).
    """
    n = cum.shape[1]
    m = states.shape[0]
    out = np.empty(m, dtype=np.int64)
    if m < _LOOP_CUTOVER:
        for i in range(m):
            out[i] = np.searchsorted(cum[states[i]], tail, side="left")
    else:
        np.sum(cum[states] < tail, axis=1, out=out)
    np.minimum(out, n - 1, out=out)
    return out


def walk_single(cum: np.ndarray, start: int, tails: np.ndarray) -> int:
    """Advance one state through successive quantile lookups."""
    n = cum.shape[1]
    y = int(start)
    for t in tails:
        y = int(np.searchsorted(cum[y], t, side="left"))
        if y >= n:
            y = n - 1
    return y
