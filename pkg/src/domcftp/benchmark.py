"""Compare the compiled and pure kernel lanes.

Run as ``python -m domcftp.benchmark`` (add ``--quick`` for a shorter
workload).  Times the two primitives that dominate sampling cost and an
end-to-end batch of perfect samples on the builtin regeneration chain,
once per available lane.
"""

import argparse
import time

import numpy as np

from . import _kernels, coupling, drift, engine
from .chains import build_regen_chain


def _time(fn, min_seconds=0.2):
    fn()  # warm up caches and JIT-ish effects
    n = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(n):
            fn()
        dt = time.perf_counter() - t0
        if dt >= min_seconds:
            return dt / n
        n = max(n + 1, int(n * min_seconds / max(dt, 1e-9)))


def run(quick: bool = False) -> list[dict]:
    lanes = _kernels.available_backends()
    reps = 200 if quick else 1000
    rng = np.random.default_rng(42)
    n = 512
    cum = np.ascontiguousarray(np.cumsum(rng.dirichlet(np.ones(n), size=n), axis=1))
    states = np.arange(n, dtype=np.int64)
    tails = rng.random(4096)

    chain, _ = build_regen_chain(31, 0.2, 1)
    cert = drift.certify_chain(
        chain, d_prime=28.0, delta=0.5, lam_schedule=[2.0], eps_cap=0.2
    )
    pl = int(np.searchsorted(chain.V_sorted, cert.h_star, side="right"))
    mcert = coupling.compute_minorization(chain, chain.vorder[:pl], 1, cert.eps_cap)

    rows = []
    saved = _kernels.get_backend()
    try:
        for name, lane in lanes.items():
            _kernels.set_backend(lane)

            def bench_map():
                for t in tails[:64]:
                    lane.map_rows(cum, states, t)

            def bench_stream():
                for i in range(256):
                    lane.stream_uniforms(12345, -i, 1, 4)

            ws = engine.SamplerWorkspace(chain, cert, mcert=mcert)

            def bench_sample():
                for s in range(reps):
                    ws.run(s)

            rows.append(
                {
                    "lane": name,
                    "map_rows_512_us": _time(bench_map) / 64 * 1e6,
                    "stream4_us": _time(bench_stream) / 256 * 1e6,
                    "samples_per_s": reps / _time(bench_sample, min_seconds=0.5),
                }
            )
    finally:
        _kernels.set_backend(saved)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true")
    args = parser.parse_args(argv)
    rows = run(quick=args.quick)
    hdr = f"{'lane':<10} {'map_rows(512) us':>18} {'stream(4) us':>14} {'samples/s':>12}"
    print(hdr)
    print("-" * len(hdr))
    for r in rows:
        print(
            f"{r['lane']:<10} {r['map_rows_512_us']:>18.2f} "
            f"{r['stream4_us']:>14.2f} {r['samples_per_s']:>12.0f}"
        )
    if len(rows) == 2:
        a, b = rows
        fast, slow = (a, b) if a["samples_per_s"] > b["samples_per_s"] else (b, a)
        print(
            f"\n{fast['lane']} lane is "
            f"{fast['samples_per_s'] / slow['samples_per_s']:.1f}x faster end-to-end"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
