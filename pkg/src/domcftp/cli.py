"""Batch front-end: certify, dominator traces, sampling, validation.

All behavior is driven by a JSON config with four sections (chain,
drift, run, output) plus global flags.  Every subcommand echoes the
fully resolved configuration so a run can be reproduced from its own
output.  Exit codes: 0 success, 1 certificate/validation failure,
2 domination violation, 3 I/O or config error.
"""

import argparse
import concurrent.futures
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from . import chains as chains_mod
from . import coupling, drift, engine
from .dominating import (
    EmbeddedPath,
    QueueParams,
    extend_grid_backward,
    stationary_sample,
    write_trace,
)
from .errors import ConfigError, DominationError, DriftError, NoCoalescenceError
from .rng import derive_seed

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_DOMINATION = 2
EXIT_CONFIG = 3

_CHAIN_BUILTINS = {"poly_rw", "regen"}

_DEFAULTS = {
    "drift": {
        "d_prime": 1.0,
        "delta": 0.5,
        "lambda_schedule": [1.0, 2.0, 4.0, 6.0, 8.0],
        "eps_cap": None,  # resolved: 0.5 when regeneration is enabled, else 0
    },
    "run": {
        "seed": 1,
        "replicas": 100,
        "mode": "standard",
        "max_T": 2**20,
        "workers": 1,
        "experimental": False,
        "blocks": 64,
        "p_threshold": 0.001,
        "minorization": {"enabled": False, "m": None, "m_max": 4},
    },
    "output": {"samples": None, "certificate": None, "trace": None, "report": None},
}


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw)


def resolve_config(raw: dict) -> dict:
    """Validate the raw dict and fill every default (schema-first)."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(raw, ("chain", "drift", "run", "output"), "config")
    if "chain" not in raw:
        raise ConfigError("config needs a 'chain' section")

    chain = dict(raw["chain"])
    _check_keys(chain, ("builtin", "params", "matrix_file"), "chain")
    if ("builtin" in chain) == ("matrix_file" in chain):
        raise ConfigError("chain needs exactly one of 'builtin' or 'matrix_file'")
    if "builtin" in chain:
        if chain["builtin"] not in _CHAIN_BUILTINS:
            raise ConfigError(
                f"unknown builtin {chain['builtin']!r}; have {sorted(_CHAIN_BUILTINS)}"
            )
        chain.setdefault("params", {})
        allowed = (
            ("N", "delta", "c_down", "c_up")
            if chain["builtin"] == "poly_rw"
            else ("N", "eps_built", "m_mode")
        )
        _check_keys(chain["params"], allowed, "chain.params")

    cfg = {"chain": chain}
    for section in ("drift", "run", "output"):
        got = dict(raw.get(section, {}))
        defaults = _DEFAULTS[section]
        _check_keys(got, defaults.keys(), section)
        merged = {**defaults, **got}
        if section == "run":
            mino = dict(defaults["minorization"])
            got_m = got.get("minorization", {})
            if not isinstance(got_m, dict):
                raise ConfigError("run.minorization must be an object")
            _check_keys(got_m, mino.keys(), "run.minorization")
            mino.update(got_m)
            merged["minorization"] = mino
        cfg[section] = merged

    run = cfg["run"]
    if run["mode"] not in ("standard", "sigma_star"):
        raise ConfigError(f"run.mode must be standard|sigma_star, got {run['mode']!r}")
    if run["mode"] == "sigma_star":
        if not run["experimental"]:
            raise ConfigError(
                "sigma_star mode is experimental: set run.experimental = true "
                "to acknowledge"
            )
        if not run["minorization"]["enabled"]:
            raise ConfigError("sigma_star mode requires run.minorization.enabled")
    if run["replicas"] < 0 or run["max_T"] < 1 or run["workers"] < 1:
        raise ConfigError("run.replicas/max_T/workers out of range")
    if cfg["drift"]["eps_cap"] is None:
        cfg["drift"]["eps_cap"] = 0.5 if run["minorization"]["enabled"] else 0.0
    return cfg


def build_chain(cfg: dict):
    """Returns (ChainSpec, RegenInfo | None)."""
    chain = cfg["chain"]
    if "matrix_file" in chain:
        try:
            with open(chain["matrix_file"]) as fh:
                return chains_mod.read_chain_file(fh, label=chain["matrix_file"]), None
        except OSError as exc:
            raise ConfigError(f"cannot read matrix file: {exc}") from exc
    params = chain["params"]
    if chain["builtin"] == "poly_rw":
        return chains_mod.build_poly_rw(**params), None
    ch, info = chains_mod.build_regen_chain(**params)
    return ch, info


def certify_from_config(cfg: dict, chain) -> drift.DriftCertificate:
    d = cfg["drift"]
    return drift.certify_chain(
        chain,
        d_prime=d["d_prime"],
        delta=d["delta"],
        lam_schedule=d["lambda_schedule"],
        eps_cap=d["eps_cap"],
    )


def minorization_from_config(cfg: dict, chain, cert):
    mino = cfg["run"]["minorization"]
    if not mino["enabled"]:
        return None
    C_star = chain.vorder[
        : int(np.searchsorted(chain.V_sorted, cert.h_star, side="right"))
    ]
    m = mino["m"]
    if m is None:
        m = coupling.find_small_order(chain, C_star, mino["m_max"])
    return coupling.compute_minorization(chain, C_star, m, cert.eps_cap)


def _warn_truncation(chain, cert) -> None:
    vmax = float(chain.V.max())
    if vmax < 1.5 * cert.h_star:
        print(
            f"warning: V_max = {vmax} is below 1.5*h_star = {1.5 * cert.h_star:.1f}; "
            f"the certificate only speaks for the truncated space",
            file=sys.stderr,
        )


def _emit(report: dict, cfg: dict) -> None:
    report["effective_config"] = cfg
    print(json.dumps(report, indent=2, sort_keys=True))
    path = cfg["output"].get("report")
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))


def _mcert_block(mcert) -> dict | None:
    if mcert is None:
        return None
    support = np.flatnonzero(mcert.nu > 0.0)
    return {
        "m": mcert.m,
        "eps": mcert.eps,
        "support_size": int(support.size),
        "nu": {int(x): float(mcert.nu[x]) for x in support},
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_certify(cfg: dict, out: str | None) -> int:
    chain, _ = build_chain(cfg)
    try:
        cert = certify_from_config(cfg, chain)
    except DriftError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _warn_truncation(chain, cert)
    try:
        mcert = minorization_from_config(cfg, chain, cert)
    except coupling.CouplingError as exc:
        print(f"minorization failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = cert.to_text()
    dest = out or cfg["output"]["certificate"]
    if dest:
        try:
            Path(dest).parent.mkdir(parents=True, exist_ok=True)
            Path(dest).write_text(text)
        except OSError as exc:
            print(f"cannot write certificate: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    _emit(
        {
            "command": "certify",
            "chain": chain.label,
            "certificate": cert.as_dict(),
            "certificate_text": text,
            "weak_drift_set_size": len(cert.C),
            "minorization": _mcert_block(mcert),
        },
        cfg,
    )
    return EXIT_OK


def cmd_dominator(cfg: dict, out: str | None) -> int:
    chain, _ = build_chain(cfg)
    try:
        cert = certify_from_config(cfg, chain)
        qp = QueueParams.from_certificate(cert)
    except DriftError as exc:
        print(f"invalid certificate: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ledger = engine.RandomnessLedger(cfg["run"]["seed"])
    path = EmbeddedPath(qp, cert.taming, ledger)
    extend_grid_backward(path, -cfg["run"]["blocks"], ledger)
    dest = out or cfg["output"]["trace"]
    if dest:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        with open(dest, "w", newline="\n") as fh:
            write_trace(path, fh)
    # stationarity report against the closed form
    nsamp = 10**5
    u = np.asarray(
        engine.RandomnessLedger(derive_seed(cfg["run"]["seed"], 0xD0)).us(0, 0, nsamp)
    )
    draws = np.array([stationary_sample(qp, x) for x in u])
    atom_freq = float((draws == 0.0).mean())
    pos = draws[draws > 0.0]
    ks = stats.kstest(pos, "expon", args=(0.0, 1.0 / (1.0 - qp.sigma)))
    trace_min_D = min(path.D(j) for j in path.indices())
    report = {
        "command": "dominator",
        "a": qp.a,
        "sigma": qp.sigma,
        "sigma_residual": abs(qp.sigma - math.exp(-qp.a * (1.0 - qp.sigma))),
        "h_star": cert.h_star,
        "blocks": cfg["run"]["blocks"],
        "atom_freq": atom_freq,
        "atom_expected": 1.0 - qp.sigma,
        "ks_stat": float(ks.statistic),
        "ks_p": float(ks.pvalue),
        "stationary_draws": nsamp,
        "trace_min_D": trace_min_D,
        "floor_ok": trace_min_D >= cert.h_star,
    }
    _emit(report, cfg)
    return EXIT_OK


_WORKER = {}


def _worker_init(cfg):
    chain, _ = build_chain(cfg)
    cert = certify_from_config(cfg, chain)
    mcert = minorization_from_config(cfg, chain, cert)
    _WORKER["ws"] = engine.SamplerWorkspace(
        chain, cert, mcert=mcert, mode=cfg["run"]["mode"], max_T=cfg["run"]["max_T"]
    )


def _worker_run(args):
    idx, seed = args
    s = _WORKER["ws"].run(seed)
    return idx, (seed, s.state, s.T_used, s.regen_events, s.domination_violations)


def cmd_sample(cfg: dict, out: str | None) -> int:
    chain, _ = build_chain(cfg)
    try:
        cert = certify_from_config(cfg, chain)
        mcert = minorization_from_config(cfg, chain, cert)
    except (DriftError, coupling.CouplingError) as exc:
        print(f"invalid certificate: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _warn_truncation(chain, cert)
    run = cfg["run"]
    replicas = run["replicas"]
    seeds = [derive_seed(run["seed"], i) for i in range(replicas)]
    rows = [None] * replicas
    try:
        if run["workers"] > 1 and replicas > 1:
            with concurrent.futures.ProcessPoolExecutor(
                max_workers=run["workers"],
                initializer=_worker_init,
                initargs=(cfg,),
            ) as pool:
                for idx, row in pool.map(
                    _worker_run, list(enumerate(seeds)), chunksize=64
                ):
                    rows[idx] = row
        else:
            ws = engine.SamplerWorkspace(
                chain, cert, mcert=mcert, mode=run["mode"], max_T=run["max_T"]
            )
            for i, seed in enumerate(seeds):
                s = ws.run(seed)
                rows[i] = (seed, s.state, s.T_used, s.regen_events, s.domination_violations)
    except NoCoalescenceError as exc:
        print(f"sampling failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DominationError as exc:
        print(f"fatal domination violation: {exc}", file=sys.stderr)
        return EXIT_DOMINATION

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["seed", "sample_state", "V_value", "T_used", "regen_events", "domination_violations"]
    )
    total_viol = 0
    for seed, state, T_used, regen, viol in rows:
        total_viol += viol
        w.writerow([seed, state, repr(float(chain.V[state])), T_used, regen, viol])
    dest = out or cfg["output"]["samples"]
    if dest:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        Path(dest).write_text(buf.getvalue())
    _emit(
        {
            "command": "sample",
            "chain": chain.label,
            "replicas": replicas,
            "mode": run["mode"],
            "regen_events": sum(r[3] for r in rows),
            "domination_violations": total_viol,
            "minorization": _mcert_block(mcert),
            "samples_path": dest,
        },
        cfg,
    )
    return EXIT_DOMINATION if total_viol > 0 else EXIT_OK


def _binned_expected(chain, pi: np.ndarray, counts: np.ndarray, total: int):
    """Per-state when small, else V-ordered bins with expected >= 5."""
    if chain.n <= 64:
        return counts.astype(float), pi * total
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for pos in range(chain.n):
        x = chain.vorder[pos]
        acc_o += counts[x]
        acc_e += pi[x] * total
        if acc_e >= 5.0:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if exp:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    return np.array(obs), np.array(exp)


def cmd_validate(cfg: dict, out: str | None) -> int:
    chain, _ = build_chain(cfg)
    src = out or cfg["output"]["samples"]
    if not src:
        print("validate needs output.samples (or --out) pointing at a CSV", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(src, newline="") as fh:
            reader = csv.DictReader(fh)
            states = [int(row["sample_state"]) for row in reader]
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot read samples from {src}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    total = len(states)
    if total == 0:
        print("no samples to validate", file=sys.stderr)
        return EXIT_CONFIG
    pi = chains_mod.exact_stationary(chain)
    counts = np.bincount(np.asarray(states), minlength=chain.n)
    obs, exp = _binned_expected(chain, pi, counts, total)
    exp *= obs.sum() / exp.sum()  # remove float drift so scipy accepts the test
    res = stats.chisquare(obs, exp)
    p = float(res.pvalue)
    thr = cfg["run"]["p_threshold"]
    _emit(
        {
            "command": "validate",
            "chain": chain.label,
            "n_samples": total,
            "statistic": float(res.statistic),
            "dof": int(len(obs) - 1),
            "p_value": p,
            "threshold": thr,
            "bins": int(len(obs)),
            "passed": p > thr,
        },
        cfg,
    )
    return EXIT_OK if p > thr else EXIT_FAIL


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="domcftp",
        description="Exact stationary sampling via dominated coupling-from-the-past",
    )
    parser.add_argument("command", choices=["certify", "dominator", "sample", "validate"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    parser.add_argument("--out", default=None, help="overrides the command's output path")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        handler = {
            "certify": cmd_certify,
            "dominator": cmd_dominator,
            "sample": cmd_sample,
            "validate": cmd_validate,
        }[args.command]
        return handler(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    raise SystemExit(main())
