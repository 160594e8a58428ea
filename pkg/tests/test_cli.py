import csv
import json
from pathlib import Path

import numpy as np
import pytest

from domcftp import chains, cli, engine
from domcftp.errors import ConfigError

REGEN_CFG = {
    "chain": {"builtin": "regen", "params": {"N": 31, "eps_built": 0.2, "m_mode": 1}},
    "drift": {"d_prime": 28.0, "delta": 0.5, "lambda_schedule": [2.0, 4.0], "eps_cap": 0.2},
    "run": {"seed": 77, "replicas": 400, "minorization": {"enabled": True, "m_max": 4}},
}


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _cfg_with_outputs(tmp_path, base=REGEN_CFG, **outputs):
    cfg = json.loads(json.dumps(base))
    cfg["output"] = {k: str(tmp_path / v) for k, v in outputs.items()}
    return cfg


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        cli.resolve_config({"chain": {"builtin": "regen"}, "bogus": 1})
    with pytest.raises(ConfigError, match="unknown keys"):
        cli.resolve_config(
            {"chain": {"builtin": "regen", "params": {"N": 31}}, "run": {"turbo": True}}
        )
    with pytest.raises(ConfigError):
        cli.resolve_config({"chain": {"builtin": "regen", "params": {"frobnicate": 2}}})


def test_chain_section_exclusive():
    with pytest.raises(ConfigError, match="exactly one"):
        cli.resolve_config({"chain": {"builtin": "regen", "matrix_file": "x"}})
    with pytest.raises(ConfigError, match="'chain'"):
        cli.resolve_config({})


def test_sigma_star_needs_acknowledgment():
    cfg = {
        "chain": {"builtin": "regen", "params": {"N": 31, "eps_built": 0.2, "m_mode": 2}},
        "run": {"mode": "sigma_star", "minorization": {"enabled": True}},
    }
    with pytest.raises(ConfigError, match="experimental"):
        cli.resolve_config(cfg)


def test_eps_cap_default_follows_minorization():
    cfg = cli.resolve_config({"chain": {"builtin": "regen", "params": {}}})
    assert cfg["drift"]["eps_cap"] == 0.0
    cfg2 = cli.resolve_config(
        {
            "chain": {"builtin": "regen", "params": {}},
            "run": {"minorization": {"enabled": True}},
        }
    )
    assert cfg2["drift"]["eps_cap"] == 0.5


def test_effective_config_round_trips():
    cfg = cli.resolve_config(json.loads(json.dumps(REGEN_CFG)))
    again = cli.resolve_config(json.loads(json.dumps(cfg)))
    assert again == cfg


def test_malformed_config_exit_3(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["certify", "--config", str(p)]) == cli.EXIT_CONFIG
    assert cli.main(["certify", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_certify_regen_ok(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, certificate="cert.txt")
    rc = cli.main(["certify", "--config", _write_cfg(tmp_path, cfg)])
    out = json.loads(capsys.readouterr().out)
    assert rc == cli.EXIT_OK
    assert out["certificate"]["beta"] < 0.25
    text = (tmp_path / "cert.txt").read_text()
    assert text == out["certificate_text"]
    assert len(text.strip().splitlines()) == 9


def test_certify_three_state_rejected(tmp_path, capsys):
    # beta = 0.78125 at delta = 0.5 violates the rate condition
    from tests.conftest import THREE_P, THREE_V

    ch = chains.ChainSpec(n=3, P=THREE_P.copy(), V=THREE_V.copy())
    mpath = tmp_path / "three.txt"
    with open(mpath, "w") as fh:
        chains.write_chain_file(ch, fh)
    cfg = {
        "chain": {"matrix_file": str(mpath)},
        "drift": {"d_prime": 1.0, "delta": 0.5, "lambda_schedule": [1.0], "eps_cap": 0.0},
    }
    rc = cli.main(["certify", "--config", _write_cfg(tmp_path, cfg)])
    err = capsys.readouterr().err
    assert rc == cli.EXIT_FAIL
    assert "rate condition" in err


def test_sample_zero_replicas(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, samples="s.csv")
    cfg["run"]["replicas"] = 0
    rc = cli.main(["sample", "--config", _write_cfg(tmp_path, cfg)])
    capsys.readouterr()
    assert rc == cli.EXIT_OK
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines == [
        "seed,sample_state,V_value,T_used,regen_events,domination_violations"
    ]


def test_sample_deterministic_rerun(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, samples="s.csv")
    cfg["run"]["replicas"] = 50
    path = _write_cfg(tmp_path, cfg)
    assert cli.main(["sample", "--config", path]) == cli.EXIT_OK
    first = (tmp_path / "s.csv").read_bytes()
    assert cli.main(["sample", "--config", path]) == cli.EXIT_OK
    capsys.readouterr()
    assert (tmp_path / "s.csv").read_bytes() == first


def test_sample_seed_flag_overrides(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, samples="s.csv")
    cfg["run"]["replicas"] = 20
    path = _write_cfg(tmp_path, cfg)
    cli.main(["sample", "--config", path, "--seed", "1"])
    a = (tmp_path / "s.csv").read_text()
    cli.main(["sample", "--config", path, "--seed", "2"])
    b = (tmp_path / "s.csv").read_text()
    capsys.readouterr()
    assert a != b


def test_sample_workers_match_sequential(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, samples="seq.csv")
    cfg["run"]["replicas"] = 40
    cli.main(["sample", "--config", _write_cfg(tmp_path, cfg, "a.json")])
    cfg2 = _cfg_with_outputs(tmp_path, samples="par.csv")
    cfg2["run"]["replicas"] = 40
    cfg2["run"]["workers"] = 2
    cli.main(["sample", "--config", _write_cfg(tmp_path, cfg2, "b.json")])
    capsys.readouterr()
    assert (tmp_path / "seq.csv").read_text() == (tmp_path / "par.csv").read_text()


def test_sample_exit_2_on_violations(tmp_path, capsys, monkeypatch):
    def fake_run(self, seed, schedule="doubling"):
        return engine.PerfectSample(
            state=0, T_used=1, regen_events=0, domination_violations=3,
            seed=seed, depth=1,
        )

    monkeypatch.setattr(engine.SamplerWorkspace, "run", fake_run)
    cfg = _cfg_with_outputs(tmp_path, samples="s.csv")
    cfg["run"]["replicas"] = 5
    rc = cli.main(["sample", "--config", _write_cfg(tmp_path, cfg)])
    out = json.loads(capsys.readouterr().out)
    assert rc == cli.EXIT_DOMINATION
    assert out["domination_violations"] == 15


def test_validate_calibration_control(tmp_path, capsys):
    # samples drawn from exact pi by direct inversion must pass
    ch, _ = chains.build_regen_chain(31, 0.2, 1)
    pi = chains.exact_stationary(ch)
    r = np.random.default_rng(0)
    states = np.searchsorted(np.cumsum(pi), r.random(20000), side="left")
    spath = tmp_path / "oracle.csv"
    with open(spath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "sample_state", "V_value", "T_used", "regen_events", "domination_violations"])
        for s in states:
            w.writerow([0, int(s), float(ch.V[s]), 1, 0, 0])
    cfg = json.loads(json.dumps(REGEN_CFG))
    cfg["output"] = {"samples": str(spath)}
    rc = cli.main(["validate", "--config", _write_cfg(tmp_path, cfg)])
    out = json.loads(capsys.readouterr().out)
    assert rc == cli.EXIT_OK and out["passed"]

    # shifting 5% of the mass onto one state must fail decisively
    bad = states.copy()
    bad[: len(bad) // 20] = 30
    with open(spath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "sample_state", "V_value", "T_used", "regen_events", "domination_violations"])
        for s in bad:
            w.writerow([0, int(s), float(ch.V[s]), 1, 0, 0])
    rc2 = cli.main(["validate", "--config", _write_cfg(tmp_path, cfg)])
    out2 = json.loads(capsys.readouterr().out)
    assert rc2 == cli.EXIT_FAIL and not out2["passed"]
    assert out2["p_value"] < 1e-6


def test_validate_missing_samples(tmp_path, capsys):
    cfg = json.loads(json.dumps(REGEN_CFG))
    rc = cli.main(["validate", "--config", _write_cfg(tmp_path, cfg)])
    capsys.readouterr()
    assert rc == cli.EXIT_CONFIG


def test_dominator_report(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, trace="t.csv", report="r.json")
    cfg["run"]["blocks"] = 32
    rc = cli.main(["dominator", "--config", _write_cfg(tmp_path, cfg)])
    out = json.loads(capsys.readouterr().out)
    assert rc == cli.EXIT_OK
    assert abs(out["sigma_residual"]) < 1e-10
    assert out["floor_ok"]
    assert abs(out["atom_freq"] - out["atom_expected"]) < 0.01
    assert out["ks_p"] > 0.01
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "move_index,sigma_time,U,D,E,gap"
    assert len(rows) == 34
    h = out["effective_config"]["drift"]
    D_col = [float(r.split(",")[3]) for r in rows[1:]]
    assert min(D_col) >= json.loads((tmp_path / "r.json").read_text())["h_star"]


def test_end_to_end_sample_validate(tmp_path, capsys):
    cfg = _cfg_with_outputs(tmp_path, samples="s.csv", report="rep.json")
    cfg["run"]["replicas"] = 2000
    path = _write_cfg(tmp_path, cfg)
    assert cli.main(["sample", "--config", path]) == cli.EXIT_OK
    capsys.readouterr()
    rc = cli.main(["validate", "--config", path])
    out = json.loads(capsys.readouterr().out)
    assert rc == cli.EXIT_OK and out["passed"]
