import numpy as np
import pytest

from domcftp import chains, engine
from domcftp.dominating import EmbeddedPath, extend_grid_backward
from domcftp.drift import DriftCertificate, TamingParams
from domcftp.engine import (
    PerfectSample,
    RandomnessLedger,
    SamplerWorkspace,
    check_domination,
    evolve_forward_set,
    run_perfect_sample,
)
from domcftp.errors import CouplingError, NoCoalescenceError


def _hand_cert(h_star: float, d_prime: float | None = None) -> DriftCertificate:
    # scalar-consistent certificate for engine plumbing tests
    d = h_star if d_prime is None else d_prime
    return DriftCertificate(
        b=0.0,
        C=(),
        beta=0.1,
        b_prime=0.0,
        taming=TamingParams(1.0, 0.5, d),
        beta_star=0.2,
        eps_cap=0.0,
        h_star=h_star,
    )


def test_single_state_chain_trivial():
    ch = chains.ChainSpec(n=1, P=np.array([[1.0]]), V=np.array([1.0]))
    s = run_perfect_sample(ch, _hand_cert(4.0), seed=3)
    assert s.state == 0 and s.T_used == 1
    assert s.domination_violations == 0


def test_identity_kernel_never_coalesces():
    ch = chains.ChainSpec(n=3, P=np.eye(3), V=np.array([1.0, 2.0, 3.0]))
    with pytest.raises(NoCoalescenceError, match="no coalescence"):
        run_perfect_sample(ch, _hand_cert(50.0), seed=1, max_T=2000)


def test_fixed_seed_reproducible(regen_m1):
    chain, _, cert, mcert = regen_m1
    ws1 = SamplerWorkspace(chain, cert, mcert=mcert)
    ws2 = SamplerWorkspace(chain, cert, mcert=mcert)
    a = [ws1.run(s) for s in range(30)]
    b = [ws2.run(s) for s in range(30)]
    assert a == b


def test_schedule_independence(poly_reduced):
    chain, cert = poly_reduced
    ws = SamplerWorkspace(chain, cert)
    for seed in range(25):
        s_double = ws.run(seed, schedule="doubling")
        s_inc = ws.run(seed, schedule="increment")
        assert s_double.state == s_inc.state


def test_ledger_prefix_stable_under_extension(regen_m1):
    chain, _, cert, _ = regen_m1
    ws = SamplerWorkspace(chain, cert)
    led = RandomnessLedger(99)
    path = EmbeddedPath(ws.qp, cert.taming, led)
    extend_grid_backward(path, -6, led)
    before = [(j, path.U(j), path.E(j), path.sigma(j)) for j in path.indices()]
    extend_grid_backward(path, -12, led)
    after = [(j, path.U(j), path.E(j), path.sigma(j)) for j in path.indices() if j >= -6]
    assert before == after


def test_evolve_forward_set_contracts(poly_reduced):
    chain, cert = poly_reduced
    ws = SamplerWorkspace(chain, cert)
    led = RandomnessLedger(5)
    path = EmbeddedPath(ws.qp, cert.taming, led)
    extend_grid_backward(path, -4, led)
    S0 = chain.vorder[: ws._rank(path.D(-4))]
    out, trace = evolve_forward_set(S0, path, led, -4, chain, cert)
    assert len(trace) == 4
    assert all(a >= b for a, b in zip(trace, trace[1:]))
    assert len(out) == trace[-1]


def test_evolve_from_index_zero_is_identity(regen_m1):
    chain, _, cert, mcert = regen_m1
    ws = SamplerWorkspace(chain, cert, mcert=mcert)
    led = RandomnessLedger(1)
    path = EmbeddedPath(ws.qp, cert.taming, led)
    S = np.arange(5, dtype=np.int64)
    out, events, viol, _ = ws.evolve(path, led, S, 0)
    assert (out == S).all() and events == 0 and viol == 0


def test_check_domination():
    V = np.array([1.0, 2.0, 3.0])
    assert check_domination([0, 1, 2], 3.0, V).size == 0
    assert check_domination([], 0.5, V).size == 0
    assert check_domination([0, 2], 2.5, V).tolist() == [2]


def test_mode_validation(regen_m1, regen_m2):
    chain1, _, cert1, mcert1 = regen_m1
    with pytest.raises(CouplingError, match="sigma_star mode needs"):
        SamplerWorkspace(chain1, cert1, mode="sigma_star")
    # m=1 is not above F(h*) in sigma* mode
    with pytest.raises(CouplingError, match="expects m > F"):
        SamplerWorkspace(chain1, cert1, mcert=mcert1, mode="sigma_star")
    chain2, _, cert2, mcert2 = regen_m2
    # m=2 > F(h*)=1 can never regenerate inside one floor block
    with pytest.raises(CouplingError, match="use sigma_star mode"):
        SamplerWorkspace(chain2, cert2, mcert=mcert2, mode="standard")


def test_regen_reachability_gate():
    # nu sits on state 0, whose successors can leave {V <= h*}; with a
    # floor pause longer than the order, regeneration must switch off
    n = 6
    P = np.zeros((n, n))
    P[0, 0], P[0, 3] = 0.9, 0.1
    P[1, 0], P[1, 2] = 0.9, 0.1
    P[2, 0], P[2, 3] = 0.9, 0.1
    for x in range(3, n):
        P[x, x - 1] = 1.0
    ch = chains.ChainSpec(n=n, P=P, V=np.arange(1, n + 1, dtype=float))
    from domcftp.coupling import MinorizationCert

    nu = np.zeros(n)
    nu[0] = 1.0
    # hand minorization on C* = {V <= 3}: every row puts >= 0.8 on state 0
    mc = MinorizationCert(m=1, eps=0.8, nu=nu, C_star=np.array([0, 1, 2]))
    cert = DriftCertificate(
        b=0.0,
        C=(),
        beta=0.01,
        b_prime=0.0,
        taming=TamingParams(1.0, 0.5, 2.0),
        beta_star=0.1,
        eps_cap=0.85,
        h_star=3.0,
    )
    ws = SamplerWorkspace(ch, cert, mcert=mc)
    assert ws.k_floor == 2 and mc.m == 1
    assert not ws.regen_active
    assert "escape" in ws.regen_disabled_reason


def test_sigma_star_runs_terminate_and_report(regen_m2):
    chain, _, cert, mcert = regen_m2
    ws = SamplerWorkspace(chain, cert, mcert=mcert, mode="sigma_star")
    res = [ws.run(seed) for seed in range(500)]
    assert all(isinstance(r, PerfectSample) for r in res)
    assert all(r.domination_violations >= 0 for r in res)
    assert sum(r.regen_events for r in res) > 0  # composite spans do fire


def test_standard_mode_zero_violations(regen_m1):
    chain, _, cert, mcert = regen_m1
    ws = SamplerWorkspace(chain, cert, mcert=mcert)
    res = [ws.run(seed) for seed in range(500)]
    assert all(r.domination_violations == 0 for r in res)
    assert sum(r.regen_events for r in res) > 0


def test_depth_counts_chain_steps(poly_reduced):
    chain, cert = poly_reduced
    ws = SamplerWorkspace(chain, cert)
    s = ws.run(11)
    assert s.depth >= s.T_used  # every block is at least one step
