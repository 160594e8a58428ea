import numpy as np
import pytest

from domcftp import chains, coupling, drift

# Hand-checkable 3-state fixture used across modules: row 2 equals row 0,
# so P^2 and the stationary law have short closed forms.
THREE_P = np.array(
    [
        [0.5, 0.5, 0.0],
        [0.5, 0.25, 0.25],
        [0.5, 0.5, 0.0],
    ]
)
THREE_V = np.array([1.0, 2.0, 3.0])


@pytest.fixture(scope="session")
def three_state():
    return chains.ChainSpec(n=3, P=THREE_P.copy(), V=THREE_V.copy(), label="three_state")


def _with_minorization(chain, cert, m_max=4):
    pl = int(np.searchsorted(chain.V_sorted, cert.h_star, side="right"))
    C_star = chain.vorder[:pl]
    m = coupling.find_small_order(chain, C_star, m_max)
    return coupling.compute_minorization(chain, C_star, m, cert.eps_cap)


@pytest.fixture(scope="session")
def regen_m1():
    chain, info = chains.build_regen_chain(31, 0.2, 1)
    cert = drift.certify_chain(
        chain, d_prime=28.0, delta=0.5, lam_schedule=[2.0, 4.0], eps_cap=0.2
    )
    mcert = _with_minorization(chain, cert)
    return chain, info, cert, mcert


@pytest.fixture(scope="session")
def regen_m2():
    chain, info = chains.build_regen_chain(31, 0.2, 2)
    cert = drift.certify_chain(
        chain, d_prime=29.5, delta=0.5, lam_schedule=[1.0], eps_cap=0.04
    )
    mcert = _with_minorization(chain, cert)
    return chain, info, cert, mcert


@pytest.fixture(scope="session")
def poly_reduced():
    chain = chains.build_poly_rw(416, 0.5, 0.8, 0.1)
    cert = drift.certify_chain(
        chain, d_prime=14.0, delta=0.5, lam_schedule=[2.0, 4.0, 6.0, 8.0], eps_cap=0.0
    )
    return chain, cert
