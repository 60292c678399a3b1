import numpy as np
import pytest

from fedbilevel import ClientData, QuadraticInstance, RngStream


def manual_instance(eigs, d1, m, seed=0, hetero_B=0.0, rho_x=1.0,
                    lin_scale=0.5, B_norm=1.0):
    """Instance with an exact diagonal lower Hessian spectrum, identical across
    clients except for optional mean-zero B heterogeneity; no sample noise."""
    gen = RngStream(seed).child("manual").generator()
    d2 = len(eigs)
    A = np.diag(np.array(eigs, dtype=float))
    B0 = gen.normal(size=(d2, d1))
    B0 *= B_norm / np.linalg.norm(B0, 2)
    c = lin_scale * gen.normal(size=d2)
    d = lin_scale * gen.normal(size=d2)
    e = lin_scale * gen.normal(size=d1)
    dBs = gen.normal(size=(m, d2, d1))
    dBs -= dBs.mean(axis=0)
    clients = []
    for i in range(m):
        dB = hetero_B * dBs[i]
        clients.append(ClientData(
            A=A.copy(), B=B0 + dB, c=c.copy(), d=d.copy(), e=e.copy(),
            rho_x=rho_x, dA=np.zeros((1, d2, d2)), dB=np.zeros((1, d2, d1)),
            dc=np.zeros((1, d2)), dd=np.zeros((1, d2)), de=np.zeros((1, d1))))
    return QuadraticInstance(d1=d1, d2=d2, m=m, mu=float(min(eigs)),
                             L_g=float(max(eigs)), seed=seed, clients=clients)


def two_sample_client(grads=(1.0, -1.0)):
    """1-D client whose two lower-gradient samples differ only by +/- offsets."""
    off = (grads[0] - grads[1]) / 2.0
    return ClientData(
        A=np.array([[2.0]]), B=np.array([[1.0]]), c=np.zeros(1),
        d=np.zeros(1), e=np.zeros(1), rho_x=1.0,
        dA=np.zeros((2, 1, 1)), dB=np.zeros((2, 1, 1)),
        dc=np.array([[off], [-off]]), dd=np.zeros((2, 1)), de=np.zeros((2, 1)))


@pytest.fixture
def rng_root():
    return RngStream(1234)
