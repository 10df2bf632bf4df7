import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdbounds.hermitian import ptrace
from qkdbounds.protocol import (
    GYS,
    ChannelParams,
    SourceParams,
    bb84_fock_state,
    channel_error,
    channel_yield,
    detector_db,
    distance_from_loss,
    eta_from_loss,
    gys_channel,
    intercept_resend_state,
    loss_from_distance,
    phi_n_state,
    poisson_weight,
    reduced_alice_state,
    simulated_state,
    squashed_povm,
    state_distribution,
    table1_distribution,
)

probs = st.floats(0, 1)


def channel(y0=0.0, e_det=0.0, eta=1.0):
    return ChannelParams(y0, e_det, 0.21, eta)


def test_table_example_lossless():
    p = table1_distribution(1, channel()).p
    assert p[0, 0] == pytest.approx(1 / 8)
    assert p[0, 1] == 0
    assert p[0, 2] == pytest.approx(1 / 16)
    assert p[0, 4] == 0


def test_table_pure_loss():
    p = table1_distribution(3, channel(eta=0.0)).p
    assert np.allclose(p[:, 4], 0.25)
    assert np.allclose(p[:, :4], 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12), y0=probs, e_det=probs, eta=probs)
def test_table_sums(n, y0, e_det, eta):
    c = channel(y0, e_det, eta)
    p = table1_distribution(n, c).p
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12
    assert np.abs(p.sum(axis=1) - 0.25).max() < 1e-12
    y, e = channel_yield(n, c), channel_error(n, c)
    assert p[0, 0] == pytest.approx(y * (1 - e) / 8, abs=1e-15)
    assert p[0, 2] == pytest.approx(y / 16, abs=1e-15)
    assert p[2, 4] == pytest.approx((1 - y) / 4, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12), y0=probs, e_det=probs, eta=probs)
def test_yield_and_error(n, y0, e_det, eta):
    c = channel(y0, e_det, eta)
    y, e = channel_yield(n, c), channel_error(n, c)
    assert 0 <= y <= 1 and 0 <= e <= 1 + 1e-12
    raw = y0 + 1 - (1 - eta) ** n
    if raw <= 1 and y > 0:
        assert abs(e * y - (e_det * (1 - (1 - eta) ** n) + y0 / 2)) < 1e-12


def test_yield_examples():
    c = channel(eta=1.0)
    assert channel_yield(1, c) == 1 and channel_error(1, c) == 0
    c = channel(y0=1e-3, e_det=0.1, eta=0.0)
    assert channel_yield(4, c) == pytest.approx(1e-3)
    assert channel_error(4, c) == pytest.approx(0.5)
    assert channel_error(1, channel(eta=0.0)) == 0.5


def test_yield_at_gys_100km():
    eta = 0.045 * 10 ** (-2.1)
    c = ChannelParams.from_distance(1.7e-6, 0.033, 0.21, 100.0, 0.045)
    assert c.eta == pytest.approx(eta, rel=1e-12)
    y1 = 1.7e-6 + eta
    assert channel_yield(1, c) == pytest.approx(y1, rel=1e-12)
    assert channel_error(1, c) == pytest.approx((0.033 * eta + 0.85e-6) / y1, rel=1e-12)


def test_error_monotone_in_noise():
    for n in (1, 2, 5):
        for eta in (0.01, 0.3):
            es = [channel_error(n, channel(y0, 0.03, eta)) for y0 in (0, 1e-6, 1e-4, 1e-2)]
            assert all(a <= b for a, b in zip(es, es[1:]))
            es = [channel_error(n, channel(1e-5, ed, eta)) for ed in (0, 0.01, 0.05, 0.2)]
            assert all(a <= b for a, b in zip(es, es[1:]))


def test_bob_povm_complete():
    t = squashed_povm()
    assert len(t) == 5
    assert np.allclose(sum(x.entries for x in t), np.eye(3))
    vac = np.array([0, 0, 1.0])
    assert vac @ t[0].entries @ vac == 0
    for x in t:
        assert np.linalg.eigvalsh(x.entries).min() > -1e-15


@pytest.mark.parametrize("n", range(1, 8))
def test_fock_state_overlaps(n):
    v = [bb84_fock_state(n, k) for k in range(4)]
    for a in v:
        assert np.isclose(np.linalg.norm(a), 1)
    assert np.isclose(v[0] @ v[1], 0)
    assert np.isclose(v[2] @ v[3], 0)
    assert np.isclose(abs(v[0] @ v[2]), 2 ** (-n / 2))
    assert np.isclose(abs(v[1] @ v[3]), 2 ** (-n / 2))


@pytest.mark.parametrize("n", range(1, 8))
def test_reduced_state_from_phi(n):
    phi = phi_n_state(n)
    rho = ptrace(np.outer(phi, phi), [4, n + 1], [0])
    assert np.abs(rho - reduced_alice_state(n).entries).max() < 1e-12
    assert np.isclose(np.trace(rho), 1)


def test_reduced_state_single_photon_entries():
    r = reduced_alice_state(1).entries
    assert np.allclose(np.diag(r), 0.25)
    assert r[0, 2] == pytest.approx(2 ** -0.5 / 4)
    assert r[0, 1] == 0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), y0=st.floats(0, 0.1), e_det=st.floats(0, 0.5), eta=probs)
def test_simulated_state_reproduces_table(n, y0, e_det, eta):
    c = channel(y0, e_det, eta)
    sigma = simulated_state(n, c)
    assert np.linalg.eigvalsh(sigma).min() > -1e-12
    assert np.abs(state_distribution(sigma) - table1_distribution(n, c).p).max() < 1e-10
    assert np.abs(ptrace(sigma, [4, 3], [0]) - reduced_alice_state(n).entries).max() < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_intercept_resend_has_half_error_in_x_basis(n):
    p = state_distribution(intercept_resend_state(n))
    assert abs(p.sum() - 1) < 1e-12
    # Z basis survives, X basis is randomized
    assert p[0, 1] == pytest.approx(0)
    assert p[2, 2] == pytest.approx(p[2, 3])


def test_channel_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(1.5, 0.0)
    with pytest.raises(ValueError):
        ChannelParams(0.0, -0.1)
    with pytest.raises(ValueError):
        ChannelParams(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        ChannelParams(0.0, 0.0, 0.21, 0.5, distance_km=10.0, eta_detector=1.0)
    with pytest.raises(ValueError):
        SourceParams(0.0)
    with pytest.raises(ValueError):
        SourceParams(0.5, 0)


def test_loss_conversions():
    assert eta_from_loss(0.0) == 1.0
    assert detector_db(0.045) == pytest.approx(13.4679, abs=1e-4)
    assert loss_from_distance(100, 0.21, 0.045) == pytest.approx(21 + detector_db(0.045))
    assert distance_from_loss(57.4, 0.21, 0.045) == pytest.approx(209.2, abs=0.1)
    c = gys_channel(30.0)
    assert c.eta == pytest.approx(1e-3)
    assert c.y0 == GYS["y0"] and c.e_det == GYS["e_det"]
    with pytest.raises(ValueError):
        eta_from_loss(-1.0)


@settings(max_examples=40, deadline=None)
@given(l_km=st.floats(0, 400))
def test_distance_loss_inverse(l_km):
    db = loss_from_distance(l_km, 0.21, 0.045)
    assert distance_from_loss(db, 0.21, 0.045) == pytest.approx(l_km, abs=1e-9)
    c = ChannelParams.from_distance(0, 0, 0.21, l_km, 0.045)
    assert c.eta == pytest.approx(eta_from_loss(db), rel=1e-10)


def test_poisson_weights():
    assert poisson_weight(1, SourceParams(0.5)) == pytest.approx(0.5 * math.exp(-0.5), rel=1e-14)
    assert poisson_weight(0, 0.8) == pytest.approx(math.exp(-0.8))
    assert abs(sum(poisson_weight(n, 0.5) for n in range(51)) - 1) < 1e-15


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.01, 5))
def test_poisson_log_concave(mu):
    logs = [math.log(poisson_weight(n, mu)) for n in range(30)]
    assert all(logs[n - 1] + logs[n + 1] <= 2 * logs[n] + 1e-12 for n in range(1, 29))
    assert all(0 <= poisson_weight(n, mu) <= 1 for n in range(30))
