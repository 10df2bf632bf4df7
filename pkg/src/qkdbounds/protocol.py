"""BB84 signal model, detection model and the simulated lossy channel.

Photon-number states use two bosonic polarization modes; an ``n``-photon
state lives in the ``(n+1)``-dimensional span of ``|m, n-m>`` (``m`` photons in
the horizontal mode).  Bob's effective measurement space is a qubit plus a
vacuum level, ordered ``(|0>, |1>, |vac>)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hermitian import HermOp, TensorSpace

# column labels of the 4 x 5 distribution table
BOB_OUTCOMES = ("0", "1", "+", "-", "vac")
VAC = 4
BOB_DIM = 3
ALICE_DIM = 4


@dataclass(frozen=True)
class ChannelParams:
    """Background rate ``y0``, misalignment ``e_det`` and overall transmittance ``eta``.

    ``eta`` already contains the detector efficiency.  When ``distance_km`` is
    given, ``eta`` must equal ``eta_detector * 10**(-alpha * distance / 10)``;
    use :meth:`from_distance` to build such an instance.
    """

    y0: float
    e_det: float
    alpha_db_per_km: float = 0.21
    eta: float = 1.0
    distance_km: float | None = None
    eta_detector: float = 1.0

    def __post_init__(self):
        for nm in ("y0", "e_det", "eta", "eta_detector"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must lie in [0, 1], got {v}")
        if self.alpha_db_per_km < 0:
            raise ValueError("alpha_db_per_km must be >= 0")
        if self.distance_km is not None:
            if self.distance_km < 0:
                raise ValueError("distance_km must be >= 0")
            expect = self.eta_detector * 10 ** (-self.alpha_db_per_km * self.distance_km / 10)
            if abs(expect - self.eta) > 1e-12 * max(1.0, expect):
                raise ValueError("eta is inconsistent with distance_km, alpha and eta_detector")

    @classmethod
    def from_distance(cls, y0, e_det, alpha_db_per_km, distance_km, eta_detector) -> "ChannelParams":
        eta = eta_detector * 10 ** (-alpha_db_per_km * distance_km / 10)
        return cls(y0, e_det, alpha_db_per_km, eta, distance_km, eta_detector)

    @classmethod
    def from_loss(cls, y0, e_det, total_db, alpha_db_per_km=0.21, eta_detector=1.0) -> "ChannelParams":
        return cls(y0, e_det, alpha_db_per_km, eta_from_loss(total_db), None, eta_detector)


@dataclass(frozen=True)
class SourceParams:
    mu0: float = 0.5
    n_max: int = 20

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be > 0, got {self.mu0}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Joint table ``p[k, j]`` of Alice's state index and Bob's outcome."""

    n: int
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.shape != (4, 5):
            raise ValueError(f"distribution table must be 4 x 5, got {p.shape}")
        if np.any(p < 0):
            raise ValueError("distribution has negative entries")
        if abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"distribution sums to {p.sum()!r}")
        if np.max(np.abs(p.sum(axis=1) - 0.25)) > 1e-12:
            raise ValueError("row sums must all equal 1/4")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def detected(self) -> np.ndarray:
        """The 4 x 4 block of detected outcomes."""
        return self.p[:, :VAC]


GYS = {"y0": 1.7e-6, "e_det": 0.033, "alpha_db_per_km": 0.21, "eta_detector": 0.045}


def gys_channel(total_db: float) -> ChannelParams:
    """GYS experiment parameters at a given total (channel plus detector) loss."""
    return ChannelParams.from_loss(GYS["y0"], GYS["e_det"], total_db, GYS["alpha_db_per_km"], GYS["eta_detector"])


# --------------------------------------------------------------------------
# states and measurements


def bb84_fock_state(n: int, k: int) -> np.ndarray:
    """``|n_k>``: ``n`` photons all in BB84 polarization ``k`` (0, 1, +, -)."""
    if n < 0 or k not in (0, 1, 2, 3):
        raise ValueError(f"need n >= 0 and k in 0..3, got n={n}, k={k}")
    v = np.zeros(n + 1)
    if k == 0:
        v[n] = 1.0
    elif k == 1:
        v[0] = 1.0
    else:
        for m in range(n + 1):
            sign = (-1.0) ** (n - m) if k == 3 else 1.0
            v[m] = sign * math.sqrt(math.comb(n, m)) * 2.0 ** (-n / 2)
    return v


def phi_n_state(n: int) -> np.ndarray:
    """``|phi_n> = sum_k 1/2 |k>_A |n_k>_B`` as a vector on ``4 (n+1)`` dims."""
    out = np.zeros(4 * (n + 1))
    for k in range(4):
        out += 0.5 * np.kron(np.eye(4)[k], bb84_fock_state(n, k))
    return out


def reduced_alice_state(n: int) -> HermOp:
    """Alice's reduced state of ``|phi_n>`` in closed form."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = 2.0 ** (-n / 2)
    s = (-1) ** n * a
    mat = 0.25 * np.array([[1, 0, a, a], [0, 1, a, s], [a, a, 1, 0], [a, s, 0, 1]])
    return HermOp(TensorSpace((ALICE_DIM,)), mat)


def squashed_povm() -> list[HermOp]:
    """Bob's five POVM elements ``T_0, T_1, T_+, T_-, T_vac`` on qubit plus vacuum."""
    plus = np.array([1, 1, 0]) / math.sqrt(2)
    minus = np.array([1, -1, 0]) / math.sqrt(2)
    mats = [
        0.5 * np.diag([1.0, 0, 0]),
        0.5 * np.diag([0, 1.0, 0]),
        0.5 * np.outer(plus, plus),
        0.5 * np.outer(minus, minus),
        np.diag([0, 0, 1.0]),
    ]
    space = TensorSpace((BOB_DIM,))
    return [HermOp(space, m) for m in mats]


def alice_povm() -> list[HermOp]:
    space = TensorSpace((ALICE_DIM,))
    return [HermOp(space, np.diag(np.eye(4)[k])) for k in range(4)]


# --------------------------------------------------------------------------
# channel


def channel_yield(n: int, c: ChannelParams) -> float:
    """``Y_n = min(1, Y_0 + 1 - (1 - eta)^n)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return min(1.0, c.y0 + 1.0 - (1.0 - c.eta) ** n)


def channel_error(n: int, c: ChannelParams) -> float:
    """Error rate ``e_n`` of ``n``-photon signals; 1/2 when nothing is detected.

    The quotient uses the unclamped yield, so ``e_n`` stays in ``[0, 1]``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    signal = 1.0 - (1.0 - c.eta) ** n
    y = c.y0 + signal
    if y == 0:
        return 0.5
    return (c.e_det * signal + 0.5 * c.y0) / y


def distribution_from_yield(n: int, y: float, e: float) -> PhotonDistribution:
    """Table of probabilities for yield ``y`` and error rate ``e``."""
    p = np.empty((4, 5))
    for k in range(4):
        for j in range(4):
            if (k < 2) != (j < 2):
                p[k, j] = y / 16
            elif k % 2 == j % 2:
                p[k, j] = y * (1 - e) / 8
            else:
                p[k, j] = y * e / 8
        p[k, VAC] = (1 - y) / 4
    return PhotonDistribution(n, p)


def table1_distribution(n: int, c: ChannelParams) -> PhotonDistribution:
    if n < 1:
        raise ValueError("n must be >= 1")
    return distribution_from_yield(n, channel_yield(n, c), channel_error(n, c))


def poisson_weight(n: int, s: SourceParams | float) -> float:
    mu = s.mu0 if isinstance(s, SourceParams) else float(s)
    if n < 0:
        raise ValueError("n must be >= 0")
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def eta_from_loss(total_db: float) -> float:
    if total_db < 0:
        raise ValueError("total loss must be >= 0 dB")
    return 10.0 ** (-total_db / 10.0)


def detector_db(eta_detector: float) -> float:
    return -10.0 * math.log10(eta_detector)


def loss_from_distance(l_km: float, alpha: float, eta_detector: float) -> float:
    """Total loss in dB: fiber ``alpha * l`` plus the detector's share."""
    return alpha * l_km + detector_db(eta_detector)


def distance_from_loss(total_db: float, alpha: float, eta_detector: float) -> float:
    return (total_db - detector_db(eta_detector)) / alpha


def number_operators(n: int) -> np.ndarray:
    """``N[a, b] = a_a^dagger a_b`` on the ``n``-photon two-mode space.

    Basis index ``m`` counts photons in mode 0 (polarization ``|0>``).
    """
    m = np.arange(n + 1)
    out = np.zeros((2, 2, n + 1, n + 1))
    out[0, 0] = np.diag(m)
    out[1, 1] = np.diag(n - m)
    # a_0^dagger a_1 |m, n-m> = sqrt((m+1)(n-m)) |m+1, n-m-1>
    hop = np.zeros((n + 1, n + 1))
    for k in range(n):
        hop[k + 1, k] = math.sqrt((k + 1) * (n - k))
    out[0, 1] = hop
    out[1, 0] = hop.T
    return out


def single_photon_marginal(state: np.ndarray, n: int, dim_a: int = ALICE_DIM) -> np.ndarray:
    """Trace out ``n - 1`` of the ``n`` photons of the B part of an ``A (x) Fock_n`` operator.

    Returns an operator on ``A (x) qubit`` with entries
    ``<i a| out |i' b> = Tr_F(state_{i i'} a_b^dagger a_a) / n``.
    """
    ops = number_operators(n)
    blocks = state.reshape(dim_a, n + 1, dim_a, n + 1)
    out = np.einsum("iujv,bavu->iajb", blocks, ops) / n
    return out.reshape(2 * dim_a, 2 * dim_a)


def pauli_noise(rho: np.ndarray, e: float, dim_a: int = ALICE_DIM) -> np.ndarray:
    """Independent bit flip and phase flip, each with probability ``e``, on the qubit factor."""
    x = np.kron(np.eye(dim_a), np.array([[0, 1], [1, 0]]))
    z = np.kron(np.eye(dim_a), np.diag([1, -1]))
    rho = (1 - e) * rho + e * x @ rho @ x
    return (1 - e) * rho + e * z @ rho @ z


def with_vacuum(detected: np.ndarray, y: float, rho_a: np.ndarray) -> np.ndarray:
    """``y * detected + (1 - y) * rho_a (x) |vac><vac|`` on ``A (x) (qubit + vac)``."""
    da = rho_a.shape[0]
    out = np.zeros((da, BOB_DIM, da, BOB_DIM), dtype=np.result_type(detected, rho_a))
    out[:, :2, :, :2] = y * detected.reshape(da, 2, da, 2)
    out[:, 2, :, 2] = (1 - y) * rho_a
    return out.reshape(da * BOB_DIM, da * BOB_DIM)


def simulated_state(n: int, c: ChannelParams) -> np.ndarray:
    """A 12 x 12 state on A1 (x) B reproducing :func:`table1_distribution`.

    ``|phi_n>`` is sent through a channel that keeps one photon, applies
    independent bit and phase flips with probability ``e_n`` and is detected
    with probability ``Y_n``.  Serves as a feasibility witness for the SDPs.
    """
    y = channel_yield(n, c)
    e = channel_error(n, c)
    phi = phi_n_state(n)
    one = single_photon_marginal(np.outer(phi, phi), n)
    return with_vacuum(pauli_noise(one, e), y, reduced_alice_state(n).entries.real)


def intercept_resend_state(n: int, y: float = 1.0) -> np.ndarray:
    """Entanglement-breaking analogue: one photon measured in the Z basis and resent."""
    phi = phi_n_state(n)
    one = single_photon_marginal(np.outer(phi, phi), n).reshape(4, 2, 4, 2)
    out = np.zeros_like(one)
    for b in range(2):
        out[:, b, :, b] = one[:, b, :, b]
    return with_vacuum(out.reshape(8, 8), y, reduced_alice_state(n).entries.real)


def state_distribution(sigma: np.ndarray, n: int = 0) -> np.ndarray:
    """The raw 4 x 5 table ``Tr[(A_k (x) T_j) sigma]``."""
    bob = [t.entries for t in squashed_povm()]
    blocks = sigma.reshape(4, BOB_DIM, 4, BOB_DIM)
    diag = np.einsum("kbkc->kbc", blocks)
    return np.real(np.einsum("kbc,jcb->kj", diag, np.array(bob)))
