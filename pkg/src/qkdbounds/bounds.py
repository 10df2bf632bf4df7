"""Per-photon-number decomposition programs and the assembled key-rate upper bounds.

For every photon number ``n`` the set of two-party states compatible with the
observed statistics is searched for the decomposition with the largest
"harmless" part:

* two-way post-processing: the largest PPT part (best separable approximation
  under the PPT surrogate);
* one-way post-processing: the largest part with a symmetric extension of
  Bob's system (direct reconciliation) or of Alice's system (reverse
  reconciliation).

The remainder carries the key; its weight times the mutual information of its
measurement statistics bounds the ``n``-photon contribution.

Two equivalent parameterizations of the compatible set are available.  The
*full* one works on Alice's 4-level system times Bob's qubit-plus-vacuum.
The *conditioned* one (the default inside :func:`rate_upper_bound`) works on
the state conditioned on a detection: a phase twirl between Bob's vacuum and
qubit sectors leaves the data unchanged, so the vacuum sector can be split off
as a product block and only the marginal inequality
``Y * Tr_B sigma_det <= rho_A`` remains.  In that form the harmless weight of the
full state is ``1 - Y (1 - lambda_det)``, which keeps the tiny key-carrying
weight at high loss well above the solver tolerance.  Alice's system is also
compressed onto the support of her reduced state.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hermitian import (
    HermOp,
    TensorSpace,
    hermitian_basis,
    pauli_tomography_basis,
    permute_systems,
    ptranspose,
    swap_operator,
    symmetric_isometries,
)
from .protocol import (
    ALICE_DIM,
    BOB_DIM,
    VAC,
    ChannelParams,
    PhotonDistribution,
    SourceParams,
    alice_povm,
    channel_error,
    channel_yield,
    poisson_weight,
    reduced_alice_state,
    squashed_povm,
    table1_distribution,
)
from .sdp import ProgramBuilder, SdpOptions, SdpProblem, Status, block_value, solve

log = logging.getLogger(__name__)

NO_KEY_THRESHOLD = 1e-6  # lambda >= 1 - this => no key from the n-photon term
POISSON_CUTOFF = 1e-9
CUTOFF_RATE = 1e-9
RANK_TOL = 1e-12
ZERO_PROB = 1e-15
MU0_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))


class Mode(str, enum.Enum):
    TWO_WAY = "two-way"
    ONE_WAY_DR = "one-way-dr"
    ONE_WAY_RR = "one-way-rr"
    ONE_WAY_DR_ANNOUNCED = "one-way-dr-announced"


class Direction(str, enum.Enum):
    DR = "DR"
    RR = "RR"


@dataclass(frozen=True, eq=False)
class EquivalenceClassSpec:
    """Observed data for one photon number: the 4 x 5 table and Alice's reduced state."""

    n: int
    dist: PhotonDistribution
    reduced: HermOp
    alice_povm: tuple = field(default_factory=lambda: tuple(alice_povm()), repr=False)
    bob_povm: tuple = field(default_factory=lambda: tuple(squashed_povm()), repr=False)

    def __post_init__(self):
        diag = np.real(np.diag(self.reduced.entries))
        marg = self.dist.p.sum(axis=1)
        if np.max(np.abs(diag - marg)) > 1e-10:
            raise ValueError("table marginals disagree with the diagonal of the reduced state")
        object.__setattr__(self, "alice_povm", tuple(self.alice_povm))
        object.__setattr__(self, "bob_povm", tuple(self.bob_povm))

    @classmethod
    def from_channel(cls, n: int, c: ChannelParams) -> "EquivalenceClassSpec":
        return cls(n, table1_distribution(n, c), reduced_alice_state(n))

    @property
    def yield_(self) -> float:
        """Detection probability ``1 - sum_k p[k, vac]``."""
        return float(1.0 - self.dist.p[:, VAC].sum())


# --------------------------------------------------------------------------
# compatible-state sets


@dataclass(frozen=True, eq=False)
class StateClass:
    """Linear description of a set of states on ``A (x) B``.

    ``Tr(F_i sigma) = v_i`` for every ``(F_i, v_i)`` in ``operators, values``,
    ``Tr sigma = 1`` and, depending on ``marginal_mode``:

    * ``"eq"``: ``marginal_scale * Tr_B sigma = marginal``;
    * ``"le"``: ``marginal_scale * Tr_B sigma <= marginal`` (PSD order);
    * ``None``: no marginal constraint.

    ``face`` is an isometry onto a subspace that must contain the support of
    every member (e.g. the common kernel of PSD operators with zero expected
    value); ``None`` means the whole space.  ``lift`` maps the class space into
    the 12-dimensional full space used to report residual states;
    ``yield_factor`` is the weight of this class in the full state (1 unless
    conditioned on detection).  ``slack_scaled`` rescales the slack of the
    ``"le"`` marginal by the square root of its trace, which helps the solver
    when that trace is tiny.
    """

    dims: tuple[int, int]
    operators: tuple = field(repr=False)
    values: np.ndarray = field(repr=False)
    marginal: np.ndarray | None = field(default=None, repr=False)
    marginal_mode: str | None = None
    marginal_scale: float = 1.0
    tomography: bool = False
    lift: np.ndarray | None = field(default=None, repr=False)
    yield_factor: float = 1.0
    face: np.ndarray | None = field(default=None, repr=False)
    slack_scaled: bool = False

    @property
    def dim(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def face_basis(self) -> np.ndarray:
        return np.eye(self.dim) if self.face is None else self.face

    @property
    def lift_basis(self) -> np.ndarray:
        return np.eye(self.dim) if self.lift is None else self.lift

    @classmethod
    def from_state(cls, rho: np.ndarray, dims: Sequence[int]) -> "StateClass":
        """The single state ``rho``, pinned by full tomography."""
        d = int(np.prod(dims))
        basis = hermitian_basis(d)
        vals = np.array([np.real(np.vdot(e, rho)) for e in basis])
        face = support_isometry(rho)
        return cls(tuple(dims), tuple(basis), vals, face=None if face.shape[1] == d else face)


def support_isometry(rho: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Columns spanning the range of ``rho`` (eigenvectors with eigenvalue > tol)."""
    w, v = np.linalg.eigh(rho)
    return v[:, w > tol * max(1.0, w[-1])]


def kernel_isometry(a: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the null space of ``a`` (columns)."""
    if a.size == 0:
        return np.eye(a.shape[1])
    _, s, vh = np.linalg.svd(a)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return vh[rank:].conj().T


def zero_face(operators, values, d: int) -> np.ndarray | None:
    """Subspace forced by PSD operators whose expected value is zero.

    ``Tr(F sigma) = 0`` with ``F, sigma >= 0`` confines the support of
    ``sigma`` to the kernel of ``F``.  Restricting the variables to that face
    restores strict feasibility, which the interior-point method needs.
    """
    acc = np.zeros((d, d), dtype=complex)
    hit = False
    for f, v in zip(operators, values):
        if abs(v) <= ZERO_PROB and np.linalg.eigvalsh(f)[0] >= -RANK_TOL:
            acc += f
            hit = True
    if not hit:
        return None
    w, vecs = np.linalg.eigh(acc)
    keep = w <= RANK_TOL * max(1.0, w[-1])
    face = vecs[:, keep]
    if not np.iscomplexobj(np.asarray(operators[0])) or np.allclose(face.imag, 0):
        face = face.real
    return face


def state_class(
    spec: EquivalenceClassSpec, conditioned: bool = False, compress: bool = False, reduce_face: bool = True
) -> StateClass:
    """Compatible-state set for ``spec``.

    ``conditioned`` switches to the detection-conditioned state on ``A (x) qubit``
    (requires a nonzero yield).  ``compress`` restricts Alice's system to the
    support of her reduced state when that state is rank deficient.
    ``reduce_face`` confines the state to the face forced by zero probabilities.
    """
    rho_a = spec.reduced.entries.real if np.allclose(spec.reduced.entries.imag, 0) else spec.reduced.entries
    v = support_isometry(rho_a) if compress else np.eye(ALICE_DIM)
    if v.shape[1] == ALICE_DIM:
        v = np.eye(ALICE_DIM)
    r = v.shape[1]
    a_ops = [v.conj().T @ a.entries.real @ v for a in spec.alice_povm]
    rho_c = v.conj().T @ rho_a @ v
    if not conditioned:
        b_ops = [t.entries.real for t in spec.bob_povm]
        ops, vals = [], []
        for k in range(4):
            for j in range(5):
                ops.append(np.kron(a_ops[k], b_ops[j]))
                vals.append(spec.dist.p[k, j])
        face = zero_face(ops, vals, r * BOB_DIM) if reduce_face else None
        lift = np.kron(v, np.eye(BOB_DIM))
        return StateClass((r, BOB_DIM), tuple(ops), np.array(vals), rho_c, "eq", 1.0, not compress, lift, 1.0, face)
    y = spec.yield_
    if y <= 0:
        raise ValueError("conditioning on detection needs a nonzero yield")
    q = np.eye(BOB_DIM)[:, :2]
    b_ops = [q.T @ t.entries.real @ q for t in spec.bob_povm[:VAC]]
    ops, vals = [], []
    for k in range(4):
        for j in range(4):
            ops.append(np.kron(a_ops[k], b_ops[j]))
            vals.append(spec.dist.p[k, j] / y)
    face = zero_face(ops, vals, 2 * r) if reduce_face else None
    lift = np.kron(v, q)
    # with no vacuum weight left the inequality is an equality
    mode = "eq" if 1.0 - y <= ZERO_PROB else "le"
    return StateClass((r, 2), tuple(ops), np.array(vals), rho_c, mode, y, False, lift, y, face)


def _add_class(b: ProgramBuilder, cls: StateClass, var: str, field_: str):
    """Declare ``var`` on the face of ``cls`` and add its defining equalities."""
    da, db = cls.dims
    w = cls.face_basis
    k = w.shape[1]
    b.add_variable(var, k, field_)

    def pull(f):
        return w.conj().T @ f @ w

    b.add_equality({var: np.eye(k)}, 1.0)
    for f, v in zip(cls.operators, cls.values):
        b.add_equality({var: pull(f)}, v)
    s = cls.marginal_scale
    if cls.marginal_mode is None:
        return
    if cls.marginal_mode == "eq":
        if cls.tomography and da == 4 and s == 1.0:
            # Alice's reduced state pinned through the Pauli operator set
            for c in pauli_tomography_basis((4,)):
                b.add_equality({var: pull(np.kron(c.entries, np.eye(db)))}, np.real(np.trace(c.entries @ cls.marginal)))
        else:
            b.add_matrix_equality({var: lambda e: s * pull(np.kron(e, np.eye(db)))}, cls.marginal, da)
    elif cls.marginal_mode == "le":
        t = math.sqrt(max(float(np.real(np.trace(cls.marginal))) - s, 0.0)) if cls.slack_scaled else 1.0
        t = t if t > 0 else 1.0
        b.add_variable("vac", da, field_)
        b.add_matrix_equality({var: lambda e: s * pull(np.kron(e, np.eye(db))), "vac": lambda e: t * e}, cls.marginal, da)
    else:
        raise ValueError(f"unknown marginal mode {cls.marginal_mode!r}")


# --------------------------------------------------------------------------
# programs


@dataclass(frozen=True, eq=False)
class DecompositionProgram:
    """An SDP together with what is needed to read a decomposition off its solution."""

    problem: SdpProblem
    state_class: StateClass
    kind: str
    constant: float
    residual_block: str = "diff"
    residual_lift: np.ndarray | None = field(default=None, repr=False)
    rebuild: Callable[[StateClass], DecompositionProgram] | None = field(default=None, repr=False)

    def lambda_from(self, objective_value: float) -> float:
        # every program minimizes 1 - (harmless weight)
        return 1.0 - (objective_value + self.constant)


def bsa_program(cls: StateClass, field_: str = "complex") -> DecompositionProgram:
    """Largest PPT part: blocks ``sigma``, ``sep``, ``sep_pt`` and ``diff = sigma - sep``."""
    da, db = cls.dims
    d = cls.dim
    w = cls.face_basis
    k = w.shape[1]
    b = ProgramBuilder()
    _add_class(b, cls, "sigma", field_)
    # sep and diff are dominated by sigma, so they share its face
    b.add_variable("sep", k, field_)
    b.add_variable("sep_pt", d, field_)
    b.add_variable("diff", k, field_)
    dims = [da, db]
    b.add_matrix_equality(
        {"sep_pt": lambda e: e, "sep": lambda e: -(w.conj().T @ ptranspose(e, dims, 1) @ w)}, np.zeros((d, d)), d
    )
    b.add_matrix_equality({"diff": lambda e: e, "sigma": lambda e: -e, "sep": lambda e: e}, np.zeros((k, k)), k)
    b.minimize({"sep": -np.eye(k)}, constant=1.0)
    return DecompositionProgram(
        b.build(), cls, "bsa", 1.0, "diff", cls.lift_basis @ w, lambda c: bsa_program(c, field_)
    )


def _extension_maps(da: int, db: int, direction: Direction):
    """Swap-sector isometries and the embedding ``E -> E (x) 1`` for an extension.

    DR orders the extension space as (A, B, B'); RR as (A, A', B).  Returns
    ``(W_sym, W_anti, full_dims, embed, swapped_pair)``.
    """
    if direction is Direction.DR:
        vs, va = symmetric_isometries(db)
        ws, wa = np.kron(np.eye(da), vs), np.kron(np.eye(da), va)
        full = [da, db, db]

        def embed(e):
            return np.kron(e, np.eye(db))

        swap = (1, 2)
    else:
        vs, va = symmetric_isometries(da)
        ws, wa = np.kron(vs, np.eye(db)), np.kron(va, np.eye(db))
        full = [da, da, db]

        def embed(e):
            return permute_systems(np.kron(e, np.eye(da)), [da, db, da], [0, 2, 1])

        swap = (0, 1)
    return ws, wa, full, embed, swap


def _add_extension(
    b: ProgramBuilder, da: int, db: int, direction: Direction, extension: str, field_: str, face: np.ndarray | None
):
    """Declare the extension blocks.

    Returns ``(adjoints, traces)``: for each block the adjoint of
    ``X -> Tr_copy(ext(X))`` as a function of an operator on ``A (x) B``, and
    the identity functional giving its trace.  With a ``face`` the sectors are
    restricted to vectors whose marginal support stays inside it.
    """
    ws, wa, full, embed, swap = _extension_maps(da, db, direction)
    adj, traces = {}, {}
    if extension in ("split", "bosonic"):
        sectors = [("ext_sym", ws)] + ([("ext_anti", wa)] if extension == "split" else [])
        if face is not None:
            outside = np.eye(int(np.prod(full))) - embed(face @ face.conj().T)
            sectors = [(nm, w @ kernel_isometry(outside @ w)) for nm, w in sectors]
        for name, w in sectors:
            if w.shape[1] == 0:
                continue
            b.add_variable(name, w.shape[1], field_)
            adj[name] = lambda e, w=w: w.conj().T @ embed(e) @ w
            traces[name] = np.eye(w.shape[1])
    elif extension == "full":
        n = int(np.prod(full))
        b.add_variable("ext", n, field_)
        p = swap_operator(full, *swap)
        b.add_matrix_equality({"ext": lambda e: p @ e @ p - e}, np.zeros((n, n)), n)
        adj["ext"] = embed
        traces["ext"] = np.eye(n)
    else:
        raise ValueError(f"extension must be 'split', 'full' or 'bosonic', got {extension!r}")
    return adj, traces


def bea_program(
    cls: StateClass, direction: Direction | str = Direction.DR, extension: str = "split", field_: str = "complex"
) -> DecompositionProgram:
    """Largest symmetrically extendible part: ``sigma``, ``diff`` and the extension blocks."""
    direction = Direction(direction)
    da, db = cls.dims
    d = cls.dim
    w = cls.face_basis
    k = w.shape[1]
    b = ProgramBuilder()
    _add_class(b, cls, "sigma", field_)
    b.add_variable("diff", k, field_)
    adj, traces = _add_extension(b, da, db, direction, extension, field_, cls.face)

    def pull(e):
        return w.conj().T @ e @ w

    terms = {"diff": pull, "sigma": lambda e: -pull(e)}
    terms.update(adj)
    b.add_matrix_equality(terms, np.zeros((d, d)), d)
    b.minimize({nm: -t for nm, t in traces.items()}, constant=1.0)
    return DecompositionProgram(
        b.build(),
        cls,
        f"bea-{direction.value}",
        1.0,
        "diff",
        cls.lift_basis @ w,
        lambda c: bea_program(c, direction, extension, field_),
    )


def announced_program(
    spec: EquivalenceClassSpec,
    extension: str = "split",
    field_: str = "complex",
    compress: bool = False,
    reduce_face: bool = True,
) -> DecompositionProgram:
    """Direct reconciliation applied to the detection-postselected state.

    The full state ``sigma`` is constrained by the data; the extension and the
    difference constraint act on ``Q^T sigma Q / Y`` with ``Q`` the isometry onto
    Bob's qubit sector.
    """
    y = spec.yield_
    if y <= 0:
        raise ValueError("postselection needs a nonzero yield")
    cls = state_class(spec, conditioned=False, compress=compress, reduce_face=reduce_face)
    da = cls.dims[0]
    d_post = 2 * da
    q = np.kron(np.eye(da), np.eye(BOB_DIM)[:, :2])
    w = cls.face_basis
    post_face = None
    if cls.face is not None:
        u, s, _ = np.linalg.svd(q.T @ w, full_matrices=False)
        post_face = u[:, s > RANK_TOL]
    wp = np.eye(d_post) if post_face is None else post_face
    b = ProgramBuilder()
    _add_class(b, cls, "sigma", field_)
    b.add_variable("diff", wp.shape[1], field_)
    adj, traces = _add_extension(b, da, 2, Direction.DR, extension, field_, post_face)
    terms = {
        "diff": lambda e: wp.conj().T @ e @ wp,
        "sigma": lambda e: -(w.conj().T @ q @ e @ q.T @ w) / y,
    }
    terms.update(adj)
    b.add_matrix_equality(terms, np.zeros((d_post, d_post)), d_post)
    b.minimize({nm: -t for nm, t in traces.items()}, constant=1.0)
    return DecompositionProgram(b.build(), cls, "bea-DR-announced", 1.0, "diff", cls.lift_basis @ q @ wp)


def build_bsa_sdp(
    spec: EquivalenceClassSpec,
    conditioned: bool = False,
    compress: bool = False,
    field_: str = "complex",
    reduce_face: bool = True,
) -> SdpProblem:
    """PPT-weight program; blocks ``sigma``, ``sep``, ``sep_pt``, ``diff``."""
    return bsa_program(state_class(spec, conditioned, compress, reduce_face), field_).problem


def build_bea_sdp(
    spec: EquivalenceClassSpec,
    direction: Direction | str = Direction.DR,
    extension: str = "split",
    conditioned: bool = False,
    compress: bool = False,
    field_: str = "complex",
    reduce_face: bool = True,
) -> SdpProblem:
    """Symmetric-extension weight program for the given reconciliation direction."""
    return bea_program(state_class(spec, conditioned, compress, reduce_face), direction, extension, field_).problem


def build_bea_sdp_announced(
    spec: EquivalenceClassSpec, extension: str = "split", field_: str = "complex", reduce_face: bool = True
) -> SdpProblem:
    """Direct-reconciliation extension program on the click-postselected state."""
    return announced_program(spec, extension, field_, reduce_face=reduce_face).problem


# --------------------------------------------------------------------------
# decomposition results


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    lambda_: float
    residual_state: HermOp | None = field(repr=False)
    mutual_info_bits: float
    solver_cert: dict = field(repr=False)
    status: Status = Status.OPTIMAL

    @property
    def no_key(self) -> bool:
        return self.lambda_ >= 1.0 - NO_KEY_THRESHOLD

    @property
    def entangled_weight(self) -> float:
        return 0.0 if self.no_key else 1.0 - self.lambda_


def mutual_information(table: np.ndarray) -> float:
    """Shannon mutual information (bits) between the row and column index of a joint table."""
    q = np.array(table, dtype=float)
    if np.any(q < -1e-12):
        log.debug("clamping negative table entries down to %.3g", q.min())
    q = np.clip(q, 0.0, None)
    total = q.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"distribution sums to {total!r}; renormalization beyond 1e-6 refused")
    q = q / total
    qa = q.sum(axis=1, keepdims=True)
    qb = q.sum(axis=0, keepdims=True)
    mask = q > 0
    ratio = q[mask] / (qa @ qb)[mask]
    return float(max(0.0, np.sum(q[mask] * np.log2(ratio))))


def _psd_part(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (x + x.conj().T))
    return (v * np.clip(w, 0, None)) @ v.conj().T


def residual_distribution(residual_state: HermOp | np.ndarray, spec: EquivalenceClassSpec | None = None) -> np.ndarray:
    """Table ``Tr[(A_k (x) T_j) rho]`` for a residual state on the full 12-dim space."""
    rho = residual_state.entries if isinstance(residual_state, HermOp) else np.asarray(residual_state)
    a_ops = spec.alice_povm if spec is not None else alice_povm()
    b_ops = spec.bob_povm if spec is not None else squashed_povm()
    out = np.empty((len(a_ops), len(b_ops)))
    for k, a in enumerate(a_ops):
        for j, t in enumerate(b_ops):
            out[k, j] = np.real(np.vdot(np.kron(a.entries, t.entries), rho))
    out = np.clip(out, 0.0, None)
    s = out.sum()
    return out / s if s > 0 else out


def _can_rescale(prog: DecompositionProgram) -> bool:
    cls = prog.state_class
    return prog.rebuild is not None and cls.marginal_mode == "le" and not cls.slack_scaled


def solve_decomposition(
    prog: DecompositionProgram, spec: EquivalenceClassSpec | None = None, options: SdpOptions | None = None
) -> DecompositionResult:
    sol = solve(prog.problem, options)
    if sol.status is Status.NUMERICAL_LIMIT and _can_rescale(prog):
        # near-lossless classes leave a slack with tiny trace; retry with it rescaled
        scaled = prog.rebuild(dataclasses.replace(prog.state_class, slack_scaled=True))
        retry = solve(scaled.problem, options)
        if retry.status is Status.OPTIMAL:
            prog, sol = scaled, retry
    lam = float(np.clip(prog.lambda_from(sol.objective_value), 0.0, 1.0)) if np.isfinite(sol.objective_value) else 1.0
    cert = sol.summary()
    residual, info = None, 0.0
    if lam < 1.0 - NO_KEY_THRESHOLD and sol.status in (Status.OPTIMAL, Status.NUMERICAL_LIMIT):
        diff = _psd_part(block_value(sol, prog.problem, prog.residual_block))
        full = prog.residual_lift @ diff @ prog.residual_lift.conj().T
        tr = np.real(np.trace(full))
        if tr > 0 and full.shape[0] == ALICE_DIM * BOB_DIM:
            full = full / tr
            residual = HermOp.from_matrix(full, (ALICE_DIM, BOB_DIM))
            info = mutual_information(residual_distribution(residual, spec))
        elif tr > 0:  # not a protocol state: keep the residual, no statistics to report
            residual = HermOp.from_matrix(full / tr, prog.state_class.dims)
    return DecompositionResult(lam, residual, info, cert, sol.status)


# --------------------------------------------------------------------------
# unambiguous-state-discrimination truncation


def usd_success_probability(n: int) -> float:
    """``P_D^n``: success probability of unambiguously identifying ``|n_k>``."""
    if n <= 2:
        return 0.0
    if n % 2 == 0:
        return 1.0 - 2.0 ** (1 - n / 2)
    return 1.0 - 2.0 ** ((1 - n) / 2)


def usd_threshold(n: int) -> float:
    """``eta_n = 1 - (1 - P_D^n)^(1/n)``: at or below this transmittance the n-photon term is zero."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 - (1.0 - usd_success_probability(n)) ** (1.0 / n)


def usd_excluded(n: int, eta: float) -> bool:
    return n >= 3 and eta <= usd_threshold(n)


def usd_floor_bounds(eta: float) -> tuple[int, int] | None:
    """``(even bound, odd bound)`` from the floor formulas; ``None`` when no truncation applies."""
    if not 0.0 < eta < 1.0:
        return None
    ell = math.log2(math.sqrt(2.0) * (1.0 - eta))
    if ell <= 0:
        return None
    return math.floor(1.0 / ell), math.floor(1.0 / (2.0 * ell))


def poisson_cutoff(mu0: float, threshold: float = POISSON_CUTOFF) -> int:
    """Largest ``n >= 1`` with ``r_n >= threshold`` (``r_n`` decreases past the mode)."""
    n = max(1, int(mu0))
    while poisson_weight(n + 1, mu0) >= threshold or n + 1 <= mu0:
        n += 1
    return n


def usd_truncation(eta: float, mu0: float = 0.5) -> int:
    """Largest photon number not excluded by the USD attack.

    Falls back to the Poisson cutoff when the floor formulas do not apply
    (``eta >= 1 - 1/sqrt(2)``).
    """
    bounds = usd_floor_bounds(eta)
    if bounds is None:
        return poisson_cutoff(mu0)
    even, odd = bounds
    even -= even % 2
    odd -= 1 - odd % 2
    return max(2, even, odd)


def photon_numbers(eta: float, s: SourceParams) -> list[int]:
    """Photon numbers that can contribute: within all cutoffs and not USD-excluded."""
    top = min(s.n_max, usd_truncation(eta, s.mu0), poisson_cutoff(s.mu0))
    return [n for n in range(1, top + 1) if not usd_excluded(n, eta)]


# --------------------------------------------------------------------------
# rate assembly


@dataclass(frozen=True)
class PhotonTerm:
    """One photon-number contribution ``r_n * yield_factor * (1 - lambda) * I``."""

    n: int
    r_n: float
    lambda_: float
    mutual_info: float
    yield_factor: float = 1.0
    status: str = Status.OPTIMAL.value
    fallback: bool = False
    certificate: dict = field(default_factory=dict)  # solver summary for the n-photon program

    @property
    def contribution(self) -> float:
        if self.fallback:
            return self.r_n * self.mutual_info
        if self.lambda_ >= 1.0 - NO_KEY_THRESHOLD:
            return 0.0
        return self.r_n * self.yield_factor * (1.0 - self.lambda_) * self.mutual_info


@dataclass(frozen=True)
class RatePoint:
    total_db: float
    k_upper: float
    per_n: tuple[PhotonTerm, ...]
    n_max_used: int
    mode: Mode
    mu0: float
    warnings: tuple[str, ...] = ()

    @property
    def flagged(self) -> bool:
        return bool(self.warnings)


def decomposition_for(
    spec: EquivalenceClassSpec,
    mode: Mode | str,
    conditioned: bool = True,
    field_: str = "real",
    extension: str = "split",
) -> DecompositionProgram:
    """The program used for ``mode``; see the module docstring for ``conditioned``."""
    mode = Mode(mode)
    if mode is Mode.ONE_WAY_DR:
        # Bob's vacuum enters the extension, so no conditioning here
        return bea_program(state_class(spec, False, True), Direction.DR, extension, field_)
    if conditioned:
        cls = state_class(spec, True, True)
        if mode is Mode.TWO_WAY:
            return bsa_program(cls, field_)
        direction = Direction.RR if mode is Mode.ONE_WAY_RR else Direction.DR
        return bea_program(cls, direction, extension, field_)
    if mode is Mode.TWO_WAY:
        return bsa_program(state_class(spec, False, True), field_)
    if mode is Mode.ONE_WAY_RR:
        return bea_program(state_class(spec, False, True), Direction.RR, extension, field_)
    return announced_program(spec, extension, field_, compress=True)


def photon_term(
    n: int,
    c: ChannelParams,
    mode: Mode | str,
    r_n: float = 1.0,
    options: SdpOptions | None = None,
    conditioned: bool = True,
) -> tuple[PhotonTerm, DecompositionResult | None]:
    mode = Mode(mode)
    spec = EquivalenceClassSpec.from_channel(n, c)
    y = spec.yield_
    if y <= 0:
        return PhotonTerm(n, r_n, 1.0, 0.0, 0.0), None
    prog = decomposition_for(spec, mode, conditioned)
    res = solve_decomposition(prog, spec, options)
    yf = y if mode is Mode.ONE_WAY_DR_ANNOUNCED else prog.state_class.yield_factor
    cert = {k: (v if isinstance(v, (str, int)) else float(v)) for k, v in res.solver_cert.items()}
    if res.status is not Status.OPTIMAL:
        raw = mutual_information(spec.dist.p)
        return PhotonTerm(n, r_n, res.lambda_, raw, yf, res.status.value, True, cert), res
    return PhotonTerm(n, r_n, res.lambda_, res.mutual_info_bits, yf, certificate=cert), res


def _total_db(c: ChannelParams) -> float:
    return -10.0 * math.log10(c.eta) if c.eta > 0 else math.inf


def rate_upper_bound(
    c: ChannelParams,
    s: SourceParams | None = None,
    mode: Mode | str = Mode.TWO_WAY,
    optimize_mu0: bool = False,
    options: SdpOptions | None = None,
    conditioned: bool = True,
) -> RatePoint:
    """Poisson-weighted upper bound on the key rate (bits per pulse) for ``mode``.

    With ``optimize_mu0`` the bound is maximized over :data:`MU0_GRID`; the
    per-``n`` programs do not depend on ``mu0`` so they are solved once.
    """
    mode = Mode(mode)
    s = s or SourceParams()
    mus = MU0_GRID if optimize_mu0 else (s.mu0,)
    ns_by_mu = {mu: photon_numbers(c.eta, SourceParams(mu, s.n_max)) for mu in mus}
    all_n = sorted(set().union(*ns_by_mu.values()))
    base, notes = {}, []
    for n in all_n:
        term, _ = photon_term(n, c, mode, 1.0, options, conditioned)
        base[n] = term
        if term.fallback:
            msg = f"n={n}: solver status {term.status}; using r_n * I(raw table)"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    best = None
    for mu in mus:
        terms = tuple(
            PhotonTerm(
                t.n, poisson_weight(t.n, mu), t.lambda_, t.mutual_info, t.yield_factor, t.status, t.fallback, t.certificate
            )
            for t in (base[n] for n in ns_by_mu[mu])
        )
        k = float(sum(t.contribution for t in terms))
        if best is None or k > best[0]:
            best = (k, mu, terms)
    k, mu, terms = best
    n_used = max((t.n for t in terms), default=0)
    return RatePoint(_total_db(c), k, terms, n_used, mode, mu, tuple(notes))


def find_cutoff(
    mode: Mode | str,
    channel_at,
    lo: float,
    hi: float,
    s: SourceParams | None = None,
    resolution: float = 0.05,
    threshold: float = CUTOFF_RATE,
    optimize_mu0: bool = False,
    options: SdpOptions | None = None,
) -> float | None:
    """Smallest total loss in ``[lo, hi]`` where the bound drops below ``threshold``.

    ``channel_at(total_db)`` returns the :class:`ChannelParams` at a loss.
    Returns ``None`` when the bound is still above threshold at ``hi``, and
    ``lo`` when it is already below at ``lo``.  Assumes the bound is
    non-increasing in loss.
    """

    def rate(db):
        return rate_upper_bound(channel_at(db), s, mode, optimize_mu0, options).k_upper

    if rate(hi) >= threshold:
        return None
    if rate(lo) < threshold:
        return lo
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if rate(mid) < threshold:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
