"""Block-diagonal semidefinite programs in equality standard form.

    minimize    sum_b <C_b, X_b>
    subject to  sum_b <A_ib, X_b> = b_i,   i = 1..m
                X_b >= 0 (real symmetric)

The dual is  maximize b^T y  subject to  C_b - sum_i y_i A_ib = Z_b >= 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

PIVOT_RTOL = 1e-10
CONSISTENCY_TOL = 1e-8
ZERO_ROW_RTOL = 1e-12


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    NUMERICAL_LIMIT = "NumericalLimit"


class InconsistentConstraints(ValueError):
    """A linearly dependent equality row disagrees with the rows it depends on."""

    def __init__(self, row: int, mismatch: float):
        super().__init__(f"equality {row} is dependent but inconsistent (rhs mismatch {mismatch:.3g})")
        self.row = row
        self.mismatch = mismatch


@dataclass(frozen=True)
class SdpOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    max_iters: int = 200
    step_fraction: float = 0.98
    infeasibility_streak: int = 5


@dataclass(frozen=True, eq=False)
class SdpProblem:
    block_names: tuple[str, ...]
    block_dims: tuple[int, ...]
    objective: tuple[np.ndarray, ...] = field(repr=False)
    constraints: tuple[np.ndarray, ...] = field(repr=False)  # per block, shape (m, n, n)
    rhs: np.ndarray = field(repr=False)
    complex_blocks: frozenset = frozenset()

    def __post_init__(self):
        names = tuple(self.block_names)
        dims = tuple(int(d) for d in self.block_dims)
        if len(set(names)) != len(names):
            raise ValueError("block names must be unique")
        if len(names) != len(dims) or len(self.objective) != len(dims) or len(self.constraints) != len(dims):
            raise ValueError("objective/constraints must give one matrix per declared block")
        rhs = np.array(self.rhs, dtype=float).reshape(-1)
        m = rhs.size
        objective, constraints = [], []
        for name, n, c, a in zip(names, dims, self.objective, self.constraints):
            c = np.array(c, dtype=float)
            a = np.array(a, dtype=float).reshape(m, n, n)
            if c.shape != (n, n):
                raise ValueError(f"objective for block {name!r} has shape {c.shape}")
            c = 0.5 * (c + c.T)
            a = 0.5 * (a + a.transpose(0, 2, 1))
            c.setflags(write=False)
            a.setflags(write=False)
            objective.append(c)
            constraints.append(a)
        rhs.setflags(write=False)
        unknown = set(self.complex_blocks) - set(names)
        if unknown:
            raise ValueError(f"complex_blocks names undeclared blocks {sorted(unknown)}")
        object.__setattr__(self, "block_names", names)
        object.__setattr__(self, "block_dims", dims)
        object.__setattr__(self, "objective", tuple(objective))
        object.__setattr__(self, "constraints", tuple(constraints))
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "complex_blocks", frozenset(self.complex_blocks))

    @classmethod
    def from_terms(
        cls,
        blocks: Sequence[tuple[str, int]],
        objective: Mapping[str, np.ndarray],
        equalities: Sequence[tuple[Mapping[str, np.ndarray], float]],
        complex_blocks=frozenset(),
    ) -> "SdpProblem":
        """Assemble from sparse ``{block name: matrix}`` functionals."""
        names = [b[0] for b in blocks]
        dims = [int(b[1]) for b in blocks]
        index = {nm: k for k, nm in enumerate(names)}
        for terms in [objective] + [t for t, _ in equalities]:
            for nm in terms:
                if nm not in index:
                    raise ValueError(f"functional references undeclared block {nm!r}")
        m = len(equalities)
        cons = [np.zeros((m, n, n)) for n in dims]
        for i, (terms, _) in enumerate(equalities):
            for nm, mat in terms.items():
                cons[index[nm]][i] = mat
        obj = [np.asarray(objective.get(nm, np.zeros((n, n))), dtype=float) for nm, n in zip(names, dims)]
        rhs = np.array([r for _, r in equalities], dtype=float)
        return cls(tuple(names), tuple(dims), tuple(obj), tuple(cons), rhs, frozenset(complex_blocks))

    @property
    def blocks(self) -> list[tuple[str, int]]:
        return list(zip(self.block_names, self.block_dims))

    @property
    def num_equalities(self) -> int:
        return self.rhs.size

    def constraint_matrix(self) -> np.ndarray:
        """Equalities as rows of an ``m x sum(n_b^2)`` matrix."""
        m = self.num_equalities
        return np.hstack([a.reshape(m, -1) for a in self.constraints]) if self.constraints else np.zeros((m, 0))

    def apply(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        """The vector ``A(X)``."""
        out = np.zeros(self.num_equalities)
        for a, x in zip(self.constraints, blocks):
            out += a.reshape(a.shape[0], -1) @ np.asarray(x).ravel()
        return out

    def adjoint(self, y: np.ndarray) -> list[np.ndarray]:
        """The blocks of ``A^T y``."""
        return [np.tensordot(y, a, axes=1) for a in self.constraints]

    def objective_value(self, blocks: Sequence[np.ndarray]) -> float:
        return float(sum(np.vdot(c, x) for c, x in zip(self.objective, blocks)))

    def select_rows(self, rows: Sequence[int]) -> "SdpProblem":
        rows = np.asarray(rows, dtype=int)
        return SdpProblem(
            self.block_names,
            self.block_dims,
            self.objective,
            tuple(a[rows] for a in self.constraints),
            self.rhs[rows],
            self.complex_blocks,
        )

    def scaled_objective(self, factor: float) -> "SdpProblem":
        return SdpProblem(
            self.block_names,
            self.block_dims,
            tuple(factor * c for c in self.objective),
            self.constraints,
            self.rhs,
            self.complex_blocks,
        )


@dataclass(frozen=True, eq=False)
class SdpSolution:
    status: Status
    primal_blocks: dict = field(repr=False)
    dual_vector: np.ndarray = field(repr=False)
    objective_value: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int = 0
    dual_blocks: dict = field(default_factory=dict, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "objective_value": self.objective_value,
            "dual_objective": self.dual_objective,
            "gap": self.gap,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
        }


def independent_rows(p: SdpProblem) -> tuple[np.ndarray, np.ndarray]:
    """Indices of a maximal linearly independent subset of the equalities.

    Returns ``(kept, dropped)``.  Raises :class:`InconsistentConstraints` if a
    dropped row's right-hand side disagrees with the combination of kept rows
    reproducing it.
    """
    mat = p.constraint_matrix()
    m = mat.shape[0]
    if m == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    norms = np.linalg.norm(mat, axis=1)
    # rows that are zero up to roundoff (e.g. after restricting to a face)
    zero = norms <= ZERO_ROW_RTOL * max(norms.max(), 1.0)
    for i in np.flatnonzero(zero):
        if abs(p.rhs[i]) > CONSISTENCY_TOL:
            raise InconsistentConstraints(int(i), abs(p.rhs[i]))
    live = np.flatnonzero(~zero)
    if live.size == 0:
        return live, np.flatnonzero(zero)
    unit = mat[live] / norms[live, None]
    _, r, piv = scipy.linalg.qr(unit.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > PIVOT_RTOL))
    kept = np.sort(live[piv[:rank]])
    dropped = np.setdiff1d(np.arange(m), kept)
    check = np.setdiff1d(dropped, np.flatnonzero(zero))
    if check.size:
        coef, *_ = np.linalg.lstsq(mat[kept].T, mat[check].T, rcond=None)
        pred = coef.T @ p.rhs[kept]
        mismatch = np.abs(pred - p.rhs[check]) / (1.0 + np.abs(p.rhs[check]))
        bad = np.argmax(mismatch)
        if mismatch[bad] > CONSISTENCY_TOL:
            raise InconsistentConstraints(int(check[bad]), float(mismatch[bad]))
    return kept, dropped


def preprocess(p: SdpProblem) -> SdpProblem:
    """Drop linearly dependent equalities (raises on inconsistent ones)."""
    kept, dropped = independent_rows(p)
    if dropped.size == 0:
        return p
    return p.select_rows(kept)
