"""Small modeling layer: Hermitian matrix variables on top of :class:`SdpProblem`.

A complex ``d x d`` Hermitian variable ``H`` is stored as a free real symmetric
``2d x 2d`` block ``Z``.  Every functional is written as
``Tr(F H) = 1/2 <emb(F), Z>`` with ``emb(F) = [[Re F, -Im F], [Im F, Re F]]``,
so only the part of ``Z`` invariant under the complex structure enters the
problem; ``H`` is recovered from the projection of ``Z`` onto that part, which
is PSD whenever ``Z`` is.  Variables declared with ``field="real"`` are plain
``d x d`` real symmetric blocks.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..hermitian import embed_matrix, extract_matrix, hermitian_basis, symmetrize_embedding
from .problem import SdpProblem, SdpSolution


class ProgramBuilder:
    """Collects Hermitian variables, linear equalities and a linear objective."""

    def __init__(self):
        self._vars: dict[str, tuple[int, str]] = {}
        self._equalities: list[tuple[dict, float]] = []
        self._objective: dict = {}
        self.objective_constant = 0.0
        self.objective_sign = 1.0

    def add_variable(self, name: str, dim: int, field: str = "complex") -> str:
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        if field not in ("complex", "real"):
            raise ValueError(f"field must be 'complex' or 'real', got {field!r}")
        self._vars[name] = (int(dim), field)
        return name

    def dim(self, name: str) -> int:
        return self._vars[name][0]

    def is_real(self, name: str) -> bool:
        return self._vars[name][1] == "real"

    def _lower(self, terms: Mapping[str, np.ndarray]) -> dict:
        out = {}
        for name, f in terms.items():
            if name not in self._vars:
                raise ValueError(f"unknown variable {name!r}")
            d, field = self._vars[name]
            f = np.asarray(f)
            if f.shape != (d, d):
                raise ValueError(f"functional for {name!r} has shape {f.shape}, expected {(d, d)}")
            f = 0.5 * (f + f.conj().T)
            if field == "real":
                out[name] = np.real(f)
            else:
                out[name] = 0.5 * embed_matrix(f)
        return out

    def add_equality(self, terms: Mapping[str, np.ndarray], rhs: float):
        """``sum_v Tr(F_v H_v) = rhs`` for Hermitian ``F_v``."""
        self._equalities.append((self._lower(terms), float(rhs)))

    def add_matrix_equality(
        self,
        terms: Mapping[str, Callable[[np.ndarray], np.ndarray]],
        rhs: np.ndarray,
        dim: int,
        real: bool | None = None,
    ):
        """``sum_v L_v(H_v) = R`` as a ``dim x dim`` Hermitian identity.

        Each ``L_v`` is given through its adjoint: ``terms[v](E)`` must return
        ``L_v^dagger(E)``, an operator on the space of ``H_v``.  One scalar
        equality is added per element of an orthonormal Hermitian basis (only
        the real symmetric part when ``real`` is set; by default this happens
        when every variable involved is real and ``rhs`` is real).
        """
        rhs = np.asarray(rhs)
        if real is None:
            real = all(self.is_real(v) for v in terms) and not np.iscomplexobj(rhs)
        for e in hermitian_basis(dim, real=real):
            self.add_equality({v: adj(e) for v, adj in terms.items()}, float(np.real(np.vdot(e, rhs))))

    def minimize(self, terms: Mapping[str, np.ndarray], constant: float = 0.0):
        self._objective = self._lower(terms)
        self.objective_constant = float(constant)
        self.objective_sign = 1.0

    def maximize(self, terms: Mapping[str, np.ndarray], constant: float = 0.0):
        """Stored as minimization of the negated functional."""
        self._objective = {k: -v for k, v in self._lower(terms).items()}
        self.objective_constant = -float(constant)
        self.objective_sign = -1.0

    def build(self) -> SdpProblem:
        blocks = []
        for name, (d, field) in self._vars.items():
            blocks.append((name, d if field == "real" else 2 * d))
        cplx = frozenset(n for n, (_, f) in self._vars.items() if f == "complex")
        return SdpProblem.from_terms(blocks, self._objective, self._equalities, cplx)


def block_value(solution: SdpSolution, problem: SdpProblem, name: str) -> np.ndarray:
    """Hermitian matrix of variable ``name`` (complex blocks are de-embedded)."""
    z = solution.primal_blocks[name]
    if name in problem.complex_blocks:
        return extract_matrix(symmetrize_embedding(z))
    return np.asarray(z, dtype=complex)
