"""Random strictly feasible test programs with a known interior point on both sides."""

from __future__ import annotations

import numpy as np

from .problem import SdpProblem


def random_problem(rng: np.random.Generator, max_blocks: int = 3, max_dim: int = 20, max_equalities: int = 50) -> SdpProblem:
    """Program with ``X0 > 0`` primal feasible and ``(y0, Z0 > 0)`` dual feasible.

    Block sizes are drawn from ``1..max_dim``, the number of equalities from
    ``1..max_equalities``; constraint matrices are symmetrized Gaussians.
    """
    nb = int(rng.integers(1, max_blocks + 1))
    dims = [int(rng.integers(1, max_dim + 1)) for _ in range(nb)]
    m = int(rng.integers(1, max_equalities + 1))
    x0, z0 = [], []
    for n in dims:
        g = rng.standard_normal((n, n))
        x0.append(g @ g.T + np.eye(n))
        g = rng.standard_normal((n, n))
        z0.append(g @ g.T + np.eye(n))
    cons = []
    for n in dims:
        a = rng.standard_normal((m, n, n))
        cons.append(a + a.transpose(0, 2, 1))
    b = sum(np.einsum("kij,ij->k", a, x) for a, x in zip(cons, x0))
    y0 = rng.standard_normal(m)
    c = [z + np.tensordot(y0, a, axes=1) for z, a in zip(z0, cons)]
    return SdpProblem(tuple(f"b{i}" for i in range(nb)), tuple(dims), tuple(c), tuple(cons), b)
