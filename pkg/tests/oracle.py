"""Independent conic-solver oracle (cvxpy + Clarabel) for SdpProblem instances.

Used offline by tools/make_reference.py and by the optional live cross-check
tests; the package itself never imports it.
"""

import numpy as np

from qkdbounds.bounds import EquivalenceClassSpec, StateClass, bsa_program, decomposition_for
from qkdbounds.protocol import gys_channel


def reference_objective(p, tol=1e-10):
    """Optimal value of ``p`` from Clarabel, plus the solver status string."""
    import cvxpy as cp

    xs = [cp.Variable((n, n), PSD=True) for n in p.block_dims]
    m = p.num_equalities
    lhs = sum(a.reshape(m, -1) @ cp.vec(x, order="C") for a, x in zip(p.constraints, xs))
    obj = sum(cp.sum(cp.multiply(c, x)) for c, x in zip(p.objective, xs))
    prob = cp.Problem(cp.Minimize(obj), [lhs == p.rhs])
    prob.solve(solver="CLARABEL", tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol, max_iter=500)
    return float(prob.value) if prob.value is not None else float("nan"), prob.status


def rel_diff(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def werner_state(p):
    """``p |psi-><psi-| + (1 - p) I/4`` on two qubits."""
    psi = np.array([0.0, 1.0, -1.0, 0.0]) / np.sqrt(2.0)
    return p * np.outer(psi, psi) + (1 - p) * np.eye(4) / 4


def build_instance(mode, db, n):
    """The program solved for photon number ``n`` at GYS loss ``db``."""
    spec = EquivalenceClassSpec.from_channel(n, gys_channel(db))
    return decomposition_for(spec, mode)


def werner_program(p):
    return bsa_program(StateClass.from_state(werner_state(p), (2, 2)), "complex")
