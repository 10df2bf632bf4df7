"""Regenerate tests/data/reference_values.json from an independent conic solver.

Run once offline (needs cvxpy with Clarabel):

    python tools/make_reference.py

The resulting numbers are frozen into the repository; the test suite compares
the in-house interior-point solver against them.
"""

import json
import pathlib
import sys
import warnings

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracle import build_instance, reference_objective, werner_program  # noqa: E402

from qkdbounds.bounds import Mode, photon_numbers  # noqa: E402
from qkdbounds.protocol import SourceParams, gys_channel  # noqa: E402
from qkdbounds.sdp.generate import random_problem  # noqa: E402

RANDOM_SEEDS = list(range(25))
SAMPLED_LOSSES = [3.0, 20.0, 45.0]
WERNER_P = [0.4, 0.6, 0.8, 1.0]


def decomposition_instances():
    """(mode, loss, n) for every photon-number program solved at the sampled losses."""
    for db in SAMPLED_LOSSES:
        c = gys_channel(db)
        for n in photon_numbers(c.eta, SourceParams(0.5)):
            for mode in Mode:
                yield mode.value, db, n


def main():
    out = {"random": [], "decomposition": [], "werner": []}
    for seed in RANDOM_SEEDS:
        prob = random_problem(np.random.default_rng(seed))
        val, status = reference_objective(prob)
        print("random", seed, prob.block_dims, prob.num_equalities, status, val)
        out["random"].append({"seed": seed, "objective": val, "status": status})
    for mode, db, n in decomposition_instances():
        prog = build_instance(mode, db, n)
        val, status = reference_objective(prog.problem)
        lam = prog.lambda_from(val)
        print("decomposition", mode, db, n, prog.problem.block_dims, status, lam)
        out["decomposition"].append({"mode": mode, "total_db": db, "n": n, "objective": val, "lambda": lam, "status": status})
    for p in WERNER_P:
        prog = werner_program(p)
        val, status = reference_objective(prog.problem)
        print("werner", p, status, prog.lambda_from(val), 1.5 * (1 - p))
        out["werner"].append({"p": p, "lambda": prog.lambda_from(val), "status": status})
    path = ROOT / "tests" / "data" / "reference_values.json"
    path.write_text(json.dumps(out, indent=1) + "\n")
    print("wrote", path)


if __name__ == "__main__":
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        main()
