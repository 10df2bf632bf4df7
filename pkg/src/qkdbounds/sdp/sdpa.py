"""Read and write problems in the SDPA sparse format (``.dat-s``).

SDPA's dual problem is ``max F0 . Y  s.t.  Fi . Y = ci, Y >= 0``.  Our
standard form maps onto it with ``Fi = A_i``, ``ci = b_i`` and ``F0 = -C``, so
the SDPA optimum is the negative of :attr:`SdpSolution.objective_value`.
"""

from __future__ import annotations

import re

import numpy as np

from .problem import SdpProblem

_ZERO = 0.0


def _entries(mat: np.ndarray, matno: int, blkno: int, lines: list[str]):
    n = mat.shape[0]
    iu, ju = np.triu_indices(n)
    vals = mat[iu, ju]
    for i, j, v in zip(iu, ju, vals):
        if v != _ZERO:
            lines.append(f"{matno} {blkno} {i + 1} {j + 1} {v:.17g}")


def write_sdpa(p: SdpProblem, path, comment: str = "") -> None:
    """Write ``p`` to ``path`` in SDPA sparse format."""
    lines = [f'"{comment}' if comment else '"qkdbounds export']
    lines.append(str(p.num_equalities))
    lines.append(str(len(p.block_dims)))
    lines.append(" ".join(str(n) for n in p.block_dims))
    lines.append(" ".join(f"{b:.17g}" for b in p.rhs) if p.num_equalities else "")
    for k, c in enumerate(p.objective, start=1):
        _entries(-c, 0, k, lines)
    for k, a in enumerate(p.constraints, start=1):
        for i in range(p.num_equalities):
            _entries(a[i], i + 1, k, lines)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _tokens(line: str) -> list[str]:
    return [t for t in re.split(r"[\s,(){}]+", line.strip()) if t]


def read_sdpa(path) -> SdpProblem:
    """Parse an SDPA sparse file.  Diagonal (negative-size) blocks become 1x1 blocks."""
    with open(path) as fh:
        raw = [ln for ln in fh.read().splitlines()]
    body = [ln for ln in raw if ln.strip() and not ln.lstrip().startswith(('"', "*"))]
    m = int(_tokens(body[0])[0])
    nblocks = int(_tokens(body[1])[0])
    struct = [int(float(t)) for t in _tokens(body[2])[:nblocks]]
    pos = 3
    rhs_tok: list[str] = []
    while len(rhs_tok) < m:
        rhs_tok += _tokens(body[pos])
        pos += 1
    rhs = np.array([float(t) for t in rhs_tok[:m]])

    # expand diagonal blocks of size -k into k scalar blocks
    layout = []  # (sdpa block, offset) -> our block index
    dims = []
    for b, s in enumerate(struct):
        if s > 0:
            layout.append([len(dims)])
            dims.append(s)
        else:
            layout.append(list(range(len(dims), len(dims) + (-s))))
            dims.extend([1] * (-s))
    obj = [np.zeros((n, n)) for n in dims]
    cons = [np.zeros((m, n, n)) for n in dims]
    for ln in body[pos:]:
        tok = _tokens(ln)
        if len(tok) < 5:
            continue
        matno, blk, i, j = (int(t) for t in tok[:4])
        v = float(tok[4])
        s = struct[blk - 1]
        if s > 0:
            k, ii, jj = layout[blk - 1][0], i - 1, j - 1
        else:
            if i != j:
                raise ValueError(f"off-diagonal entry in diagonal block {blk}: {ln!r}")
            k, ii, jj = layout[blk - 1][i - 1], 0, 0
        target = obj[k] if matno == 0 else cons[k][matno - 1]
        sign = -1.0 if matno == 0 else 1.0
        target[ii, jj] = sign * v
        target[jj, ii] = sign * v
    names = tuple(f"block{k + 1}" for k in range(len(dims)))
    return SdpProblem(names, tuple(dims), tuple(obj), tuple(cons), rhs)
