"""Infeasible-start primal-dual interior-point method (HKM direction, Mehrotra predictor-corrector)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problem import (
    InconsistentConstraints,
    SdpOptions,
    SdpProblem,
    SdpSolution,
    Status,
    independent_rows,
)

log = logging.getLogger(__name__)


@dataclass
class _Block:
    dim: int
    rows: np.ndarray  # equalities touching this block
    a: np.ndarray  # (len(rows), n, n), row-scaled
    c: np.ndarray


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha with x + alpha*dx PSD (x positive definite)."""
    try:
        chol = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    t = scipy.linalg.solve_triangular(chol, dx, lower=True)
    t = scipy.linalg.solve_triangular(chol, t.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (t + t.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _inv_pd(z: np.ndarray) -> np.ndarray:
    chol = scipy.linalg.cho_factor(z, lower=True)
    inv = scipy.linalg.cho_solve(chol, np.eye(z.shape[0]))
    return 0.5 * (inv + inv.T)


class _Engine:
    def __init__(self, p: SdpProblem, opts: SdpOptions):
        self.p = p
        self.opts = opts
        mat = p.constraint_matrix()
        self.m = mat.shape[0]
        norms = np.linalg.norm(mat, axis=1)
        norms[norms == 0] = 1.0
        self.row_scale = norms
        self.b = p.rhs / norms
        self.blocks = []
        for a, c, n in zip(p.constraints, p.objective, p.block_dims):
            a = a / norms[:, None, None]
            rows = np.flatnonzero(np.any(a.reshape(self.m, -1) != 0, axis=1))
            self.blocks.append(_Block(n, rows, np.ascontiguousarray(a[rows]), c))
        self.norm_b = np.linalg.norm(self.b)
        self.norm_c = np.sqrt(sum(np.sum(blk.c**2) for blk in self.blocks))
        self.total_dim = sum(blk.dim for blk in self.blocks)

    # linear maps -----------------------------------------------------------
    def amap(self, xs):
        out = np.zeros(self.m)
        for blk, x in zip(self.blocks, xs):
            if blk.rows.size:
                out[blk.rows] += blk.a.reshape(blk.rows.size, -1) @ x.ravel()
        return out

    def aadj(self, y):
        return [np.tensordot(y[blk.rows], blk.a, axes=1) if blk.rows.size else np.zeros((blk.dim, blk.dim))
                for blk in self.blocks]

    def initial_point(self):
        xs, zs = [], []
        for blk in self.blocks:
            n = blk.dim
            if blk.rows.size:
                an = np.linalg.norm(blk.a.reshape(blk.rows.size, -1), axis=1)
                xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(self.b[blk.rows])) / (1 + an)))
                eta = max(10.0, np.sqrt(n), np.max(an), np.linalg.norm(blk.c))
            else:
                xi = max(10.0, np.sqrt(n))
                eta = max(10.0, np.sqrt(n), np.linalg.norm(blk.c))
            xs.append(xi * np.eye(n))
            zs.append(eta * np.eye(n))
        return xs, np.zeros(self.m), zs

    def schur(self, xs, zinvs):
        mm = np.zeros((self.m, self.m))
        for blk, x, zi in zip(self.blocks, xs, zinvs):
            k = blk.rows.size
            if k == 0:
                continue
            g = np.matmul(np.matmul(x, blk.a), zi)
            mm[np.ix_(blk.rows, blk.rows)] += blk.a.reshape(k, -1) @ g.reshape(k, -1).T
        return 0.5 * (mm + mm.T)

    def factor(self, mm):
        if self.m == 0:
            return None
        reg = 0.0
        scale = max(np.max(np.abs(np.diag(mm))), 1e-300)
        for _ in range(8):
            try:
                return scipy.linalg.cho_factor(mm + reg * scale * np.eye(self.m), lower=True)
            except np.linalg.LinAlgError:
                reg = 1e-14 if reg == 0 else reg * 100
        return None

    def direction(self, fac, xs, zinvs, rp, rds, targets):
        """HKM direction for complementarity target T: dX = T - X dZ Z^{-1}."""
        rhs = rp - self.amap(targets) + self.amap([x @ rd @ zi for x, rd, zi in zip(xs, rds, zinvs)])
        dy = scipy.linalg.cho_solve(fac, rhs) if self.m else np.zeros(0)
        aty = self.aadj(dy)
        dzs = [rd - t for rd, t in zip(rds, aty)]
        dxs = []
        for t, x, dz, zi in zip(targets, xs, dzs, zinvs):
            dx = t - x @ dz @ zi
            dxs.append(0.5 * (dx + dx.T))
        return dxs, dy, dzs

    # main loop ---------------------------------------------------------------
    def run(self):
        opts = self.opts
        xs, y, zs = self.initial_point()
        best = None
        p_streak = d_streak = 0
        stall = 0
        status = Status.NUMERICAL_LIMIT
        it = 0
        for it in range(opts.max_iters + 1):
            rp = self.b - self.amap(xs)
            aty = self.aadj(y)
            rds = [blk.c - z - t for blk, z, t in zip(self.blocks, zs, aty)]
            pobj = sum(float(np.vdot(blk.c, x)) for blk, x in zip(self.blocks, xs))
            dobj = float(self.b @ y)
            xz = sum(float(np.vdot(x, z)) for x, z in zip(xs, zs))
            denom = 1 + abs(pobj) + abs(dobj)
            gap = max(abs(pobj - dobj), xz) / denom
            pinf = np.linalg.norm(rp) / (1 + self.norm_b)
            dinf = np.sqrt(sum(np.sum(r**2) for r in rds)) / (1 + self.norm_c)
            merit = max(gap, pinf, dinf)
            if best is None or merit < best[0]:
                best = (merit, [x.copy() for x in xs], y.copy(), [z.copy() for z in zs])
            log.debug("it %3d pobj %+.10e dobj %+.10e gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, gap, pinf, dinf)
            if gap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
                status = Status.OPTIMAL
                break

            # improving rays, normalised by the objective they improve
            ray_d = np.sqrt(sum(np.sum((t + z) ** 2) for t, z in zip(aty, zs)))
            p_streak = p_streak + 1 if dobj > 0 and ray_d / dobj <= opts.feas_tol else 0
            ray_p = np.linalg.norm(self.amap(xs))
            d_streak = d_streak + 1 if pobj < 0 and ray_p / -pobj <= opts.feas_tol else 0
            if p_streak >= opts.infeasibility_streak:
                status = Status.PRIMAL_INFEASIBLE
                break
            if d_streak >= opts.infeasibility_streak:
                status = Status.DUAL_INFEASIBLE
                break
            if it == opts.max_iters:
                break

            try:
                zinvs = [_inv_pd(z) for z in zs]
            except np.linalg.LinAlgError:
                break
            fac = self.factor(self.schur(xs, zinvs))
            if fac is None:
                break
            mu = xz / self.total_dim

            # predictor
            targets = [-x for x in xs]
            dxs, dy, dzs = self.direction(fac, xs, zinvs, rp, rds, targets)
            ap = min(1.0, min(_max_step(x, dx) for x, dx in zip(xs, dxs)))
            ad = min(1.0, min(_max_step(z, dz) for z, dz in zip(zs, dzs)))
            mu_aff = sum(float(np.vdot(x + ap * dx, z + ad * dz)) for x, dx, z, dz in zip(xs, dxs, zs, dzs)) / self.total_dim
            expon = max(1.0, 3 * min(ap, ad) ** 2)
            sigma = min(1.0, max(0.0, mu_aff / mu) ** expon) if mu > 0 else 0.0

            # corrector
            targets = [sigma * mu * zi - x - dx @ dz @ zi for x, dx, dz, zi in zip(xs, dxs, dzs, zinvs)]
            dxs, dy, dzs = self.direction(fac, xs, zinvs, rp, rds, targets)
            ap = min(1.0, opts.step_fraction * min(_max_step(x, dx) for x, dx in zip(xs, dxs)))
            ad = min(1.0, opts.step_fraction * min(_max_step(z, dz) for z, dz in zip(zs, dzs)))
            if not (np.isfinite(ap) and np.isfinite(ad)):
                break
            stall = stall + 1 if max(ap, ad) < 1e-10 else 0
            if stall >= 3:
                break
            xs = [x + ap * dx for x, dx in zip(xs, dxs)]
            zs = [z + ad * dz for z, dz in zip(zs, dzs)]
            y = y + ad * dy
        else:  # pragma: no cover - loop always breaks
            pass

        if status is Status.NUMERICAL_LIMIT and best is not None:
            _, xs, y, zs = best
        return status, xs, y, zs, it


def solve(p: SdpProblem, opts: SdpOptions | None = None, **kwargs) -> SdpSolution:
    """Solve ``p``.  Keyword arguments override fields of ``opts``."""
    opts = opts or SdpOptions()
    if kwargs:
        opts = SdpOptions(**{**opts.__dict__, **kwargs})
    m = p.num_equalities
    try:
        kept, _ = independent_rows(p)
    except InconsistentConstraints as exc:
        log.debug("%s", exc)
        zeros = {nm: np.zeros((n, n)) for nm, n in p.blocks}
        return SdpSolution(Status.PRIMAL_INFEASIBLE, zeros, np.zeros(m), np.nan, np.nan, np.inf, np.inf, np.inf)
    q = p.select_rows(kept) if kept.size < m else p
    eng = _Engine(q, opts)
    status, xs, ys, zs, it = eng.run()

    y = np.zeros(m)
    y[kept] = ys / eng.row_scale
    xs = [0.5 * (x + x.T) for x in xs]
    zs = [0.5 * (z + z.T) for z in zs]
    pobj = p.objective_value(xs)
    dobj = float(p.rhs @ y)
    norm_b = np.linalg.norm(p.rhs)
    norm_c = np.sqrt(sum(np.sum(c**2) for c in p.objective))
    pres = np.linalg.norm(p.rhs - p.apply(xs)) / (1 + norm_b)
    aty = p.adjoint(y)
    dres = np.sqrt(sum(np.sum((c - z - t) ** 2) for c, z, t in zip(p.objective, zs, aty))) / (1 + norm_c)
    xz = sum(float(np.vdot(x, z)) for x, z in zip(xs, zs))
    gap = max(abs(pobj - dobj), xz) / (1 + abs(pobj) + abs(dobj))
    if status is Status.OPTIMAL:
        min_eig = min((np.linalg.eigvalsh(x)[0] for x in xs), default=0.0)
        if gap > opts.gap_tol or pres > opts.feas_tol or dres > opts.feas_tol or min_eig < -opts.feas_tol:
            status = Status.NUMERICAL_LIMIT
    return SdpSolution(
        status=status,
        primal_blocks=dict(zip(p.block_names, xs)),
        dual_vector=y,
        objective_value=pobj,
        dual_objective=dobj,
        gap=gap,
        primal_residual=pres,
        dual_residual=dres,
        iterations=it,
        dual_blocks=dict(zip(p.block_names, zs)),
    )
