"""Loss sweeps, cutoff search and CSV/JSON output for the key-rate bounds."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

from .bounds import CUTOFF_RATE, Mode, PhotonTerm, RatePoint, find_cutoff, rate_upper_bound
from .protocol import GYS, ChannelParams, SourceParams, detector_db
from .sdp import SdpOptions

log = logging.getLogger(__name__)

WORKERS_ENV = "QKDBOUNDS_WORKERS"
SIG_DIGITS = 12
CSV_HEAD = ("total_db", "distance_km", "mode", "mu0", "k_upper_bits_per_pulse", "n_max_used")


def _round(x):
    """Round to the serialized precision so that written values read back exactly."""
    if isinstance(x, float) and math.isfinite(x):
        return float(f"{x:.{SIG_DIGITS}g}")
    return x


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.{SIG_DIGITS}g}"
    return str(x)


def parse_grid(text: str) -> tuple[float, float, float]:
    """``"START:STOP:STEP"`` -> floats."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must look like START:STOP:STEP, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"grid values must be numbers, got {text!r}") from None
    return start, stop, step


def grid_values(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid; the stop value is kept when it lies on the grid."""
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [_round(start + i * step) for i in range(count)]


@dataclass(frozen=True)
class SweepConfig:
    """Everything needed to reproduce a sweep.  Defaults are the GYS experiment.

    Exactly one of ``loss`` (total dB) and ``distance`` (km) gives the grid.
    """

    modes: tuple[str, ...] = (Mode.TWO_WAY.value,)
    loss: tuple[float, float, float] | None = None
    distance: tuple[float, float, float] | None = None
    y0: float = GYS["y0"]
    e_det: float = GYS["e_det"]
    alpha: float = GYS["alpha_db_per_km"]
    det_eff: float = GYS["eta_detector"]
    mu0: float = 0.5
    optimize_mu0: bool = False
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    find_cutoff: bool = False
    cutoff_resolution: float = 0.05
    seed: int = 0  # echoed only; the sweep itself draws no random numbers
    workers: int | None = None

    def __post_init__(self):
        modes = tuple(Mode(m).value for m in self.modes)
        object.__setattr__(self, "modes", modes)
        for nm in ("loss", "distance"):
            v = getattr(self, nm)
            if v is not None:
                object.__setattr__(self, nm, tuple(float(t) for t in v))

    def validate(self) -> "SweepConfig":
        """Raise ``ValueError`` on anything that would make the sweep meaningless."""
        if not self.modes:
            raise ValueError("at least one mode is required")
        if (self.loss is None) == (self.distance is None):
            raise ValueError("give exactly one of a loss grid and a distance grid")
        start, stop, step = self.loss if self.loss is not None else self.distance
        if not step > 0:
            raise ValueError(f"grid step must be > 0, got {step}")
        if stop < start:
            raise ValueError(f"grid stop {stop} lies below start {start}")
        if start < 0:
            raise ValueError("grid values must be >= 0")
        for nm in ("y0", "e_det", "det_eff"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must lie in [0, 1], got {v}")
        if self.det_eff <= 0:
            raise ValueError("det_eff must be > 0")
        if self.alpha < 0 or (self.distance is not None and self.alpha == 0):
            raise ValueError(f"alpha must be > 0 for distance grids and >= 0 otherwise, got {self.alpha}")
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be > 0, got {self.mu0}")
        if not (self.gap_tol > 0 and self.feas_tol > 0):
            raise ValueError("solver tolerances must be > 0")
        if not self.cutoff_resolution > 0:
            raise ValueError("cutoff_resolution must be > 0")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self

    # grid -----------------------------------------------------------------
    @property
    def detector_loss_db(self) -> float:
        return detector_db(self.det_eff)

    def losses(self) -> list[float]:
        """Total-loss grid in dB."""
        if self.loss is not None:
            return grid_values(*self.loss)
        return [_round(self.alpha * km + self.detector_loss_db) for km in grid_values(*self.distance)]

    def distance_of(self, total_db: float) -> float | None:
        if self.alpha <= 0:
            return None
        return _round((total_db - self.detector_loss_db) / self.alpha)

    def channel(self, total_db: float) -> ChannelParams:
        return ChannelParams.from_loss(self.y0, self.e_det, total_db, self.alpha, self.det_eff)

    @property
    def source(self) -> SourceParams:
        return SourceParams(self.mu0)

    @property
    def options(self) -> SdpOptions:
        return SdpOptions(gap_tol=self.gap_tol, feas_tol=self.feas_tol)

    # echo -----------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = list(self.modes)
        for nm in ("loss", "distance"):
            d[nm] = list(d[nm]) if d[nm] is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Cutoff:
    """Where the bound for one mode first drops below the cutoff rate."""

    mode: str
    status: str  # "found", "beyond range" or "below range"
    total_db: float | None = None
    distance_km: float | None = None


@dataclass(frozen=True)
class RateCurve:
    config: dict
    points: tuple[RatePoint, ...]
    cutoffs: dict = field(default_factory=dict)  # mode -> Cutoff

    def for_mode(self, mode) -> list[RatePoint]:
        m = Mode(mode)
        return [p for p in self.points if p.mode is m]

    @property
    def warnings(self) -> list[str]:
        return [f"{p.mode.value} @ {p.total_db:g} dB: {w}" for p in self.points for w in p.warnings]

    @property
    def statuses(self) -> set[str]:
        return {t.status for p in self.points for t in p.per_n}


# --------------------------------------------------------------------------
# running


def _rounded_point(pt: RatePoint) -> RatePoint:
    terms = tuple(
        replace(
            t,
            r_n=_round(t.r_n),
            lambda_=_round(t.lambda_),
            mutual_info=_round(t.mutual_info),
            yield_factor=_round(t.yield_factor),
            certificate={k: _round(v) for k, v in t.certificate.items()},
        )
        for t in pt.per_n
    )
    return replace(pt, total_db=_round(pt.total_db), k_upper=_round(pt.k_upper), mu0=_round(pt.mu0), per_n=terms)


def _point_task(args) -> RatePoint:
    cfg, mode, total_db = args
    pt = rate_upper_bound(cfg.channel(total_db), cfg.source, mode, cfg.optimize_mu0, cfg.options)
    # report the grid value itself rather than a value recomputed from eta
    return _rounded_point(replace(pt, total_db=total_db))


def _cutoff_task(args) -> Cutoff:
    cfg, mode, values = args
    lo = hi = None
    for a, b in zip(values[:-1], values[1:]):
        if a[1] >= CUTOFF_RATE > b[1]:
            lo, hi = a[0], b[0]
            break
    if values[0][1] < CUTOFF_RATE:
        db = values[0][0]
        return Cutoff(mode, "below range", db, cfg.distance_of(db))
    if lo is None:
        return Cutoff(mode, "beyond range")
    db = find_cutoff(
        mode, cfg.channel, lo, hi, cfg.source, cfg.cutoff_resolution, CUTOFF_RATE, cfg.optimize_mu0, cfg.options
    )
    db = _round(db)
    return Cutoff(mode, "found", db, cfg.distance_of(db))


def worker_count(cfg: SweepConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1, got {n}")
        return n
    if cfg.workers is not None:
        return cfg.workers
    return os.cpu_count() or 1


def _map(fn, tasks, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))  # map keeps input order


def run_sweep(cfg: SweepConfig, progress=None) -> RateCurve:
    """One :class:`RatePoint` per grid value and mode, plus cutoffs if requested.

    Points are ordered by loss, then by the mode order of the config,
    regardless of worker completion order.  ``progress`` is an optional
    callable receiving a short message per finished stage.
    """
    cfg.validate()
    workers = worker_count(cfg)
    grid = cfg.losses()
    tasks = [(cfg, m, db) for db in grid for m in cfg.modes]
    points = _map(_point_task, tasks, workers)
    if progress:
        progress(f"solved {len(points)} points with {workers} worker(s)")
    cutoffs = {}
    if cfg.find_cutoff:
        jobs = []
        for m in cfg.modes:
            vals = [(p.total_db, p.k_upper) for p in points if p.mode.value == m]
            jobs.append((cfg, m, vals))
        for c in _map(_cutoff_task, jobs, workers):
            cutoffs[c.mode] = c
            if progress:
                progress(f"cutoff {c.mode}: {c.status} {'' if c.total_db is None else f'{c.total_db:g} dB'}")
    return RateCurve(cfg.to_dict(), tuple(points), cutoffs)


# --------------------------------------------------------------------------
# output


def csv_header(curve: RateCurve) -> list[str]:
    top = max((t.n for p in curve.points for t in p.per_n), default=0)
    cols = list(CSV_HEAD)
    for n in range(1, top + 1):
        cols += [f"r_{n}", f"lambda_{n}", f"I_{n}"]
    return cols


def to_csv(curve: RateCurve) -> str:
    cfg = SweepConfig.from_dict(curve.config)
    header = csv_header(curve)
    top = (len(header) - len(CSV_HEAD)) // 3
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for p in curve.points:
        row = [_fmt(p.total_db), _fmt(cfg.distance_of(p.total_db)), p.mode.value, _fmt(p.mu0), _fmt(p.k_upper), str(p.n_max_used)]
        by_n = {t.n: t for t in p.per_n}
        for n in range(1, top + 1):
            t = by_n.get(n)
            row += [_fmt(t.r_n), _fmt(t.lambda_), _fmt(t.mutual_info)] if t else ["", "", ""]
        w.writerow(row)
    return buf.getvalue()


def _term_dict(t: PhotonTerm) -> dict:
    return {
        "n": t.n,
        "r_n": t.r_n,
        "lambda": t.lambda_,
        "mutual_info": t.mutual_info,
        "yield_factor": t.yield_factor,
        "status": t.status,
        "fallback": t.fallback,
        "certificate": t.certificate,
    }


def to_json(curve: RateCurve) -> str:
    doc = {
        "config": curve.config,
        "points": [
            {
                "total_db": p.total_db,
                "mode": p.mode.value,
                "mu0": p.mu0,
                "k_upper": p.k_upper,
                "n_max_used": p.n_max_used,
                "warnings": list(p.warnings),
                "per_n": [_term_dict(t) for t in p.per_n],
            }
            for p in curve.points
        ],
        "cutoffs": {m: asdict(c) for m, c in curve.cutoffs.items()},
    }
    # floats were rounded to SIG_DIGITS at assembly; repr reproduces them exactly
    return json.dumps(doc, indent=1) + "\n"


def from_json(text: str) -> RateCurve:
    """Inverse of :func:`to_json`."""
    doc = json.loads(text)
    points = []
    for p in doc["points"]:
        terms = tuple(
            PhotonTerm(
                t["n"], t["r_n"], t["lambda"], t["mutual_info"], t["yield_factor"], t["status"], t["fallback"], t["certificate"]
            )
            for t in p["per_n"]
        )
        points.append(RatePoint(p["total_db"], p["k_upper"], terms, p["n_max_used"], Mode(p["mode"]), p["mu0"], tuple(p["warnings"])))
    cutoffs = {m: Cutoff(**c) for m, c in doc["cutoffs"].items()}
    return RateCurve(doc["config"], tuple(points), cutoffs)


def emit(curve: RateCurve, fmt: str = "csv", path=None) -> str:
    """Serialize ``curve`` as ``csv`` or ``json``; write to ``path`` when given."""
    if fmt == "csv":
        text = to_csv(curve)
    elif fmt == "json":
        text = to_json(curve)
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if path is not None:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write output file {path}: {exc.strerror or exc}") from exc
    return text
