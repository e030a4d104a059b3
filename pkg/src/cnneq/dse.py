"""Design-space exploration: grids, parallel worst-of-n evaluation, Pareto fronts."""

import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from .equalizers import (
    CnnConfig,
    FirConfig,
    VolterraConfig,
    VolterraMacs,
    mac_count,
)
from .errors import TrainingError, UsageError
from .training import train

log = logging.getLogger(__name__)

FIR_TAPS = (3, 5, 9, 17, 25, 41, 57, 89, 121, 185, 249, 377, 505, 761, 1017)
VOLTERRA_M1 = (3, 9, 15, 25, 35, 55, 75, 89, 121)
VOLTERRA_M2 = (1, 3, 9, 15, 25, 30, 35)
VOLTERRA_M3 = (1, 3, 9, 15)
BUDGET_FACTOR = 1.2


@dataclass(frozen=True)
class DesignSpace:
    v_p: Sequence[int] = (1, 2, 4, 8, 16)
    layers: Sequence[int] = (3, 4, 5)
    kernel: Sequence[int] = (9, 15, 21)
    channels: Sequence[int] = (3, 4, 5)
    fir_taps: Sequence[int] = FIR_TAPS
    volterra: Sequence[Tuple[int, int, int]] = tuple(
        itertools.product(VOLTERRA_M1, VOLTERRA_M2, VOLTERRA_M3)
    )
    n_os: int = 2

    @classmethod
    def paper(cls):
        return cls()

    @classmethod
    def desk(cls):
        """Reduced CNN grid; full FIR list; a handful of Volterra points."""
        return cls(
            v_p=(4, 8),
            layers=(3,),
            kernel=(9,),
            channels=(3, 5),
            volterra=((9, 3, 1), (25, 9, 3), (55, 15, 3)),
        )

    @classmethod
    def preset(cls, name):
        if name == "paper":
            return cls.paper()
        if name == "desk":
            return cls.desk()
        raise UsageError(f"unknown preset {name!r}")


def enumerate_space(space, families=("cnn", "fir", "volterra")):
    """Deterministic, duplicate-free list of configurations.

    CNN configs come first (V_p outermost, C innermost), then FIR, then
    Volterra in list order.
    """
    out = []
    if "cnn" in families:
        for vp, L, k, c in itertools.product(space.v_p, space.layers, space.kernel, space.channels):
            out.append(CnnConfig(v_p=vp, layers=L, kernel=k, channels=c, n_os=space.n_os))
    if "fir" in families:
        out.extend(FirConfig(m, space.n_os) for m in space.fir_taps)
    if "volterra" in families:
        out.extend(VolterraConfig(m1, m2, m3, space.n_os) for m1, m2, m3 in space.volterra)
    seen = set()
    unique = []
    for c in out:
        if c not in seen:
            seen.add(c)
            unique.append(c)
    return unique


def family_of(config):
    if isinstance(config, CnnConfig):
        return "cnn"
    if isinstance(config, FirConfig):
        return "fir"
    if isinstance(config, VolterraConfig):
        return "volterra"
    raise UsageError(f"unknown config type {type(config).__name__}")


@dataclass
class ParetoPoint:
    config_id: str
    family: str
    mac: Fraction
    ber: float
    bers: List[float] = field(default_factory=list)
    valid: bool = True
    config: object = None

    @property
    def mac_float(self):
        return float(self.mac)


def mac_budget(dsp_avail, t_req, f_clk):
    """Largest MAC/symbol a device sustains at ``t_req`` symbols/s."""
    if min(dsp_avail, t_req, f_clk) <= 0:
        raise UsageError("budget inputs must be positive")
    return dsp_avail / t_req * f_clk * BUDGET_FACTOR


def _train_job(args):
    config, channel_cfg, train_cfg, seed = args
    try:
        r = train(config, channel_cfg, train_cfg, seed)
        return config.describe(), seed, r.ber, r.wall_time
    except TrainingError as exc:
        log.warning("%s seed %s diverged: %s", config.describe(), seed, exc)
        return config.describe(), seed, float("nan"), 0.0


def _point(config, bers):
    ok = [b for b in bers if not np.isnan(b)]
    return ParetoPoint(
        config.describe(),
        family_of(config),
        mac_count(config),
        max(ok) if ok else float("nan"),
        list(bers),
        bool(ok),
        config,
    )


def evaluate_config(config, channel_cfg, train_cfg):
    """Worst-of-n BER over ``train_cfg.seeds`` and MAC per symbol of one config."""
    bers = [_train_job((config, channel_cfg, train_cfg, s))[2] for s in train_cfg.seeds]
    return _point(config, bers)


def run_dse(configs, channel_cfg, train_cfg, jobs=1, progress=None):
    """Evaluate every config; (config, seed) jobs run on a process pool.

    Results are merged by config id, so completion order never matters.
    Returns the points in ``configs`` order and the summed wall time.
    """
    work = [(c, channel_cfg, train_cfg, s) for c in configs for s in train_cfg.seeds]
    results = {}
    wall = 0.0
    if jobs <= 1:
        it = map(_train_job, work)
        for cid, seed, b, t in it:
            results[(cid, seed)] = b
            wall += t
            if progress:
                progress(cid, seed, b)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for cid, seed, b, t in pool.map(_train_job, work):
                results[(cid, seed)] = b
                wall += t
                if progress:
                    progress(cid, seed, b)
    points = [_point(c, [results[(c.describe(), s)] for s in train_cfg.seeds]) for c in configs]
    return points, wall


def dominates(a, b):
    return a.mac <= b.mac and a.ber <= b.ber and (a.mac < b.mac or a.ber < b.ber)


def pareto_front(points):
    """Points not dominated in (MAC, BER), both minimized; sorted by MAC.

    Invalid points are ignored. Exact duplicates are all kept.
    """
    pts = [p for p in points if p.valid]
    if not pts:
        raise UsageError("no valid points")
    pts.sort(key=lambda p: (p.mac, p.ber))
    front = []
    best = float("inf")
    for _, grp in itertools.groupby(pts, key=lambda p: p.mac):
        grp = list(grp)
        low = grp[0].ber
        if low < best:
            front.extend(p for p in grp if p.ber == low)
            best = low
    return front


def _config_columns(config):
    row = {k: "" for k in ("v_p", "layers", "kernel", "channels", "taps", "m1", "m2", "m3")}
    if isinstance(config, CnnConfig):
        row.update(v_p=config.v_p, layers=config.layers, kernel=config.kernel, channels=config.channels)
    elif isinstance(config, FirConfig):
        row["taps"] = config.taps
    else:
        row.update(m1=config.m1, m2=config.m2, m3=config.m3)
    return row


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def write_points(path, points, n_seeds, header_lines=()):
    cols = ["config_id", "family", "v_p", "layers", "kernel", "channels", "taps", "m1", "m2", "m3", "mac"]
    cols += [f"ber_seed{i}" for i in range(n_seeds)] + ["worst_ber", "valid"]
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# volterra MAC convention: {VolterraMacs.convention}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for p in points:
            cc = _config_columns(p.config)
            w.writerow(
                [p.config_id, p.family] + [cc[k] for k in cols[2:10]] + [repr(float(p.mac))]
                + [_fmt(b) for b in p.bers] + [_fmt(p.ber), int(p.valid)]
            )


def fronts_by_family(points):
    out = {}
    for fam in ("cnn", "fir", "volterra"):
        sel = [p for p in points if p.family == fam and p.valid]
        if sel:
            out[fam] = pareto_front(sel)
    if any(p.valid for p in points):
        out["all"] = pareto_front(points)
    return out


def write_front(path, fronts, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["front", "config_id", "family", "mac", "ber"])
        for name, pts in fronts.items():
            for p in pts:
                w.writerow([name, p.config_id, p.family, repr(float(p.mac)), repr(float(p.ber))])


def write_gnuplot(path, points, fronts, budget=None):
    """Whitespace tables, one indexable block per series (``index`` in gnuplot)."""
    with open(path, "w") as fh:
        if budget is not None:
            fh.write(f"# MAC budget line at {budget!r}\n")
        for fam in ("cnn", "fir", "volterra"):
            fh.write(f"# points {fam}\nMAC BER\n")
            for p in points:
                if p.family == fam and p.valid:
                    fh.write(f"{float(p.mac)!r} {p.ber!r}\n")
            fh.write("\n\n")
        for name, pts in fronts.items():
            fh.write(f"# front {name}\nMAC BER\n")
            for p in pts:
                fh.write(f"{float(p.mac)!r} {p.ber!r}\n")
            fh.write("\n\n")


def best_within(points, family, max_mac):
    """Lowest worst-case BER of ``family`` among points with MAC <= ``max_mac``."""
    sel = [p.ber for p in points if p.family == family and p.valid and p.mac <= max_mac]
    return min(sel) if sel else float("nan")
