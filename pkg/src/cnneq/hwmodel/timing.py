"""Analytic timing model of the stream-partitioned pipeline.

Lengths are in input samples; one hardware word carries ``V_p`` samples
and each instance consumes one word per clock cycle at full unrolling.
"""

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from ..errors import ConfigurationError, InfeasibleError, UsageError


def overlap_symbols(kernel, v_p, layers):
    """Half receptive field of the CNN template (in input samples)."""
    if kernel < 1 or kernel % 2 == 0 or v_p < 1 or layers < 1:
        raise ConfigurationError("need odd kernel >= 1, v_p >= 1, layers >= 1")
    return (kernel - 1) * (1 + v_p * (layers - 1)) // 2


def next_even(n):
    return n if n % 2 == 0 else n + 1


def actual_overlap(o_sym, v_p, n_i):
    """Overlap rounded up to an even number of ``V_p * N_i`` blocks."""
    if o_sym < 0 or v_p < 1 or n_i < 1:
        raise ConfigurationError("overlap inputs must be positive")
    blk = v_p * n_i
    return next_even(-(-o_sym // blk)) * blk


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TimingParams:
    n_i: int
    v_p: int = 8
    n_os: int = 2
    f_clk: float = 200e6
    l_inst: int = 7320
    kernel: int = 9
    layers: int = 3
    o_act_override: Optional[int] = None

    def validate(self):
        if not is_power_of_two(self.n_i):
            raise ConfigurationError(f"N_i={self.n_i} is not a power of two")
        if self.v_p < 1 or self.n_os < 1 or not self.f_clk > 0:
            raise ConfigurationError("v_p, n_os and f_clk must be positive")
        if self.l_inst < self.v_p or self.l_inst % self.v_p:
            raise ConfigurationError(f"l_inst={self.l_inst} must be a positive multiple of v_p={self.v_p}")
        if self.o_act_override is not None and self.o_act_override < 0:
            raise ConfigurationError("overlap must be >= 0")
        return self

    @classmethod
    def for_model(cls, config, n_i, l_inst, f_clk=200e6, o_act=None):
        return cls(n_i, config.v_p, config.n_os, f_clk, l_inst, config.kernel, config.layers, o_act)

    @property
    def o_sym(self):
        return overlap_symbols(self.kernel, self.v_p, self.layers)

    @property
    def o_act(self):
        if self.o_act_override is not None:
            return self.o_act_override
        return actual_overlap(self.o_sym, self.v_p, self.n_i)

    @property
    def l_ol(self):
        return self.l_inst + 2 * self.o_act

    @property
    def t_max(self):
        return self.n_i * self.v_p * self.f_clk


@dataclass(frozen=True)
class TimingResult:
    t_init: float  # s
    latency: float  # s, approximated by t_init
    t_p: float  # s, processing time of l_in samples
    t_net: float  # samples/s
    t_max: float  # samples/s


def timing(params, l_in=None):
    """Initialization delay, latency, processing time and throughputs.

    ``l_in`` defaults to one round (``N_i * l_inst`` samples).
    """
    p = params.validate()
    l_in = p.n_i * p.l_inst if l_in is None else l_in
    vf = p.v_p * p.f_clk
    t_init = math.log2(p.n_i) * p.l_ol / (2.0 * vf)
    stretch = 1.0 + 2.0 * p.o_act / p.l_inst
    t_p = l_in / (p.n_i * vf) * stretch
    return TimingResult(t_init, t_init, t_p, p.t_max / stretch, p.t_max)


def net_throughput_exact(params, l_inst):
    p = params
    return Fraction(p.n_i * p.v_p) * Fraction(p.f_clk) * l_inst / (l_inst + 2 * p.o_act)


def min_seq_length(t_req, params):
    """Smallest ``l_inst`` (multiple of ``V_p``) whose net throughput meets ``t_req``.

    Solved in exact rational arithmetic; raises :class:`InfeasibleError`
    when ``t_req`` is not below ``T_max``.
    """
    p = params
    if not is_power_of_two(p.n_i):
        raise ConfigurationError(f"N_i={p.n_i} is not a power of two")
    req = Fraction(t_req)
    if req <= 0:
        raise UsageError("required throughput must be positive")
    t_max = Fraction(p.n_i * p.v_p) * Fraction(p.f_clk)
    if req >= t_max:
        gap = float(req - t_max)
        raise InfeasibleError(
            f"required {float(req):.6g} samples/s is not below T_max={float(t_max):.6g} "
            f"(short by {gap:.6g} samples/s); add instances or raise f_clk",
            gap,
        )
    o = p.o_act
    if o == 0:
        return p.v_p
    bound = 2 * o * req / (t_max - req)
    n = math.ceil(bound / p.v_p)
    return max(1, n) * p.v_p


def lut_generate(t_reqs, params):
    """Map each required throughput to its minimal sub-sequence length.

    Infeasible requests map to ``None``.
    """
    table = []
    for t in t_reqs:
        try:
            table.append((t, min_seq_length(t, params)))
        except InfeasibleError:
            table.append((t, None))
    return table


def write_lut(path, table, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t_req", "l_inst"])
        for t, l in table:
            w.writerow([repr(float(t)), "infeasible" if l is None else l])
